"""Mel filterbank construction and log-Mel extraction."""

import math

import numpy as np
import pytest

from diarlab.features import (
    FeatureConfig,
    FeatureMatrix,
    extract_logmel,
    hz_to_mel,
    load_features,
    mel_band_edges_hz,
    mel_filterbank_matrix,
    mel_to_hz,
    save_features,
)


class TestConfig:
    def test_defaults(self):
        config = FeatureConfig()
        assert config.window_samples == 400
        assert config.hop_samples == 160
        assert config.fft_size == 512  # next power of two above 400

    def test_fft_auto_at_8k(self):
        assert FeatureConfig(sample_rate=8000).fft_size == 256

    def test_invalid(self):
        with pytest.raises(ValueError):
            FeatureConfig(hop=0.05, window=0.025)
        with pytest.raises(ValueError):
            FeatureConfig(fft_size=300)
        with pytest.raises(ValueError):
            FeatureConfig(fft_size=256)  # below 400-sample window
        with pytest.raises(ValueError):
            FeatureConfig(n_mels=0)
        with pytest.raises(ValueError):
            FeatureConfig(log_floor=0.0)


class TestFilterbank:
    def test_columns_positive(self):
        matrix = mel_filterbank_matrix(FeatureConfig())
        assert matrix.shape == (257, 23)
        assert (matrix >= 0).all()
        assert (matrix.sum(axis=0) > 0).all()

    def test_supports_ordered_and_neighbor_only_overlap(self):
        matrix = mel_filterbank_matrix(FeatureConfig())
        supports = [set(np.flatnonzero(matrix[:, j])) for j in range(23)]
        for j in range(23):
            if j + 1 < 23:
                assert min(supports[j]) <= min(supports[j + 1])
                assert max(supports[j]) <= max(supports[j + 1])
            if j + 2 < 23:
                assert not (supports[j] & supports[j + 2])

    def test_center_frequency_from_spacing_formula(self):
        # independent re-derivation: edges are equally spaced in Mel space,
        # m = 2595 log10(1 + f/700), between 0 and Nyquist; filter 12 of 23
        # is centered on edge 12 of 24
        config = FeatureConfig(sample_rate=16000, fft_size=512)
        mel_top = 2595.0 * math.log10(1.0 + 8000.0 / 700.0)
        expected_hz = 700.0 * (10.0 ** ((12.0 / 24.0) * mel_top / 2595.0) - 1.0)
        edges = mel_band_edges_hz(config)
        assert edges[12] == pytest.approx(expected_hz, rel=1e-12)
        assert expected_hz == pytest.approx(1767.79, abs=0.01)

    def test_mel_scale_round_trip(self):
        f = np.linspace(0, 8000, 50)
        assert mel_to_hz(hz_to_mel(f)) == pytest.approx(f, abs=1e-9)

    def test_too_many_filters(self):
        with pytest.raises(ValueError):
            mel_filterbank_matrix(
                FeatureConfig(sample_rate=8000, n_mels=200, window=0.025)
            )


class TestExtract:
    def test_silence_hits_log_floor(self):
        config = FeatureConfig(sample_rate=8000)
        matrix = extract_logmel(np.zeros(8000, dtype=np.int16), 8000, config)
        assert (matrix.frames == math.log(config.log_floor)).all()

    def test_frame_count_formula(self):
        # floor((220 - 0.025) / 0.010) + 1 = 21998
        config = FeatureConfig(sample_rate=8000)
        samples = np.zeros(220 * 8000)
        matrix = extract_logmel(samples, 8000, config)
        assert matrix.n_frames == 21998
        short = extract_logmel(np.zeros(8000), 8000, config)
        assert short.n_frames == (8000 - 200) // 80 + 1

    def test_too_short(self):
        with pytest.raises(ValueError):
            extract_logmel(np.zeros(100), 8000, FeatureConfig(sample_rate=8000))

    def test_rate_mismatch(self):
        with pytest.raises(ValueError):
            extract_logmel(np.zeros(8000), 8000, FeatureConfig(sample_rate=16000))

    def test_sine_at_filter_center_peaks_there(self):
        config = FeatureConfig(sample_rate=16000)
        center_hz = mel_band_edges_hz(config)[12]
        t = np.arange(16000) / 16000.0
        audio = 0.3 * np.sin(2 * np.pi * center_hz * t)
        matrix = extract_logmel(audio, 16000, config)
        assert (matrix.frames.argmax(axis=1) == 11).all()  # filter 12, 0-based 11

    def test_power_of_two_scaling_shifts_by_2ln2(self):
        rng = np.random.default_rng(4)
        audio = rng.standard_normal(8000) * 0.1
        config = FeatureConfig(sample_rate=8000, log_floor=1e-30)
        base = extract_logmel(audio, 8000, config).frames
        scaled = extract_logmel(2.0 * audio, 8000, config).frames
        # doubling is exact in floating point, so the log shift is 2 ln 2
        assert np.allclose(scaled - base, 2.0 * math.log(2.0), atol=1e-12)

    def test_general_scaling(self):
        rng = np.random.default_rng(5)
        audio = rng.standard_normal(8000) * 0.1
        config = FeatureConfig(sample_rate=8000, log_floor=1e-30)
        base = extract_logmel(audio, 8000, config).frames
        scaled = extract_logmel(3.7 * audio, 8000, config).frames
        assert np.allclose(scaled - base, 2.0 * math.log(3.7), atol=1e-9)

    def test_hop_shift_moves_features_one_frame(self):
        rng = np.random.default_rng(6)
        audio = rng.standard_normal(4000)
        config = FeatureConfig(sample_rate=8000)
        base = extract_logmel(audio, 8000, config).frames
        shifted = extract_logmel(
            np.concatenate([np.zeros(config.hop_samples), audio]), 8000, config
        ).frames
        assert np.array_equal(shifted[1:], base)

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        audio = rng.integers(-3000, 3000, 16000).astype(np.int16)
        config = FeatureConfig()
        a = extract_logmel(audio, 16000, config).frames
        b = extract_logmel(audio, 16000, config).frames
        assert np.array_equal(a, b)

    def test_mean_var_normalize_flag(self):
        rng = np.random.default_rng(8)
        audio = rng.standard_normal(8000)
        config = FeatureConfig(sample_rate=8000, mean_var_normalize=True)
        frames = extract_logmel(audio, 8000, config).frames
        assert np.allclose(frames.mean(axis=0), 0.0, atol=1e-9)
        assert np.allclose(frames.std(axis=0), 1.0, atol=1e-6)


class TestDump:
    def test_round_trip(self):
        rng = np.random.default_rng(9)
        frames = rng.standard_normal((40, 23)).astype(np.float32)
        matrix = FeatureMatrix(frames=frames, frame_step=0.01, origin="rec-7")
        loaded = load_features(save_features(matrix))
        assert loaded.origin == "rec-7"
        assert loaded.frame_step == 0.01
        assert np.array_equal(loaded.frames, frames.astype(np.float64))

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            load_features(b"NOTMAGIC" + b"\x00" * 32)

    def test_truncated_payload(self):
        matrix = FeatureMatrix(np.zeros((4, 3)), 0.01, "x")
        blob = save_features(matrix)
        with pytest.raises(ValueError):
            load_features(blob[:-5])

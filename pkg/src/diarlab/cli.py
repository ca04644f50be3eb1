"""Command-line front end.

Each subcommand is a thin wrapper over one library operation.  Exit codes:
0 success, 1 usage error, 2 data error.  Subcommands taking --seed are
byte-reproducible: two runs with equal arguments produce identical files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np

from . import annotations as ann
from . import simulator as sim
from .features import FeatureConfig, extract_logmel, load_features_file, save_features_file
from .model import (
    ModelConfig,
    WeightFormatError,
    average_checkpoints,
    load_weights_file,
    run_inference,
    save_weights_file,
)
from .pipeline import PipelineConfig, load_pipeline_config
from .rtf import BenchError, rtf_measure
from .scoring import ScoringConfig, compute_der, grouped_report
from .simulator import load_corpus_manifest, load_wav, save_wav

_DATA_ERRORS = (
    ValueError,
    OSError,
    KeyError,
    BenchError,
    WeightFormatError,
    json.JSONDecodeError,
    jsonschema.ValidationError,
)


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1; data problems exit 2 (argparse defaults to 2)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="pipeline config JSON (sections: simulation, features, model, scoring); "
        "flags override file values",
    )


def _pipeline_config(args) -> PipelineConfig:
    if getattr(args, "config", None) is not None:
        return load_pipeline_config(args.config)
    return PipelineConfig()


def _toy_override(args, model_config: ModelConfig) -> ModelConfig:
    if getattr(args, "toy", False):
        return ModelConfig.toy()
    return model_config


def _load_paired_rttm(args) -> tuple[list, list, ScoringConfig]:
    refs = ann.parse_rttm_file(args.ref)
    hyps = ann.parse_rttm_file(args.hyp)
    config = _pipeline_config(args).scoring
    if args.collar is not None:
        config = replace(config, collar=args.collar)
    if args.no_overlap:
        config = replace(config, score_overlap=False)
    hyp_by_id = {a.recording_id: a for a in hyps}
    resolved_refs = []
    for ref in refs:
        if args.extent is not None:
            extent = args.extent
        else:
            ends = [t.end for t in ref.turns]
            ends += [t.end for t in hyp_by_id.get(ref.recording_id, ref).turns]
            extent = max(ends) if ends else 0.0
        resolved_refs.append(ref.with_extent(extent))
    return resolved_refs, hyps, config


def _cmd_simulate(args) -> int:
    pipeline = _pipeline_config(args)
    defaults = pipeline.simulation
    mean_silence = args.mean_silence
    if mean_silence is None:
        mean_silence = defaults.silence_means.get(args.speakers)
    if mean_silence is None:
        raise ValueError(
            f"no default mean silence for {args.speakers} speakers; pass --mean-silence"
        )
    index = load_corpus_manifest(args.corpus)
    config = sim.SimConfig(
        n_speakers=args.speakers,
        mean_silence=mean_silence,
        utterances_per_speaker=(args.min_utts, args.max_utts)
        if args.min_utts is not None
        else defaults.utterances_per_speaker,
        silence_cap=defaults.silence_cap,
        cap_resample_range=defaults.cap_resample_range,
        sample_rate=index.sample_rate,
        seed=args.seed,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    mixtures = sim.generate_mixtures(
        index, config, args.count, recording_id_format="mix_{n}spk_{i:05d}"
    )
    for mixture in mixtures:
        base = out_dir / mixture.annotation.recording_id
        save_wav(base.with_suffix(".wav"), mixture.samples, mixture.sample_rate)
        ann.write_rttm_file(base.with_suffix(".rttm"), [mixture.annotation])
    print(f"wrote {len(mixtures)} mixtures to {out_dir}")
    return 0


def _cmd_derive_beta(args) -> int:
    annotations = []
    for path in args.rttm:
        annotations.extend(ann.parse_rttm_file(path))
    estimates = sim.derive_silence_means(annotations)
    print(
        json.dumps(
            {
                str(count): {
                    "exact": e.exact,
                    "rounded": e.rounded,
                    "n_speaker_means": e.n_speaker_means,
                }
                for count, e in estimates.items()
            },
            indent=2,
        )
    )
    return 0


def _load_mixture_dir(directory: Path) -> list:
    annotations = []
    rttm_paths = sorted(directory.glob("*.rttm"))
    if not rttm_paths:
        raise ValueError(f"no RTTM files under {directory}")
    for rttm_path in rttm_paths:
        parsed = ann.parse_rttm_file(rttm_path)
        wav_path = rttm_path.with_suffix(".wav")
        samples, rate = load_wav(wav_path)
        for annotation in parsed:
            annotations.append(annotation.with_extent(samples.size / rate))
    return annotations


def _cmd_stats(args) -> int:
    annotations = _load_mixture_dir(Path(args.dir))
    stats = sim.annotation_stats(annotations)
    report = stats.to_dict()
    if args.crop_length is not None:
        rng = np.random.default_rng(args.seed)
        seen = sim.seen_percentage(annotations, args.crop_length, args.trials, rng)
        report["seen"] = {str(k): fraction for k, fraction in seen.items()}
    print(json.dumps(report, indent=2))
    return 0


def _cmd_featurize(args) -> int:
    pipeline = _pipeline_config(args)
    samples, rate = load_wav(args.wav)
    feature_config = pipeline.features
    if feature_config.sample_rate != rate:
        feature_config = replace(feature_config, sample_rate=rate, fft_size=None)
    matrix = extract_logmel(samples, rate, feature_config, origin=Path(args.wav).stem)
    save_features_file(args.out, matrix)
    print(f"wrote {matrix.n_frames} x {matrix.n_mels} frames to {args.out}")
    return 0


def _cmd_infer(args) -> int:
    pipeline = _pipeline_config(args)
    model_config = _toy_override(args, pipeline.model)
    samples, rate = load_wav(args.wav)
    feature_config = pipeline.features
    if feature_config.sample_rate != rate:
        feature_config = replace(feature_config, sample_rate=rate, fft_size=None)
    weights = load_weights_file(args.weights, model_config)
    recording_id = Path(args.wav).stem
    _, annotation = run_inference(
        samples, rate, weights, model_config, feature_config, recording_id
    )
    ann.write_rttm_file(args.out, [annotation])
    print(f"wrote {len(annotation.turns)} turns to {args.out}")
    return 0


def _cmd_score(args) -> int:
    refs, hyps, config = _load_paired_rttm(args)
    report = grouped_report(refs, hyps, config)
    print(json.dumps(report.pooled.to_dict(), indent=2))
    return 0


def _cmd_report(args) -> int:
    refs, hyps, config = _load_paired_rttm(args)
    report = grouped_report(refs, hyps, config)
    if args.format == "json":
        print(report.to_json())
    else:
        print(report.format_table())
    return 0


def _cmd_avg_ckpt(args) -> int:
    checkpoints = [load_weights_file(path) for path in args.inputs]
    save_weights_file(args.out, average_checkpoints(checkpoints))
    print(f"averaged {len(checkpoints)} checkpoints into {args.out}")
    return 0


def _cmd_bench(args) -> int:
    pipeline = _pipeline_config(args)
    model_config = _toy_override(args, pipeline.model)
    weights = load_weights_file(args.weights, model_config)
    recordings = []
    feature_config = pipeline.features
    for wav_path in args.wav:
        samples, rate = load_wav(wav_path)
        recordings.append((Path(wav_path).stem, samples, rate))
        if feature_config.sample_rate != rate:
            feature_config = replace(feature_config, sample_rate=rate, fft_size=None)
    report = rtf_measure(
        weights,
        recordings,
        model_config,
        feature_config,
        self_test=args.self_test,
    )
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diarlab", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("simulate", help="generate WAV+RTTM mixture pairs")
    p.add_argument("--corpus", required=True, type=Path, help="JSONL corpus manifest")
    p.add_argument("--speakers", required=True, type=int)
    p.add_argument("--count", required=True, type=int)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--mean-silence", type=float, default=None)
    p.add_argument("--min-utts", type=int, default=None)
    p.add_argument("--max-utts", type=int, default=None)
    _add_config_flag(p)
    p.set_defaults(func=_cmd_simulate)

    p = commands.add_parser(
        "derive-beta", help="estimate mean silence intervals per speaker count"
    )
    p.add_argument("--rttm", required=True, nargs="+", type=Path)
    p.set_defaults(func=_cmd_derive_beta)

    p = commands.add_parser("stats", help="overlap/duration stats for a mixture dir")
    p.add_argument("--dir", required=True, type=Path)
    p.add_argument("--crop-length", type=float, default=None)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_stats)

    p = commands.add_parser("featurize", help="dump log-Mel features for a WAV")
    p.add_argument("--wav", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _add_config_flag(p)
    p.set_defaults(func=_cmd_featurize)

    p = commands.add_parser("infer", help="diarize a WAV into an RTTM file")
    p.add_argument("--wav", required=True, type=Path)
    p.add_argument("--weights", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--toy", action="store_true", help="use the toy-scale architecture")
    _add_config_flag(p)
    p.set_defaults(func=_cmd_infer)

    for name, func in (("score", _cmd_score), ("report", _cmd_report)):
        p = commands.add_parser(
            name,
            help="score hypothesis RTTM against reference"
            + ("" if name == "score" else " with per-group tables"),
        )
        p.add_argument("--ref", required=True, type=Path)
        p.add_argument("--hyp", required=True, type=Path)
        p.add_argument("--collar", type=float, default=None)
        p.add_argument("--no-overlap", action="store_true")
        p.add_argument(
            "--extent",
            type=float,
            default=None,
            help="recording length in seconds (default: last turn end per recording)",
        )
        if name == "report":
            p.add_argument("--format", choices=("table", "json"), default="table")
        _add_config_flag(p)
        p.set_defaults(func=func)

    p = commands.add_parser("avg-ckpt", help="elementwise-average weight files")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=_cmd_avg_ckpt)

    p = commands.add_parser("bench", help="measure the real-time factor")
    p.add_argument("--weights", required=True, type=Path)
    p.add_argument("--wav", required=True, nargs="+", type=Path)
    p.add_argument("--toy", action="store_true")
    p.add_argument(
        "--self-test",
        action="store_true",
        help="also decode in reverse order and report both RTFs",
    )
    _add_config_flag(p)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _DATA_ERRORS as exc:
        print(f"diarlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

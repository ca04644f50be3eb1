"""Named float32 parameter tensors: initialization, averaging, serialization.

Weight file layout (all integers little-endian): magic "EENDTAW1", u32
tensor count, then per tensor: u16 name length, UTF-8 name, u8 rank,
rank x u64 dims, row-major little-endian float32 data.  Round trips are
bit-exact.
"""

from __future__ import annotations

import math
import struct
from typing import Iterator, Mapping, Sequence

import numpy as np

from .config import ModelConfig, parameter_spec

WEIGHT_MAGIC = b"EENDTAW1"


class WeightFormatError(ValueError):
    """Base class for weight (de)serialization failures."""


class WeightMagicError(WeightFormatError):
    pass


class WeightTruncationError(WeightFormatError):
    def __init__(self, tensor: str, message: str):
        super().__init__(f"truncated while reading {tensor}: {message}")
        self.tensor = tensor


class WeightShapeError(WeightFormatError):
    pass


class ModelWeights(Mapping[str, np.ndarray]):
    """Immutable ordered mapping of tensor name to float32 array."""

    def __init__(self, tensors: Mapping[str, np.ndarray]):
        converted = {}
        for name, tensor in tensors.items():
            array = np.ascontiguousarray(tensor, dtype=np.float32)
            if not np.isfinite(array).all():
                raise ValueError(f"tensor {name!r} contains non-finite values")
            array.flags.writeable = False
            converted[name] = array
        self._tensors = converted
        self._f64_cache: dict[str, np.ndarray] | None = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def as_f64(self) -> dict[str, np.ndarray]:
        """float64 view used by the forward pass; cached, do not mutate."""
        if self._f64_cache is None:
            self._f64_cache = {
                name: tensor.astype(np.float64) for name, tensor in self._tensors.items()
            }
        return self._f64_cache

    def allclose(self, other: "ModelWeights") -> bool:
        return list(self) == list(other) and all(
            np.array_equal(self[name], other[name]) for name in self
        )


def _fans(shape: Sequence[int]) -> tuple[int, int]:
    if len(shape) == 1:
        return shape[0], shape[0]
    if len(shape) == 2:
        out_dim, in_dim = shape
        return in_dim, out_dim
    out_dim, in_dim, kernel = shape
    return in_dim * kernel, out_dim * kernel


def init_weights(config: ModelConfig, seed: int) -> ModelWeights:
    """Scaled-uniform initialization: each tensor drawn from
    U(-b, b) with b = sqrt(6 / (fan_in + fan_out)); deterministic per seed."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in parameter_spec(config):
        fan_in, fan_out = _fans(shape)
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        tensors[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    return ModelWeights(tensors)


def average_checkpoints(checkpoints: Sequence[ModelWeights]) -> ModelWeights:
    """Elementwise arithmetic mean per tensor (float64 accumulation)."""
    if not checkpoints:
        raise ValueError("need at least one checkpoint")
    first = checkpoints[0]
    names = list(first)
    for index, other in enumerate(checkpoints[1:], start=1):
        if set(other) != set(names):
            raise ValueError(
                f"checkpoint {index} tensor names differ: "
                f"{sorted(set(other) ^ set(names))}"
            )
        for name in names:
            if other[name].shape != first[name].shape:
                raise ValueError(
                    f"checkpoint {index} tensor {name!r} has shape "
                    f"{other[name].shape}, expected {first[name].shape}"
                )
    averaged = {}
    for name in names:
        acc = np.zeros(first[name].shape, dtype=np.float64)
        for checkpoint in checkpoints:
            acc += checkpoint[name]
        averaged[name] = (acc / len(checkpoints)).astype(np.float32)
    return ModelWeights(averaged)


def save_weights(weights: ModelWeights) -> bytes:
    parts = [WEIGHT_MAGIC, struct.pack("<I", len(weights))]
    for name, tensor in weights.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", tensor.ndim))
        parts.append(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
        parts.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    return b"".join(parts)


def load_weights(blob: bytes, config: ModelConfig | None = None) -> ModelWeights:
    """Parse a weight blob; distinct errors for bad magic, truncation, and
    (when a config is given) inventory/shape mismatches."""
    if blob[: len(WEIGHT_MAGIC)] != WEIGHT_MAGIC:
        raise WeightMagicError(
            f"bad magic {blob[:len(WEIGHT_MAGIC)]!r}, expected {WEIGHT_MAGIC!r}"
        )
    offset = len(WEIGHT_MAGIC)

    def take(n: int, tensor: str) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise WeightTruncationError(
                tensor, f"need {n} bytes at offset {offset}, have {len(blob) - offset}"
            )
        chunk = blob[offset : offset + n]
        offset += n
        return chunk

    (count,) = struct.unpack("<I", take(4, "header"))
    tensors: dict[str, np.ndarray] = {}
    for index in range(count):
        label = f"tensor #{index}"
        (name_len,) = struct.unpack("<H", take(2, label))
        name = take(name_len, label).decode("utf-8")
        if name in tensors:
            raise WeightFormatError(f"duplicate tensor name {name!r}")
        (rank,) = struct.unpack("<B", take(1, name))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank, name))
        size = math.prod(shape)
        data = take(4 * size, name)
        tensors[name] = np.frombuffer(data, dtype="<f4").reshape(shape)
    if offset != len(blob):
        raise WeightFormatError(f"{len(blob) - offset} trailing bytes after last tensor")
    if config is not None:
        expected = parameter_spec(config)
        found = [(name, tensor.shape) for name, tensor in tensors.items()]
        if len(found) != len(expected):
            raise WeightShapeError(
                f"file has {len(found)} tensors, config expects {len(expected)}"
            )
        for (got_name, got_shape), (want_name, want_shape) in zip(found, expected):
            if got_name != want_name or tuple(got_shape) != tuple(want_shape):
                raise WeightShapeError(
                    f"tensor {got_name!r} with shape {tuple(got_shape)} does not "
                    f"match expected {want_name!r} {tuple(want_shape)}"
                )
    return ModelWeights(tensors)


def save_weights_file(path, weights: ModelWeights) -> None:
    with open(path, "wb") as handle:
        handle.write(save_weights(weights))


def load_weights_file(path, config: ModelConfig | None = None) -> ModelWeights:
    with open(path, "rb") as handle:
        return load_weights(handle.read(), config)

"""LoRA adapter checkpoint fusion.

Checkpoints live in a safetensors-layout container (8-byte little-endian
header length, JSON header with per-tensor dtype/shape/data_offsets plus a
__metadata__ string map, then the raw buffer), so real adapter files are
ingestible. Averaging is element-wise: accumulate in float64, round once
back to the common storage dtype. The wider accumulator keeps the
uniform-average-of-identical-checkpoints and (C, -C) -> 0 cases bit-exact
and stays well inside half an ulp of the storage type for everything else.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .reports import Finding, ValidationReport

DTYPE_SIZES = {"f32": 4, "f16": 2, "bf16": 2}
_WIRE_DTYPES = {"f32": "F32", "f16": "F16", "bf16": "BF16"}
_LOCAL_DTYPES = {v: k for k, v in _WIRE_DTYPES.items()}


class CheckpointFormatError(ValueError):
    """Raised for malformed container files."""


class FusionError(ValueError):
    """Raised when a fusion plan cannot be executed."""


@dataclass(frozen=True)
class Tensor:
    dtype: str
    shape: tuple[int, ...]
    data: bytes

    def __post_init__(self):
        if self.dtype not in DTYPE_SIZES:
            raise CheckpointFormatError(f"unknown dtype {self.dtype!r}")
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        if any(d <= 0 for d in self.shape):
            raise CheckpointFormatError(f"non-positive dimension in shape {self.shape}")
        expected = self.element_count * DTYPE_SIZES[self.dtype]
        if len(self.data) != expected:
            raise CheckpointFormatError(
                f"buffer length {len(self.data)} != shape {self.shape} x {self.dtype} ({expected})"
            )

    @property
    def element_count(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n

    def to_float64(self) -> np.ndarray:
        if self.dtype == "f32":
            arr = np.frombuffer(self.data, dtype="<f4")
        elif self.dtype == "f16":
            arr = np.frombuffer(self.data, dtype="<f2")
        else:  # bf16: widen the raw bit pattern into the top half of f32
            bits = np.frombuffer(self.data, dtype="<u2").astype(np.uint32) << 16
            arr = bits.view(np.float32)
        return arr.astype(np.float64).reshape(self.shape)

    @staticmethod
    def from_float64(values: np.ndarray, dtype: str) -> "Tensor":
        values = np.asarray(values, dtype=np.float64)
        if dtype == "f32":
            data = values.astype("<f4").tobytes()
        elif dtype == "f16":
            data = values.astype("<f2").tobytes()
        elif dtype == "bf16":
            data = _f32_to_bf16_bits(values.astype(np.float32)).astype("<u2").tobytes()
        else:
            raise CheckpointFormatError(f"unknown dtype {dtype!r}")
        return Tensor(dtype=dtype, shape=tuple(values.shape), data=data)


def _f32_to_bf16_bits(values: np.ndarray) -> np.ndarray:
    """Round-to-nearest-even truncation of f32 to bf16 bit patterns."""
    bits = values.view(np.uint32)
    rounded = ((bits + 0x7FFF + ((bits >> 16) & 1)) >> 16).astype(np.uint16)
    nan = np.isnan(values)
    if nan.any():
        quiet = (((bits >> 16) & 0x8000) | 0x7FC0).astype(np.uint16)
        rounded = np.where(nan, quiet, rounded)
    return rounded


@dataclass(frozen=True)
class AdapterMetadata:
    rank: int
    alpha: float
    target_modules: tuple[str, ...] = ()
    extras: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.rank <= 0:
            raise CheckpointFormatError("rank must be positive")
        object.__setattr__(self, "target_modules", tuple(self.target_modules))
        object.__setattr__(self, "extras", dict(self.extras))

    def to_string_map(self) -> dict[str, str]:
        out = {
            "rank": str(self.rank),
            "alpha": repr(self.alpha),
            "target_modules": json.dumps(list(self.target_modules)),
        }
        out.update(self.extras)
        return out

    @staticmethod
    def from_string_map(raw: dict[str, str]) -> "AdapterMetadata":
        # Files written by other tools may omit rank/alpha; keep them ingestible.
        extras = {k: v for k, v in raw.items() if k not in ("rank", "alpha", "target_modules")}
        try:
            return AdapterMetadata(
                rank=int(raw.get("rank", "1")),
                alpha=float(raw.get("alpha", "1.0")),
                target_modules=tuple(json.loads(raw.get("target_modules", "[]"))),
                extras=extras,
            )
        except ValueError as exc:
            raise CheckpointFormatError(f"bad checkpoint metadata: {exc}") from None


@dataclass(frozen=True)
class AdapterCheckpoint:
    tensors: dict[str, Tensor]
    metadata: AdapterMetadata

    def __post_init__(self):
        object.__setattr__(self, "tensors", dict(self.tensors))


def read_checkpoint(path) -> AdapterCheckpoint:
    """Read a container file into memory, validating the layout."""
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise CheckpointFormatError(f"{path}: file too short for a header length")
    (header_len,) = struct.unpack("<Q", blob[:8])
    if header_len == 0 or 8 + header_len > len(blob):
        raise CheckpointFormatError(f"{path}: bad header length {header_len}")
    try:
        header = json.loads(blob[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: malformed header JSON: {exc}") from None
    if not isinstance(header, dict):
        raise CheckpointFormatError(f"{path}: header must be a JSON object")

    buffer = blob[8 + header_len :]
    metadata = AdapterMetadata.from_string_map(header.pop("__metadata__", {}))
    tensors: dict[str, Tensor] = {}
    claimed: list[tuple[int, int, str]] = []
    for name, entry in header.items():
        try:
            wire_dtype = entry["dtype"]
            shape = entry["shape"]
            begin, end = entry["data_offsets"]
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointFormatError(f"{path}: tensor {name!r}: malformed entry: {exc}") from None
        if wire_dtype not in _LOCAL_DTYPES:
            raise CheckpointFormatError(f"{path}: tensor {name!r}: unknown dtype {wire_dtype!r}")
        if not (0 <= begin <= end):
            raise CheckpointFormatError(f"{path}: tensor {name!r}: bad offsets [{begin}, {end})")
        if end > len(buffer):
            raise CheckpointFormatError(f"{path}: tensor {name!r}: truncated payload")
        for other_begin, other_end, other_name in claimed:
            if begin < other_end and other_begin < end:
                raise CheckpointFormatError(
                    f"{path}: tensor {name!r} overlaps tensor {other_name!r}"
                )
        claimed.append((begin, end, name))
        try:
            tensors[name] = Tensor(
                dtype=_LOCAL_DTYPES[wire_dtype], shape=tuple(shape), data=buffer[begin:end]
            )
        except CheckpointFormatError as exc:
            raise CheckpointFormatError(f"{path}: tensor {name!r}: {exc}") from None
    return AdapterCheckpoint(tensors=tensors, metadata=metadata)


def write_checkpoint(ckpt: AdapterCheckpoint, path) -> None:
    """Write the container; payload bytes round-trip identically."""
    header: dict = {}
    offset = 0
    chunks = []
    for name, tensor in ckpt.tensors.items():
        end = offset + len(tensor.data)
        header[name] = {
            "dtype": _WIRE_DTYPES[tensor.dtype],
            "shape": list(tensor.shape),
            "data_offsets": [offset, end],
        }
        chunks.append(tensor.data)
        offset = end
    header["__metadata__"] = ckpt.metadata.to_string_map()
    header_bytes = json.dumps(header, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for chunk in chunks:
            fh.write(chunk)


def check_compatible(ckpts) -> ValidationReport:
    """Findings for everything that prevents element-wise fusion.

    Rank/alpha, key sets, shapes and dtypes must agree; diverging
    target_modules or extras are warnings only (first input wins).
    """
    ckpts = list(ckpts)
    if len(ckpts) < 2:
        raise FusionError("compatibility needs at least two checkpoints")
    findings = []
    first = ckpts[0]
    first_keys = set(first.tensors)
    for index, other in enumerate(ckpts[1:], start=1):
        if set(other.tensors) != first_keys:
            missing = sorted(first_keys - set(other.tensors))
            extra = sorted(set(other.tensors) - first_keys)
            findings.append(
                Finding(
                    "key_set_mismatch",
                    f"checkpoint {index}: key set mismatch (missing {missing}, extra {extra})",
                )
            )
            continue
        for name, tensor in first.tensors.items():
            if other.tensors[name].shape != tensor.shape:
                findings.append(
                    Finding(
                        "shape_mismatch",
                        f"checkpoint {index}: tensor {name!r} shape "
                        f"{other.tensors[name].shape} != {tensor.shape}",
                    )
                )
            if other.tensors[name].dtype != tensor.dtype:
                findings.append(
                    Finding(
                        "dtype_mismatch",
                        f"checkpoint {index}: tensor {name!r} dtype "
                        f"{other.tensors[name].dtype} != {tensor.dtype}",
                    )
                )
        if other.metadata.rank != first.metadata.rank:
            findings.append(
                Finding(
                    "rank_mismatch",
                    f"checkpoint {index}: rank {other.metadata.rank} != {first.metadata.rank}",
                )
            )
        if other.metadata.alpha != first.metadata.alpha:
            findings.append(
                Finding(
                    "alpha_mismatch",
                    f"checkpoint {index}: alpha {other.metadata.alpha} != {first.metadata.alpha}",
                )
            )
        if other.metadata.target_modules != first.metadata.target_modules:
            findings.append(
                Finding(
                    "target_modules_mismatch",
                    f"checkpoint {index}: target_modules differ; first input wins",
                    blocking=False,
                )
            )
        if other.metadata.extras != first.metadata.extras:
            findings.append(
                Finding(
                    "extras_mismatch",
                    f"checkpoint {index}: metadata extras differ; first input wins",
                    blocking=False,
                )
            )
    return ValidationReport(tuple(findings))


@dataclass(frozen=True)
class FusionPlan:
    inputs: tuple[str, ...]
    weights: tuple[float, ...] | None = None  # uniform when omitted
    output: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(str(p) for p in self.inputs))
        if not self.inputs:
            raise FusionError("fusion plan needs at least one input")
        if self.weights is not None:
            weights = tuple(float(w) for w in self.weights)
            object.__setattr__(self, "weights", weights)
            if len(weights) != len(self.inputs):
                raise FusionError("one weight per input required")
            if abs(sum(weights) - 1.0) > 1e-9:
                raise FusionError(f"weights must sum to 1, got {sum(weights)}")

    def effective_weights(self) -> tuple[float, ...]:
        if self.weights is not None:
            return self.weights
        n = len(self.inputs)
        return tuple(1.0 / n for _ in range(n))


def average_checkpoints(plan: FusionPlan) -> AdapterCheckpoint:
    """Element-wise weighted average of the plan's checkpoints.

    Metadata comes from the first input. A single-input plan passes the
    checkpoint through unchanged.
    """
    ckpts = [read_checkpoint(p) for p in plan.inputs]
    return average_loaded(ckpts, plan.effective_weights())


def average_loaded(ckpts, weights) -> AdapterCheckpoint:
    ckpts = list(ckpts)
    weights = [float(w) for w in weights]
    if len(ckpts) != len(weights):
        raise FusionError("one weight per checkpoint required")
    if len(ckpts) == 1:
        return ckpts[0]
    report = check_compatible(ckpts)
    if not report.ok:
        blocking = "; ".join(f.message for f in report.findings if f.blocking)
        raise FusionError(f"checkpoints are not fusable: {blocking}")

    fused: dict[str, Tensor] = {}
    for name, first_tensor in ckpts[0].tensors.items():
        acc = weights[0] * ckpts[0].tensors[name].to_float64()
        for ckpt, weight in zip(ckpts[1:], weights[1:]):
            acc += weight * ckpt.tensors[name].to_float64()
        fused[name] = Tensor.from_float64(acc, first_tensor.dtype)
    return AdapterCheckpoint(tensors=fused, metadata=ckpts[0].metadata)

"""Dense float64 numerics: linear maps, softmax, layer norm, swish, tensor I/O.

Tensors are plain ``numpy.ndarray`` objects in C (row-major) order with dtype
float64. The helpers here validate shapes and finiteness so that callers get a
named error instead of silent broadcasting.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Optional, Sequence

import numpy as np

from .errors import DimensionError, EmptyNeighborhoodError, NonFiniteError

GSAT_MAGIC = b"GSAT"
LAYER_NORM_EPS = 1e-5


def as_tensor(x, ndim: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64, order="C")
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"expected a rank-{ndim} tensor, got shape {arr.shape}")
    return arr


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return x


def matmul(a, b) -> np.ndarray:
    """Matrix product of ``a[M, K]`` and ``b[K, N]``."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {list(a.shape)} and {list(b.shape)}")
    with np.errstate(invalid="ignore", over="ignore"):
        c = a @ b
    return check_finite(c, "matmul result")


def softmax(v, mask=None, axis: int = -1) -> np.ndarray:
    """Masked softmax along ``axis`` with max subtraction.

    Masked entries come out as exactly 0. A slice with no unmasked entry raises
    :class:`EmptyNeighborhoodError`.
    """
    v = as_tensor(v)
    if mask is None:
        mask = np.ones(v.shape, dtype=bool)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), v.shape)
    live = mask.any(axis=axis, keepdims=True)
    if not np.all(live):
        raise EmptyNeighborhoodError("softmax over an empty neighborhood (all entries masked)")
    shifted = np.where(mask, v, -np.inf)
    shifted = shifted - shifted.max(axis=axis, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    return check_finite(e / e.sum(axis=axis, keepdims=True), "softmax output")


def layer_norm(v, gain, shift, eps: float = LAYER_NORM_EPS) -> np.ndarray:
    """Normalize the last axis to zero mean and unit variance, then scale and shift."""
    v = as_tensor(v)
    gain = as_tensor(gain, 1)
    shift = as_tensor(shift, 1)
    c = v.shape[-1]
    if c < 1 or gain.shape[0] != c or shift.shape[0] != c:
        raise DimensionError(
            f"layer_norm over {c} channels with gain {list(gain.shape)} and shift {list(shift.shape)}"
        )
    mean = v.mean(axis=-1, keepdims=True)
    centered = v - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return check_finite(centered / np.sqrt(var + eps) * gain + shift, "layer_norm output")


def swish(v) -> np.ndarray:
    v = as_tensor(v)
    # v * sigmoid(v), written to avoid exp overflow for large |v|
    return v * np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))


@dataclass(frozen=True)
class LinearMap:
    """Point-wise affine map ``x @ weight + bias`` with ``weight[C_in, C_out]``."""

    weight: np.ndarray
    bias: Optional[np.ndarray] = None

    def __post_init__(self):
        w = as_tensor(self.weight, 2)
        object.__setattr__(self, "weight", w)
        if self.bias is not None:
            b = as_tensor(self.bias, 1)
            if b.shape[0] != w.shape[1]:
                raise DimensionError(f"bias {list(b.shape)} does not match weight {list(w.shape)}")
            object.__setattr__(self, "bias", b)

    @property
    def c_in(self) -> int:
        return self.weight.shape[0]

    @property
    def c_out(self) -> int:
        return self.weight.shape[1]

    @property
    def num_parameters(self) -> int:
        return self.weight.size + (0 if self.bias is None else self.bias.size)

    def __call__(self, x) -> np.ndarray:
        x = as_tensor(x)
        if x.shape[-1] != self.c_in:
            raise DimensionError(f"input with {x.shape[-1]} channels into a map expecting {self.c_in}")
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y


# --- binary and CSV tensor I/O ---------------------------------------------


def write_gsat(stream: BinaryIO, x) -> None:
    x = as_tensor(x)
    stream.write(GSAT_MAGIC)
    stream.write(struct.pack("<I", x.ndim))
    stream.write(struct.pack(f"<{x.ndim}Q", *x.shape))
    stream.write(x.astype("<f8").tobytes(order="C"))


def read_gsat(stream: BinaryIO) -> np.ndarray:
    magic = stream.read(4)
    if magic != GSAT_MAGIC:
        raise ValueError(f"not a GSAT record (magic {magic!r})")
    (rank,) = struct.unpack("<I", stream.read(4))
    shape = struct.unpack(f"<{rank}Q", stream.read(8 * rank))
    count = int(np.prod(shape, dtype=np.int64))
    payload = stream.read(8 * count)
    if len(payload) != 8 * count:
        raise ValueError("truncated GSAT payload")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)


def save_gsat(path, x) -> None:
    with open(path, "wb") as fh:
        write_gsat(fh, x)


def load_gsat(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_gsat(fh)


def save_csv(path, x, header: Optional[Sequence[str]] = None) -> None:
    """One row per last-axis vector; leading axes are flattened in row-major order."""
    x = as_tensor(x)
    rows = x.reshape(-1, x.shape[-1]) if x.ndim > 1 else x.reshape(1, -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def load_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        return as_tensor([[float(v) for v in r] for r in rows])
    except ValueError:
        # tolerate a single header row
        return as_tensor([[float(v) for v in r] for r in rows[1:]])


def write_records(path, tensors: Iterable[np.ndarray]) -> list[int]:
    """Concatenate GSAT records into one file; returns each record's byte offset."""
    offsets = []
    with open(path, "wb") as fh:
        for t in tensors:
            offsets.append(fh.tell())
            write_gsat(fh, t)
    return offsets


def read_records(path: Path | str, count: int) -> list[np.ndarray]:
    with open(path, "rb") as fh:
        return [read_gsat(fh) for _ in range(count)]

"""Dense float64 arrays, keyed Gaussian streams and the NCT1 binary format.

Arrays are plain ``numpy.ndarray`` objects of dtype float64 in C order.
Randomness comes from counter-based Philox streams whose key is derived from
``(seed, lane)``, so a draw never depends on which other draws happened
before it or on which thread made it.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Mapping

import numpy as np

from noisectl.exceptions import ParameterError, ShapeError, ValidationError

MAGIC = b"NCT1"
BUNDLE_MAGIC = b"NCTB"

# Lane tags. Integers so they can feed a SeedSequence spawn key.
CHANNEL_TAGS = {"B": 0, "F": 1, "X": 2}
COMPONENT_TAGS = {"shared": 0, "residual": 1, "full": 2, "step": 3, "aux": 4}


@dataclass(frozen=True)
class StreamKey:
    """Identifies one reproducible Gaussian stream.

    ``lane`` is (view, frame, channel, component, draw); channel and
    component accept either the integer tag or its name.
    """

    seed: int
    lane: tuple = field(default=(0, 0, 0, 0, 0))

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned int, got {self.seed}")
        lane = tuple(self.lane)
        if len(lane) != 5:
            raise ParameterError("lane must have five entries (view, frame, channel, component, draw)")
        view, frame, channel, component, draw = lane
        channel = CHANNEL_TAGS.get(channel, channel)
        component = COMPONENT_TAGS.get(component, component)
        ints = tuple(int(v) for v in (view, frame, channel, component, draw))
        if any(v < 0 for v in ints):
            raise ParameterError(f"lane entries must be nonnegative, got {lane}")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "lane", ints)

    def with_lane(self, view=None, frame=None, channel=None, component=None, draw=None) -> "StreamKey":
        cur = list(self.lane)
        for i, v in enumerate((view, frame, channel, component, draw)):
            if v is not None:
                cur[i] = v
        return StreamKey(self.seed, tuple(cur))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.lane)
        key = ss.generate_state(2, dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def gaussian_sample(shape, variance: float, key: StreamKey, out=None) -> np.ndarray:
    """I.i.d. N(0, variance) samples, fully determined by ``key``.

    ``out`` (C-contiguous float64 of ``shape``) is filled in place.
    """
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if len(shape) == 0 or any(s <= 0 for s in shape):
        raise ParameterError(f"shape must be non-empty with positive dims, got {shape}")
    variance = float(variance)
    if not np.isfinite(variance) or variance < 0:
        raise ParameterError(f"variance must be finite and >= 0, got {variance}")
    if out is None:
        out = np.empty(shape)
    elif out.shape != shape:
        raise ParameterError(f"out has shape {out.shape}, expected {shape}")
    if variance == 0.0:
        out[...] = 0.0
        return out
    key.generator().standard_normal(out=out)
    if variance != 1.0:
        out *= np.sqrt(variance)
    return out


def as_tensor(x) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("tensor contains NaN or Inf")
    return arr


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard needs equal shapes, got {a.shape} and {b.shape}")
    return a * b


def view_mix(matrix: np.ndarray, stacked: np.ndarray) -> np.ndarray:
    """``out[p] = sum_q matrix[p, q] * stacked[q]`` over the leading view axis."""
    matrix = np.asarray(matrix, dtype=np.float64)
    stacked = np.asarray(stacked, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"mixing matrix must be square, got {matrix.shape}")
    if stacked.ndim < 1 or stacked.shape[0] != matrix.shape[1]:
        raise ShapeError(
            f"leading axis {stacked.shape[:1]} does not match matrix size {matrix.shape[1]}"
        )
    flat = stacked.reshape(stacked.shape[0], -1)
    return (matrix @ flat).reshape((matrix.shape[0],) + stacked.shape[1:])


def moments(t) -> tuple[float, float, float]:
    """Mean, unbiased variance and excess kurtosis (m4 / m2**2 - 3)."""
    x = np.asarray(t, dtype=np.float64).ravel()
    if x.size < 2:
        raise ParameterError("moments need at least two values")
    mean = float(x.mean())
    d = x - mean
    d2 = d * d
    m2 = float(d2.mean())
    var = m2 * x.size / (x.size - 1)
    if m2 == 0.0:
        return mean, 0.0, 0.0
    m4 = float((d2 * d2).mean())
    return mean, var, m4 / (m2 * m2) - 3.0


# --- NCT1 -----------------------------------------------------------------


def write_tensor(fh: BinaryIO, arr) -> None:
    # asarray, not ascontiguousarray: the latter promotes rank 0 to rank 1
    arr = np.asarray(arr, dtype="<f8", order="C")
    fh.write(MAGIC)
    fh.write(struct.pack("<I", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<Q", d))
    fh.write(arr.tobytes(order="C"))


def read_tensor(fh: BinaryIO) -> np.ndarray:
    magic = fh.read(4)
    if magic != MAGIC:
        raise ValidationError(f"bad NCT1 magic {magic!r}")
    (rank,) = struct.unpack("<I", fh.read(4))
    dims = struct.unpack(f"<{rank}Q", fh.read(8 * rank)) if rank else ()
    count = int(np.prod(dims)) if dims else 1
    payload = fh.read(8 * count)
    if len(payload) != 8 * count:
        raise ValidationError("truncated NCT1 payload")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)


def save_tensor(path, arr) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, arr)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)


def tensor_bytes(arr) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, arr)
    return buf.getvalue()


def save_bundle(path, tensors: Mapping[str, np.ndarray], header: Mapping[str, object]) -> None:
    """Named NCT1 records behind a UTF-8 ``key = value`` header.

    Layout: ``NCTB``, u32 header length, header text, then one NCT1 record
    per name listed in the header's ``tensors`` entry.
    """
    names = list(tensors)
    lines = [f"{k} = {v}" for k, v in header.items()]
    lines.append("tensors = " + ",".join(names))
    text = ("\n".join(lines) + "\n").encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(BUNDLE_MAGIC)
        fh.write(struct.pack("<I", len(text)))
        fh.write(text)
        for name in names:
            write_tensor(fh, tensors[name])


def load_bundle(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path, "rb") as fh:
        if fh.read(4) != BUNDLE_MAGIC:
            raise ValidationError(f"{path} is not an NCTB bundle")
        (n,) = struct.unpack("<I", fh.read(4))
        header = {}
        for line in fh.read(n).decode("utf-8").splitlines():
            if line.strip():
                k, _, v = line.partition("=")
                header[k.strip()] = v.strip()
        names = [s for s in header.pop("tensors", "").split(",") if s]
        tensors = {name: read_tensor(fh) for name in names}
    return tensors, header

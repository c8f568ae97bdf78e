"""Binary checkpoint container.

Layout, all little endian:

    offset  size  field
    0       4     magic "EQP1"
    4       1     precision flag: 4 = float32, 8 = float64
    5       4     u32 layer count L (= number of sizes that follow)
    9       4*L   u32 layer sizes d_0..d_N
    ...           for k = 1..N: W_k row-major, then b_k, IEEE-754 at the
                  declared precision
    ...     8     u64 epoch counter
    ...     32    rng state: u64 master seed + 24 reserved zero bytes

Save-then-load and load-then-save are both bitwise identities.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import FormatError
from .model import LayeredParams

MAGIC = b"EQP1"
_PRECISION_FLAG = {"f32": 4, "f64": 8}
_FLAG_DTYPE = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


@dataclass
class Checkpoint:
    params: LayeredParams
    epoch: int
    rng_seed: int

    @property
    def precision(self):
        return "f32" if self.params.dtype == np.float32 else "f64"


def save_checkpoint(path, params, epoch, rng_seed, precision=None):
    """Write params and loop position to path in the container format above."""
    if precision is None:
        precision = "f32" if params.dtype == np.float32 else "f64"
    if precision not in _PRECISION_FLAG:
        raise FormatError(f"precision must be 'f32' or 'f64', got {precision!r}")
    flag = _PRECISION_FLAG[precision]
    dtype = _FLAG_DTYPE[flag]
    sizes = params.topology.layer_sizes
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<B", flag)
    blob += struct.pack("<I", len(sizes))
    blob += struct.pack(f"<{len(sizes)}I", *sizes)
    for w, b in zip(params.weights, params.biases):
        blob += np.ascontiguousarray(w, dtype=dtype).tobytes()
        blob += np.ascontiguousarray(b, dtype=dtype).tobytes()
    blob += struct.pack("<Q", int(epoch))
    blob += struct.pack("<Q", int(rng_seed) & 0xFFFFFFFFFFFFFFFF) + b"\x00" * 24
    with open(path, "wb") as f:
        f.write(bytes(blob))


def expected_size(layer_sizes, precision):
    """Exact file size in bytes for a given topology and precision."""
    unit = _PRECISION_FLAG[precision] if isinstance(precision, str) else precision
    n_values = sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))
    return 4 + 1 + 4 + 4 * len(layer_sizes) + unit * n_values + 8 + 32


def load_checkpoint(path):
    """Read a checkpoint; raises FormatError on bad magic, flag, or length."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"bad checkpoint magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < 9:
        raise FormatError("truncated checkpoint header")
    flag = blob[4]
    if flag not in _FLAG_DTYPE:
        raise FormatError(f"unknown precision flag {flag}")
    dtype = _FLAG_DTYPE[flag]
    (n_sizes,) = struct.unpack_from("<I", blob, 5)
    if n_sizes < 2:
        raise FormatError(f"layer count {n_sizes} is too small")
    at = 9
    if len(blob) < at + 4 * n_sizes:
        raise FormatError("truncated layer size table")
    sizes = struct.unpack_from(f"<{n_sizes}I", blob, at)
    at += 4 * n_sizes
    if len(blob) != expected_size(sizes, flag):
        raise FormatError(
            f"checkpoint length {len(blob)} != expected {expected_size(sizes, flag)} "
            f"for topology {'-'.join(map(str, sizes))}"
        )
    weights, biases = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(blob, dtype=dtype, count=a * b, offset=at).reshape(a, b)
        at += a * b * dtype.itemsize
        v = np.frombuffer(blob, dtype=dtype, count=b, offset=at)
        at += b * dtype.itemsize
        weights.append(w.copy())
        biases.append(v.copy())
    (epoch,) = struct.unpack_from("<Q", blob, at)
    at += 8
    (rng_seed,) = struct.unpack_from("<Q", blob, at)
    return Checkpoint(params=LayeredParams(weights, biases), epoch=int(epoch), rng_seed=int(rng_seed))

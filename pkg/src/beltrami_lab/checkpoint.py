"""Binary checkpoints.

Layout, little-endian throughout:

    magic    5 bytes   b"DBHM1" (u and B) or b"DBHMB" (B only)
    n        u32
    t        f64
    nu       f64
    eta      f64
    hall     f64
    arrays   u_x, u_y, u_z, B_x, B_y, B_z (B only: B_x, B_y, B_z), each
             n^3 complex values stored as interleaved f64 (re, im) in
             row-major (k1, k2, k3) order of the fftfreq index layout.

The format stores full spectra, so read(write(x)) is bit-exact.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .dynamics import PhysicalParams, SimState
from .spectral import GridSpec, SpectralVectorField

MAGIC_FULL = b"DBHM1"
MAGIC_B_ONLY = b"DBHMB"
_HEADER = struct.Struct("<5sIdddd")
_DTYPE = np.dtype("<c16")


class CheckpointError(ValueError):
    pass


def encode(state: SimState, b_only: bool = False) -> bytes:
    n = state.grid.n
    p = state.params
    magic = MAGIC_B_ONLY if b_only else MAGIC_FULL
    head = _HEADER.pack(magic, n, float(state.t), p.nu, p.eta, p.hall)
    arrays = (state.B.coeffs,) if b_only else (state.u.coeffs, state.B.coeffs)
    body = b"".join(np.ascontiguousarray(a, dtype=_DTYPE).tobytes(order="C") for a in arrays)
    return head + body


def decode(data: bytes) -> tuple[SimState, bool]:
    """Parse checkpoint bytes; returns (state, b_only). u is zero for B-only files.

    Raises:
        CheckpointError: bad magic, truncated or oversized payload.
    """
    if len(data) < _HEADER.size:
        raise CheckpointError("file too short for a checkpoint header")
    magic, n, t, nu, eta, hall = _HEADER.unpack_from(data)
    if magic not in (MAGIC_FULL, MAGIC_B_ONLY):
        raise CheckpointError(f"unknown magic {magic!r}")
    b_only = magic == MAGIC_B_ONLY
    grid = GridSpec(n)
    count = 3 if b_only else 6
    expected = _HEADER.size + count * n**3 * _DTYPE.itemsize
    if len(data) != expected:
        raise CheckpointError(f"payload size {len(data)} does not match n={n} ({expected} expected)")
    flat = np.frombuffer(data, dtype=_DTYPE, offset=_HEADER.size)
    arrays = flat.reshape(count // 3, 3, n, n, n).astype(np.complex128)
    if b_only:
        u = SpectralVectorField.zeros(grid)
        B = SpectralVectorField(grid, arrays[0])
    else:
        u = SpectralVectorField(grid, arrays[0])
        B = SpectralVectorField(grid, arrays[1])
    return SimState(t, u, B, PhysicalParams(nu, eta, hall)), b_only


def write(path: str | os.PathLike, state: SimState, b_only: bool = False) -> None:
    """Write atomically via a temporary sibling file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(state, b_only))
    os.replace(tmp, path)


def read(path: str | os.PathLike) -> SimState:
    state, _ = decode(Path(path).read_bytes())
    return state

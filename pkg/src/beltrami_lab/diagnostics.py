"""Conserved functionals, deviation norms and CSV output.

Energy carries no 1/2: E = ||u||^2 + ||B||^2 over the box.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields

import numpy as np

from .spectral import (
    SpectralError,
    SpectralVectorField,
    curl_hat,
    inner,
    invert_curl,
    l2_norm,
    sobolev_norm,
)

CSV_COLUMNS = (
    "t",
    "E_u",
    "E_B",
    "E",
    "H_B",
    "H_Bw",
    "phi_l2",
    "phi_h12",
    "psi_l2",
    "psi_h12",
    "err_u",
    "err_B",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One output row. Optional quantities are None when not computable."""

    t: float
    E_u: float
    E_B: float
    E: float
    H_B: float | None = None
    H_Bw: float | None = None
    phi_l2: float | None = None
    phi_h12: float | None = None
    psi_l2: float | None = None
    psi_h12: float | None = None
    err_u: float | None = None
    err_B: float | None = None


def energy(u: SpectralVectorField, B: SpectralVectorField) -> tuple[float, float, float]:
    eu = l2_norm(u) ** 2
    eb = l2_norm(B) ** 2
    return eu, eb, eu + eb


def _require_mean_free(B: SpectralVectorField):
    scale = max(float(np.max(np.abs(B.coeffs))), 1e-300)
    if np.max(np.abs(B.coeffs[:, 0, 0, 0])) > 1e-14 * scale:
        raise SpectralError("helicity is undefined for a magnetic field with nonzero mean on the torus")


def magnetic_helicity(B: SpectralVectorField) -> float:
    """int A.B with curl A = B and A mean-free solenoidal."""
    _require_mean_free(B)
    A = invert_curl(B)
    return inner(A, B)


def magneto_vorticity_helicity(u: SpectralVectorField, B: SpectralVectorField) -> float:
    """int (A + u).(B + curl u).

    Checked against the expansion H_B + 2 int u.B + int u.curl u.
    """
    _require_mean_free(B)
    A = invert_curl(B)
    w = curl_hat(u)
    direct = inner(A + u, B + w)
    expanded = inner(A, B) + 2.0 * inner(u, B) + inner(u, w)
    scale = (l2_norm(A) + l2_norm(u)) * (l2_norm(B) + l2_norm(w))
    if abs(direct - expanded) > 1e-10 * max(scale, 1e-300):
        raise ArithmeticError(f"helicity cross-form mismatch: {direct!r} vs {expanded!r}")
    return direct


def h12_norm(f: SpectralVectorField) -> float:
    """sqrt(||f||_L2^2 + ||f||_{H^1/2 homogeneous}^2); the mean enters the L2 part only."""
    l2 = sobolev_norm(f, 0.0)
    half = sobolev_norm(f.without_mean(), 0.5)
    return math.sqrt(l2 * l2 + half * half)


@dataclass(frozen=True, eq=False)
class PhiPsi:
    phi: SpectralVectorField
    psi: SpectralVectorField
    phi_l2: float
    phi_h12: float
    psi_l2: float
    psi_h12: float

    @property
    def monitored(self) -> float:
        """||Phi||_{H^1/2}^2 + ||Psi||_{H^1/2}^2."""
        return self.phi_h12**2 + self.psi_h12**2


def phi_psi(u: SpectralVectorField, B: SpectralVectorField, alpha: float, beta: float) -> PhiPsi:
    """Deviations Phi = B + curl u - alpha u and Psi = u - curl B + beta B."""
    phi = B + curl_hat(u) - u * alpha
    psi = u - curl_hat(B) + B * beta
    return PhiPsi(phi, psi, l2_norm(phi), h12_norm(phi), l2_norm(psi), h12_norm(psi))


def make_record(
    t: float,
    u: SpectralVectorField,
    B: SpectralVectorField,
    alpha: float | None = None,
    beta: float | None = None,
    errors: tuple[float, float] | None = None,
) -> DiagnosticsRecord:
    """Collect every diagnostic that is defined for this state."""
    eu, eb, e = energy(u, B)
    try:
        hb = magnetic_helicity(B)
        hbw = magneto_vorticity_helicity(u, B)
    except SpectralError:
        hb = hbw = None
    extra = {}
    if alpha is not None and beta is not None:
        pp = phi_psi(u, B, alpha, beta)
        extra = dict(phi_l2=pp.phi_l2, phi_h12=pp.phi_h12, psi_l2=pp.psi_l2, psi_h12=pp.psi_h12)
    if errors is not None:
        extra["err_u"], extra["err_B"] = errors
    return DiagnosticsRecord(t, eu, eb, e, hb, hbw, **extra)


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def emit_csv(records, comments: list[str] | None = None) -> bytes:
    """Serialize records; optional ``comments`` become leading ``# `` lines."""
    buf = io.StringIO()
    for line in comments or ():
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow([_fmt(getattr(rec, name)) for name in CSV_COLUMNS])
    return buf.getvalue().encode("utf-8")


def parse_csv(data: bytes | str) -> list[DiagnosticsRecord]:
    """Inverse of ``emit_csv``; comment lines are skipped."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = [ln for ln in data.splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    names = {f.name for f in fields(DiagnosticsRecord)}
    out = []
    for row in reader:
        kwargs = {k: (float(v) if v != "" else None) for k, v in row.items() if k in names}
        out.append(DiagnosticsRecord(**kwargs))
    return out


def read_column(data: bytes | str, column: str) -> tuple[np.ndarray, np.ndarray]:
    """(t, values) for one CSV column, dropping empty cells.

    Raises:
        KeyError: column absent from the header.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = [ln for ln in data.splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or column not in reader.fieldnames:
        raise KeyError(f"column {column!r} not in CSV header {reader.fieldnames}")
    t, v = [], []
    for row in reader:
        if row[column] != "":
            t.append(float(row["t"]))
            v.append(float(row[column]))
    return np.asarray(t), np.asarray(v)

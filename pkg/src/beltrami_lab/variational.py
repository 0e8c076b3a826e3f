"""Energy minimization under helicity constraints.

Three problems over mean-zero solenoidal fields on the box:

* ``woltjer``: minimize ||B||^2 with H_B = h1. Minimizers are curl
  eigenfields on the lowest shell with the sign of h1.
* ``fixed_omega``: minimize ||B||^2 with H_B = h1 and H_{B+w} = h2 for a
  given vorticity w = curl u. For fixed u the second constraint is
  H_B + 2<u, B> + <u, w>.
* ``full``: minimize ||u||^2 + ||B||^2 over (u, B) with both helicities
  fixed. No existence result backs this one, so it is best effort.

The solver is a projected gradient method: the steepest descent direction
is projected onto the tangent space of the constraints (a small Gram
solve), a backtracking line search accepts a step only if the energy after
constraint restoration does not increase, and restoration is a Newton
iteration along the constraint gradients. Gram systems are solved with
least squares because the gradients can be parallel (for example w = 0).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .diagnostics import magnetic_helicity, magneto_vorticity_helicity
from .spectral import (
    VOLUME,
    GridSpec,
    HelicalCoefficients,
    NotSolenoidal,
    SpectralVectorField,
    curl_hat,
    helical_decompose,
    helical_recompose,
    invert_curl,
    l2_norm,
    symmetrize,
)

CONSTRAINT_TOL = 1e-8
KKT_TOL = 1e-6
MAX_ITER = 100_000
ARMIJO = 1e-4
INIT_SHELL_MAX = 9


class InfeasibleTargets(ValueError):
    pass


class NotConverged(UserWarning):
    pass


@dataclass(frozen=True)
class ConstraintTarget:
    """Helicity targets; ``h2`` is required unless mode is ``woltjer``."""

    h1: float
    h2: float | None = None
    mode: str = "woltjer"

    def __post_init__(self):
        if self.mode not in ("woltjer", "fixed_omega", "full"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not math.isfinite(self.h1) or self.h1 == 0.0:
            raise ValueError("h1 must be finite and nonzero")
        if self.mode != "woltjer" and (self.h2 is None or not math.isfinite(self.h2) or self.h2 == 0.0):
            raise ValueError(f"mode {self.mode!r} needs a finite nonzero h2")


@dataclass(frozen=True, eq=False)
class MinimizerResult:
    """Outcome of a constrained minimization.

    Attributes:
        B: magnetic field at the returned iterate.
        u: velocity (the fixed one for ``fixed_omega``, None for ``woltjer``).
        multipliers: least-squares Lagrange multipliers.
        energy: objective value.
        kkt_residual: relative stationarity residual (max over equations).
        kkt_residuals: per-equation residuals.
        constraint_residuals: relative constraint violations.
        iterations: accepted descent steps.
        converged: False when the result is flagged NotConverged.
        energy_history: objective after restoration and after each accepted step.
    """

    mode: str
    B: SpectralVectorField
    u: SpectralVectorField | None
    multipliers: tuple[float, ...]
    energy: float
    kkt_residual: float
    kkt_residuals: tuple[float, ...]
    constraint_residuals: tuple[float, ...]
    iterations: int
    converged: bool
    energy_history: tuple[float, ...] = ()


# ---------------------------------------------------------------------------
# generic engine over stacked coefficient arrays, shape (m, 3, n, n, n)


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(VOLUME * np.real(np.vdot(b, a)))


@dataclass
class _Problem:
    grid: GridSpec
    targets: tuple[float, ...]
    constraints: Callable[[np.ndarray], tuple[np.ndarray, list[np.ndarray]]]
    certificate: Callable[[np.ndarray], tuple[tuple[float, ...], tuple[float, ...]]]

    def residuals(self, x: np.ndarray) -> np.ndarray:
        vals, _ = self.constraints(x)
        return vals - np.asarray(self.targets)

    def rel_residuals(self, x: np.ndarray) -> np.ndarray:
        return np.abs(self.residuals(x)) / np.abs(np.asarray(self.targets))


def _gram_solve(grads: list[np.ndarray], rhs: np.ndarray) -> np.ndarray:
    gram = np.array([[_dot(gi, gj) for gj in grads] for gi in grads])
    sol, *_ = np.linalg.lstsq(gram, rhs, rcond=1e-13)
    return sol


def _restore(p: _Problem, x: np.ndarray, max_iter: int = 60) -> np.ndarray | None:
    """Newton steps x += sum s_j g_j until the constraints hold; None on stall."""
    best = None
    for _ in range(max_iter):
        vals, grads = p.constraints(x)
        r = vals - np.asarray(p.targets)
        rel = float(np.max(np.abs(r) / np.abs(np.asarray(p.targets))))
        if best is not None and rel >= best[0] and best[0] <= CONSTRAINT_TOL:
            return best[1]
        if best is None or rel < best[0]:
            best = (rel, x)
        if rel <= 1e-14:
            return x
        gram = np.array([[_dot(gi, gj) for gj in grads] for gi in grads])
        s, *_ = np.linalg.lstsq(gram, -r, rcond=1e-13)
        x = x + np.tensordot(s, np.stack(grads), axes=1)
        if not np.all(np.isfinite(x)):
            break
    if best is not None and best[0] <= CONSTRAINT_TOL:
        return best[1]
    return None


def _descend(p: _Problem, x: np.ndarray, max_iter: int, kkt_tol: float, history: list[float]):
    energy = _dot(x, x)
    history.append(energy)
    it = 0
    while it < max_iter:
        _, kkt = p.certificate(x)
        if max(kkt) <= kkt_tol:
            return x, it, True
        _, grads = p.constraints(x)
        g = 2.0 * x
        coef = _gram_solve(grads, np.array([_dot(g, gj) for gj in grads]))
        pg = g - np.tensordot(coef, np.stack(grads), axes=1)
        slope = _dot(pg, pg)
        if slope == 0.0:
            return x, it, False
        # constraints are quadratic, so gradient differences give exact
        # Hessian products and the Lagrangian's curvature along pg
        _, shifted = p.constraints(x + pg)
        hess_pg = 2.0 * pg - np.tensordot(coef, np.stack(shifted) - np.stack(grads), axes=1)
        curv = _dot(pg, hess_pg)
        t = slope / curv if curv > 0 else 1.0
        while True:
            trial = _restore(p, x - t * pg)
            if trial is not None:
                e_new = _dot(trial, trial)
                if e_new <= energy - ARMIJO * t * slope:
                    break
                # roundoff regime: the predicted decrease is below resolution
                if e_new <= energy and ARMIJO * t * slope < 1e-14 * energy:
                    break
            t *= 0.5
            if t < 1e-12:
                return x, it, False
        x, energy = trial, e_new
        history.append(energy)
        it += 1
    return x, it, False


# ---------------------------------------------------------------------------
# initialization


def _random_field(grid: GridSpec, rng: np.random.Generator, sign: float) -> SpectralVectorField:
    """Mean-zero solenoidal field on |k|^2 <= 9 with helicity of the given sign."""
    shape = (3,) + grid.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    c *= (grid.k2_int <= INIT_SHELL_MAX) & (grid.k2_int > 0)
    k2 = np.where(grid.k2 == 0, 1.0, grid.k2)
    c -= grid.k * (np.einsum("i...,i...->...", grid.k, c) / k2)
    f = SpectralVectorField(grid, symmetrize(c))
    if sign * magnetic_helicity(f) <= 0.0:
        hc = helical_decompose(f)
        keep_plus = sign > 0
        f = helical_recompose(
            HelicalCoefficients(
                hc.grid,
                hc.plus if keep_plus else np.zeros_like(hc.plus),
                np.zeros_like(hc.minus) if keep_plus else hc.minus,
            )
        )
    return f


def _scaled_to(f: SpectralVectorField, h1: float) -> SpectralVectorField:
    return f * math.sqrt(h1 / magnetic_helicity(f))


def _field(grid: GridSpec, c: np.ndarray) -> SpectralVectorField:
    return SpectralVectorField(grid, c)


def _check_omega(omega: SpectralVectorField) -> SpectralVectorField:
    if omega.divergence_residual() > 1e-10:
        raise NotSolenoidal("omega must be divergence-free")
    return invert_curl(omega)


def _finish(mode, p, x, iterations, kkt_tol, history, fields_of) -> MinimizerResult:
    mult, kkt = p.certificate(x)
    rel = tuple(float(v) for v in p.rel_residuals(x))
    u, B = fields_of(x)
    energy = _dot(x, x)
    ok = max(kkt) <= kkt_tol and max(rel) <= CONSTRAINT_TOL
    if not ok:
        warnings.warn(NotConverged(f"{mode}: kkt={max(kkt):.3e} constraints={max(rel):.3e}"), stacklevel=3)
    return MinimizerResult(mode, B, u, mult, energy, max(kkt), kkt, rel, iterations, ok, tuple(history))


def _lsq(columns: list[np.ndarray], target: np.ndarray) -> tuple[np.ndarray, float]:
    mat = np.stack([c.ravel() for c in columns], axis=1)
    a = np.concatenate((mat.real, mat.imag))
    b = np.concatenate((target.ravel().real, target.ravel().imag))
    coef, *_ = np.linalg.lstsq(a, b, rcond=1e-13)
    resid = target - np.tensordot(coef, np.stack(columns), axes=1)
    return coef, float(np.sqrt(_dot(resid, resid)))


# ---------------------------------------------------------------------------
# public problems


def woltjer_certificate(B: SpectralVectorField) -> tuple[float, float]:
    """(lambda, min_lambda ||curl B - lambda B|| / ||curl B||)."""
    J = curl_hat(B).coeffs
    (lam,), res = _lsq([B.coeffs], J)
    return float(lam), res / max(math.sqrt(_dot(J, J)), 1e-300)


def fixed_omega_certificate(B: SpectralVectorField, omega: SpectralVectorField) -> tuple[tuple[float, float], float]:
    """((l1, l2), min ||curl B - l1 B - l2 (B + w)|| / ||curl B||)."""
    J = curl_hat(B).coeffs
    coef, res = _lsq([B.coeffs, B.coeffs + omega.coeffs], J)
    return (float(coef[0]), float(coef[1])), res / max(math.sqrt(_dot(J, J)), 1e-300)


def full_certificate(u: SpectralVectorField, B: SpectralVectorField) -> tuple[tuple[float, float], tuple[float, float]]:
    """Multipliers (l1, l2) and residuals of u = l2 (B + w) and u - J = -l1 B.

    Each residual is relative to ||u|| or ||J|| respectively.
    """
    w = curl_hat(u).coeffs
    J = curl_hat(B).coeffs
    (l2,), r_u = _lsq([B.coeffs + w], u.coeffs)
    (m,), r_b = _lsq([B.coeffs], u.coeffs - J)
    nu = max(math.sqrt(_dot(u.coeffs, u.coeffs)), 1e-300)
    nj = max(math.sqrt(_dot(J, J)), 1e-300)
    return (float(-m), float(l2)), (r_u / nu, r_b / nj)


def minimize_woltjer(
    h1: float,
    grid: GridSpec,
    seed: int = 0,
    *,
    max_iter: int = MAX_ITER,
    kkt_tol: float = KKT_TOL,
) -> MinimizerResult:
    """Minimize ||B||^2 subject to H_B = h1.

    Raises:
        ValueError: h1 == 0.
    """
    ConstraintTarget(h1, mode="woltjer")

    def constraints(x):
        A = invert_curl(_field(grid, x[0])).coeffs
        return np.array([_dot(A, x[0])]), [2.0 * A[None]]

    def certificate(x):
        lam, r = woltjer_certificate(_field(grid, x[0]))
        return (lam,), (r,)

    p = _Problem(grid, (h1,), constraints, certificate)
    rng = np.random.default_rng(seed)
    x = _scaled_to(_random_field(grid, rng, math.copysign(1.0, h1)), h1).coeffs[None]
    x = _restore(p, x)
    if x is None:
        raise InfeasibleTargets("could not meet the helicity target")
    history: list[float] = []
    x, it, _ = _descend(p, x, max_iter, kkt_tol, history)
    return _finish("woltjer", p, x, it, kkt_tol, history, lambda x: (None, _field(grid, x[0])))


def minimize_fixed_omega(
    omega: SpectralVectorField,
    h1: float,
    h2: float,
    grid: GridSpec | None = None,
    seed: int = 0,
    *,
    max_iter: int = MAX_ITER,
    kkt_tol: float = KKT_TOL,
) -> MinimizerResult:
    """Minimize ||B||^2 subject to H_B = h1 and H_{B+w} = h2 with w fixed.

    Raises:
        ValueError: h1 or h2 is zero.
        NonzeroMeanNoPotential, NotSolenoidal: w is not the curl of a
            mean-zero periodic field.
        InfeasibleTargets: the constraints cannot be met together.
    """
    ConstraintTarget(h1, h2, mode="fixed_omega")
    grid = grid or omega.grid
    u = _check_omega(omega).coeffs
    uw = _dot(u, omega.coeffs)

    def constraints(x):
        A = invert_curl(_field(grid, x[0])).coeffs
        hb = _dot(A, x[0])
        return np.array([hb, hb + 2.0 * _dot(u, x[0]) + uw]), [2.0 * A[None], 2.0 * (A + u)[None]]

    def certificate(x):
        mult, r = fixed_omega_certificate(_field(grid, x[0]), omega)
        return mult, (r,)

    p = _Problem(grid, (h1, h2), constraints, certificate)
    rng = np.random.default_rng(seed)
    x = _scaled_to(_random_field(grid, rng, math.copysign(1.0, h1)), h1).coeffs[None]
    x = _restore(p, x)
    if x is None:
        raise InfeasibleTargets(f"no field meets H_B={h1!r} and H_B+w={h2!r} for this vorticity")
    history: list[float] = []
    x, it, _ = _descend(p, x, max_iter, kkt_tol, history)
    return _finish("fixed_omega", p, x, it, kkt_tol, history, lambda x: (_field(grid, u), _field(grid, x[0])))


def minimize_full(
    h1: float,
    h2: float,
    grid: GridSpec,
    seed: int = 0,
    *,
    initial: tuple[SpectralVectorField, SpectralVectorField] | None = None,
    max_iter: int = MAX_ITER,
    kkt_tol: float = KKT_TOL,
) -> MinimizerResult:
    """Best-effort minimization of ||u||^2 + ||B||^2 over (u, B).

    Convergence is not guaranteed; the result carries both stationarity
    residuals and is flagged with ``converged=False`` (plus a NotConverged
    warning) when they stay above tolerance.

    Raises:
        ValueError: h1 or h2 is zero.
        InfeasibleTargets: the starting point cannot be restored.
    """
    ConstraintTarget(h1, h2, mode="full")

    def constraints(x):
        u, B = x[0], x[1]
        gb, gbw_b, gbw_u = (f.coeffs for f in helicity_gradients(_field(grid, u), _field(grid, B)))
        hb = 0.5 * _dot(gb, B)
        hbw = 0.25 * _dot(gbw_b, gbw_u)
        g1 = np.stack((np.zeros_like(u), gb))
        g2 = np.stack((gbw_u, gbw_b))
        return np.array([hb, hbw]), [g1, g2]

    def certificate(x):
        return full_certificate(_field(grid, x[0]), _field(grid, x[1]))

    p = _Problem(grid, (h1, h2), constraints, certificate)
    if initial is not None:
        x = np.stack((initial[0].coeffs, initial[1].coeffs))
    else:
        rng = np.random.default_rng(seed)
        B = _scaled_to(_random_field(grid, rng, math.copysign(1.0, h1)), h1)
        u = _random_field(grid, rng, 1.0)
        u = u * (0.5 * l2_norm(B) / l2_norm(u))
        x = np.stack((u.coeffs, B.coeffs))
    x = _restore(p, x)
    if x is None:
        raise InfeasibleTargets(f"could not meet H_B={h1!r} and H_B+w={h2!r}")
    history: list[float] = []
    x, it, _ = _descend(p, x, max_iter, kkt_tol, history)
    return _finish("full", p, x, it, kkt_tol, history, lambda x: (_field(grid, x[0]), _field(grid, x[1])))


def helicity_gradients(
    u: SpectralVectorField, B: SpectralVectorField
) -> tuple[SpectralVectorField, SpectralVectorField, SpectralVectorField]:
    """L2 gradients (dH_B/dB, dH_{B+w}/dB, dH_{B+w}/du) = (2A, 2(A+u), 2(B+w))."""
    A = invert_curl(B)
    return A * 2.0, (A + u) * 2.0, (B + curl_hat(u)) * 2.0


def measured_targets(u: SpectralVectorField, B: SpectralVectorField) -> tuple[float, float]:
    """(H_B, H_{B+w}) of a given pair."""
    return magnetic_helicity(B), magneto_vorticity_helicity(u, B)

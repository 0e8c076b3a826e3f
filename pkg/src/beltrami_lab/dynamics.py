"""Hall MHD integration and closed-form time-dependent solutions.

Equations (h is the ion skin depth):

    u_t = P[ u x curl u + curl B x B ] + nu Laplace u
    B_t = -curl( B x u + h curl B x B ) + eta Laplace B

P is the Leray projection, which absorbs the pressure gradient. Nonlinear
products are formed on the grid and truncated with the 2/3 rule. Time
stepping is integrating-factor RK4: diffusion is applied exactly through
exp(-nu |k|^2 dt), and the nonlinear terms go through classical RK4.

Internally the integrator works on half spectra (the rfft layout, last axis
k3 >= 0). ``SimState`` always holds full spectra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .diagnostics import DiagnosticsRecord, make_record
from .fields import DoubleBeltramiState
from .spectral import (
    GridSpec,
    SpectralVectorField,
    _neg_index,
    cross,
    curl_hat,
    fft_workers,
    l2_norm,
)

C_ADV = 0.5
C_WHISTLER = 0.25
ERR_FLOOR = 1e-30


class BlowupDetected(FloatingPointError):
    def __init__(self, t: float):
        super().__init__(f"non-finite values in the state at t={t!r}")
        self.t = t


class StabilityBoundViolated(RuntimeError):
    pass


@dataclass(frozen=True)
class PhysicalParams:
    """Viscosity nu, resistivity eta and Hall coefficient (ion skin depth)."""

    nu: float = 0.0
    eta: float = 0.0
    hall: float = 1.0

    def __post_init__(self):
        for name in ("nu", "eta", "hall"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    @property
    def ideal(self) -> bool:
        return self.nu == 0.0 and self.eta == 0.0


@dataclass(frozen=True, eq=False)
class SimState:
    t: float
    u: SpectralVectorField
    B: SpectralVectorField
    params: PhysicalParams

    @property
    def grid(self) -> GridSpec:
        return self.u.grid


# ---------------------------------------------------------------------------
# half-spectrum machinery


@lru_cache(maxsize=8)
def _half_ops(n: int):
    grid = GridSpec(n)
    m = n // 2 + 1
    k = np.ascontiguousarray(grid.k[..., :m])
    k2 = np.ascontiguousarray(grid.k2[..., :m])
    mask = np.ascontiguousarray(grid.dealias_mask[..., :m])
    inv_k2 = np.where(k2 == 0, 0.0, 1.0 / np.where(k2 == 0, 1.0, k2))
    ik = 1j * k
    return k, k2, mask, inv_k2, ik


def to_half(c: np.ndarray) -> np.ndarray:
    n = c.shape[-1]
    return np.ascontiguousarray(c[..., : n // 2 + 1])


def to_full(h: np.ndarray) -> np.ndarray:
    n = h.shape[-2]
    m = n // 2 + 1
    full = np.empty(h.shape[:-1] + (n,), dtype=np.complex128)
    full[..., :m] = h
    ni = _neg_index(n)
    mirrored = h[..., ni, :, :][..., :, ni, :]
    full[..., m:] = np.conj(mirrored[..., n - np.arange(m, n)])
    return full


def _symmetrize_planes(h: np.ndarray):
    """Make the self-conjugate k3 = 0 and k3 = n/2 planes exactly Hermitian."""
    n = h.shape[-2]
    ni = _neg_index(n)
    for j in (0, n // 2):
        p = h[..., j]
        h[..., j] = 0.5 * (p + np.conj(p[..., ni, :][..., :, ni]))


def _project(h: np.ndarray, k: np.ndarray, inv_k2: np.ndarray) -> np.ndarray:
    kdot = k[0] * h[0] + k[1] * h[1] + k[2] * h[2]
    return h - k * (kdot * inv_k2)


def _to_physical(h: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfftn(h, s=(n, n, n), axes=(-3, -2, -1), norm="forward", workers=fft_workers())


def _to_spectral(x: np.ndarray) -> np.ndarray:
    return sfft.rfftn(x, axes=(-3, -2, -1), norm="forward", workers=fft_workers())


class _Engine:
    """Nonlinear tendency and IF-RK4 stepper for one grid and parameter set."""

    def __init__(self, n: int, params: PhysicalParams, nonlinear: bool = True):
        self.n = n
        self.params = params
        self.nonlinear = nonlinear
        self.k, self.k2, self.mask, self.inv_k2, self.ik = _half_ops(n)
        self._factors: dict[float, tuple] = {}

    def tendency(self, uh: np.ndarray, bh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if not self.nonlinear:
            return np.zeros_like(uh), np.zeros_like(bh)
        ik, n = self.ik, self.n
        wh = cross(ik, uh)
        jh = cross(ik, bh)
        phys = _to_physical(np.concatenate((uh, bh, wh, jh)), n)
        u, b, w, j = phys[0:3], phys[3:6], phys[6:9], phys[9:12]
        jxb = cross(j, b)
        mom = cross(u, w) + jxb
        emf = cross(b, u)
        if self.params.hall != 0.0:
            emf += self.params.hall * jxb
        spec = _to_spectral(np.concatenate((mom, emf))) * self.mask
        du = _project(spec[0:3], self.k, self.inv_k2)
        du[:, 0, 0, 0] = 0.0
        db = -cross(ik, spec[3:6])
        return du, db

    def factors(self, dt: float):
        f = self._factors.get(dt)
        if f is None:
            p = self.params
            eu_half = np.exp(-p.nu * self.k2 * (0.5 * dt))
            eb_half = np.exp(-p.eta * self.k2 * (0.5 * dt))
            f = (eu_half, eb_half, eu_half * eu_half, eb_half * eb_half)
            if len(self._factors) > 4:
                self._factors.clear()
            self._factors[dt] = f
        return f

    def step(self, uh: np.ndarray, bh: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
        eu2, eb2, eu, eb = self.factors(dt)
        h2 = 0.5 * dt
        au, ab = self.tendency(uh, bh)
        u1 = eu2 * (uh + h2 * au)
        b1 = eb2 * (bh + h2 * ab)
        bu, bb = self.tendency(u1, b1)
        u2 = eu2 * uh + h2 * bu
        b2 = eb2 * bh + h2 * bb
        cu, cb = self.tendency(u2, b2)
        u3 = eu * uh + dt * eu2 * cu
        b3 = eb * bh + dt * eb2 * cb
        du, db = self.tendency(u3, b3)
        s = dt / 6.0
        un = eu * uh + s * (eu * au + 2.0 * eu2 * (bu + cu) + du)
        bn = eb * bh + s * (eb * ab + 2.0 * eb2 * (bb + cb) + db)
        un = _project(un, self.k, self.inv_k2)
        bn = _project(bn, self.k, self.inv_k2)
        _symmetrize_planes(un)
        _symmetrize_planes(bn)
        return un, bn

    def max_speeds(self, uh: np.ndarray, bh: np.ndarray) -> tuple[float, float]:
        phys = _to_physical(np.concatenate((uh, bh)), self.n)
        umax = float(np.max(np.sqrt(np.sum(phys[0:3] ** 2, axis=0))))
        bmax = float(np.max(np.sqrt(np.sum(phys[3:6] ** 2, axis=0))))
        return umax, bmax


def _bound(grid: GridSpec, params: PhysicalParams, umax: float, bmax: float) -> float:
    kmax = grid.kmax
    adv = C_ADV / (kmax * umax) if umax > 0 else math.inf
    den = params.hall * kmax**2 * bmax + (params.eta + params.nu) * kmax**2
    whistler = C_WHISTLER / den if den > 0 else math.inf
    return min(adv, whistler)


def stability_dt(state: SimState) -> float:
    """Largest admissible step: advective CFL and whistler/diffusive limits."""
    eng = _Engine(state.grid.n, state.params)
    umax, bmax = eng.max_speeds(to_half(state.u.coeffs), to_half(state.B.coeffs))
    return _bound(state.grid, state.params, umax, bmax)


def hall_rhs(state: SimState) -> tuple[SpectralVectorField, SpectralVectorField]:
    """Spectral tendencies (du/dt, dB/dt) including diffusion."""
    grid = state.grid
    eng = _Engine(grid.n, state.params)
    uh, bh = to_half(state.u.coeffs * grid.dealias_mask), to_half(state.B.coeffs * grid.dealias_mask)
    du, db = eng.tendency(uh, bh)
    du = du - state.params.nu * eng.k2 * uh
    db = db - state.params.eta * eng.k2 * bh
    return SpectralVectorField(grid, to_full(du)), SpectralVectorField(grid, to_full(db))


def _pack(state: SimState):
    mask = state.grid.dealias_mask
    return to_half(state.u.coeffs * mask), to_half(state.B.coeffs * mask)


def _unpack(grid: GridSpec, t: float, uh, bh, params) -> SimState:
    return SimState(
        t,
        SpectralVectorField(grid, to_full(uh)),
        SpectralVectorField(grid, to_full(bh)),
        params,
    )


def step(state: SimState, dt: float, nonlinear: bool = True) -> SimState:
    """Advance one IF-RK4 step. Modes beyond the 2/3 cutoff are dropped on entry.

    Raises:
        BlowupDetected: the new state contains NaN or Inf.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    eng = _Engine(state.grid.n, state.params, nonlinear=nonlinear)
    uh, bh = _pack(state)
    uh, bh = eng.step(uh, bh, dt)
    t = state.t + dt
    if not (np.all(np.isfinite(uh)) and np.all(np.isfinite(bh))):
        raise BlowupDetected(t)
    return _unpack(state.grid, t, uh, bh, state.params)


def _step_plan(t0: float, t_end: float, dt: float) -> list[float]:
    span = t_end - t0
    if span <= 0:
        return []
    x = span / dt
    nearest = round(x)
    if nearest >= 1 and abs(x - nearest) <= 1e-6:
        return [dt] * int(nearest)
    full = int(math.floor(x))
    plan = [dt] * full
    rest = t_end - (t0 + full * dt)
    if rest > 1e-12 * max(1.0, abs(t_end)):
        plan.append(rest)
    return plan


@dataclass
class RunResult:
    state: SimState
    records: list[DiagnosticsRecord] = field(default_factory=list)
    steps: int = 0


def run(
    state: SimState,
    t_end: float,
    dt: float,
    record_every: int = 1,
    *,
    alpha: float | None = None,
    beta: float | None = None,
    exact: "ExactSolution | None" = None,
    enforce_bound: bool = True,
    check_every: int = 100,
    checkpoint_every: int = 0,
    on_checkpoint: Callable[[SimState], None] | None = None,
    on_record: Callable[[DiagnosticsRecord, SimState], None] | None = None,
    nonlinear: bool = True,
    make_records: bool = True,
) -> RunResult:
    """Integrate from ``state.t`` to the absolute time ``t_end``.

    A record is taken at the start, every ``record_every`` steps and at the
    end. With ``enforce_bound`` the step is checked against ``stability_dt``
    at the start and every ``check_every`` steps.

    Raises:
        BlowupDetected: NaN/Inf in the state; records so far were already
            delivered to ``on_record``.
        StabilityBoundViolated: dt exceeds the stability bound.
    """
    grid, params = state.grid, state.params
    eng = _Engine(grid.n, params, nonlinear=nonlinear)
    uh, bh = _pack(state)
    t = state.t
    result = RunResult(state)

    def emit(cur: SimState):
        if not make_records:
            return
        errs = compare_to_exact(cur, exact) if exact is not None else None
        rec = make_record(cur.t, cur.u, cur.B, alpha, beta, errs)
        result.records.append(rec)
        if on_record is not None:
            on_record(rec, cur)

    def check_bound():
        umax, bmax = eng.max_speeds(uh, bh)
        limit = _bound(grid, params, umax, bmax)
        if dt > limit * (1 + 1e-12):
            raise StabilityBoundViolated(f"dt={dt!r} exceeds stability bound {limit!r} at t={t!r}")

    plan = _step_plan(t, t_end, dt)
    emit(_unpack(grid, t, uh, bh, params))
    for i, h in enumerate(plan, start=1):
        if enforce_bound and (i - 1) % check_every == 0:
            check_bound()
        uh, bh = eng.step(uh, bh, h)
        t = t + h
        if not (np.all(np.isfinite(uh)) and np.all(np.isfinite(bh))):
            raise BlowupDetected(t)
        last = i == len(plan)
        want_record = last or (record_every > 0 and i % record_every == 0)
        want_ckpt = checkpoint_every > 0 and i % checkpoint_every == 0 and on_checkpoint is not None
        if want_record or want_ckpt or last:
            cur = _unpack(grid, t, uh, bh, params)
            if want_record:
                emit(cur)
            if want_ckpt:
                on_checkpoint(cur)
    result.state = _unpack(grid, t, uh, bh, params)
    result.steps = len(plan)
    return result


# ---------------------------------------------------------------------------
# closed-form solutions


@dataclass(frozen=True, eq=False)
class ExactSolution:
    """Closed-form time-dependent solution.

    ``parts`` lists (u0_i, B0_i, lambda_i) components decaying at
    exp(-nu lambda_i^2 t). For the degenerate kind ``corrector`` holds
    (curl u0 - lambda u0, curl B0 - lambda B0), computed once.
    """

    kind: str
    nu: float
    parts: tuple
    corrector: tuple | None = None

    @classmethod
    def trkalian(cls, u0: SpectralVectorField, lam: float, nu: float) -> "ExactSolution":
        return cls("trkalian", nu, ((u0, SpectralVectorField.zeros(u0.grid), lam),))

    @classmethod
    def mhd_forcefree(cls, B0: SpectralVectorField, lam: float, eta: float) -> "ExactSolution":
        return cls("mhd_forcefree", eta, ((SpectralVectorField.zeros(B0.grid), B0, lam),))

    @classmethod
    def double_beltrami(cls, state: DoubleBeltramiState, params: PhysicalParams) -> "ExactSolution":
        """Exact evolution of double Beltrami data; requires nu = eta.

        Raises:
            ValueError: nu != eta (no closed form is claimed then).
        """
        if params.nu != params.eta:
            raise ValueError(f"closed form needs nu == eta, got nu={params.nu}, eta={params.eta}")
        spec = state.spec
        if spec.degenerate:
            u0 = state.u
            B0 = state.B
            return cls.degenerate(u0, B0, spec.lambda1, params.nu)
        return cls(
            "double_beltrami_distinct",
            params.nu,
            ((state.u1, state.B1, spec.lambda1), (state.u2, state.B2, spec.lambda2)),
        )

    @classmethod
    def degenerate(cls, u0, B0, lam: float, nu: float) -> "ExactSolution":
        corr = (curl_hat(u0) - u0 * lam, curl_hat(B0) - B0 * lam)
        return cls("double_beltrami_degenerate", nu, ((u0, B0, lam),), corr)


def exact_at(sol: ExactSolution, t: float) -> tuple[SpectralVectorField, SpectralVectorField]:
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t!r}")
    if sol.kind == "double_beltrami_degenerate":
        u0, B0, lam = sol.parts[0]
        decay = math.exp(-sol.nu * lam * lam * t)
        c = 2.0 * sol.nu * lam * t * decay
        cu, cb = sol.corrector
        return u0 * decay - cu * c, B0 * decay - cb * c
    u = None
    B = None
    for u0, B0, lam in sol.parts:
        decay = math.exp(-sol.nu * lam * lam * t)
        u = u0 * decay if u is None else u + u0 * decay
        B = B0 * decay if B is None else B + B0 * decay
    return u, B


def compare_to_exact(state: SimState, sol: ExactSolution) -> tuple[float, float]:
    """Relative L2 errors of u and B against the closed form at state.t."""
    ue, be = exact_at(sol, state.t)
    eu = l2_norm(state.u - ue) / max(l2_norm(ue), ERR_FLOOR)
    eb = l2_norm(state.B - be) / max(l2_norm(be), ERR_FLOOR)
    return eu, eb


# ---------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of log(value); ``slope`` is the rate or exponent."""

    slope: float
    intercept: float
    r2: float
    samples: int


def fit_decay_rate(
    t,
    values,
    window: tuple[float, float] | None = None,
    kind: str = "exponential",
) -> DecayFit:
    """Fit ln(value) against t ("exponential") or ln(1 + t) ("power").

    Raises:
        ValueError: fewer than 10 samples in the window or a nonpositive value.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, v = t[sel], v[sel]
    if len(t) < 10:
        raise ValueError(f"need at least 10 samples, got {len(t)}")
    if np.any(v <= 0):
        raise ValueError("decay fit needs strictly positive samples")
    if kind == "exponential":
        x = t
    elif kind == "power":
        x = np.log1p(t)
    else:
        raise ValueError(f"unknown fit kind {kind!r}")
    y = np.log(v)
    design = np.stack((x, np.ones_like(x)), axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    fit = design @ np.array([slope, intercept])
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(slope), float(intercept), r2, len(t))


def with_params(state: SimState, **changes) -> SimState:
    return replace(state, params=replace(state.params, **changes))


def run_adaptive(
    state: SimState,
    t_end: float,
    *,
    safety: float = 0.9,
    dt_max: float = math.inf,
    chunk: int = 50,
    observer: Callable[[SimState], bool | None] | None = None,
) -> SimState:
    """Integrate to ``t_end`` with dt re-derived from the bound every ``chunk`` steps.

    ``observer`` sees the state at the start and after every chunk; a truthy
    return value stops the integration early.

    Raises:
        BlowupDetected: NaN/Inf in the state.
    """
    grid, params = state.grid, state.params
    eng = _Engine(grid.n, params)
    uh, bh = _pack(state)
    t = state.t
    if observer is not None and observer(state):
        return state
    while t < t_end * (1 - 1e-14):
        umax, bmax = eng.max_speeds(uh, bh)
        dt = min(safety * _bound(grid, params, umax, bmax), dt_max)
        for _ in range(chunk):
            h = min(dt, t_end - t)
            if h <= 1e-14 * max(1.0, t_end):
                break
            uh, bh = eng.step(uh, bh, h)
            t = t + h
        if not (np.all(np.isfinite(uh)) and np.all(np.isfinite(bh))):
            raise BlowupDetected(t)
        cur = _unpack(grid, t, uh, bh, params)
        if observer is not None and observer(cur):
            return cur
    return _unpack(grid, t, uh, bh, params)

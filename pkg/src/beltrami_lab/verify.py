"""Reproducible numerical checks shared by ``beltrami-lab verify`` and the tests.

Every check function returns a list of ``Check`` results; a suite passes
when all of its checks pass. Default arguments are the reference settings.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .diagnostics import energy, magnetic_helicity, magneto_vorticity_helicity, phi_psi
from .dynamics import (
    ExactSolution,
    PhysicalParams,
    SimState,
    compare_to_exact,
    exact_at,
    fit_decay_rate,
    run,
    run_adaptive,
)
from .fields import (
    ComplexRoots,
    DoubleBeltramiSpec,
    Shell,
    abc_flow,
    alpha_beta,
    beltrami_residual,
    classify,
    is_three_square,
    lambda_pair,
    random_double_beltrami,
    shell_field,
)
from .spectral import (
    VOLUME,
    GridSpec,
    SpectralVectorField,
    curl_hat,
    helical_basis,
    l2_norm,
    symmetrize,
)
from .variational import measured_targets, minimize_fixed_omega, minimize_woltjer


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        word = "PASS" if self.passed else "FAIL"
        text = f"{word} {self.name}: value={self.value:.6g} threshold={self.threshold:.6g}"
        return f"{text} ({self.detail})" if self.detail else text


def _le(name, value, threshold, detail="") -> Check:
    return Check(name, bool(value <= threshold), float(value), float(threshold), detail)


# ---------------------------------------------------------------------------
# static checks


def algebra_roundtrip(count: int = 1000, seed: int = 0) -> list[Check]:
    """lambda_pair and alpha_beta invert each other; |alpha - beta| < 2 is rejected."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        beta = rng.uniform(-10.0, 10.0)
        alpha = beta + rng.uniform(2.0, 12.0)
        l1, l2 = lambda_pair(alpha, beta)
        a2, b2 = alpha_beta(l1, l2)
        worst = max(worst, abs(a2 - alpha) / max(1.0, abs(alpha)), abs(b2 - beta) / max(1.0, abs(beta)))
        m1, m2 = alpha_beta(*sorted(rng.uniform(-10.0, 10.0, 2), reverse=True))
        p1, p2 = lambda_pair(m1, m2)
        q1, q2 = alpha_beta(p1, p2)
        worst = max(worst, abs(q1 - m1) / max(1.0, abs(m1)), abs(q2 - m2) / max(1.0, abs(m2)))
    rejected = 0
    trials = 200
    for _ in range(trials):
        beta = rng.uniform(-10.0, 10.0)
        alpha = beta + rng.uniform(-1.999, 1.999)
        try:
            lambda_pair(alpha, beta)
        except ComplexRoots:
            rejected += 1
    elapsed = time.perf_counter() - start
    return [
        _le("algebra.roundtrip", worst, 1e-11, f"{count} pairs each way"),
        Check("algebra.gate", rejected == trials, rejected, trials, "pairs with |alpha-beta|<2 rejected"),
        _le("algebra.runtime", elapsed, 1.0, "seconds"),
    ]


def abc_beltrami(n: int = 32, count: int = 10, seed: int = 0) -> list[Check]:
    """Random ABC flows satisfy curl u = lambda0 u spectrally."""
    start = time.perf_counter()
    grid = GridSpec(n)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(count):
        a, b, c = rng.uniform(-2.0, 2.0, 3)
        lam0 = 1 + i % 2
        worst = max(worst, beltrami_residual(abc_flow(a, b, c, lam0, grid), lam0))
    elapsed = time.perf_counter() - start
    return [
        _le("abc.curl_residual", worst, 1e-12, f"{count} flows, lambda0 in (1, 2), N={n}"),
        _le("abc.runtime", elapsed, 5.0, "seconds"),
    ]


CLASSIFICATION_PAIRS = ((1, 1, 4, -1), (2, 1, 3, 1), (1, -1, 5, -1), (3, 1, 9, -1), (6, -1, 2, 1))


def classification(n: int = 32, seed: int = 0) -> list[Check]:
    """Constructed two-shell states sit on their shells; degenerate ones certify."""
    start = time.perf_counter()
    grid = GridSpec(n)
    worst = 0.0
    for i, (n1, s1, n2, s2) in enumerate(CLASSIFICATION_PAIRS):
        spec = DoubleBeltramiSpec.from_shells(n1, s1, n2, s2)
        st = random_double_beltrami(grid, spec.shell1, spec.shell2, seed=seed + i)
        rep = classify(st.u, st.B, spec.alpha, spec.beta)
        worst = max(worst, rep.complement)
    certified = 0
    degenerate_cases = ((4, 1), (2, -1), (3, 1))
    for i, (m, s) in enumerate(degenerate_cases):
        shell = Shell(m, s)
        spec = DoubleBeltramiSpec(shell, shell)
        st = random_double_beltrami(grid, shell, shell, seed=seed + 100 + i)
        rep = classify(st.u, st.B, spec.alpha, spec.beta)
        certified += int(rep.certified and rep.degenerate and rep.fraction1 > 1 - 1e-10)
    elapsed = time.perf_counter() - start
    return [
        _le("classification.off_shell_fraction", worst, 1e-10, f"{len(CLASSIFICATION_PAIRS)} shell pairs"),
        Check(
            "classification.degenerate_certified",
            certified == len(degenerate_cases),
            certified,
            len(degenerate_cases),
            "single-shell states certified",
        ),
        _le("classification.runtime", elapsed, 10.0, "seconds"),
    ]


# ---------------------------------------------------------------------------
# closed-form regressions


def distinct_state(grid: GridSpec, seed: int = 0, amp: float = 0.1):
    """Reference distinct-kind data: shells (1,+) and (4,-), peak amplitude ``amp`` each."""
    spec = DoubleBeltramiSpec.from_shells(1, 1, 4, -1)
    return random_double_beltrami(grid, spec.shell1, spec.shell2, seed=seed, amp1=amp, amp2=amp)


def exact_run(db, params: PhysicalParams, dt: float, t_end: float, record_every: int, reference: ExactSolution):
    state = SimState(0.0, db.u, db.B, params)
    return run(state, t_end, dt, record_every, alpha=db.spec.alpha, beta=db.spec.beta, exact=reference)


def _max_errors(records) -> tuple[float, float]:
    return max(r.err_u for r in records), max(r.err_B for r in records)


def exact_distinct(
    n: int = 32,
    nu: float = 0.05,
    dt: float = 1e-3,
    t_end: float = 1.0,
    reference_nu: float | None = None,
    seed: int = 0,
    record_every: int = 10,
) -> tuple[list[Check], dict]:
    """Solver against the distinct-kind closed form; ``reference_nu`` perturbs the reference."""
    grid = GridSpec(n)
    db = distinct_state(grid, seed)
    params = PhysicalParams(nu, nu, 1.0)
    ref_params = PhysicalParams(reference_nu, reference_nu, 1.0) if reference_nu is not None else params
    ref = ExactSolution.double_beltrami(db, ref_params)
    start = time.perf_counter()
    res = exact_run(db, params, dt, t_end, record_every, ref)
    elapsed = time.perf_counter() - start
    eu, eb = _max_errors(res.records)
    checks = [
        _le("exact.distinct_u", eu, 1e-7, f"N={n} dt={dt} t_end={t_end}"),
        _le("exact.distinct_B", eb, 1e-7, f"N={n} dt={dt} t_end={t_end}"),
        _le("exact.distinct_runtime", elapsed, 300.0, "seconds"),
    ]
    return checks, {"errors": (eu, eb), "db": db, "params": params, "reference": ref}


def exact_convergence(
    n: int = 32,
    nu: float = 0.05,
    dt: float = 1e-3,
    t_end: float = 1.0,
    seed: int = 0,
    coarse_errors: tuple[float, float] | None = None,
) -> list[Check]:
    """Error ratio between dt and dt/2 runs; RK4 predicts about 16.

    The check passes for a ratio in [12, 24].
    """
    grid = GridSpec(n)
    db = distinct_state(grid, seed)
    params = PhysicalParams(nu, nu, 1.0)
    ref = ExactSolution.double_beltrami(db, params)
    if coarse_errors is None:
        coarse_errors = _max_errors(exact_run(db, params, dt, t_end, 100, ref).records)
    fine = _max_errors(exact_run(db, params, dt / 2, t_end, 200, ref).records)
    coarse = max(coarse_errors)
    ratio = coarse / max(max(fine), 1e-300)
    detail = f"err(dt)={coarse:.3e} err(dt/2)={max(fine):.3e}"
    return [Check("exact.convergence_ratio", 12.0 <= ratio <= 24.0, ratio, 16.0, detail)]


def degenerate_state(grid: GridSpec, seed: int = 0, amp: float = 0.1):
    """(alpha, beta) = (3, 1): both eigenvalues equal 2, data on shell 4."""
    shell = Shell(4, 1)
    return random_double_beltrami(grid, shell, shell, seed=seed, amp1=amp, amp2=amp)


def exact_degenerate(
    n: int = 32,
    nu: float = 0.05,
    dt: float = 1e-3,
    t_end: float = 1.0,
    seed: int = 0,
    record_every: int = 10,
) -> list[Check]:
    """Solver against the degenerate closed form (with the corrector term)."""
    grid = GridSpec(n)
    db = degenerate_state(grid, seed)
    params = PhysicalParams(nu, nu, 1.0)
    ref = ExactSolution.double_beltrami(db, params)
    res = exact_run(db, params, dt, t_end, record_every, ref)
    eu, eb = _max_errors(res.records)
    return [_le("exact.degenerate_match", max(eu, eb), 1e-7, f"alpha=3 beta=1 shell 4, N={n}")]


def degenerate_initial_data(grid: GridSpec, alpha: float, beta: float, seed: int = 0):
    """Most general solenoidal (u, B) with B + curl u = alpha u and u - curl B = -beta B.

    Each helical mode with curl eigenvalue mu decouples into the 2x2 system
    B = (alpha - mu) u, u = (mu - beta) B, and the mean mode into
    B = alpha u, u = -beta B. Every mode whose system has a nontrivial null
    space receives a random amplitude. Returns (u, B, corrector_fraction)
    with corrector_fraction = ||curl u - lambda u|| / ||u||.
    """
    lam, _ = lambda_pair(alpha, beta)
    rng = np.random.default_rng(seed)
    kn = np.sqrt(grid.k2)
    coeffs_u = np.zeros((3,) + grid.shape, dtype=np.complex128)
    coeffs_b = np.zeros_like(coeffs_u)
    mask = grid.dealias_mask
    idx = np.argwhere(mask & (kn > 0))
    for i, j, k in idx:
        kv = grid.k[:, i, j, k]
        for sign, vec in zip((1, -1), helical_basis(kv)):
            mu = sign * kn[i, j, k]
            mat = np.array([[alpha - mu, -1.0], [1.0, -(mu - beta)]])
            if abs(np.linalg.det(mat)) < 1e-12:
                a = rng.standard_normal() + 1j * rng.standard_normal()
                coeffs_u[:, i, j, k] += a * vec
                coeffs_b[:, i, j, k] += (alpha - mu) * a * vec
    mean_mat = np.array([[alpha, -1.0], [1.0, beta]])
    if abs(np.linalg.det(mean_mat)) < 1e-12:
        v = rng.standard_normal(3)
        coeffs_u[:, 0, 0, 0] = v
        coeffs_b[:, 0, 0, 0] = alpha * v
    u = SpectralVectorField(grid, symmetrize(coeffs_u))
    B = SpectralVectorField(grid, symmetrize(coeffs_b))
    nu_ = l2_norm(u)
    frac = l2_norm(curl_hat(u) - u * lam) / nu_ if nu_ > 0 else 0.0
    return u, B, frac


def degenerate_corrector(n: int = 16, seed: int = 0) -> list[Check]:
    """Whether admissible degenerate data can leave the eigenspace (needed to exercise the corrector)."""
    grid = GridSpec(n)
    u, B, frac = degenerate_initial_data(grid, 3.0, 1.0, seed)
    return [
        Check(
            "exact.degenerate_corrector_exercised",
            frac >= 1e-6,
            frac,
            1e-6,
            "||curl u0 - 2 u0|| / ||u0|| over all admissible modes",
        )
    ]


def decay_fit(
    n: int = 16,
    nu: float = 0.05,
    t_end: float = 40.0,
    window: tuple[float, float] = (20.0, 40.0),
    seed: int = 0,
) -> list[Check]:
    """Late-window exponential rate of ||u||^2 on the distinct-kind run."""
    grid = GridSpec(n)
    db = distinct_state(grid, seed)
    params = PhysicalParams(nu, nu, 1.0)
    t, e = [], []

    def observe(s: SimState) -> bool:
        t.append(s.t)
        e.append(l2_norm(s.u) ** 2)
        return False

    run_adaptive(SimState(0.0, db.u, db.B, params), t_end, chunk=20, observer=observe)
    fit = fit_decay_rate(t, e, window)
    lam_min = min(abs(db.spec.lambda1), abs(db.spec.lambda2))
    expected = 2.0 * nu * lam_min**2
    rel = abs(-fit.slope - expected) / expected
    return [_le("exact.decay_rate", rel, 0.01, f"fitted {-fit.slope:.6g} vs {expected:.6g}, R^2={fit.r2:.9f}")]


# ---------------------------------------------------------------------------
# ideal conservation


def smooth_state(grid: GridSpec, seed: int = 0, peak: float = 0.5) -> tuple[SpectralVectorField, SpectralVectorField]:
    """Mean-free multi-shell u and B (shells 1, 2, 3, both helicities), peak |u|, |B| = ``peak``."""
    from .spectral import inverse_transform

    rng = np.random.default_rng(seed)
    out = []
    for _ in range(2):
        f = SpectralVectorField.zeros(grid)
        for m in (1, 2, 3):
            for s in (1, -1):
                f = f + shell_field(m, s, grid, seed=int(rng.integers(2**31))) * (1.0 / m)
        f = f * (peak / float(np.max(np.linalg.norm(inverse_transform(f), axis=0))))
        out.append(f)
    return out[0], out[1]


def conservation(n: int = 32, dt: float = 1e-3, t_end: float = 1.0, seed: int = 0) -> list[Check]:
    grid = GridSpec(n)
    u, B = smooth_state(grid, seed)
    state = SimState(0.0, u, B, PhysicalParams(0.0, 0.0, 1.0))
    start = time.perf_counter()
    res = run(state, t_end, dt, 100)
    elapsed = time.perf_counter() - start
    r0 = res.records[0]

    def drift(name):
        ref = getattr(r0, name)
        return max(abs(getattr(r, name) - ref) for r in res.records) / abs(ref)

    return [
        _le("conservation.energy", drift("E"), 1e-6, f"N={n} dt={dt} t_end={t_end}"),
        _le("conservation.magnetic_helicity", drift("H_B"), 1e-6),
        _le("conservation.magneto_vorticity_helicity", drift("H_Bw"), 1e-6),
        _le("conservation.runtime", elapsed, 300.0, "seconds"),
    ]


# ---------------------------------------------------------------------------
# variational


def woltjer_shell_oracle(h1: float, n_max: int = 50) -> float:
    """Minimum of E = |lambda| |h1| over admissible shells whose sign matches h1."""
    return min(math.sqrt(m) * abs(h1) for m in range(1, n_max + 1) if is_three_square(m))


def woltjer(n: int = 16, seed: int = 0) -> list[Check]:
    h1 = 3.0 * VOLUME
    start = time.perf_counter()
    res = minimize_woltjer(h1, GridSpec(n), seed)
    elapsed = time.perf_counter() - start
    oracle = woltjer_shell_oracle(h1)
    (lam,) = res.multipliers
    return [
        _le("variational.woltjer_energy", abs(res.energy - oracle) / oracle, 1e-4, f"E={res.energy:.12g}"),
        _le("variational.woltjer_kkt", res.kkt_residual, 1e-6),
        _le("variational.woltjer_lambda", abs(lam - 1.0), 1e-4, f"lambda={lam:.12g}"),
        _le("variational.woltjer_runtime", elapsed, 120.0, "seconds"),
    ]


def fixed_omega_oracle(grid: GridSpec, seed: int = 0, a: float = 0.7, b: float = 1.0):
    """u on shell (1,+), and a stationary B = a u + b v with v on shell (2,+).

    B is a sum of two curl eigenfields and satisfies
    curl B = l1 B + l2 (B + curl u) with l1 + l2 = sqrt(2), l2 = a (1 - sqrt(2)).
    """
    rng = np.random.default_rng(seed)
    u = shell_field(1, 1, grid, seed=int(rng.integers(2**31)))
    v = shell_field(2, 1, grid, seed=int(rng.integers(2**31)))
    u = u * (math.sqrt(VOLUME) / l2_norm(u))
    v = v * (math.sqrt(VOLUME) / l2_norm(v))
    return u, u * a + v * b


def fixed_omega(n: int = 16, seed: int = 0) -> list[Check]:
    grid = GridSpec(n)
    u, B_known = fixed_omega_oracle(grid, seed)
    h1, h2 = measured_targets(u, B_known)
    oracle = l2_norm(B_known) ** 2
    res = minimize_fixed_omega(curl_hat(u), h1, h2, grid, seed)
    return [
        _le("variational.fixed_omega_energy", res.energy - oracle, 1e-6, f"E={res.energy:.10g} oracle={oracle:.10g}"),
        _le("variational.fixed_omega_kkt", res.kkt_residual, 1e-6),
        _le("variational.fixed_omega_constraints", max(res.constraint_residuals), 1e-8),
    ]


# ---------------------------------------------------------------------------
# perturbation experiments


def random_perturbation(grid: GridSpec, seed: int, k2_max: int = 9) -> tuple[SpectralVectorField, SpectralVectorField]:
    """Mean-free solenoidal random (v, b) on |k|^2 <= k2_max with unit total L2 norm."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(2):
        c = rng.standard_normal((3,) + grid.shape) + 1j * rng.standard_normal((3,) + grid.shape)
        c *= (grid.k2_int <= k2_max) & (grid.k2_int > 0)
        k2 = np.where(grid.k2 == 0, 1.0, grid.k2)
        c -= grid.k * (np.einsum("i...,i...->...", grid.k, c) / k2)
        out.append(SpectralVectorField(grid, symmetrize(c)))
    v, b = out
    norm = math.sqrt(l2_norm(v) ** 2 + l2_norm(b) ** 2)
    return v / norm, b / norm


def perturbed_state(db, params: PhysicalParams, fraction: float, seed: int) -> SimState:
    """Background plus a perturbation with ||(v, b)|| = fraction * ||(u, B)||."""
    v, b = random_perturbation(db.u.grid, seed)
    scale = fraction * math.sqrt(energy(db.u, db.B)[2])
    return SimState(0.0, db.u + v * scale, db.B + b * scale, params)


def stability(
    n: int = 16,
    nu: float = 0.05,
    fraction: float = 0.01,
    seed: int = 0,
    transient: float | None = None,
    horizon: float | None = None,
) -> list[Check]:
    """Perturbation energy about the closed-form background decays monotonically."""
    grid = GridSpec(n)
    db = distinct_state(grid, seed)
    params = PhysicalParams(nu, nu, 1.0)
    ref = ExactSolution.double_beltrami(db, params)
    lam_min = min(abs(db.spec.lambda1), abs(db.spec.lambda2))
    rate_scale = nu * lam_min**2
    transient = 1.0 / rate_scale if transient is None else transient
    horizon = 200.0 / rate_scale if horizon is None else horizon
    samples: list[tuple[float, float]] = []

    def observe(s: SimState) -> bool:
        ue, be = exact_at(ref, s.t)
        pe = l2_norm(s.u - ue) ** 2 + l2_norm(s.B - be) ** 2
        samples.append((s.t, pe))
        return pe < 1e-5 * samples[0][1]

    run_adaptive(perturbed_state(db, params, fraction, seed + 1), horizon, chunk=20, observer=observe)
    p0 = samples[0][1]
    late = [(t, p) for t, p in samples if t >= transient]
    worst_rise = max((b[1] / a[1] - 1.0 for a, b in zip(late, late[1:])), default=0.0)
    reached = next((t for t, p in samples if p < 1e-4 * p0), math.inf)
    return [
        _le("stability.monotone_after_transient", max(worst_rise, 0.0), 1e-9, f"transient t<{transient:g}"),
        _le("stability.decay_time", reached, horizon, "first t with perturbation energy < 1e-4 of initial"),
    ]


def theorem23(
    n: int = 16,
    nu: float = 0.06,
    eta: float = 0.04,
    fraction: float = 1e-3,
    t_end: float = 50.0,
    seed: int = 0,
) -> tuple[list[Check], list[tuple[float, float]]]:
    """||Phi||^2_{H^1/2} + ||Psi||^2_{H^1/2} stays within 10x of its initial value.

    The run proceeds for any (nu, eta); whether the pair meets
    16|nu - eta| <= nu + eta is reported as its own check.
    """
    grid = GridSpec(n)
    db = distinct_state(grid, seed)
    alpha, beta = db.spec.alpha, db.spec.beta
    if abs(1.0 + alpha * beta) < 1e-12:
        raise ValueError("background has 1 + alpha beta = 0")
    params = PhysicalParams(nu, eta, 1.0)
    samples: list[tuple[float, float]] = []

    def observe(s: SimState) -> bool:
        samples.append((s.t, phi_psi(s.u, s.B, alpha, beta).monitored))
        return False

    run_adaptive(perturbed_state(db, params, fraction, seed + 1), t_end, chunk=10, observer=observe)
    m0 = samples[0][1]
    ratio = max(m for _, m in samples) / m0
    t_peak = max(samples, key=lambda s: s[1])[0]
    checks = [
        _le("theorem23.bounded", ratio, 10.0, f"max/initial, peak at t={t_peak:.3g}"),
        _le("theorem23.viscosity_hypothesis", 16 * abs(nu - eta), nu + eta, "16|nu-eta| <= nu+eta"),
    ]
    return checks, samples


# ---------------------------------------------------------------------------
# suites

SUITES = ("algebra", "exact", "conservation", "stability", "theorem23", "variational")


def run_suite(name: str, overrides: dict | None = None) -> list[Check]:
    """Run a named suite. ``overrides`` may hold n, dt, t_end, reference_nu."""
    o = dict(overrides or {})
    if name == "algebra":
        return algebra_roundtrip() + abc_beltrami(n=o.get("n", 32)) + classification(n=o.get("n", 32))
    if name == "exact":
        kw = {k: o[k] for k in ("n", "dt", "t_end") if k in o}
        checks, info = exact_distinct(reference_nu=o.get("reference_nu"), **kw)
        checks += exact_convergence(coarse_errors=info["errors"], **kw)
        checks += exact_degenerate(**kw)
        checks += degenerate_corrector()
        checks += decay_fit()
        return checks
    if name == "conservation":
        return conservation(**{k: o[k] for k in ("n", "dt", "t_end") if k in o})
    if name == "stability":
        return stability(**{k: o[k] for k in ("n",) if k in o})
    if name == "theorem23":
        kw = {k: o[k] for k in ("n", "t_end") if k in o}
        return theorem23(**kw)[0]
    if name == "variational":
        return woltjer() + fixed_omega()
    raise KeyError(name)

"""Beltrami fields, double Beltrami states and their (alpha, beta) algebra.

A double Beltrami state is a solenoidal pair (u, B) with

    B + curl u = alpha u,      u - curl B = -beta B

for constant alpha, beta. Such states are sums of two curl eigenfields with
eigenvalues lambda1, lambda2 solving lambda^2 - (alpha+beta) lambda
+ (1 + alpha beta) = 0. On the lattice Z^3 the eigenvalues are sign * sqrt(n)
for integer shells n, so construction is driven by shells and (alpha, beta)
is derived from them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import (
    VOLUME,
    GridSpec,
    SpectralError,
    SpectralVectorField,
    _helical_grid,
    curl_hat,
    forward_transform,
    inverse_transform,
    helical_decompose,
    l2_norm,
)


class ComplexRoots(ValueError):
    """(alpha - beta)^2 < 4: no real curl eigenvalues."""


class EmptyShell(ValueError):
    """No lattice vector k with |k|^2 = n."""


class NotBeltrami(ValueError):
    pass


class DegenerateFactors(ValueError):
    """|alpha - beta| < 2, so the state cannot be classified."""


_DISC_TOL = 1e-12


def lambda_pair(alpha: float, beta: float) -> tuple[float, float]:
    """Roots (lambda1 >= lambda2) of l^2 - (alpha+beta) l + (1 + alpha beta).

    Raises:
        ComplexRoots: when (alpha - beta)^2 < 4.
    """
    disc = (alpha - beta) ** 2 - 4.0
    if disc < 0.0:
        if disc > -_DISC_TOL * max(1.0, (alpha - beta) ** 2):
            disc = 0.0
        else:
            raise ComplexRoots(f"(alpha - beta)^2 - 4 = {disc:.6g} < 0 for alpha={alpha}, beta={beta}")
    root = math.sqrt(disc)
    s = alpha + beta
    return 0.5 * (s + root), 0.5 * (s - root)


def alpha_beta(lambda1: float, lambda2: float) -> tuple[float, float]:
    """Beltrami factors (alpha >= beta) for curl eigenvalues lambda1, lambda2."""
    root = math.sqrt((lambda1 - lambda2) ** 2 + 4.0)
    s = lambda1 + lambda2
    return 0.5 * (s + root), 0.5 * (s - root)


def is_three_square(n: int) -> bool:
    """True if n is a sum of three integer squares (Legendre)."""
    if n < 0:
        return False
    if n == 0:
        return True
    while n % 4 == 0:
        n //= 4
    return n % 8 != 7


@dataclass(frozen=True)
class Shell:
    """Curl eigenvalue sign * sqrt(n) on the lattice; n = 0 means lambda = 0."""

    n: int
    sign: int = 1

    def __post_init__(self):
        if self.n < 0:
            raise EmptyShell(f"shell radius squared must be >= 0, got {self.n}")
        if self.sign not in (1, -1):
            raise ValueError(f"shell sign must be +1 or -1, got {self.sign}")
        if not is_three_square(self.n):
            raise EmptyShell(f"{self.n} is not a sum of three squares; the shell |k|^2={self.n} is empty")

    @property
    def lam(self) -> float:
        return self.sign * math.sqrt(self.n)


@dataclass(frozen=True)
class DoubleBeltramiSpec:
    """Eigenvalue pair and the derived Beltrami factors.

    ``shell1`` carries the larger eigenvalue.
    """

    shell1: Shell
    shell2: Shell
    lambda1: float = field(init=False)
    lambda2: float = field(init=False)
    alpha: float = field(init=False)
    beta: float = field(init=False)

    def __post_init__(self):
        s1, s2 = self.shell1, self.shell2
        if s1.lam < s2.lam:
            s1, s2 = s2, s1
            object.__setattr__(self, "shell1", s1)
            object.__setattr__(self, "shell2", s2)
        a, b = alpha_beta(s1.lam, s2.lam)
        object.__setattr__(self, "lambda1", s1.lam)
        object.__setattr__(self, "lambda2", s2.lam)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def from_shells(cls, n1: int, s1: int, n2: int, s2: int) -> "DoubleBeltramiSpec":
        return cls(Shell(n1, s1), Shell(n2, s2))

    @property
    def degenerate(self) -> bool:
        return self.shell1 == self.shell2 or (self.shell1.n == 0 and self.shell2.n == 0)


# ---------------------------------------------------------------------------
# Constructors


def abc_flow(A: float, B: float, C: float, lambda0: int, grid: GridSpec) -> SpectralVectorField:
    """ABC flow with curl u = lambda0 u.

    u = (A sin l x3 + C cos l x2, B sin l x1 + A cos l x3, C sin l x2 + B cos l x1)
    """
    if isinstance(lambda0, bool) or float(lambda0) != int(lambda0) or int(lambda0) == 0:
        raise ValueError(f"lambda0 must be a nonzero integer for periodicity, got {lambda0!r}")
    lam = int(lambda0)
    if abs(lam) > grid.dealias_cutoff:
        raise SpectralError(f"|lambda0|={abs(lam)} exceeds the dealiasing cutoff {grid.dealias_cutoff}")
    f = SpectralVectorField.zeros(grid)
    c = f.coeffs

    def put(comp, axis, coeff_pos):
        k = [0, 0, 0]
        k[axis] = lam
        c[(comp,) + grid.index_of(k)] += coeff_pos
        c[(comp,) + grid.index_of([-x for x in k])] += np.conj(coeff_pos)

    # sin(l x) -> -i/2 at +l ; cos(l x) -> 1/2 at +l
    put(0, 2, -0.5j * A)
    put(0, 1, 0.5 * C)
    put(1, 0, -0.5j * B)
    put(1, 2, 0.5 * A)
    put(2, 1, -0.5j * C)
    put(2, 0, 0.5 * B)
    return f


def _shell_half(n: int) -> list[tuple[int, int, int]]:
    """Wavevectors on |k|^2 = n with a canonical representative of each +-k pair."""
    r = int(math.isqrt(n))
    out = []
    for a in range(-r, r + 1):
        for b in range(-r, r + 1):
            for c in range(-r, r + 1):
                if a * a + b * b + c * c == n and (a, b, c) > (0, 0, 0):
                    out.append((a, b, c))
    return out


def shell_wavevectors(n: int) -> list[tuple[int, int, int]]:
    """All k in Z^3 with |k|^2 = n."""
    half = _shell_half(n)
    return half + [(-a, -b, -c) for a, b, c in half]


def shell_field(
    n: int,
    sign: int,
    grid: GridSpec,
    seed: int | None = None,
    amplitudes: dict | None = None,
) -> SpectralVectorField:
    """Curl eigenfield with eigenvalue sign * sqrt(n) supported on |k|^2 = n.

    Amplitudes of the ``sign`` helical component are either given explicitly
    as ``{k: a}`` (k a 3-tuple; the mirror -k is filled in for reality) or
    drawn i.i.d. standard complex Gaussian from ``numpy.random.default_rng(seed)``
    on the canonical half shell (lexicographically positive k).

    Raises:
        EmptyShell: n is not a sum of three squares (or n = 0).
    """
    if n <= 0 or not is_three_square(n):
        raise EmptyShell(f"{n} is not a sum of three squares; the shell |k|^2={n} is empty")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if math.sqrt(n) > grid.dealias_cutoff:
        raise SpectralError(f"shell |k|^2={n} extends past the dealiasing cutoff {grid.dealias_cutoff}")
    half = _shell_half(n)
    amps = np.zeros(grid.shape, dtype=np.complex128)
    if amplitudes is None:
        rng = np.random.default_rng(seed)
        draws = rng.standard_normal((len(half), 2))
        for kv, (re, im) in zip(half, draws):
            a = (re + 1j * im) / math.sqrt(2.0)
            amps[grid.index_of(kv)] = a
            amps[grid.index_of(tuple(-x for x in kv))] = -np.conj(a)
    else:
        for kv, a in amplitudes.items():
            kv = tuple(int(x) for x in kv)
            if sum(x * x for x in kv) != n:
                raise ValueError(f"wavevector {kv} is not on shell {n}")
            neg = tuple(-x for x in kv)
            amps[grid.index_of(kv)] = a
            amps[grid.index_of(neg)] = -np.conj(a)
    hp = _helical_grid(grid.n)
    h = hp if sign == 1 else np.conj(hp)
    return SpectralVectorField(grid, amps * h)


def trig_shell_example(kappa, nvec, grid: GridSpec) -> SpectralVectorField:
    """Separable solenoidal field solving -Laplace u = |n|^2 u (requires kappa . n = 0).

    u = (k1 sin n1x1 cos n2x2 cos n3x3, k2 cos n1x1 sin n2x2 cos n3x3,
         k3 cos n1x1 cos n2x2 sin n3x3)
    """
    kappa = np.asarray(kappa, dtype=float)
    nv = np.asarray(nvec, dtype=int)
    if abs(float(kappa @ nv)) > 1e-14:
        raise ValueError("kappa . n must vanish for a solenoidal field")
    x = grid.coords()
    s = [np.sin(nv[i] * x[i]) for i in range(3)]
    c = [np.cos(nv[i] * x[i]) for i in range(3)]
    samples = np.stack(
        (
            kappa[0] * s[0] * c[1] * c[2],
            kappa[1] * c[0] * s[1] * c[2],
            kappa[2] * c[0] * c[1] * s[2],
        )
    )
    return forward_transform(samples, grid)


def beltrami_residual(u: SpectralVectorField, lam: float) -> float:
    """||curl u - lam u|| / ||u|| (0 for the zero field)."""
    nu = l2_norm(u)
    if nu == 0.0:
        return 0.0
    return l2_norm(curl_hat(u) - u * lam) / nu


# ---------------------------------------------------------------------------
# Double Beltrami states


@dataclass(frozen=True, eq=False)
class DoubleBeltramiState:
    spec: DoubleBeltramiSpec
    u1: SpectralVectorField
    u2: SpectralVectorField

    @property
    def u(self) -> SpectralVectorField:
        return self.u1 + self.u2

    @property
    def B1(self) -> SpectralVectorField:
        return self.u1 * (self.spec.alpha - self.spec.lambda1)

    @property
    def B2(self) -> SpectralVectorField:
        return self.u2 * (self.spec.alpha - self.spec.lambda2)

    @property
    def B(self) -> SpectralVectorField:
        return self.B1 + self.B2

    def scaled(self, c: float) -> "DoubleBeltramiState":
        return DoubleBeltramiState(self.spec, self.u1 * c, self.u2 * c)


def _check_component(u: SpectralVectorField, shell: Shell, label: str):
    if shell.n == 0:
        # lambda = 0 components are constants on the torus
        if np.max(np.abs(u.without_mean().coeffs)) > 1e-12 * max(1.0, np.max(np.abs(u.coeffs))):
            raise NotBeltrami(f"{label}: a lambda=0 component must be a constant field")
        return
    r = beltrami_residual(u, shell.lam)
    if r > 1e-10:
        raise NotBeltrami(f"{label}: curl residual {r:.3e} for lambda={shell.lam:.6g}")


def make_double_beltrami(
    u1: SpectralVectorField,
    u2: SpectralVectorField,
    shell1: Shell,
    shell2: Shell,
) -> DoubleBeltramiState:
    """Build (u, B) = (u1 + u2, -curl u + alpha u) from two curl eigenfields.

    Raises:
        NotBeltrami: either component fails its eigen-relation at 1e-10.
        ValueError: shell1 carries the smaller eigenvalue.
    """
    if shell1.lam < shell2.lam:
        raise ValueError("shell1 must carry the larger eigenvalue (lambda1 >= lambda2)")
    _check_component(u1, shell1, "u1")
    _check_component(u2, shell2, "u2")
    spec = DoubleBeltramiSpec(shell1, shell2)
    for lam in (spec.lambda1, spec.lambda2):
        check = (spec.alpha - lam) * (lam - spec.beta)
        if abs(check - 1.0) > 1e-10:
            raise ArithmeticError(f"(alpha - lambda)(lambda - beta) = {check!r}, expected 1")
    return DoubleBeltramiState(spec, u1, u2)


def random_double_beltrami(
    grid: GridSpec,
    shell1: Shell,
    shell2: Shell,
    seed: int = 0,
    amp1: float = 1.0,
    amp2: float = 1.0,
) -> DoubleBeltramiState:
    """Double Beltrami state from seeded random shell fields scaled to unit max amplitude times amp."""
    if shell1.lam < shell2.lam:
        shell1, shell2 = shell2, shell1
        amp1, amp2 = amp2, amp1
    rng = np.random.default_rng(seed)
    comps = []
    for shell, amp in ((shell1, amp1), (shell2, amp2)):
        if shell.n == 0:
            v = rng.standard_normal(3)
            comps.append(SpectralVectorField.constant(grid, amp * v / np.linalg.norm(v)))
            continue
        f = shell_field(shell.n, shell.sign, grid, seed=int(rng.integers(2**31)))
        peak = float(np.max(np.abs(inverse_transform(f))))
        comps.append(f * (amp / peak))
    return make_double_beltrami(comps[0], comps[1], shell1, shell2)


@dataclass(frozen=True)
class ResidualReport:
    r1: float
    r2: float

    def max(self) -> float:
        return max(self.r1, self.r2)


def verify_double_beltrami(
    u: SpectralVectorField, B: SpectralVectorField, alpha: float, beta: float
) -> ResidualReport:
    """Relative residuals of B + curl u = alpha u and u - curl B = -beta B."""
    e1 = B + curl_hat(u) - u * alpha
    e2 = u - curl_hat(B) + B * beta
    nu, nb = l2_norm(u), l2_norm(B)
    r1 = l2_norm(e1) / nu if nu > 0 else (0.0 if l2_norm(e1) == 0 else math.inf)
    r2 = l2_norm(e2) / nb if nb > 0 else (0.0 if l2_norm(e2) == 0 else math.inf)
    return ResidualReport(r1, r2)


@dataclass(frozen=True)
class ShellReport:
    """Helical energy of u split over the eigenvalue shells of (alpha, beta).

    Fractions are relative to ||u||^2; ``complement`` is everything not on a
    shell. ``degenerate`` marks |alpha - beta| = 2, where both shells coincide.
    """

    lambda1: float
    lambda2: float
    fraction1: float
    fraction2: float
    complement: float
    degenerate: bool
    residuals: ResidualReport
    certified: bool


def _eigen_masks(grid: GridSpec, lam: float, tol: float = 1e-9):
    """Boolean masks of (k, +) and (k, -) helical modes with eigenvalue lam."""
    kn = np.sqrt(grid.k2)
    on_plus = (kn > 0) & (np.abs(kn - lam) <= tol)
    on_minus = (kn > 0) & (np.abs(kn + lam) <= tol)
    return on_plus, on_minus


def _split_energy(u: SpectralVectorField, lams: list[float], tol: float = 1e-9):
    """Energy on each eigenvalue in ``lams`` and energy off all of them."""
    c = helical_decompose(u)
    e_plus = VOLUME * np.abs(c.plus) ** 2
    e_minus = VOLUME * np.abs(c.minus) ** 2
    mean_e = VOLUME * float(np.sum(np.abs(u.coeffs[:, 0, 0, 0]) ** 2))
    used_plus = np.zeros(u.grid.shape, dtype=bool)
    used_minus = np.zeros(u.grid.shape, dtype=bool)
    mean_used = False
    parts = []
    for lam in lams:
        if abs(lam) <= tol:
            parts.append(mean_e)
            mean_used = True
            continue
        mp, mm = _eigen_masks(u.grid, lam, tol)
        parts.append(float(np.sum(e_plus[mp]) + np.sum(e_minus[mm])))
        used_plus |= mp
        used_minus |= mm
    off = float(np.sum(e_plus[~used_plus]) + np.sum(e_minus[~used_minus]))
    if not mean_used:
        off += mean_e
    return parts, off


def classify(
    u: SpectralVectorField,
    B: SpectralVectorField,
    alpha: float,
    beta: float,
    complement_tol: float = 1e-10,
    residual_tol: float = 1e-8,
) -> ShellReport:
    """Shell content of u relative to the eigenvalues of (alpha, beta).

    Certification requires both state residuals <= ``residual_tol`` and
    off-shell energy fraction <= ``complement_tol``.

    Raises:
        DegenerateFactors: |alpha - beta| < 2.
    """
    try:
        l1, l2 = lambda_pair(alpha, beta)
    except ComplexRoots as exc:
        raise DegenerateFactors(str(exc)) from exc
    res = verify_double_beltrami(u, B, alpha, beta)
    total = l2_norm(u) ** 2
    degenerate = abs(l1 - l2) <= 1e-9
    (e1, *rest), off = _split_energy(u, [l1] if degenerate else [l1, l2])
    e2 = rest[0] if rest else 0.0
    if total == 0.0:
        f1 = f2 = comp = 0.0
    else:
        f1, f2, comp = e1 / total, e2 / total, off / total
    certified = res.max() <= residual_tol and comp <= complement_tol
    return ShellReport(l1, l2, f1, f2, comp, degenerate, res, certified)

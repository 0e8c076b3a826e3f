"""Fourier-grid infrastructure on the periodic box [-pi, pi]^3.

Convention: u(x) = sum_k u_hat(k) exp(i k.x). Coefficient arrays have shape
(3, n, n, n) in numpy FFT index order, so index i on an axis holds the
integer wavenumber ``fftfreq(n, 1/n)[i]``. The mean mode sits at [:, 0, 0, 0].

Integrals over the box obey Parseval with a (2*pi)^3 factor:

    int f.g dx = (2*pi)^3 * sum_k f_hat(k) . conj(g_hat(k))

Sample points are x_j = 2*pi*j/n. On the torus these are the same lattice as
-pi + 2*pi*j/n (n even), only relabelled.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

VOLUME = (2.0 * np.pi) ** 3


class SpectralError(ValueError):
    """Base class for invalid spectral inputs."""


class GridMismatch(SpectralError):
    pass


class NonzeroMeanNoPotential(SpectralError):
    """A constant field is not the curl of anything on the torus."""


class NotSolenoidal(SpectralError):
    pass


def fft_workers() -> int:
    """Thread cap for transforms, from ``BELTRAMI_LAB_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("BELTRAMI_LAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class GridSpec:
    """Uniform n^3 grid on [-pi, pi]^3.

    Attributes:
        n: points per axis, even and at least 8.
    """

    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool):
            raise SpectralError(f"grid size must be an integer, got {self.n!r}")
        if self.n < 8 or self.n % 2:
            raise SpectralError(f"grid size must be even and >= 8, got {self.n}")

    @property
    def dealias_cutoff(self) -> int:
        """Largest retained |k_i| under the 2/3 rule."""
        return self.n // 3

    @property
    def kmax(self) -> float:
        """Largest retained wavevector magnitude, sqrt(3) * cutoff."""
        return float(np.sqrt(3.0) * self.dealias_cutoff)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def k(self) -> np.ndarray:
        """Integer wavevectors, shape (3, n, n, n), float dtype."""
        return _wavevectors(self.n)[0]

    @property
    def k2(self) -> np.ndarray:
        return _wavevectors(self.n)[1]

    @property
    def k2_int(self) -> np.ndarray:
        return _wavevectors(self.n)[2]

    @property
    def dealias_mask(self) -> np.ndarray:
        return _wavevectors(self.n)[3]

    def coords(self) -> np.ndarray:
        """Sample points, shape (3, n, n, n)."""
        x = 2.0 * np.pi * np.arange(self.n) / self.n
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))

    def index_of(self, k) -> tuple[int, int, int]:
        """Array index of integer wavevector ``k``."""
        half = self.n // 2
        if any(abs(int(c)) > half for c in k):
            raise SpectralError(f"wavevector {tuple(k)} not representable at n={self.n}")
        return tuple(int(c) % self.n for c in k)


@lru_cache(maxsize=16)
def _wavevectors(n: int):
    k1 = np.fft.fftfreq(n, 1.0 / n)
    k = np.stack(np.meshgrid(k1, k1, k1, indexing="ij"))
    k2 = np.sum(k * k, axis=0)
    k2_int = np.rint(k2).astype(np.int64)
    cutoff = n // 3
    mask = np.all(np.abs(k) <= cutoff, axis=0)
    for arr in (k, k2, k2_int, mask):
        arr.setflags(write=False)
    return k, k2, k2_int, mask


@lru_cache(maxsize=16)
def _neg_index(n: int) -> np.ndarray:
    return (-np.arange(n)) % n


def reflect(coeffs: np.ndarray) -> np.ndarray:
    """Return c(-k) for a coefficient array over the last three axes."""
    ni = _neg_index(coeffs.shape[-1])
    return coeffs[..., ni, :, :][..., :, ni, :][..., :, :, ni]


def symmetrize(coeffs: np.ndarray) -> np.ndarray:
    """Project onto the real-field subspace c(-k) = conj(c(k)), bitwise exact."""
    return 0.5 * (coeffs + np.conj(reflect(coeffs)))


@dataclass(frozen=True, eq=False)
class SpectralVectorField:
    """Truncated Fourier representation of a real 3-vector field.

    Attributes:
        grid: the grid the coefficients live on.
        coeffs: complex array of shape (3, n, n, n); the mean mode is
            ``coeffs[:, 0, 0, 0]``.
    """

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != (3,) + self.grid.shape:
            raise GridMismatch(f"coefficient shape {c.shape} does not match grid n={self.grid.n}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "SpectralVectorField":
        return cls(grid, np.zeros((3,) + grid.shape, dtype=np.complex128))

    @classmethod
    def constant(cls, grid: GridSpec, vector) -> "SpectralVectorField":
        f = cls.zeros(grid)
        f.coeffs[:, 0, 0, 0] = np.asarray(vector, dtype=float)
        return f

    @property
    def mean(self) -> np.ndarray:
        return self.coeffs[:, 0, 0, 0].real.copy()

    def without_mean(self) -> "SpectralVectorField":
        c = self.coeffs.copy()
        c[:, 0, 0, 0] = 0.0
        return SpectralVectorField(self.grid, c)

    def reality_defect(self) -> float:
        """max |c(-k) - conj(c(k))|; zero for a field built by this package."""
        return float(np.max(np.abs(reflect(self.coeffs) - np.conj(self.coeffs))))

    def divergence_residual(self) -> float:
        """max_k |k.c(k)| / max_k |c(k)| (0 for the zero field)."""
        scale = np.max(np.abs(self.coeffs))
        if scale == 0.0:
            return 0.0
        div = np.einsum("i...,i...->...", self.grid.k, self.coeffs)
        return float(np.max(np.abs(div)) / scale)

    def _check(self, other: "SpectralVectorField"):
        if other.grid != self.grid:
            raise GridMismatch(f"grids differ: n={self.grid.n} vs n={other.grid.n}")

    def __add__(self, other):
        self._check(other)
        return SpectralVectorField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralVectorField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralVectorField(self.grid, -self.coeffs)

    def __mul__(self, scalar):
        return SpectralVectorField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralVectorField(self.grid, self.coeffs / float(scalar))


def inner(f: SpectralVectorField, g: SpectralVectorField) -> float:
    """L^2 inner product over the box, computed spectrally."""
    f._check(g)
    return float(VOLUME * np.real(np.vdot(g.coeffs, f.coeffs)))


def l2_norm(f: SpectralVectorField) -> float:
    return float(np.sqrt(max(inner(f, f), 0.0)))


def forward_transform(samples: np.ndarray, grid: GridSpec | None = None) -> SpectralVectorField:
    """Real samples of shape (3, n, n, n) to spectral coefficients."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 4 or samples.shape[0] != 3 or len(set(samples.shape[1:])) != 1:
        raise GridMismatch(f"expected samples of shape (3, n, n, n), got {samples.shape}")
    n = samples.shape[1]
    if grid is None:
        grid = GridSpec(n)
    elif grid.n != n:
        raise GridMismatch(f"samples have n={n}, grid has n={grid.n}")
    c = sfft.fftn(samples, axes=(1, 2, 3), workers=fft_workers()) / n**3
    return SpectralVectorField(grid, symmetrize(c))


def inverse_transform(f: SpectralVectorField) -> np.ndarray:
    """Spectral coefficients to real samples of shape (3, n, n, n)."""
    n = f.grid.n
    out = sfft.ifftn(f.coeffs, axes=(1, 2, 3), workers=fft_workers()) * n**3
    scale = max(float(np.max(np.abs(out.real))), 1.0)
    residue = float(np.max(np.abs(out.imag)))
    if residue > 1e-12 * scale:
        raise SpectralError(f"inverse transform is not real (imaginary residue {residue:.3e})")
    return np.ascontiguousarray(out.real)


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise cross product over the leading axis."""
    return np.stack(
        (
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        )
    )


def curl_hat(f: SpectralVectorField) -> SpectralVectorField:
    """i k x f_hat(k); the mean mode maps to zero."""
    return SpectralVectorField(f.grid, 1j * cross(f.grid.k, f.coeffs))


def leray_project(f: SpectralVectorField) -> SpectralVectorField:
    """Remove the gradient part; the mean mode passes through unchanged."""
    return SpectralVectorField(f.grid, _leray(f.grid, f.coeffs))


def _leray(grid: GridSpec, c: np.ndarray) -> np.ndarray:
    k = grid.k
    k2 = np.where(grid.k2 == 0, 1.0, grid.k2)
    kdotc = np.einsum("i...,i...->...", k, c)
    return c - k * (kdotc / k2)


def invert_curl(b: SpectralVectorField) -> SpectralVectorField:
    """Mean-zero solenoidal vector potential A with curl A = b.

    Raises:
        NonzeroMeanNoPotential: if b has a nonzero mean mode.
    """
    scale = max(float(np.max(np.abs(b.coeffs))), 1e-300)
    if np.max(np.abs(b.coeffs[:, 0, 0, 0])) > 1e-14 * scale:
        raise NonzeroMeanNoPotential(f"field has mean {b.mean}; no periodic vector potential exists")
    k2 = np.where(b.grid.k2 == 0, 1.0, b.grid.k2)
    a = 1j * cross(b.grid.k, b.coeffs) / k2
    a[:, 0, 0, 0] = 0.0
    return SpectralVectorField(b.grid, a)


def dealias(f: SpectralVectorField) -> SpectralVectorField:
    """Zero every mode with some |k_i| above the 2/3-rule cutoff."""
    return SpectralVectorField(f.grid, f.coeffs * f.grid.dealias_mask)


def sobolev_norm(f: SpectralVectorField, s: float) -> float:
    """Homogeneous H^s norm; the mean mode counts only for s >= 0.

    Raises:
        SpectralError: for s < 0 with a nonzero mean mode.
    """
    mean2 = float(np.sum(np.abs(f.coeffs[:, 0, 0, 0]) ** 2))
    if s < 0 and mean2 > 0.0:
        raise SpectralError("negative-order Sobolev norm is undefined on a nonzero mean mode")
    k2 = f.grid.k2
    weight = np.zeros_like(k2)
    nz = k2 > 0
    weight[nz] = k2[nz] ** s
    total = np.sum(weight * np.sum(np.abs(f.coeffs) ** 2, axis=0))
    if s >= 0:
        total += mean2
    return float(np.sqrt(VOLUME * total))


# ---------------------------------------------------------------------------
# Helical (curl-eigen) basis


def helical_basis(k) -> tuple[np.ndarray, np.ndarray]:
    """Unit eigenvectors of f -> i k x f with eigenvalues +|k| and -|k|.

    Built from e = (k x a)/|k x a| with a = e3, or a = e1 when k is parallel
    to e3; then h+ = (e + i khat x e)/sqrt(2) and h- = conj(h+). Under k -> -k
    the basis obeys h(-k) = -conj(h(k)).

    Raises:
        SpectralError: for k = 0.
    """
    k = np.asarray(k, dtype=float)
    if k.shape != (3,) or not np.any(k):
        raise SpectralError("helical basis needs a nonzero 3-vector")
    hp = _helical_plus(k.reshape(3, 1))[:, 0]
    return hp, np.conj(hp)


def _helical_plus(k: np.ndarray) -> np.ndarray:
    """Vectorized h+ for wavevectors stacked on axis 0; zero where k = 0."""
    kx, ky, kz = k[0], k[1], k[2]
    on_axis = (kx == 0) & (ky == 0)
    # k x e3 = (ky, -kx, 0); k x e1 = (0, kz, -ky)
    ex = np.where(on_axis, 0.0, ky)
    ey = np.where(on_axis, kz, -kx)
    ez = np.where(on_axis, -ky, 0.0)
    e = np.stack((ex, ey, ez))
    enorm = np.sqrt(np.sum(e * e, axis=0))
    kn = np.sqrt(np.sum(k * k, axis=0))
    zero = kn == 0
    e = e / np.where(zero, 1.0, enorm)
    khat = k / np.where(zero, 1.0, kn)
    f = cross(khat, e)
    h = (e + 1j * f) / np.sqrt(2.0)
    h[:, zero] = 0.0
    return h


@lru_cache(maxsize=16)
def _helical_grid(n: int) -> np.ndarray:
    h = _helical_plus(_wavevectors(n)[0])
    h.setflags(write=False)
    return h


@dataclass(frozen=True, eq=False)
class HelicalCoefficients:
    """Amplitudes a+(k), a-(k) of a mean-free solenoidal field.

    f_hat(k) = a+(k) h+(k) + a-(k) h-(k) for k != 0. For a real field
    a(-k) = -conj(a(k)) with the basis convention of ``helical_basis``.
    """

    grid: GridSpec
    plus: np.ndarray
    minus: np.ndarray


def helical_decompose(f: SpectralVectorField) -> HelicalCoefficients:
    """Project a solenoidal field onto the helical basis (mean dropped).

    Raises:
        NotSolenoidal: divergence residual above 1e-8.
    """
    res = f.divergence_residual()
    if res > 1e-8:
        raise NotSolenoidal(f"divergence residual {res:.3e} exceeds 1e-8")
    hp = _helical_grid(f.grid.n)
    plus = np.einsum("i...,i...->...", np.conj(hp), f.coeffs)
    minus = np.einsum("i...,i...->...", hp, f.coeffs)
    plus[0, 0, 0] = 0.0
    minus[0, 0, 0] = 0.0
    return HelicalCoefficients(f.grid, plus, minus)


def helical_recompose(c: HelicalCoefficients, grid: GridSpec | None = None) -> SpectralVectorField:
    grid = grid or c.grid
    if grid != c.grid:
        raise GridMismatch("helical coefficients belong to a different grid")
    hp = _helical_grid(grid.n)
    return SpectralVectorField(grid, c.plus * hp + c.minus * np.conj(hp))


def shell_energies(f: SpectralVectorField) -> dict[tuple[int, int], float]:
    """L^2 energy per (|k|^2, helicity sign) shell; the mean is keyed (0, 0)."""
    c = helical_decompose(f)
    k2 = f.grid.k2_int
    out: dict[tuple[int, int], float] = {}
    mean2 = float(np.sum(np.abs(f.coeffs[:, 0, 0, 0]) ** 2))
    if mean2 > 0.0:
        out[(0, 0)] = VOLUME * mean2
    for sign, amp in ((1, c.plus), (-1, c.minus)):
        e = np.abs(amp) ** 2
        sums = np.bincount(k2.ravel(), weights=e.ravel())
        for n2 in np.nonzero(sums)[0]:
            if n2 > 0:
                out[(int(n2), sign)] = VOLUME * float(sums[n2])
    return out

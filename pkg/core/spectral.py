"""
Spectral representation of zero-mean periodic fields on the unit torus T^2.

Coefficients are stored in the real trigonometric basis

    e_l(x) = sqrt(2) cos(2 pi l.x)   for l in Z^2_+
    e_l(x) = sqrt(2) sin(2 pi l.x)   for l in Z^2_-  (= -Z^2_+)

with Z^2_+ = {l1 > 0} U {l1 = 0, l2 > 0}.  A field with coefficients c keeps
them in one flat array: the first half holds c_m for m in Z^2_+ (cosine part),
the second half holds c_{-m} in the same order (sine part).  For FFTs the
complex amplitude of exp(2 pi i m.x) is (c_m + i c_{-m}) / sqrt(2).

Physical samples live on a padded n_pad x n_pad grid, x_j = j / n_pad, axis 0
being x1.
"""

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from core.exceptions import GridError, ModelError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class GridSpec:
    """Galerkin cutoff plus the physical grid used for pointwise products.

    Args:
        n: points per axis of the physical grid (even)
        max_mode: retained wavevectors satisfy |l_i| <= max_mode (and |l| <= max_mode when radial)
        dealias_pad: padding factor for quadratic products
        radial: use the disk |l| <= max_mode instead of the square
    """

    n: int
    max_mode: int
    dealias_pad: float = 1.5
    radial: bool = True

    def __post_init__(self):
        if self.n <= 0 or self.n % 2:
            raise GridError(f"grid size n must be an even positive integer, got {self.n}")
        if self.max_mode < 1:
            raise GridError(f"max_mode must be positive, got {self.max_mode}")
        if 2 * self.max_mode >= self.n:
            raise GridError(f"max_mode={self.max_mode} must be < n/2={self.n // 2}")
        if self.dealias_pad < 1.5:
            raise GridError(f"dealias_pad must be >= 3/2, got {self.dealias_pad}")
        # validates the default padded size as well
        self.padded_size()

    @classmethod
    def for_size(cls, n: int, **kwargs) -> "GridSpec":
        """Grid with the customary 2/3-rule cutoff max_mode = n // 3."""
        return cls(n=n, max_mode=kwargs.pop("max_mode", n // 3), **kwargs)

    def padded_size(self, pad: Optional[float] = None) -> int:
        p = self.dealias_pad if pad is None else pad
        size = int(round(self.n * p))
        if size % 2:
            raise GridError(f"padded size {size} (n={self.n}, pad={p}) is odd")
        if size <= 2 * self.max_mode:
            raise GridError(f"padded size {size} cannot represent max_mode={self.max_mode}")
        return size

    @cached_property
    def plus_points(self) -> np.ndarray:
        """Retained points of Z^2_+, ordered by (|l|^2, l1, l2)."""
        m = self.max_mode
        l1, l2 = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1), indexing="ij")
        l1, l2 = l1.ravel(), l2.ravel()
        keep = (l1 > 0) | ((l1 == 0) & (l2 > 0))
        if self.radial:
            keep &= l1 * l1 + l2 * l2 <= m * m
        pts = np.stack([l1[keep], l2[keep]], axis=1)
        order = np.lexsort((pts[:, 1], pts[:, 0], (pts ** 2).sum(axis=1)))
        pts = pts[order]
        pts.setflags(write=False)
        return pts

    @cached_property
    def points(self) -> np.ndarray:
        """All retained lattice points: Z^2_+ block followed by its negation."""
        pts = np.concatenate([self.plus_points, -self.plus_points])
        pts.setflags(write=False)
        return pts

    @property
    def half(self) -> int:
        return len(self.plus_points)

    @property
    def size(self) -> int:
        return 2 * self.half

    @cached_property
    def norm_sq(self) -> np.ndarray:
        """|l|^2 per coefficient (lattice weight, no 2 pi)."""
        w = (self.points.astype(float) ** 2).sum(axis=1)
        w.setflags(write=False)
        return w

    @cached_property
    def _lookup(self) -> Dict[Tuple[int, int], int]:
        return {(int(a), int(b)): i for i, (a, b) in enumerate(self.points)}

    def index_of(self, points: Union[Sequence[Sequence[int]], np.ndarray]) -> np.ndarray:
        """Coefficient indices of lattice points; GridError if any is not retained."""
        pts = np.asarray(points, dtype=int).reshape(-1, 2)
        idx = np.empty(len(pts), dtype=int)
        for i, (a, b) in enumerate(pts):
            j = self._lookup.get((int(a), int(b)))
            if j is None:
                raise GridError(f"lattice point ({a}, {b}) is outside the Galerkin cutoff (max_mode={self.max_mode})")
            idx[i] = j
        return idx

    def contains(self, point: Sequence[int]) -> bool:
        return (int(point[0]), int(point[1])) in self._lookup

    def describe(self) -> Dict[str, object]:
        return {"n": self.n, "max_mode": self.max_mode, "dealias_pad": self.dealias_pad, "radial": self.radial}


@dataclass(eq=False)
class SpectralField:
    """Zero-mean real scalar field, coefficients in the e_l basis."""

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.grid.size,):
            raise GridError(f"coefficient array has shape {self.coeffs.shape}, grid expects ({self.grid.size},)")

    @classmethod
    def zeros(cls, grid: GridSpec) -> "SpectralField":
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def from_modes(cls, grid: GridSpec, modes: Dict[Tuple[int, int], float]) -> "SpectralField":
        out = np.zeros(grid.size)
        if modes:
            idx = grid.index_of(list(modes.keys()))
            out[idx] = list(modes.values())
        return cls(grid, out)

    def coefficient(self, l: Sequence[int]) -> float:
        return float(self.coeffs[self.grid.index_of([l])[0]])

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    def _check(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise GridError(f"grid mismatch: {self.grid} vs {other.grid}")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)

    def norm(self) -> float:
        """L^2 norm (Parseval in the orthonormal e_l basis)."""
        return float(np.sqrt(np.dot(self.coeffs, self.coeffs)))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def active_modes(self, tol: float = 0.0) -> np.ndarray:
        return self.grid.points[np.abs(self.coeffs) > tol]

    def regrid(self, grid: GridSpec) -> "SpectralField":
        """Restrict to / zero-extend onto another Galerkin cutoff."""
        if grid == self.grid:
            return self.copy()
        out = np.zeros(grid.size)
        for i, (a, b) in enumerate(grid.points):
            j = self.grid._lookup.get((int(a), int(b)))
            if j is not None:
                out[i] = self.coeffs[j]
        return SpectralField(grid, out)


@dataclass(eq=False)
class VelocityField:
    """Two-component field, each component in the e_l basis."""

    grid: GridSpec
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        self.u1 = np.asarray(self.u1, dtype=float)
        self.u2 = np.asarray(self.u2, dtype=float)
        if self.u1.shape != (self.grid.size,) or self.u2.shape != (self.grid.size,):
            raise GridError("velocity components do not match the grid")

    def component(self, j: int) -> SpectralField:
        return SpectralField(self.grid, self.u1 if j == 0 else self.u2)

    def divergence(self) -> SpectralField:
        return SpectralField(self.grid, derivative(self.u1, self.grid, 0) + derivative(self.u2, self.grid, 1))

    def curl(self) -> SpectralField:
        return SpectralField(self.grid, derivative(self.u2, self.grid, 0) - derivative(self.u1, self.grid, 1))

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.u1, self.u1) + np.dot(self.u2, self.u2)))

    def to_physical(self, pad: Optional[float] = None) -> np.ndarray:
        return np.stack([_coeffs_to_physical(self.u1, self.grid, pad), _coeffs_to_physical(self.u2, self.grid, pad)])


# --- basis bookkeeping -------------------------------------------------------

def derivative(coeffs: np.ndarray, grid: GridSpec, axis: int) -> np.ndarray:
    """Exact d/dx_axis in the e_l basis: d e_m = 2 pi m_j e_{-m}, d e_{-m} = -2 pi m_j e_m."""
    h = grid.half
    m = TWO_PI * grid.plus_points[:, axis]
    cp, cm = coeffs[..., :h], coeffs[..., h:]
    return np.concatenate([-m * cm, m * cp], axis=-1)


@lru_cache(maxsize=64)
def _placement(grid: GridSpec, size: int):
    """Index maps between Z^2_+ amplitudes and the rfft2 half spectrum of a size x size grid."""
    pts = grid.plus_points
    m1, m2 = pts[:, 0], pts[:, 1]
    upper = m2 >= 0
    rows = np.where(upper, m1, -m1) % size
    cols = np.where(upper, m2, -m2)
    conj = ~upper
    axis_modes = np.nonzero(m2 == 0)[0]
    mirror_rows = (-m1[axis_modes]) % size
    return rows, cols, conj, axis_modes, mirror_rows


def _complex_amplitudes(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    h = grid.half
    return (coeffs[:h] + 1j * coeffs[h:]) / SQRT2


def _coeffs_to_physical(coeffs: np.ndarray, grid: GridSpec, pad: Optional[float] = None) -> np.ndarray:
    size = grid.padded_size(pad)
    rows, cols, conj, axis_modes, mirror_rows = _placement(grid, size)
    amp = _complex_amplitudes(coeffs, grid)
    half_spec = np.zeros((size, size // 2 + 1), dtype=complex)
    half_spec[rows, cols] = np.where(conj, np.conj(amp), amp)
    half_spec[mirror_rows, 0] = np.conj(amp[axis_modes])
    return np.fft.irfft2(half_spec, s=(size, size)) * (size * size)


def _physical_to_coeffs(samples: np.ndarray, grid: GridSpec) -> np.ndarray:
    size = samples.shape[0]
    rows, cols, conj, _, _ = _placement(grid, size)
    half_spec = np.fft.rfft2(samples) / (size * size)
    amp = half_spec[rows, cols]
    amp = np.where(conj, np.conj(amp), amp)
    return np.concatenate([SQRT2 * amp.real, SQRT2 * amp.imag])


def _pad_of(samples: np.ndarray, grid: GridSpec) -> float:
    if samples.ndim < 2 or samples.shape[-1] != samples.shape[-2]:
        raise GridError(f"physical samples must be square, got shape {samples.shape}")
    size = samples.shape[-1]
    if size % 2:
        raise GridError(f"padded size {size} is odd")
    pad = size / grid.n
    if grid.padded_size(pad) != size:
        raise GridError(f"samples of size {size} do not match grid n={grid.n}")
    return pad


# --- operations --------------------------------------------------------------

def to_physical(field: SpectralField, pad: Optional[float] = None) -> np.ndarray:
    """Samples of the field on the padded grid; exact zeros above the cutoff."""
    return _coeffs_to_physical(field.coeffs, field.grid, pad)


def to_spectral(samples: np.ndarray, grid: GridSpec, pad: Optional[float] = None) -> SpectralField:
    """Galerkin projection of padded-grid samples onto the retained modes."""
    samples = np.asarray(samples, dtype=float)
    actual = _pad_of(samples, grid)
    if pad is not None and grid.padded_size(pad) != samples.shape[0]:
        raise GridError(f"samples have pad {actual}, expected {pad}")
    return SpectralField(grid, _physical_to_coeffs(samples, grid))


def transform(obj, direction: str, pad: Optional[float] = None, grid: Optional[GridSpec] = None):
    """Dispatch between to_physical and to_spectral."""
    if direction == "to_physical":
        return to_physical(obj, pad)
    if direction == "to_spectral":
        if grid is None:
            raise GridError("to_spectral needs the target grid")
        return to_spectral(obj, grid, pad)
    raise ValueError(f"unknown transform direction: {direction}")


def evaluate_at(field: SpectralField, points: np.ndarray) -> np.ndarray:
    """Direct summation of sum_l c_l e_l(x) at arbitrary torus points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    h = field.grid.half
    phase = TWO_PI * pts @ field.grid.plus_points.T.astype(float)
    return SQRT2 * (np.cos(phase) @ field.coeffs[:h] - np.sin(phase) @ field.coeffs[h:])


def inner(a: SpectralField, b: SpectralField) -> float:
    a._check(b)
    return float(np.dot(a.coeffs, b.coeffs))


def laplacian(w: SpectralField) -> SpectralField:
    return SpectralField(w.grid, -(TWO_PI ** 2) * w.grid.norm_sq * w.coeffs)


def inverse_laplacian(w: SpectralField) -> SpectralField:
    """psi = (-Delta)^{-1} w, mode-wise division by 4 pi^2 |l|^2."""
    return SpectralField(w.grid, w.coeffs / ((TWO_PI ** 2) * w.grid.norm_sq))


def biot_savart(omega: SpectralField) -> VelocityField:
    """u = K[omega] with curl u = omega and div u = 0.

    With grad_perp = (d2, -d1) this is u = grad_perp (-Delta)^{-1} omega.
    """
    psi = inverse_laplacian(omega).coeffs
    g = omega.grid
    return VelocityField(g, derivative(psi, g, 1), -derivative(psi, g, 0))


def gradient(omega: SpectralField, pad: Optional[float] = None) -> np.ndarray:
    """Exact spectral gradient sampled on the padded grid, shape (2, n_pad, n_pad)."""
    g = omega.grid
    return np.stack([
        _coeffs_to_physical(derivative(omega.coeffs, g, 0), g, pad),
        _coeffs_to_physical(derivative(omega.coeffs, g, 1), g, pad),
    ])


def advection_term(omega: SpectralField, pad: Optional[float] = None) -> SpectralField:
    """Pi^n(-K[omega] . grad omega), pseudo-spectral with zero padding."""
    u = biot_savart(omega).to_physical(pad)
    grad = gradient(omega, pad)
    product = u[0] * grad[0] + u[1] * grad[1]
    return SpectralField(omega.grid, -_physical_to_coeffs(product, omega.grid))


def divergence_of_samples(flux: np.ndarray, grid: GridSpec) -> SpectralField:
    """Pi^n div F for a vector field F sampled on a padded grid, shape (2, n_pad, n_pad)."""
    _pad_of(flux, grid)
    out = derivative(_physical_to_coeffs(flux[0], grid), grid, 0)
    out += derivative(_physical_to_coeffs(flux[1], grid), grid, 1)
    return SpectralField(grid, out)


def flux_divergence(a: np.ndarray, omega: SpectralField, require_nonnegative: bool = True) -> SpectralField:
    """Pi^n div(a grad omega) with a sampled on a padded grid.

    The padded size is read from the shape of a; the quadrature on that grid
    makes the discrete operator exactly symmetric and, for a >= 0, dissipative.
    """
    a = np.asarray(a, dtype=float)
    pad = _pad_of(a, omega.grid)
    if require_nonnegative:
        low = float(a.min()) if a.size else 0.0
        if low < 0.0:
            raise ModelError(f"diffusion coefficient takes the negative value {low:.3e}")
    grad = gradient(omega, pad)
    return divergence_of_samples(a[None, :, :] * grad, omega.grid)


def sobolev_norm(omega: SpectralField, s: float) -> float:
    """||omega||_{H^s} = (sum_l |l|^{2s} c_l^2)^{1/2}."""
    weights = omega.grid.norm_sq ** s
    return float(np.sqrt(np.dot(weights, omega.coeffs ** 2)))


def sobolev_distance(a: SpectralField, b: SpectralField, s: float) -> float:
    """H^s distance over the modes both fields retain."""
    if a.grid != b.grid:
        coarse = a.grid if a.grid.size <= b.grid.size else b.grid
        a, b = a.regrid(coarse), b.regrid(coarse)
    return sobolev_norm(a - b, s)


def quadrature_norm(omega: SpectralField, pad: Optional[float] = None) -> float:
    """L^2 norm by physical-space quadrature on the padded grid."""
    samples = to_physical(omega, pad)
    return float(np.sqrt(np.mean(samples ** 2)))


def physical_velocity_max(omega: SpectralField, pad: Optional[float] = None) -> float:
    u = biot_savart(omega).to_physical(pad)
    return float(np.sqrt((u ** 2).sum(axis=0)).max())


# --- initial conditions ------------------------------------------------------

def single_mode(grid: GridSpec, l: Sequence[int], amplitude: float = 1.0) -> SpectralField:
    return SpectralField.from_modes(grid, {(int(l[0]), int(l[1])): amplitude})


def random_band_limited(grid: GridSpec, max_radius: float, l2_norm: float = 1.0, seed: int = 0) -> SpectralField:
    """Gaussian coefficients with a |l|^{-1} envelope on |l| <= max_radius, rescaled to l2_norm."""
    rng = np.random.default_rng(seed)
    radius = np.sqrt(grid.norm_sq)
    envelope = np.where(radius <= max_radius, 1.0 / radius, 0.0)
    coeffs = rng.standard_normal(grid.size) * envelope
    total = np.sqrt(np.dot(coeffs, coeffs))
    if total == 0.0:
        raise GridError(f"no retained modes with |l| <= {max_radius}")
    return SpectralField(grid, coeffs * (l2_norm / total))

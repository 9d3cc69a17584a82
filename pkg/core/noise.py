"""
Transport noise: the divergence-free basis sigma_k, coefficient families theta,
counter-based Brownian drivers, the noise increment and the Ito corrector.

    sigma_k(x) = k_perp / |k| e_k(x),   k_perp = (k2, -k1)

Noise term of the Ito equation:  -sum_k theta_k sigma_k . grad f(omega) dW^k
Ito corrector:                   1/4 div(f'(omega)^2 grad omega) = Delta g(omega)
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import NoiseError
from core.les_model import LESModel
from core.spectral import (
    SQRT2,
    TWO_PI,
    GridSpec,
    SpectralField,
    VelocityField,
    divergence_of_samples,
    flux_divergence,
    gradient,
    to_physical,
)

logger = logging.getLogger(__name__)

# compositions with non-polynomial f are sampled on a 2x padded grid
NONLINEAR_PAD = 2.0
NORMALIZATION_TOL = 1e-12


def _shell_points(r2: int) -> List[Tuple[int, int]]:
    m = int(np.floor(np.sqrt(r2)))
    return [(a, b) for a in range(-m, m + 1) for b in range(-m, m + 1) if a * a + b * b == r2]


def annulus_points(inner: float, outer: float) -> np.ndarray:
    """Lattice points with inner <= |k| <= outer, ordered by (|k|^2, k1, k2)."""
    m = int(np.floor(outer))
    k1, k2 = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1), indexing="ij")
    k1, k2 = k1.ravel(), k2.ravel()
    r2 = k1 * k1 + k2 * k2
    keep = (r2 >= inner * inner) & (r2 <= outer * outer) & (r2 > 0)
    pts = np.stack([k1[keep], k2[keep]], axis=1)
    return pts[np.lexsort((pts[:, 1], pts[:, 0], (pts ** 2).sum(axis=1)))]


@dataclass(frozen=True)
class NoiseCoefficients:
    """Finitely supported theta with sum theta_k^2 = 1 and theta_k = theta_l when |k| = |l|.

    shell records the annulus parameter N when the family came from
    make_shell_coefficients; check_symmetry=False admits anisotropic fixtures.
    """

    points: Tuple[Tuple[int, int], ...]
    values: Tuple[float, ...]
    shell: Optional[int] = None
    check_symmetry: bool = field(default=True, compare=False)

    def __post_init__(self):
        pts = tuple((int(a), int(b)) for a, b in self.points)
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)
        if not pts:
            raise NoiseError("noise coefficients need a nonempty support")
        if len(pts) != len(vals):
            raise NoiseError(f"{len(pts)} support points but {len(vals)} coefficients")
        if len(set(pts)) != len(pts):
            raise NoiseError("duplicate lattice points in noise support")
        if (0, 0) in pts:
            raise NoiseError("theta_0 is not defined: k = 0 is excluded from the support")
        if min(vals) < 0:
            raise NoiseError("theta_k must be nonnegative")
        total = float(np.sum(np.square(vals)))
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise NoiseError(f"sum of theta_k^2 is {total:.15g}, the normalization requires 1")
        if self.check_symmetry:
            self._check_radial()

    def _check_radial(self):
        by_radius: Dict[int, Dict[Tuple[int, int], float]] = {}
        for (a, b), v in zip(self.points, self.values):
            by_radius.setdefault(a * a + b * b, {})[(a, b)] = v
        for r2, members in by_radius.items():
            expected = _shell_points(r2)
            if len(members) != len(expected):
                raise NoiseError(f"theta is not radially symmetric: |k|^2={r2} has {len(members)} of "
                                 f"{len(expected)} lattice points")
            vals = np.fromiter(members.values(), dtype=float)
            if np.ptp(vals) > NORMALIZATION_TOL:
                raise NoiseError(f"theta is not radially symmetric: values on |k|^2={r2} differ by {np.ptp(vals):.3e}")

    @classmethod
    def from_mapping(cls, entries: Dict[Tuple[int, int], float], shell: Optional[int] = None,
                     check_symmetry: bool = True) -> "NoiseCoefficients":
        ordered = sorted(entries.items(), key=lambda kv: (kv[0][0] ** 2 + kv[0][1] ** 2, kv[0][0], kv[0][1]))
        return cls(tuple(k for k, _ in ordered), tuple(v for _, v in ordered), shell, check_symmetry)

    @cached_property
    def k(self) -> np.ndarray:
        arr = np.array(self.points, dtype=int).reshape(-1, 2)
        arr.setflags(write=False)
        return arr

    @cached_property
    def theta(self) -> np.ndarray:
        arr = np.array(self.values, dtype=float)
        arr.setflags(write=False)
        return arr

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def linf(self) -> float:
        return float(self.theta.max())

    @property
    def max_radius(self) -> float:
        return float(np.sqrt((self.k ** 2).sum(axis=1).max()))

    def as_dict(self) -> Dict[Tuple[int, int], float]:
        return dict(zip(self.points, self.values))

    def check_grid(self, grid: GridSpec):
        """Support must lie inside the Galerkin cutoff."""
        missing = [p for p in self.points if not grid.contains(p)]
        if missing:
            raise NoiseError(f"{len(missing)} noise modes lie outside the grid cutoff max_mode={grid.max_mode}, "
                             f"e.g. {missing[0]}")
        if self.max_radius > grid.max_mode / 2:
            logger.warning(f"noise support reaches |k|={self.max_radius:.3g} beyond the dealias-safe radius "
                           f"{grid.max_mode / 2:.3g}; transport products carry aliasing error")


def make_shell_coefficients(N: int, grid: Optional[GridSpec] = None) -> NoiseCoefficients:
    """Uniform theta_k = m^{-1/2} on the annulus N <= |k| <= 2N (m lattice points)."""
    if N < 1:
        raise NoiseError(f"shell parameter N must be a positive integer, got {N}")
    pts = annulus_points(N, 2 * N)
    if len(pts) == 0:
        raise NoiseError(f"annulus {N} <= |k| <= {2 * N} contains no lattice points")
    value = 1.0 / np.sqrt(len(pts))
    theta = NoiseCoefficients(tuple(map(tuple, pts)), (value,) * len(pts), shell=N)
    if grid is not None:
        theta.check_grid(grid)
    return theta


# --- basis fields ------------------------------------------------------------

def basis_values(k: np.ndarray, x: np.ndarray) -> np.ndarray:
    """e_k(x) for lattice points k (K, 2) at torus points x (P, 2); result (P, K)."""
    k = np.asarray(k, dtype=float).reshape(-1, 2)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    phase = TWO_PI * x @ k.T
    plus = (k[:, 0] > 0) | ((k[:, 0] == 0) & (k[:, 1] > 0))
    return SQRT2 * np.where(plus, np.cos(phase), np.sin(phase))


def sigma_field(k: Sequence[int], grid: GridSpec) -> VelocityField:
    """sigma_k = k_perp / |k| e_k as a spectral velocity field."""
    k1, k2 = int(k[0]), int(k[1])
    if k1 == 0 and k2 == 0:
        raise NoiseError("sigma_0 is not defined")
    idx = grid.index_of([(k1, k2)])[0]
    norm = np.hypot(k1, k2)
    u1 = np.zeros(grid.size)
    u2 = np.zeros(grid.size)
    u1[idx] = k2 / norm
    u2[idx] = -k1 / norm
    return VelocityField(grid, u1, u2)


def noise_velocity(theta: NoiseCoefficients, weights: np.ndarray, grid: GridSpec) -> VelocityField:
    """sum_k theta_k w_k sigma_k."""
    idx = grid.index_of(theta.k)
    amp = theta.theta * np.asarray(weights, dtype=float)
    norm = np.sqrt((theta.k ** 2).sum(axis=1))
    u1 = np.zeros(grid.size)
    u2 = np.zeros(grid.size)
    u1[idx] = amp * theta.k[:, 1] / norm
    u2[idx] = -amp * theta.k[:, 0] / norm
    return VelocityField(grid, u1, u2)


def covariance_residual(theta: NoiseCoefficients, sample_points: np.ndarray) -> float:
    """max_x || sum_k theta_k^2 sigma_k(x) (x) sigma_k(x) - I/2 ||_max."""
    k = theta.k.astype(float)
    e2 = basis_values(k, sample_points) ** 2 * theta.theta ** 2
    perp = np.stack([k[:, 1], -k[:, 0]], axis=1) / np.sqrt((k ** 2).sum(axis=1))[:, None]
    s11 = e2 @ (perp[:, 0] * perp[:, 0])
    s22 = e2 @ (perp[:, 1] * perp[:, 1])
    s12 = e2 @ (perp[:, 0] * perp[:, 1])
    dev = np.stack([np.abs(s11 - 0.5), np.abs(s22 - 0.5), np.abs(s12)])
    return float(dev.max()) if dev.size else 0.0


# --- Brownian driving --------------------------------------------------------

@dataclass
class BrownianDriver:
    """Independent Wiener increments, one per support point, from a Philox counter stream.

    Step s of path p under master seed m always reads counter block (0, s, 0, 0)
    under the key derived from (m, p), so identical seeds reproduce identical
    increments bit for bit and paths never share a stream.  With fine_dt set,
    an increment over dt sums dt / fine_dt fine increments, so runs at
    different step sizes follow the same Brownian path.
    """

    master_seed: int
    path_index: int
    support_size: int
    fine_dt: Optional[float] = None
    cursor: int = 0

    def __post_init__(self):
        if self.support_size < 0:
            raise NoiseError(f"support size must be nonnegative, got {self.support_size}")
        seq = np.random.SeedSequence(entropy=int(self.master_seed) & (2 ** 64 - 1), spawn_key=(int(self.path_index),))
        self._key = seq.generate_state(2, dtype=np.uint64)

    @classmethod
    def for_noise(cls, theta: NoiseCoefficients, master_seed: int, path_index: int,
                  fine_dt: Optional[float] = None) -> "BrownianDriver":
        return cls(master_seed, path_index, theta.size, fine_dt)

    def _normals(self, step: int) -> np.ndarray:
        bitgen = np.random.Philox(key=self._key, counter=np.array([0, step, 0, 0], dtype=np.uint64))
        return np.random.Generator(bitgen).standard_normal(self.support_size)

    def sample_increments(self, dt: float) -> np.ndarray:
        if dt < 0:
            raise NoiseError(f"time step must be nonnegative, got {dt}")
        if dt == 0:
            return np.zeros(self.support_size)
        if self.fine_dt is None:
            out = np.sqrt(dt) * self._normals(self.cursor)
            self.cursor += 1
            return out
        ratio = dt / self.fine_dt
        substeps = int(round(ratio))
        if substeps < 1 or abs(ratio - substeps) > 1e-9 * max(1.0, ratio):
            raise NoiseError(f"dt={dt} is not an integer multiple of the driver base step {self.fine_dt}")
        total = np.zeros(self.support_size)
        for s in range(self.cursor, self.cursor + substeps):
            total += self._normals(s)
        self.cursor += substeps
        return np.sqrt(self.fine_dt) * total

    def reset(self):
        self.cursor = 0

    def manifest(self) -> Dict[str, Any]:
        return {
            "master_seed": int(self.master_seed),
            "path_index": int(self.path_index),
            "philox_key": [int(v) for v in self._key],
            "support_size": self.support_size,
            "fine_dt": self.fine_dt,
            "steps_drawn": self.cursor,
        }


def sample_increments(driver: BrownianDriver, dt: float) -> np.ndarray:
    return driver.sample_increments(dt)


# --- noise terms -------------------------------------------------------------

def transport_increment(omega: SpectralField, theta: NoiseCoefficients, dW: np.ndarray, model: LESModel,
                        pad: float = NONLINEAR_PAD) -> SpectralField:
    """Pi^n(-sum_k theta_k dW^k sigma_k . grad f(omega)) in divergence form div(V f(omega))."""
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (theta.size,):
        raise NoiseError(f"increments have shape {dW.shape}, noise support has {theta.size} points")
    grid = omega.grid
    if model.is_trivial or not np.any(dW):
        return SpectralField.zeros(grid)
    velocity = noise_velocity(theta, dW, grid).to_physical(pad)
    composed = model.f(to_physical(omega, pad))
    return -divergence_of_samples(velocity * composed[None, :, :], grid)


def ito_corrector(omega: SpectralField, model: LESModel, pad: float = NONLINEAR_PAD) -> SpectralField:
    """1/4 div(f'(omega)^2 grad omega), which equals Delta g(omega)."""
    if model.is_trivial:
        return SpectralField.zeros(omega.grid)
    return flux_divergence(model.g_prime(to_physical(omega, pad)), omega)


def enstrophy_channel(omega: SpectralField, k: Sequence[int], model: LESModel,
                      pad: float = NONLINEAR_PAD) -> float:
    """<sigma_k . grad omega, f(omega)> by quadrature on the padded grid; zero in the continuum."""
    sigma = sigma_field(k, omega.grid).to_physical(pad)
    grad = gradient(omega, pad)
    transport = sigma[0] * grad[0] + sigma[1] * grad[1]
    return float(np.mean(transport * model.f(to_physical(omega, pad))))


def noise_energy_input(omega: SpectralField, theta: NoiseCoefficients, model: LESModel,
                       pad: float = NONLINEAR_PAD) -> float:
    """sum_k theta_k^2 ||Pi^n(sigma_k . grad f(omega))||^2, the Ito energy input of the noise."""
    total = 0.0
    for i in range(theta.size):
        unit = np.zeros(theta.size)
        unit[i] = 1.0
        # theta_i is folded into the increment, so the norm already carries theta_i^2
        total += transport_increment(omega, theta, unit, model, pad).norm() ** 2
    return total


def corrector_dissipation(omega: SpectralField, model: LESModel, pad: float = NONLINEAR_PAD) -> float:
    """-<Delta g(omega), omega> = 1/4 int f'(omega)^2 |grad omega|^2 >= 0."""
    return -float(np.dot(ito_corrector(omega, model, pad).coeffs, omega.coeffs))


"""
Time integration of the vorticity equation.

Splitting: the viscous part is integrated exactly with the factor
exp(-4 pi^2 nu |l|^2 dt), applied after the explicit update of advection,
eddy diffusion and noise (Lie splitting, all terms evaluated at the start of
the step).

    ito_em             Euler-Maruyama on  d w = (-u.grad w + Delta g(w)) dt - sum theta_k sigma_k.grad f(w) dW^k
    stratonovich_heun  Heun on the noise, no corrector (Stratonovich reading)
    deterministic      explicit Euler on  d w = (-u.grad w + div(g'(w) grad w)) dt
"""

import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from core.exceptions import ConfigError, GuardViolation, NoiseError, NumericAbort, StabilityError
from core.les_model import LESModel
from core.noise import (
    NONLINEAR_PAD,
    BrownianDriver,
    NoiseCoefficients,
    ito_corrector,
    transport_increment,
)
from core.spectral import (
    TWO_PI,
    GridSpec,
    SpectralField,
    advection_term,
    flux_divergence,
    physical_velocity_max,
    sobolev_norm,
    to_physical,
)

logger = logging.getLogger(__name__)


class Scheme(str, Enum):
    ITO_EM = "ito_em"
    STRATONOVICH_HEUN = "stratonovich_heun"
    DETERMINISTIC = "deterministic"


class StabilityPolicy(str, Enum):
    WARN = "warn"
    ABORT = "abort"


@dataclass(frozen=True)
class InitialCondition:
    """How omega_0 is produced: random band-limited, single mode or snapshot file."""

    kind: str = "random"
    max_radius: float = 4.0
    l2_norm: float = 1.0
    seed: int = 0
    l: Optional[tuple] = None
    amplitude: float = 1.0
    path: Optional[str] = None

    def build(self, grid: GridSpec) -> SpectralField:
        from core import spectral

        if self.kind == "random":
            return spectral.random_band_limited(grid, self.max_radius, self.l2_norm, self.seed)
        if self.kind == "mode":
            return spectral.single_mode(grid, self.l, self.amplitude)
        if self.kind == "snapshot":
            from utils.file_utils import read_snapshot

            return read_snapshot(self.path).regrid(grid)
        raise ConfigError(f"unknown initial condition kind '{self.kind}'", key_path="initial_condition.kind")


@dataclass(frozen=True)
class SolverConfig:
    """Everything a trajectory needs except omega_0 and the Brownian driver."""

    grid: GridSpec
    nu: float
    dt: float
    horizon: float
    scheme: Scheme = Scheme.DETERMINISTIC
    model: LESModel = field(default_factory=LESModel)
    theta: Optional[NoiseCoefficients] = None
    record_stride: int = 1
    enstrophy_guard: float = 2.0
    keep_snapshots: bool = False
    stability_policy: StabilityPolicy = StabilityPolicy.WARN
    stability_safety: float = 1.0
    initial_condition: InitialCondition = field(default_factory=InitialCondition)
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "stability_policy", StabilityPolicy(self.stability_policy))
        if not self.nu > 0:
            raise ConfigError(f"viscosity must be positive, got {self.nu}", "nu", "nu > 0")
        if not self.dt > 0:
            raise ConfigError(f"time step must be positive, got {self.dt}", "dt", "dt > 0")
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}", "horizon", "horizon > 0")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError(f"horizon/dt = {steps} is not an integer", "horizon", "horizon/dt integral")
        if self.record_stride < 1:
            raise ConfigError(f"record_stride must be >= 1, got {self.record_stride}", "record_stride")
        if self.enstrophy_guard < 1:
            raise ConfigError(f"enstrophy_guard must be >= 1, got {self.enstrophy_guard}", "enstrophy_guard")
        if self.scheme is Scheme.DETERMINISTIC:
            if self.theta is not None:
                raise ConfigError("deterministic scheme takes no noise coefficients", "noise")
        else:
            if self.theta is None:
                raise ConfigError(f"scheme {self.scheme.value} needs noise coefficients", "noise")
            try:
                self.theta.check_grid(self.grid)
            except NoiseError as e:
                raise ConfigError(str(e), "noise", "support inside the grid cutoff") from e

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def stochastic(self) -> bool:
        return self.scheme is not Scheme.DETERMINISTIC

    def replace(self, **changes) -> "SolverConfig":
        return replace(self, **changes)

    def viscous_factor(self, dt: Optional[float] = None) -> np.ndarray:
        step = self.dt if dt is None else dt
        return np.exp(-(TWO_PI ** 2) * self.nu * self.grid.norm_sq * step)


# --- stability ---------------------------------------------------------------

def stability_limit(omega: SpectralField, cfg: SolverConfig) -> Dict[str, float]:
    """Explicit limits for the current state: eddy diffusion and CFL."""
    grid = cfg.grid
    max_l2 = float(grid.norm_sq.max())
    samples = to_physical(omega, NONLINEAR_PAD)
    a_max = float(cfg.model.g_prime(samples).max()) if samples.size else 0.0
    diffusion = 0.5 / ((TWO_PI ** 2) * max_l2 * a_max * cfg.stability_safety) if a_max > 0 else float("inf")
    u_max = physical_velocity_max(omega)
    cfl = 1.0 / (TWO_PI * grid.max_mode * u_max * cfg.stability_safety) if u_max > 0 else float("inf")
    return {"diffusion": diffusion, "cfl": cfl, "dt_max": min(diffusion, cfl)}


def _check_finite(omega: SpectralField, step: Optional[int] = None, t: Optional[float] = None):
    if not omega.is_finite():
        raise NumericAbort("non-finite vorticity: the time step exceeds the stability limit", t, step,
                           {"finite_fraction": float(np.isfinite(omega.coeffs).mean())})


# --- single steps ------------------------------------------------------------

def step_ito(omega: SpectralField, cfg: SolverConfig, dW: np.ndarray) -> SpectralField:
    """One Euler-Maruyama step of the Ito equation with the corrector Delta g(omega)."""
    drift = advection_term(omega) + ito_corrector(omega, cfg.model)
    update = omega.coeffs + cfg.dt * drift.coeffs
    if cfg.theta is not None:
        update = update + transport_increment(omega, cfg.theta, dW, cfg.model).coeffs
    result = SpectralField(omega.grid, cfg.viscous_factor() * update)
    _check_finite(result)
    return result


def step_stratonovich(omega: SpectralField, cfg: SolverConfig, dW: np.ndarray) -> SpectralField:
    """Heun predictor-corrector on the noise term; drift without the Ito corrector."""
    drift = advection_term(omega).coeffs
    if cfg.theta is None:
        noise_base = np.zeros_like(drift)
        noise_pred = noise_base
    else:
        noise_base = transport_increment(omega, cfg.theta, dW, cfg.model).coeffs
        predictor = SpectralField(omega.grid, omega.coeffs + cfg.dt * drift + noise_base)
        noise_pred = transport_increment(predictor, cfg.theta, dW, cfg.model).coeffs
    update = omega.coeffs + cfg.dt * drift + 0.5 * (noise_base + noise_pred)
    result = SpectralField(omega.grid, cfg.viscous_factor() * update)
    _check_finite(result)
    return result


def step_deterministic(omega: SpectralField, cfg: SolverConfig) -> SpectralField:
    """Explicit step of the limit equation d w = (nu Delta w - u.grad w + div(g'(w) grad w)) dt."""
    drift = advection_term(omega)
    if not cfg.model.is_trivial:
        diffusivity = cfg.model.g_prime(to_physical(omega, NONLINEAR_PAD))
        drift = drift + flux_divergence(diffusivity, omega)
    result = SpectralField(omega.grid, cfg.viscous_factor() * (omega.coeffs + cfg.dt * drift.coeffs))
    _check_finite(result)
    return result


# --- trajectories ------------------------------------------------------------

@dataclass
class RunRecord:
    """Recorded history of one trajectory.

    dissipation accumulates the energy removed by the exact viscous factor,
    sum_l (exp(8 pi^2 nu |l|^2 dt) - 1) |w_l|^2 per step, the discrete form of
    2 nu int_0^t ||grad w||^2.  budget_excess = ||w_t||^2 + dissipation - ||w_0||^2
    is then exactly the energy added by the explicit part of the steps.
    """

    times: List[float] = field(default_factory=list)
    l2_norms: List[float] = field(default_factory=list)
    h1_seminorms: List[float] = field(default_factory=list)
    dissipation: List[float] = field(default_factory=list)
    budget_excess: List[float] = field(default_factory=list)
    snapshots: List[SpectralField] = field(default_factory=list)
    seeds: Dict[str, Any] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)
    record_stride: int = 1
    dt: float = 0.0
    wall_seconds: float = 0.0
    stability_warnings: int = 0

    def append(self, t: float, omega: SpectralField, dissipated: float, initial_sq: float, keep: bool):
        l2 = omega.norm()
        self.times.append(t)
        self.l2_norms.append(l2)
        self.h1_seminorms.append(sobolev_norm(omega, 1.0))
        self.dissipation.append(dissipated)
        self.budget_excess.append(l2 * l2 + dissipated - initial_sq)
        if keep:
            self.snapshots.append(omega.copy())

    @property
    def final_time(self) -> float:
        return self.times[-1] if self.times else 0.0

    def max_enstrophy_ratio(self) -> float:
        if not self.l2_norms or self.l2_norms[0] == 0:
            return 0.0
        return max(v * v for v in self.l2_norms) / self.l2_norms[0] ** 2

    def budget_constant(self) -> float:
        """max positive excess / (||w_0||^2 sqrt(dt)), the measured C of the discrete energy bound."""
        if not self.l2_norms or self.l2_norms[0] == 0 or self.dt <= 0:
            return 0.0
        return max(max(self.budget_excess), 0.0) / (self.l2_norms[0] ** 2 * np.sqrt(self.dt))

    def to_frame(self):
        return pd.DataFrame({
            "time": self.times,
            "l2_norm": self.l2_norms,
            "h1_seminorm": self.h1_seminorms,
            "dissipation": self.dissipation,
            "budget_excess": self.budget_excess,
        })


def _stepper(cfg: SolverConfig):
    if cfg.scheme is Scheme.ITO_EM:
        return step_ito
    if cfg.scheme is Scheme.STRATONOVICH_HEUN:
        return step_stratonovich
    return lambda omega, c, dW: step_deterministic(omega, c)


def run_trajectory(cfg: SolverConfig, omega0: SpectralField, driver: Optional[BrownianDriver] = None) -> RunRecord:
    """Iterate the configured scheme to the horizon, recording every record_stride steps.

    Raises GuardViolation when ||w_t||^2 exceeds enstrophy_guard ||w_0||^2 and
    NumericAbort on non-finite states.
    """
    if omega0.grid != cfg.grid:
        raise ConfigError("initial condition grid differs from the solver grid", "grid")
    if cfg.stochastic and driver is None:
        driver = BrownianDriver.for_noise(cfg.theta, cfg.master_seed, 0)
    if driver is not None and cfg.theta is not None and driver.support_size != cfg.theta.size:
        raise ConfigError(f"driver has {driver.support_size} streams, noise support has {cfg.theta.size}", "noise")

    from models.schemas import config_dict

    start = time.perf_counter()
    step = _stepper(cfg)
    record = RunRecord(record_stride=cfg.record_stride, dt=cfg.dt,
                       seeds=driver.manifest() if driver is not None else {}, config=config_dict(cfg))
    initial_sq = omega0.norm() ** 2
    guard = cfg.enstrophy_guard * initial_sq
    viscous_loss = np.expm1(2.0 * (TWO_PI ** 2) * cfg.nu * cfg.grid.norm_sq * cfg.dt)
    limit = stability_limit(omega0, cfg)
    if cfg.dt > limit["dt_max"]:
        _stability_violation(cfg, limit, 0, 0.0, record)

    omega = omega0.copy()
    dissipated = 0.0
    record.append(0.0, omega, dissipated, initial_sq, cfg.keep_snapshots)
    logger.info(f"run start: scheme={cfg.scheme.value} steps={cfg.n_steps} dt={cfg.dt:g} "
                f"|w0|={np.sqrt(initial_sq):.6g} path={record.seeds.get('path_index')}")
    zero_increments = np.zeros(cfg.theta.size) if cfg.theta is not None else None
    for n in range(1, cfg.n_steps + 1):
        t = n * cfg.dt
        dW = driver.sample_increments(cfg.dt) if driver is not None and cfg.stochastic else zero_increments
        try:
            omega = step(omega, cfg, dW)
        except NumericAbort as exc:
            raise NumericAbort("non-finite vorticity", t, n, exc.diagnostics) from exc
        dissipated += float(np.dot(viscous_loss, omega.coeffs ** 2))
        enstrophy = omega.norm() ** 2
        if enstrophy > guard:
            raise GuardViolation(f"enstrophy {enstrophy:.6g} exceeds {cfg.enstrophy_guard} x initial {initial_sq:.6g}",
                                 t, n, {"enstrophy": enstrophy, "initial": initial_sq})
        limit = stability_limit(omega, cfg)
        if cfg.dt > limit["dt_max"]:
            _stability_violation(cfg, limit, n, t, record)
        if n % cfg.record_stride == 0 or n == cfg.n_steps:
            record.append(t, omega, dissipated, initial_sq, cfg.keep_snapshots)
            logger.debug(f"t={t:.4g} |w|={record.l2_norms[-1]:.6g} excess={record.budget_excess[-1]:.3e}")
    if driver is not None:
        record.seeds = driver.manifest()
    record.wall_seconds = time.perf_counter() - start
    logger.info(f"run end: t={record.final_time:g} |w|={record.l2_norms[-1]:.6g} "
                f"max ratio={record.max_enstrophy_ratio():.4f} in {record.wall_seconds:.2f}s")
    return record


def _stability_violation(cfg: SolverConfig, limit: Dict[str, float], n: int, t: float, record: RunRecord):
    message = (f"dt={cfg.dt:g} exceeds the explicit limit {limit['dt_max']:.3g} "
               f"(diffusion {limit['diffusion']:.3g}, cfl {limit['cfl']:.3g})")
    if cfg.stability_policy is StabilityPolicy.ABORT:
        raise StabilityError(message, t, n, limit)
    if record.stability_warnings == 0:
        logger.warning(message)
    record.stability_warnings += 1

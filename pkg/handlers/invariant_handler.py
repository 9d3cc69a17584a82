"""
Invariant suite and the energy/moment studies behind it.

Every identity is measured, compared with its tolerance and reported; an
exception inside a check turns that check into a failure.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.dynamics import RunRecord, SolverConfig
from core.exceptions import ConfigError, SimulationError
from core.les_model import validate_model
from core.noise import (
    NONLINEAR_PAD,
    NoiseCoefficients,
    corrector_dissipation,
    covariance_residual,
    enstrophy_channel,
    make_shell_coefficients,
    noise_energy_input,
)
from core.spectral import (
    SpectralField,
    advection_term,
    biot_savart,
    flux_divergence,
    inner,
    quadrature_norm,
    sobolev_norm,
    to_physical,
)
from handlers.consistency_handler import check_dt_list
from handlers.ensemble import PathTask, run_ensemble

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SuiteTolerances:
    """Relative tolerances.  Identities that compose the solution with a
    non-polynomial f carry the quadrature error of the padded grid."""

    covariance: float = 1e-12
    enstrophy_channel: float = 1e-5
    channel_pad: float = 4.0
    trilinear: float = 1e-11
    dissipativity: float = 1e-10
    biot_savart: float = 1e-12
    parseval: float = 1e-12
    energy_input: float = 1e-4
    budget_constant: float = 10.0
    deterministic_excess: float = 1e-6


@dataclass
class InvariantCheck:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""
    skipped: bool = False


@dataclass
class InvariantReport:
    checks: List[InvariantCheck] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> InvariantCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def failures(self) -> List[InvariantCheck]:
        return [c for c in self.checks if not c.passed]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(c) for c in self.checks],
                            columns=["name", "passed", "residual", "tolerance", "detail", "skipped"])

    def as_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "seconds": self.seconds, "config": self.config,
                "checks": [asdict(c) for c in self.checks]}


# --- increment moments -------------------------------------------------------

@dataclass
class MomentReport:
    constant: float
    witness: Dict[str, Any]
    paths: int
    frame: pd.DataFrame

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.constant))


def first_shell_modes(omega0: SpectralField) -> np.ndarray:
    """Indices of the coefficients with |l|^2 in {1, 2}."""
    return np.flatnonzero(omega0.grid.norm_sq <= 2.0)


def increment_statistic(records: Sequence[RunRecord]) -> MomentReport:
    """max over modes l with |l|^2 <= 2 and recorded s < t of E[<w_t - w_s, e_l>^2] / (|l|^4 |t - s|)."""
    if not records or not records[0].snapshots:
        raise ConfigError("increment statistic needs recorded snapshots", "keep_snapshots")
    grid = records[0].snapshots[0].grid
    modes = first_shell_modes(records[0].snapshots[0])
    times = np.asarray(records[0].times)
    history = np.array([[snap.coeffs[modes] for snap in rec.snapshots] for rec in records])  # (P, T, M)
    second = np.einsum("ptm,psm->tsm", history, history) / len(records)
    diag = np.einsum("ttm->tm", second)
    increments = diag[:, None, :] + diag[None, :, :] - 2.0 * second
    gap = np.abs(times[:, None] - times[None, :])
    upper = np.triu(np.ones_like(gap, dtype=bool), k=1)
    weights = grid.norm_sq[modes] ** 2
    s_idx, t_idx = np.nonzero(upper)
    stat = increments[s_idx, t_idx, :] / (weights[None, :] * gap[s_idx, t_idx, None])
    pts = grid.points[modes]
    frame = pd.DataFrame({
        "l1": np.tile(pts[:, 0], len(s_idx)),
        "l2": np.tile(pts[:, 1], len(s_idx)),
        "s": np.repeat(times[s_idx], len(modes)),
        "t": np.repeat(times[t_idx], len(modes)),
        "statistic": stat.ravel(),
    })
    if frame.empty:
        return MomentReport(0.0, {}, len(records), frame)
    best = frame.loc[frame["statistic"].idxmax()]
    witness = {"l": [int(best["l1"]), int(best["l2"])], "s": float(best["s"]), "t": float(best["t"])}
    return MomentReport(float(best["statistic"]), witness, len(records), frame)


def _records(cfg: SolverConfig, omega0: SpectralField, paths: int, workers: Optional[int],
             fine_dt: Optional[float] = None) -> List[RunRecord]:
    tasks = [PathTask(cfg, omega0, p, fine_dt=fine_dt, label=f"dt={cfg.dt:g}") for p in range(paths)]
    outcomes = run_ensemble(tasks, workers)
    for o in outcomes:
        if not o.ok:
            raise SimulationError(f"path {o.path_index} aborted: {o.error}")
    return [o.record for o in outcomes]


def increment_moment_study(cfg: SolverConfig, omega0: SpectralField, paths: int,
                           workers: Optional[int] = None) -> MomentReport:
    if not cfg.stochastic:
        raise ConfigError("increment moments need a stochastic scheme", "scheme")
    if paths < 2:
        raise ConfigError(f"at least 2 paths are needed, got {paths}", "paths")
    records = _records(cfg.replace(keep_snapshots=True), omega0, paths, workers)
    report = increment_statistic(records)
    logger.info(f"increment moment constant {report.constant:.4e} at {report.witness} over {paths} paths")
    return report


# --- energy budget refinement ------------------------------------------------

def budget_refinement_study(cfg: SolverConfig, omega0: SpectralField, dt_list: Sequence[float], paths: int,
                            workers: Optional[int] = None) -> pd.DataFrame:
    """Largest positive budget excess per path for each dt, all dt on one Brownian path per index."""
    dt_list = tuple(float(d) for d in dt_list)
    check_dt_list(cfg, dt_list)
    fine = dt_list[-1] if cfg.stochastic else None
    rows = []
    for dt in dt_list:
        start = time.perf_counter()
        run_cfg = cfg.replace(dt=dt, record_stride=1, keep_snapshots=False)
        records = _records(run_cfg, omega0, paths, workers, fine)
        initial = omega0.norm() ** 2
        excess = np.array([max(max(r.budget_excess), 0.0) for r in records])
        rows.append({
            "dt": dt,
            "mean_max_excess": float(excess.mean()),
            "std_max_excess": float(excess.std(ddof=1)) if paths > 1 else 0.0,
            "relative_excess": float(excess.mean() / initial) if initial > 0 else 0.0,
            "budget_constant": float(np.mean([r.budget_constant() for r in records])),
            "max_enstrophy_ratio": float(max(r.max_enstrophy_ratio() for r in records)),
            "paths": paths,
            "seconds": time.perf_counter() - start,
        })
        logger.info(f"dt={dt:g}: mean max budget excess {rows[-1]['mean_max_excess']:.4e}")
    return pd.DataFrame(rows)


# --- the suite ---------------------------------------------------------------

def _run_check(report: InvariantReport, name: str, fn: Callable[[], InvariantCheck]):
    try:
        check = fn()
    except Exception as e:
        logger.warning(f"check '{name}' raised {type(e).__name__}: {e}")
        check = InvariantCheck(name, False, float("nan"), float("nan"), f"{type(e).__name__}: {e}")
    report.checks.append(check)
    level = logging.INFO if check.passed else logging.WARNING
    logger.log(level, f"{name}: {'pass' if check.passed else 'FAIL'} residual={check.residual:.3e} "
                      f"tol={check.tolerance:.1e}")


def _suite_theta(cfg: SolverConfig) -> NoiseCoefficients:
    if cfg.theta is not None:
        return cfg.theta
    return make_shell_coefficients(1, cfg.grid)


def invariant_suite(cfg: SolverConfig, omega0: Optional[SpectralField] = None, paths: int = 2,
                    steps: int = 100, seed: int = 0, workers: Optional[int] = None,
                    tolerances: Optional[SuiteTolerances] = None,
                    theta: Optional[NoiseCoefficients] = None) -> InvariantReport:
    """
    Measure every structural identity of the discretization for cfg.

    theta overrides the coefficients used by the covariance and channel
    checks.  The a-priori bound runs `paths` trajectories of at most `steps`
    steps.
    """
    tol = tolerances or SuiteTolerances()
    omega = omega0 if omega0 is not None else cfg.initial_condition.build(cfg.grid)
    theta = theta if theta is not None else _suite_theta(cfg)
    model = cfg.model
    report = InvariantReport(config={"grid": cfg.grid.describe(), "scheme": cfg.scheme.value,
                                     "model": model.describe(), "paths": paths, "steps": steps})
    start = time.perf_counter()
    norm = omega.norm()

    def covariance():
        pts = np.random.default_rng(seed).uniform(0.0, 1.0, size=(256, 2))
        r = covariance_residual(theta, pts)
        return InvariantCheck("covariance", r <= tol.covariance, r, tol.covariance,
                              f"sum theta^2 sigma x sigma = I/2 at 256 points, {theta.size} modes")

    def channel():
        scale = norm * sobolev_norm(omega, 1.0)
        worst = max(abs(enstrophy_channel(omega, k, model, tol.channel_pad)) for k in theta.points)
        r = worst / scale if scale > 0 else worst
        return InvariantCheck("enstrophy_channel", r <= tol.enstrophy_channel, r, tol.enstrophy_channel,
                              f"<sigma_k . grad w, f(w)> on pad {tol.channel_pad:g}")

    def trilinear():
        adv = advection_term(omega)
        scale = norm * adv.norm()
        r = abs(inner(adv, omega)) / scale if scale > 0 else 0.0
        return InvariantCheck("trilinear_cancellation", r <= tol.trilinear, r, tol.trilinear, "<u . grad w, w> = 0")

    def dissipativity():
        if model.is_trivial:
            return InvariantCheck("dissipativity", True, 0.0, tol.dissipativity, "g' = 0")
        a = model.g_prime(to_physical(omega, NONLINEAR_PAD))
        value = inner(flux_divergence(a, omega), omega)
        scale = abs(value) + norm ** 2
        r = max(value, 0.0) / scale
        return InvariantCheck("dissipativity", r <= tol.dissipativity, r, tol.dissipativity,
                              f"<div(g'(w) grad w), w> = {value:.6e} <= 0")

    def biot_savart_check():
        u = biot_savart(omega)
        scale = norm if norm > 0 else 1.0
        r = max(u.divergence().norm(), (u.curl() - omega).norm()) / scale
        return InvariantCheck("biot_savart", r <= tol.biot_savart, r, tol.biot_savart, "div K[w] = 0, curl K[w] = w")

    def parseval():
        scale = norm if norm > 0 else 1.0
        r = abs(quadrature_norm(omega) - norm) / scale
        return InvariantCheck("parseval", r <= tol.parseval, r, tol.parseval, "coefficient norm = grid quadrature")

    def model_check():
        audit = validate_model(model)
        names = ", ".join(c.name for c in audit.failures) or "all bounds hold"
        return InvariantCheck("model_validation", audit.passed, float(len(audit.failures)), 0.0, names)

    def energy_input():
        supplied = noise_energy_input(omega, theta, model)
        removed = 2.0 * corrector_dissipation(omega, model)
        excess = supplied - removed
        r = max(excess, 0.0) / removed if removed > 0 else abs(supplied)
        return InvariantCheck("energy_input", r <= tol.energy_input, r, tol.energy_input,
                              f"noise input {supplied:.6e} <= 2 x corrector dissipation {removed:.6e}")

    records: List[RunRecord] = []

    def a_priori():
        n = max(1, min(cfg.n_steps, steps))
        run_cfg = cfg.replace(horizon=n * cfg.dt, keep_snapshots=True, record_stride=max(1, n // 20))
        records.extend(_records(run_cfg, omega, paths if cfg.stochastic else 1, workers))
        ratio = max(r.max_enstrophy_ratio() for r in records)
        if cfg.stochastic:
            c = max(r.budget_constant() for r in records)
            ok = ratio <= cfg.enstrophy_guard and c <= tol.budget_constant
            return InvariantCheck("a_priori_bound", ok, c, tol.budget_constant,
                                  f"max |w_t|^2/|w_0|^2 = {ratio:.4f}, budget constant C = {c:.4e}")
        rel = max(max(r.budget_excess) for r in records) / norm ** 2 if norm > 0 else 0.0
        ok = ratio <= cfg.enstrophy_guard and rel <= tol.deterministic_excess
        return InvariantCheck("a_priori_bound", ok, rel, tol.deterministic_excess,
                              f"max |w_t|^2/|w_0|^2 = {ratio:.4f}, relative excess {rel:.3e}")

    def moments():
        if not cfg.stochastic:
            return InvariantCheck("increment_moments", True, 0.0, float("inf"), "deterministic run", skipped=True)
        if not records:
            raise SimulationError("no trajectories recorded")
        stats = increment_statistic(records)
        return InvariantCheck("increment_moments", stats.finite, stats.constant, float("inf"),
                              f"max E[<w_t - w_s, e_l>^2]/(|l|^4 |t-s|) at {stats.witness}")

    for name, fn in [("covariance", covariance), ("enstrophy_channel", channel), ("trilinear_cancellation", trilinear),
                     ("dissipativity", dissipativity), ("biot_savart", biot_savart_check), ("parseval", parseval),
                     ("model_validation", model_check), ("energy_input", energy_input),
                     ("a_priori_bound", a_priori), ("increment_moments", moments)]:
        _run_check(report, name, fn)
    report.seconds = time.perf_counter() - start
    logger.info(f"invariant suite: {len(report.checks) - len(report.failures)}/{len(report.checks)} passed "
                f"in {report.seconds:.2f}s")
    return report

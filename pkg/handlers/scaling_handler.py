"""
Scaling-limit study: stochastic ensembles for a sequence of noise shells
against one deterministic reference trajectory.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from core.dynamics import RunRecord, Scheme, SolverConfig, run_trajectory
from core.exceptions import ConfigError
from core.noise import make_shell_coefficients
from core.spectral import SpectralField, sobolev_distance
from handlers.ensemble import SHELL_PATH_STRIDE, PathTask, run_ensemble
from utils.performance_utils import RateFit, fit_rate

logger = logging.getLogger(__name__)

CONVERGENCE_COLUMNS = ["N", "linf_theta", "mean_dist_Hm1", "std_dist", "mean_dist_L2H1m", "paths", "seconds"]


@dataclass(frozen=True)
class ScalingStudySpec:
    """
    base is a stochastic SolverConfig; its noise is replaced by the annulus
    family of each shell N.  delta is the Sobolev index of the H^{-delta}
    distance (the mean_dist_Hm1 column holds that distance for any delta).
    """

    base: SolverConfig
    shells: Tuple[int, ...]
    paths_per_shell: int
    delta: float = 1.0
    reference_check: bool = True

    def __post_init__(self):
        object.__setattr__(self, "shells", tuple(int(s) for s in self.shells))
        if not self.base.stochastic:
            raise ConfigError("the scaling study needs a stochastic base scheme", "base.scheme")
        if not self.shells:
            raise ConfigError("at least one shell is required", "shells")
        if any(s < 1 for s in self.shells):
            raise ConfigError(f"shells must be positive integers, got {list(self.shells)}", "shells")
        if any(b <= a for a, b in zip(self.shells, self.shells[1:])):
            raise ConfigError(f"shells must be strictly increasing, got {list(self.shells)}", "shells",
                              "strictly increasing")
        if self.paths_per_shell < 1:
            raise ConfigError(f"paths_per_shell must be >= 1, got {self.paths_per_shell}", "paths_per_shell")
        if not 0.0 < self.delta <= 2.0:
            raise ConfigError(f"delta must lie in (0, 2], got {self.delta}", "delta", "0 < delta <= 2")
        for s in self.shells:
            make_shell_coefficients(s, self.base.grid)

    def shell_config(self, N: int) -> SolverConfig:
        return self.base.replace(theta=make_shell_coefficients(N), keep_snapshots=True)

    def reference_config(self) -> SolverConfig:
        return self.base.replace(scheme=Scheme.DETERMINISTIC, theta=None, keep_snapshots=True)


@dataclass
class ConvergenceTable:
    rows: List[Dict[str, Any]] = field(default_factory=list)
    delta: float = 1.0
    reference_drift: Optional[float] = None
    aborted: List[Dict[str, Any]] = field(default_factory=list)
    seeds: Dict[str, Any] = field(default_factory=dict)
    rate: Optional[RateFit] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=CONVERGENCE_COLUMNS)

    def row(self, N: int) -> Dict[str, Any]:
        for r in self.rows:
            if r["N"] == N:
                return r
        raise KeyError(N)

    def standard_error(self, N: int) -> float:
        r = self.row(N)
        return r["std_dist"] / np.sqrt(r["paths"])

    def summary(self) -> Dict[str, Any]:
        return {
            "delta": self.delta,
            "rows": len(self.rows),
            "aborted_rows": [a["N"] for a in self.aborted],
            "reference_drift": self.reference_drift,
            "rate": self.rate.as_dict() if self.rate else None,
        }


def path_distances(record: RunRecord, reference: RunRecord, delta: float) -> Tuple[float, float]:
    """(sup_t ||w_t - wbar_t||_{H^-delta}, (int_0^T ||w_t - wbar_t||^2_{H^{1-delta}} dt)^{1/2}) over recorded times."""
    if len(record.snapshots) != len(reference.snapshots) or not np.allclose(record.times, reference.times):
        raise ConfigError("path and reference were recorded at different times", "record_stride")
    weak = [sobolev_distance(a, b, -delta) for a, b in zip(record.snapshots, reference.snapshots)]
    strong = [sobolev_distance(a, b, 1.0 - delta) ** 2 for a, b in zip(record.snapshots, reference.snapshots)]
    integral = trapezoid(strong, record.times) if len(strong) > 1 else 0.0
    return float(max(weak)), float(np.sqrt(max(integral, 0.0)))


def reference_drift(spec: ScalingStudySpec, omega0: SpectralField, reference: RunRecord) -> float:
    """sup_t H^{-delta} distance between the reference and its rerun at dt/2."""
    cfg = spec.reference_config()
    half = cfg.replace(dt=cfg.dt / 2, record_stride=2 * cfg.record_stride)
    rerun = run_trajectory(half, omega0)
    return float(max(sobolev_distance(a, b, -spec.delta) for a, b in zip(rerun.snapshots, reference.snapshots)))


def scaling_study(spec: ScalingStudySpec, omega0: Optional[SpectralField] = None,
                  workers: Optional[int] = None) -> ConvergenceTable:
    """One deterministic reference, then an independent ensemble per shell.

    A row whose ensemble has an aborted path is moved to table.aborted with the
    abort diagnostics.
    """
    base = spec.base
    omega0 = omega0 if omega0 is not None else base.initial_condition.build(base.grid)
    table = ConvergenceTable(delta=spec.delta, seeds={"master_seed": base.master_seed, "paths": {}})

    start = time.perf_counter()
    reference = run_trajectory(spec.reference_config(), omega0)
    logger.info(f"reference run done in {time.perf_counter() - start:.2f}s")
    if spec.reference_check:
        table.reference_drift = reference_drift(spec, omega0, reference)
        logger.info(f"reference self-check: sup H^-{spec.delta:g} drift at dt/2 = {table.reference_drift:.3e}")

    for position, N in enumerate(spec.shells):
        cfg = spec.shell_config(N)
        row_start = time.perf_counter()
        tasks = [PathTask(cfg, omega0, N * SHELL_PATH_STRIDE + p, label=f"N={N}")
                 for p in range(spec.paths_per_shell)]
        outcomes = run_ensemble(tasks, workers)
        failed = [o for o in outcomes if not o.ok]
        seconds = time.perf_counter() - row_start
        table.seeds["paths"][str(N)] = [t.path_index for t in tasks]
        if failed:
            table.aborted.append({
                "N": N,
                "failed_paths": [o.path_index for o in failed],
                "errors": [o.error for o in failed],
                "diagnostics": [o.diagnostics for o in failed],
            })
            logger.warning(f"shell N={N}: {len(failed)} of {len(outcomes)} paths aborted, row dropped")
            continue
        dists = np.array([path_distances(o.record, reference, spec.delta) for o in outcomes])
        table.rows.append({
            "N": N,
            "linf_theta": cfg.theta.linf,
            "mean_dist_Hm1": float(dists[:, 0].mean()),
            "std_dist": float(dists[:, 0].std(ddof=1)) if len(dists) > 1 else 0.0,
            "mean_dist_L2H1m": float(dists[:, 1].mean()),
            "paths": len(outcomes),
            "seconds": seconds,
        })
        logger.info(f"shell N={N}: mean sup H^-{spec.delta:g} distance {table.rows[-1]['mean_dist_Hm1']:.4e} "
                    f"over {len(outcomes)} paths in {seconds:.2f}s")

    if table.rows:
        frame = table.to_frame()
        table.rate = fit_rate(frame["linf_theta"], frame["mean_dist_Hm1"])
        if table.reference_drift is not None and table.reference_drift > frame["mean_dist_Hm1"].min() > 0:
            logger.warning(f"reference drift {table.reference_drift:.3e} exceeds the smallest measured distance")
    return table

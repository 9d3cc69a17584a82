"""
Ito/Stratonovich consistency: Euler-Maruyama with the corrector against Heun
without it, driven by the same Brownian path at every step size.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.dynamics import RunRecord, Scheme, SolverConfig
from core.exceptions import ConfigError, NumericAbort
from core.spectral import SpectralField
from handlers.ensemble import PathTask, run_ensemble
from utils.performance_utils import RateFit, fit_rate

logger = logging.getLogger(__name__)

CONSISTENCY_COLUMNS = ["dt", "mean_sup_discrepancy", "std_sup_discrepancy", "paths", "seconds"]


@dataclass(frozen=True)
class ConsistencyStudySpec:
    base: SolverConfig
    dt_list: Tuple[float, ...]
    paths: int

    def __post_init__(self):
        dts = tuple(float(d) for d in self.dt_list)
        object.__setattr__(self, "dt_list", dts)
        check_dt_list(self.base, dts)
        if self.paths < 1:
            raise ConfigError(f"paths must be >= 1, got {self.paths}", "paths")
        if not self.base.stochastic:
            raise ConfigError("the consistency study needs a stochastic base scheme", "base.scheme")


def check_dt_list(cfg: SolverConfig, dt_list: Sequence[float]):
    """Strictly decreasing, each dividing the horizon and a multiple of the finest step."""
    if not dt_list:
        raise ConfigError("dt_list is empty", "dt_list")
    if any(d <= 0 for d in dt_list):
        raise ConfigError(f"time steps must be positive, got {list(dt_list)}", "dt_list", "dt > 0")
    if any(b >= a for a, b in zip(dt_list, dt_list[1:])):
        raise ConfigError(f"dt_list must be strictly decreasing, got {list(dt_list)}", "dt_list",
                          "strictly decreasing")
    finest = dt_list[-1]
    for d in dt_list:
        ratio = d / finest
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ConfigError(f"dt={d} is not an integer multiple of the finest step {finest}", "dt_list")
        steps = cfg.horizon / d
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError(f"horizon {cfg.horizon} is not a multiple of dt={d}", "dt_list")


@dataclass
class ConsistencyTable:
    rows: List[Dict[str, Any]] = field(default_factory=list)
    order: Optional[RateFit] = None
    aborted: List[Dict[str, Any]] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=CONSISTENCY_COLUMNS)

    @property
    def discrepancies(self) -> List[float]:
        return [r["mean_sup_discrepancy"] for r in self.rows]

    def is_monotone(self) -> bool:
        d = self.discrepancies
        return all(b < a for a, b in zip(d, d[1:]))


def sup_discrepancy(a: RunRecord, b: RunRecord) -> float:
    return float(max((x - y).norm() for x, y in zip(a.snapshots, b.snapshots)))


def scheme_consistency_study(cfg: SolverConfig, dt_list: Sequence[float], paths: int,
                             omega0: Optional[SpectralField] = None,
                             workers: Optional[int] = None) -> ConsistencyTable:
    """Mean over paths of sup_t ||w^ito_t - w^strato_t||_{L^2} for each dt.

    Both schemes and every dt read the same fine Brownian path, and norms are
    compared at the recorded times of the coarsest step.
    """
    dt_list = tuple(float(d) for d in dt_list)
    check_dt_list(cfg, dt_list)
    if not cfg.stochastic:
        raise ConfigError("the consistency study needs noise coefficients", "scheme")
    omega0 = omega0 if omega0 is not None else cfg.initial_condition.build(cfg.grid)
    finest = dt_list[-1]
    table = ConsistencyTable()
    for dt in dt_list:
        stride = int(round(dt_list[0] / dt)) * cfg.record_stride
        common = dict(dt=dt, record_stride=stride, keep_snapshots=True)
        ito = cfg.replace(scheme=Scheme.ITO_EM, **common)
        strato = cfg.replace(scheme=Scheme.STRATONOVICH_HEUN, **common)
        start = time.perf_counter()
        tasks = []
        for p in range(paths):
            tasks.append(PathTask(ito, omega0, p, fine_dt=finest, label=f"ito dt={dt:g}"))
            tasks.append(PathTask(strato, omega0, p, fine_dt=finest, label=f"strato dt={dt:g}"))
        outcomes = run_ensemble(tasks, workers)
        failed = [o for o in outcomes if not o.ok]
        if failed:
            table.aborted.append({"dt": dt, "errors": [o.error for o in failed],
                                  "diagnostics": [o.diagnostics for o in failed]})
            first = failed[0]
            raise NumericAbort(f"consistency study aborted at dt={dt:g}: {first.error}",
                               first.diagnostics.get("time"), first.diagnostics.get("step"), first.diagnostics)
        sups = np.array([sup_discrepancy(outcomes[2 * p].record, outcomes[2 * p + 1].record) for p in range(paths)])
        seconds = time.perf_counter() - start
        table.rows.append({
            "dt": dt,
            "mean_sup_discrepancy": float(sups.mean()),
            "std_sup_discrepancy": float(sups.std(ddof=1)) if paths > 1 else 0.0,
            "paths": paths,
            "seconds": seconds,
        })
        logger.info(f"dt={dt:g}: mean sup discrepancy {sups.mean():.4e} over {paths} paths in {seconds:.2f}s")

    frame = table.to_frame()
    table.order = fit_rate(frame["dt"], frame["mean_sup_discrepancy"])
    if table.order is not None:
        logger.info(f"measured strong order {table.order.slope:.3f}")
    return table


def run_consistency(spec: ConsistencyStudySpec, omega0: Optional[SpectralField] = None,
                    workers: Optional[int] = None) -> ConsistencyTable:
    return scheme_consistency_study(spec.base, spec.dt_list, spec.paths, omega0, workers)

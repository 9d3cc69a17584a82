"""
Deterministic refinement probe: the limit equation solved at several
resolutions from one initial condition, compared in H^{-1} on common modes.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from core.dynamics import RunRecord, SolverConfig
from core.exceptions import ConfigError, NumericAbort
from core.les_model import ModelReport, validate_model
from core.spectral import GridSpec, SpectralField, sobolev_distance
from handlers.ensemble import PathTask, run_ensemble

logger = logging.getLogger(__name__)

PAIR_COLUMNS = ["n_a", "n_b", "sup_dist_Hm1", "final_dist_Hm1"]


@dataclass(frozen=True)
class UniquenessStudySpec:
    base: SolverConfig
    resolutions: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "resolutions", tuple(int(n) for n in self.resolutions))
        check_resolutions(self.base, self.resolutions)


def check_resolutions(cfg: SolverConfig, resolutions: Sequence[int]):
    if cfg.stochastic:
        raise ConfigError("the uniqueness probe runs the deterministic scheme", "base.scheme")
    if len(resolutions) < 2:
        raise ConfigError("at least two resolutions are needed", "resolutions")
    if any(b < a for a, b in zip(resolutions, resolutions[1:])):
        raise ConfigError(f"resolutions must be non-decreasing, got {list(resolutions)}", "resolutions")


def grid_for(cfg: SolverConfig, n: int) -> GridSpec:
    """Same cutoff rule, padding and shape as the base grid."""
    base = cfg.grid
    return GridSpec(n, max(1, (base.max_mode * n) // base.n), base.dealias_pad, base.radial)


@dataclass
class UniquenessReport:
    resolutions: Tuple[int, ...]
    pairs: List[Dict[str, Any]] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)
    model_report: Optional[ModelReport] = None

    @property
    def passed(self) -> bool:
        model_ok = self.model_report is None or self.model_report.passed
        return not self.failures and model_ok

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.pairs, columns=PAIR_COLUMNS)

    def distance(self, n_a: int, n_b: int) -> float:
        for p in self.pairs:
            if (p["n_a"], p["n_b"]) in ((n_a, n_b), (n_b, n_a)):
                return p["sup_dist_Hm1"]
        raise KeyError((n_a, n_b))


def pair_distance(a: RunRecord, b: RunRecord) -> Tuple[float, float]:
    dists = [sobolev_distance(x, y, -1.0) for x, y in zip(a.snapshots, b.snapshots)]
    return float(max(dists)), float(dists[-1])


def uniqueness_probe(cfg: SolverConfig, omega0: SpectralField, resolutions: Sequence[int],
                     workers: Optional[int] = None) -> UniquenessReport:
    """
    Pairwise sup_t H^{-1} distances, restricted to common modes, between
    deterministic runs at each resolution.

    Cauchy check: distances to the finest run must not grow as the coarser
    resolution is refined.  A violation is reported in failures, not raised.
    """
    resolutions = tuple(int(n) for n in resolutions)
    check_resolutions(cfg, resolutions)
    report = UniquenessReport(resolutions)
    tasks = []
    for i, n in enumerate(resolutions):
        grid = grid_for(cfg, n)
        run_cfg = cfg.replace(grid=grid, keep_snapshots=True)
        tasks.append(PathTask(run_cfg, omega0.regrid(grid), i, label=f"n={n}"))
    start = time.perf_counter()
    outcomes = run_ensemble(tasks, workers)
    failed = [o for o in outcomes if not o.ok]
    if failed:
        first = failed[0]
        raise NumericAbort(f"uniqueness probe aborted at {first.label}: {first.error}",
                           first.diagnostics.get("time"), first.diagnostics.get("step"), first.diagnostics)
    logger.info(f"{len(resolutions)} resolutions run in {time.perf_counter() - start:.2f}s")

    finest = len(resolutions) - 1
    to_finest = []
    for i in range(len(resolutions)):
        for j in range(i + 1, len(resolutions)):
            sup_d, final_d = pair_distance(outcomes[i].record, outcomes[j].record)
            report.pairs.append({"n_a": resolutions[i], "n_b": resolutions[j],
                                 "sup_dist_Hm1": sup_d, "final_dist_Hm1": final_d})
            if j == finest:
                to_finest.append((resolutions[i], sup_d))

    for (n_a, d_a), (n_b, d_b) in zip(to_finest, to_finest[1:]):
        if n_b > n_a and d_b > d_a:
            report.failures.append(f"refinement is not Cauchy: d({n_b},{resolutions[-1]})={d_b:.4e} "
                                   f"> d({n_a},{resolutions[-1]})={d_a:.4e}")
    report.model_report = validate_model(cfg.model)
    if not report.model_report.passed:
        report.failures.append("model audit failed: " + ", ".join(c.name for c in report.model_report.failures))
    for failure in report.failures:
        logger.warning(failure)
    return report

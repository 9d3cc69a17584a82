"""
Path-parallel execution of trajectories.

Each task owns its Brownian driver, keyed by (master_seed, path_index), so the
merged result does not depend on which worker ran which path.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from core.config import get_execution_config
from core.dynamics import RunRecord, SolverConfig, run_trajectory
from core.exceptions import NumericAbort
from core.noise import BrownianDriver
from core.spectral import SpectralField

logger = logging.getLogger(__name__)

# path indices of different shells never collide below this many paths per shell
SHELL_PATH_STRIDE = 2 ** 20


@dataclass(frozen=True)
class PathTask:
    cfg: SolverConfig
    omega0: SpectralField
    path_index: int
    fine_dt: Optional[float] = None
    label: str = ""


@dataclass
class PathOutcome:
    path_index: int
    label: str
    record: Optional[RunRecord] = None
    error: Optional[str] = None
    error_type: Optional[str] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.record is not None


def run_path(task: PathTask) -> PathOutcome:
    """Run one trajectory; numeric aborts become data on the outcome."""
    cfg = task.cfg
    driver = None
    if cfg.stochastic:
        driver = BrownianDriver.for_noise(cfg.theta, cfg.master_seed, task.path_index, task.fine_dt)
    start = time.perf_counter()
    try:
        record = run_trajectory(cfg, task.omega0, driver)
    except NumericAbort as e:
        logger.warning(f"path {task.path_index} ({task.label}) aborted: {e}")
        diagnostics = dict(e.diagnostics, time=e.time, step=e.step)
        if driver is not None:
            diagnostics["seeds"] = driver.manifest()
        return PathOutcome(task.path_index, task.label, None, str(e), type(e).__name__, diagnostics,
                           time.perf_counter() - start)
    return PathOutcome(task.path_index, task.label, record, seconds=time.perf_counter() - start)


def resolve_workers(workers: Optional[int] = None) -> int:
    return max(1, int(workers if workers is not None else get_execution_config().threads))


def run_ensemble(tasks: Sequence[PathTask], workers: Optional[int] = None) -> List[PathOutcome]:
    """Run tasks serially or on a process pool; outcomes come back in task order."""
    workers = min(resolve_workers(workers), max(1, len(tasks)))
    if workers == 1:
        return [run_path(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_path, tasks))

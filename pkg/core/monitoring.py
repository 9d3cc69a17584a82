"""
性能监控和指标收集模块
Wall time per study task and host resource snapshots for manifests.
"""

import os
import time
import platform
import threading
from typing import Dict, Any, List, Optional
from dataclasses import dataclass, asdict
from datetime import datetime
from collections import defaultdict
from contextlib import contextmanager
import logging

import psutil

logger = logging.getLogger(__name__)


@dataclass
class ResourceSnapshot:
    """资源快照"""
    timestamp: str
    cpu_count: int
    cpu_percent: float
    memory_total_mb: float
    memory_percent: float
    process_rss_mb: float
    platform: str
    python: str


@dataclass
class TaskMetrics:
    """单个任务指标"""
    name: str
    seconds: float
    ok: bool
    error_message: Optional[str] = None


def collect_resources() -> ResourceSnapshot:
    """收集系统指标"""
    memory = psutil.virtual_memory()
    try:
        rss = psutil.Process(os.getpid()).memory_info().rss / 1024 / 1024
    except (psutil.AccessDenied, psutil.NoSuchProcess):
        rss = 0.0
    return ResourceSnapshot(
        timestamp=datetime.now().isoformat(),
        cpu_count=psutil.cpu_count(logical=True) or 1,
        cpu_percent=psutil.cpu_percent(interval=None),
        memory_total_mb=memory.total / 1024 / 1024,
        memory_percent=memory.percent,
        process_rss_mb=rss,
        platform=platform.platform(),
        python=platform.python_version(),
    )


class StudyMonitor:
    """Thread-safe collector of task timings."""

    def __init__(self):
        self.lock = threading.Lock()
        self.tasks: List[TaskMetrics] = []
        self.totals = defaultdict(float)
        self.failures = defaultdict(int)

    def record_task(self, name: str, seconds: float, ok: bool = True, error_message: Optional[str] = None):
        with self.lock:
            self.tasks.append(TaskMetrics(name, seconds, ok, error_message))
            self.totals[name] += seconds
            if not ok:
                self.failures[name] += 1

    @contextmanager
    def track(self, name: str):
        """Time a block; failures are recorded and re-raised."""
        start = time.perf_counter()
        try:
            yield
        except Exception as e:
            self.record_task(name, time.perf_counter() - start, False, str(e))
            raise
        self.record_task(name, time.perf_counter() - start)

    def reset(self):
        with self.lock:
            self.tasks.clear()
            self.totals.clear()
            self.failures.clear()

    def get_summary_stats(self) -> Dict[str, Any]:
        """获取汇总统计"""
        with self.lock:
            return {
                "tasks": len(self.tasks),
                "failed": sum(self.failures.values()),
                "seconds_by_task": {k: round(v, 6) for k, v in self.totals.items()},
                "resources": asdict(collect_resources()),
            }


# 全局监控实例
study_monitor = StudyMonitor()


def get_monitor() -> StudyMonitor:
    """获取全局监控实例"""
    return study_monitor

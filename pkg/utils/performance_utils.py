"""
Reports: CSV tables, two-column plot data, PNG figures and log-log rate fits.
"""

import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import statsmodels.api as sm
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from core.exceptions import ConfigError  # noqa: E402
from utils.file_utils import write_bytes, write_text  # noqa: E402

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
REPORT_FORMATS = ("csv", "plotdata", "figure")


@dataclass
class RateFit:
    """log y = intercept + slope log x, fitted by OLS."""

    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float
    points: int

    def as_dict(self) -> Dict[str, float]:
        return {"slope": self.slope, "intercept": self.intercept, "slope_stderr": self.slope_stderr,
                "r_squared": self.r_squared, "points": self.points}


def fit_rate(x: Sequence[float], y: Sequence[float]) -> Optional[RateFit]:
    """
    Empirical rate of y against x on log-log axes.

    Non-positive pairs are dropped; None when fewer than two remain.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if keep.sum() < 2:
        return None
    lx, ly = np.log(x[keep]), np.log(y[keep])
    if np.ptp(lx) == 0:
        return None
    X = sm.add_constant(lx)
    model = sm.OLS(ly, X).fit()
    stderr = float(model.bse[1]) if keep.sum() > 2 else float("nan")
    return RateFit(float(model.params[1]), float(model.params[0]), stderr, float(model.rsquared), int(keep.sum()))


def frame_of(report: Any) -> pd.DataFrame:
    if isinstance(report, pd.DataFrame):
        return report
    if hasattr(report, "to_frame"):
        return report.to_frame()
    raise ConfigError(f"cannot report objects of type {type(report).__name__}", "format")


def to_csv_text(frame: pd.DataFrame) -> str:
    buf = io.StringIO()
    frame.to_csv(buf, index=False, float_format=FLOAT_FORMAT)
    return buf.getvalue()


def _plot_series(frame: pd.DataFrame) -> Dict[str, pd.DataFrame]:
    """First column is the abscissa; every other numeric column becomes a series."""
    if frame.empty and len(frame.columns) == 0:
        return {}
    x = frame.columns[0]
    series = {}
    for col in frame.columns[1:]:
        if pd.api.types.is_numeric_dtype(frame[col]):
            series[col] = frame[[x, col]]
    return series


def _figure(frame: pd.DataFrame, title: str) -> bytes:
    series = _plot_series(frame)
    fig, ax = plt.subplots(figsize=(8, 5))
    x = frame.columns[0] if len(frame.columns) else "x"
    log_axes = x in ("N", "linf_theta", "dt")
    for name, data in series.items():
        values = data[name].to_numpy(dtype=float)
        if log_axes and np.all(values[np.isfinite(values)] > 0) and len(values):
            ax.loglog(data[x], values, marker="o", label=name)
        else:
            ax.plot(data[x], values, label=name)
    ax.set_title(title)
    ax.set_xlabel(x)
    ax.grid(True)
    if series:
        ax.legend()
    buf = io.BytesIO()
    fig.savefig(buf, format="png")
    plt.close(fig)
    return buf.getvalue()


def emit_report(report: Any, fmt: str, out_dir: Union[str, Path], stem: str = "report") -> List[Path]:
    """
    Write a RunRecord, ConvergenceTable or any table-like report.

    csv      one file with a header row
    plotdata one whitespace-separated two-column file per series
    figure   one PNG
    """
    if fmt not in REPORT_FORMATS:
        raise ConfigError(f"unknown report format '{fmt}', expected one of {REPORT_FORMATS}", "format")
    frame = frame_of(report)
    out_dir = Path(out_dir)
    if fmt == "csv":
        return [write_text(out_dir / f"{stem}.csv", to_csv_text(frame))]
    if fmt == "plotdata":
        paths = []
        for name, data in _plot_series(frame).items():
            buf = io.StringIO()
            data.to_csv(buf, sep=" ", index=False, header=False, float_format=FLOAT_FORMAT)
            paths.append(write_text(out_dir / f"{stem}_{name}.dat", buf.getvalue()))
        return paths
    return [write_bytes(out_dir / f"{stem}.png", _figure(frame, stem))]

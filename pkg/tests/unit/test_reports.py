import numpy as np
import pandas as pd
import pytest

from core.dynamics import Scheme, run_trajectory
from core.exceptions import ConfigError
from core.les_model import LESModel
from core.spectral import single_mode
from handlers.scaling_handler import CONVERGENCE_COLUMNS, ConvergenceTable
from utils.performance_utils import emit_report, fit_rate, to_csv_text


def _table(rows=3):
    table = ConvergenceTable()
    for i, N in enumerate([2, 4, 8][:rows]):
        table.rows.append({"N": N, "linf_theta": N ** -1.0, "mean_dist_Hm1": 0.1 / N, "std_dist": 0.01,
                           "mean_dist_L2H1m": 0.2 / N, "paths": 4, "seconds": 0.5 + i})
    return table

# --- Unit Tests for emit_report ---

def test_empty_table_is_header_only(tmp_path):
    [path] = emit_report(ConvergenceTable(), "csv", tmp_path, "convergence")
    assert path.name == "convergence.csv"
    assert path.read_text().splitlines() == [",".join(CONVERGENCE_COLUMNS)]


def test_table_rows(tmp_path):
    [path] = emit_report(_table(), "csv", tmp_path, "convergence")
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    frame = pd.read_csv(path)
    assert list(frame["N"]) == [2, 4, 8]
    assert frame["mean_dist_Hm1"].iloc[1] == pytest.approx(0.1 / 4, rel=1e-15)


def test_csv_keeps_full_precision():
    text = to_csv_text(pd.DataFrame({"x": [1.0 / 3.0]}))
    assert float(text.splitlines()[1]) == 1.0 / 3.0


def test_heat_decay_plotdata(tmp_path, grid32, make_config):
    cfg = make_config(grid32, scheme=Scheme.DETERMINISTIC, theta=None, model=LESModel.linear(0.0), dt=0.01,
                      horizon=0.2)
    record = run_trajectory(cfg, single_mode(grid32, (1, 1)))
    paths = emit_report(record, "plotdata", tmp_path, "record")
    assert {p.name for p in paths} == {"record_l2_norm.dat", "record_h1_seminorm.dat", "record_dissipation.dat",
                                       "record_budget_excess.dat"}
    data = np.loadtxt(tmp_path / "record_l2_norm.dat")
    assert data.shape == (21, 2)
    np.testing.assert_allclose(data[:, 1], np.exp(-8 * np.pi ** 2 * 0.01 * data[:, 0]), rtol=1e-10)


def test_figure_is_png(tmp_path):
    [path] = emit_report(_table(), "figure", tmp_path, "convergence")
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_unknown_format(tmp_path):
    with pytest.raises(ConfigError) as info:
        emit_report(_table(), "xlsx", tmp_path)
    assert info.value.key_path == "format"
    with pytest.raises(ConfigError):
        emit_report(object(), "csv", tmp_path)

# --- Unit Tests for fit_rate ---

def test_fit_rate_recovers_slope():
    x = np.array([0.1, 0.05, 0.025, 0.0125])
    fit = fit_rate(x, 3.0 * x ** 2)
    assert fit.slope == pytest.approx(2.0, abs=1e-10)
    assert fit.intercept == pytest.approx(np.log(3.0), abs=1e-10)
    assert fit.points == 4
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_rate_drops_nonpositive_pairs():
    assert fit_rate([1.0, 2.0], [0.0, 1.0]) is None
    assert fit_rate([1.0, 1.0], [1.0, 2.0]) is None
    fit = fit_rate([1.0, 2.0, 4.0], [1.0, 0.0, 4.0])
    assert fit.points == 2
    assert fit.slope == pytest.approx(1.0)
    assert np.isnan(fit.slope_stderr)

"""
Integration tests: studies assembled from the solver, the ensemble runner and
the reports, on grids small enough for CI.
"""

import numpy as np
import pandas as pd
import pytest

import core.dynamics
from core.dynamics import Scheme
from core.les_model import LESModel
from core.noise import NoiseCoefficients, ito_corrector
from core.spectral import GridSpec, single_mode
from handlers.consistency_handler import scheme_consistency_study
from handlers.invariant_handler import budget_refinement_study, increment_moment_study, invariant_suite
from handlers.scaling_handler import CONVERGENCE_COLUMNS, ScalingStudySpec, scaling_study
from handlers.uniqueness_handler import uniqueness_probe

pytestmark = pytest.mark.integration

TRIVIAL = LESModel.linear(0.0)


def _numeric(frame):
    return frame.drop(columns=["seconds"])


class TestScalingStudy:
    """Scaling-limit ensembles against the deterministic reference."""

    def test_trivial_modulation_matches_reference(self, grid32, omega32, make_config):
        spec = ScalingStudySpec(make_config(grid32, model=TRIVIAL, record_stride=5), (1, 2), 2)
        table = scaling_study(spec, omega32, workers=1)
        frame = table.to_frame()
        assert list(frame.columns) == CONVERGENCE_COLUMNS
        assert list(frame["N"]) == [1, 2]
        assert frame["mean_dist_Hm1"].max() <= 1e-12
        assert frame["mean_dist_L2H1m"].max() <= 1e-12
        assert table.aborted == []
        assert table.reference_drift is not None

    def test_tables_are_reproducible(self, grid32, omega32, make_config):
        spec = ScalingStudySpec(make_config(grid32, horizon=0.005, record_stride=2), (1, 2), 2,
                                reference_check=False)
        first = scaling_study(spec, omega32, workers=1)
        second = scaling_study(spec, omega32, workers=1)
        pd.testing.assert_frame_equal(_numeric(first.to_frame()), _numeric(second.to_frame()))
        assert first.to_frame()["mean_dist_Hm1"].min() > 0.0
        assert first.seeds["paths"]["2"] == [2 * 2 ** 20, 2 * 2 ** 20 + 1]

    def test_results_do_not_depend_on_workers(self, grid32, omega32, make_config):
        spec = ScalingStudySpec(make_config(grid32, horizon=0.005, record_stride=2), (1,), 3,
                                reference_check=False)
        serial = scaling_study(spec, omega32, workers=1)
        parallel = scaling_study(spec, omega32, workers=2)
        pd.testing.assert_frame_equal(_numeric(serial.to_frame()), _numeric(parallel.to_frame()))


class TestConsistencyStudy:
    """Ito with corrector against Stratonovich without it on shared paths."""

    def test_constant_modulation_has_no_discrepancy(self, grid32, omega32, make_config):
        cfg = make_config(grid32, model=TRIVIAL, horizon=0.004)
        table = scheme_consistency_study(cfg, [2e-3, 1e-3, 5e-4], 2, omega32, workers=1)
        assert table.discrepancies == [0.0, 0.0, 0.0]
        assert table.order is None

    def test_linear_modulation_discrepancy_shrinks(self, grid32, omega32, make_config):
        cfg = make_config(grid32, model=LESModel.linear(0.1), horizon=0.02)
        table = scheme_consistency_study(cfg, [2e-3, 1e-3, 5e-4], 4, omega32, workers=1)
        d = table.discrepancies
        assert all(v > 0 for v in d)
        assert d[-1] < d[0]
        assert table.order is not None and table.order.slope > 0.0


class TestUniquenessProbe:
    """Deterministic refinement in H^-1 on common modes."""

    def test_same_resolution_agrees(self, make_config, omega32):
        cfg = make_config(GridSpec(32, 10), scheme=Scheme.DETERMINISTIC, theta=None, dt=1e-3)
        report = uniqueness_probe(cfg, omega32, [32, 32])
        assert report.distance(32, 32) == 0.0
        assert report.pairs[0]["final_dist_Hm1"] == 0.0

    def test_heat_decay_agrees_across_grids(self, make_config):
        grid = GridSpec.for_size(16)
        cfg = make_config(grid, scheme=Scheme.DETERMINISTIC, theta=None, model=TRIVIAL, dt=1e-3, horizon=0.02)
        report = uniqueness_probe(cfg, single_mode(grid, (1, 2)), [16, 24, 32])
        assert len(report.pairs) == 3
        assert report.to_frame()["sup_dist_Hm1"].max() <= 1e-10

    def test_smagorinsky_refinement(self, make_config, omega32):
        grid = GridSpec.for_size(32)
        cfg = make_config(grid, scheme=Scheme.DETERMINISTIC, theta=None, dt=5e-4, horizon=0.01)
        report = uniqueness_probe(cfg, omega32.regrid(grid), [32, 48, 64])
        assert report.distance(48, 64) <= report.distance(32, 64)
        assert report.model_report.passed


class TestInvariantSuite:
    """The suite must pass for the solver and fail for broken ingredients."""

    def test_suite_passes(self, grid64, make_config):
        report = invariant_suite(make_config(grid64, shell=2, horizon=0.05), paths=2, workers=1)
        assert report.passed, [(c.name, c.residual, c.detail) for c in report.failures]
        assert len(report.checks) == 10
        assert report.check("increment_moments").passed
        assert np.isfinite(report.check("increment_moments").residual)

    def test_deterministic_suite_skips_moments(self, grid32, omega32, make_config):
        cfg = make_config(grid32, scheme=Scheme.DETERMINISTIC, theta=None, dt=1e-3, horizon=0.05)
        report = invariant_suite(cfg, omega32, workers=1)
        assert report.check("increment_moments").skipped
        assert report.check("a_priori_bound").passed

    def test_flipped_corrector_breaks_the_bound(self, grid32, omega32, make_config, monkeypatch):
        monkeypatch.setattr(core.dynamics, "ito_corrector", lambda omega, model: -1.0 * ito_corrector(omega, model))
        report = invariant_suite(make_config(grid32, shell=2, horizon=0.05), omega32, paths=2, workers=1)
        assert not report.check("a_priori_bound").passed
        assert report.check("trilinear_cancellation").passed

    def test_anisotropic_noise_breaks_covariance(self, grid32, omega32, make_config):
        theta = NoiseCoefficients(((1, 0),), (1.0,), check_symmetry=False)
        report = invariant_suite(make_config(grid32), omega32, workers=1, theta=theta)
        check = report.check("covariance")
        assert not check.passed
        assert check.residual > 0.1
        assert not report.passed

    def test_report_frame(self, grid32, omega32, make_config):
        report = invariant_suite(make_config(grid32), omega32, steps=10, workers=1)
        frame = report.to_frame()
        assert list(frame["name"])[:3] == ["covariance", "enstrophy_channel", "trilinear_cancellation"]
        assert report.as_dict()["config"]["steps"] == 10


class TestEnergyStudies:
    def test_increment_moments_are_finite(self, grid32, omega32, make_config):
        report = increment_moment_study(make_config(grid32, record_stride=5), omega32, 4, workers=1)
        assert report.finite
        assert report.constant > 0.0
        assert report.paths == 4
        assert set(report.frame.columns) == {"l1", "l2", "s", "t", "statistic"}
        assert len(report.witness["l"]) == 2

    def test_budget_refinement_columns(self, grid32, omega32, make_config):
        frame = budget_refinement_study(make_config(grid32), omega32, [1e-3, 5e-4], 2, workers=1)
        assert list(frame.columns) == ["dt", "mean_max_excess", "std_max_excess", "relative_excess",
                                       "budget_constant", "max_enstrophy_ratio", "paths", "seconds"]
        assert list(frame["dt"]) == [1e-3, 5e-4]
        assert (frame["max_enstrophy_ratio"] <= 2.0).all()

"""
End-to-end acceptance runs at desk scale.

    pytest -m acceptance

Each test is one complete study with the production settings; the slow
marker keeps them out of the default CI selection.
"""

import numpy as np
import pytest

from core.dynamics import Scheme, run_trajectory
from core.les_model import LESModel
from core.noise import covariance_residual, enstrophy_channel, make_shell_coefficients
from core.spectral import GridSpec, random_band_limited, single_mode, sobolev_norm
from handlers.consistency_handler import scheme_consistency_study
from handlers.invariant_handler import budget_refinement_study, increment_moment_study
from handlers.scaling_handler import ScalingStudySpec, scaling_study
from handlers.uniqueness_handler import uniqueness_probe

pytestmark = [pytest.mark.slow, pytest.mark.acceptance]

GRID = GridSpec.for_size(64)


@pytest.fixture
def omega64():
    return random_band_limited(GRID, 4.0, 1.0, seed=7)


class TestStructuralIdentities:
    def test_covariance_identity(self):
        points = np.random.default_rng(0).uniform(size=(256, 2))
        for N in (1, 2, 4, 8):
            assert covariance_residual(make_shell_coefficients(N), points) <= 1e-12

    def test_enstrophy_channel(self, omega64):
        """Quadrature on the 4x padded grid; the error of |w|^(1/2) w decays like the padded size^(-5/2)."""
        scale = omega64.norm() * sobolev_norm(omega64, 1.0)
        model = LESModel.smagorinsky(0.1)
        for k in make_shell_coefficients(2).points:
            assert abs(enstrophy_channel(omega64, k, model, pad=4.0)) <= 1e-5 * scale

    def test_deterministic_exactness(self, make_config):
        grid = GridSpec(32, 10)
        cfg = make_config(grid, scheme=Scheme.DETERMINISTIC, theta=None, model=LESModel.linear(0.0), dt=0.01,
                          horizon=1.0, record_stride=100)
        record = run_trajectory(cfg, single_mode(grid, (2, 1)))
        expected = np.exp(-4 * np.pi ** 2 * cfg.nu * 5 * 1.0)
        assert record.final_time == pytest.approx(1.0)
        assert abs(record.l2_norms[-1] - expected) <= 1e-10 * expected


class TestEnergyBounds:
    def test_pathwise_a_priori_bound(self, make_config, omega64):
        cfg = make_config(GRID, shell=2, horizon=0.25, record_stride=10)
        frame = budget_refinement_study(cfg, omega64, [5e-4, 2.5e-4], 16)
        assert (frame["max_enstrophy_ratio"] <= 2.0).all()
        coarse, fine = frame["mean_max_excess"]
        assert coarse >= 1.3 * fine

    def test_increment_moments_are_stable(self, make_config):
        grid = GridSpec(32, 10)
        cfg = make_config(grid, shell=1, horizon=0.05, record_stride=10)
        omega0 = random_band_limited(grid, 4.0, 1.0, seed=7)
        small = increment_moment_study(cfg, omega0, 64)
        large = increment_moment_study(cfg, omega0, 128)
        assert small.finite and large.finite
        assert 0.5 <= large.constant / small.constant <= 2.0


class TestStudies:
    def test_scheme_consistency(self, make_config, omega64):
        cfg = make_config(GRID, shell=2, horizon=0.1)
        table = scheme_consistency_study(cfg, [2e-3, 1e-3, 5e-4], 8, omega64)
        assert table.is_monotone(), table.discrepancies

        linear = cfg.replace(model=LESModel.linear(0.1))
        table = scheme_consistency_study(linear, [2e-3, 1e-3, 5e-4], 8, omega64)
        assert table.is_monotone(), table.discrepancies
        assert table.order.slope >= 0.4

    def test_scaling_limit(self, make_config, omega64):
        spec = ScalingStudySpec(make_config(GRID, horizon=0.25, record_stride=10), (2, 4, 8), 16)
        table = scaling_study(spec, omega64)
        assert table.aborted == []
        d = [table.row(N)["mean_dist_Hm1"] for N in (2, 4, 8)]
        assert d[0] > d[1] > d[2]
        assert d[2] <= 0.6 * d[0]
        for a, b in [(2, 4), (4, 8)]:
            se = np.hypot(table.standard_error(a), table.standard_error(b))
            assert table.row(a)["mean_dist_Hm1"] - table.row(b)["mean_dist_Hm1"] > 2 * se
        assert table.rate.slope > 0

    def test_trivial_coupling(self, make_config, omega64):
        cfg = make_config(GRID, model=LESModel.linear(0.0), horizon=0.05, record_stride=10)
        table = scaling_study(ScalingStudySpec(cfg, (2, 4, 8), 4, reference_check=False), omega64)
        assert table.to_frame()["mean_dist_Hm1"].max() <= 1e-12

    def test_uniqueness_probe(self, make_config, omega64):
        cfg = make_config(GRID, scheme=Scheme.DETERMINISTIC, theta=None, dt=2e-4, horizon=0.1, record_stride=25)
        report = uniqueness_probe(cfg, omega64, [64, 96, 128])
        d64, d96 = report.distance(64, 128), report.distance(96, 128)
        assert d64 > d96
        assert d96 <= 0.7 * d64
        assert report.passed, report.failures

"""
Shared fixtures: small grids, the default Smagorinsky model and config builders.
"""

import json

import pytest

from core.dynamics import InitialCondition, Scheme, SolverConfig
from core.les_model import LESModel
from core.noise import make_shell_coefficients
from core.spectral import GridSpec, random_band_limited


@pytest.fixture
def grid32():
    return GridSpec(32, 10)


@pytest.fixture
def grid64():
    return GridSpec.for_size(64)


@pytest.fixture
def smagorinsky():
    return LESModel.smagorinsky(0.1)


@pytest.fixture
def omega32(grid32):
    return random_band_limited(grid32, 4.0, 1.0, seed=7)


def solver_config(grid, scheme=Scheme.ITO_EM, shell=1, **overrides) -> SolverConfig:
    """Stochastic Smagorinsky config on grid unless overridden."""
    params = dict(
        grid=grid,
        nu=0.01,
        dt=5e-4,
        horizon=0.01,
        scheme=scheme,
        model=LESModel.smagorinsky(0.1),
        theta=make_shell_coefficients(shell) if scheme is not Scheme.DETERMINISTIC else None,
        initial_condition=InitialCondition("random", 4.0, 1.0, 7),
    )
    params.update(overrides)
    return SolverConfig(**params)


@pytest.fixture
def make_config():
    return solver_config


@pytest.fixture
def config_file(tmp_path):
    """Write a JSON document and return its path."""
    def write(document, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return str(path)
    return write

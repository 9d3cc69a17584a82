import numpy as np
import pytest

from core.exceptions import ModelError
from core.les_model import LESModel, ModelKind, f_eval, f_prime, g_eval, validate_model


class _BrokenGPrime(LESModel):
    """g' doubled: violates g' = f'^2 / 4."""

    def g_prime(self, r):
        return 0.5 * self.f_prime(r) ** 2

# --- Unit Tests for f, f' and g ---

@pytest.mark.parametrize("cs_delta, r, expected", [
    (1.0, 1.0, 4.0 / 3.0),
    (1.0, 0.0, 0.0),
    (1.0, 4.0, 32.0 / 3.0),
    (1.0, -4.0, -32.0 / 3.0),
])
def test_smagorinsky_f(cs_delta, r, expected):
    assert f_eval(LESModel.smagorinsky(cs_delta), r) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("cs_delta, r, expected", [
    (1.0, 1.0, 2.0),
    (1.0, 0.0, 0.0),
    (2.0, 9.0, 12.0),
])
def test_smagorinsky_f_prime(cs_delta, r, expected):
    model = LESModel.smagorinsky(cs_delta)
    assert f_prime(model, r) == pytest.approx(expected, rel=1e-14)
    if r != 0.0:
        h = 1e-6
        fd = (model.f(r + h) - model.f(r - h)) / (2 * h)
        assert abs(fd - expected) <= 1e-5 * max(1.0, expected)


@pytest.mark.parametrize("r, expected", [(2.0, 2.0), (0.0, 0.0), (-2.0, -2.0)])
def test_smagorinsky_g(r, expected):
    model = LESModel.smagorinsky(1.0)
    assert g_eval(model, r) == pytest.approx(expected, rel=1e-14, abs=1e-15)
    assert model.g_quadrature(np.array(r)) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_smagorinsky_g_closed_form():
    """g(r) = cs^2 r |r| / 2 and g' = cs^2 |r|."""
    model = LESModel.smagorinsky(0.3)
    r = np.linspace(-5, 5, 41)
    np.testing.assert_allclose(model.g(r), 0.09 * r * np.abs(r) / 2, rtol=1e-14, atol=1e-16)
    np.testing.assert_allclose(model.g_prime(r), 0.09 * np.abs(r), rtol=1e-14, atol=1e-16)


def test_linear_model():
    model = LESModel.linear(1.0)
    r = np.array([-3.0, 0.0, 0.5, 2.0])
    np.testing.assert_allclose(model.f(r), r)
    np.testing.assert_allclose(model.g_prime(r), 0.25)
    np.testing.assert_allclose(model.g(r), r / 4)
    assert model.alpha == 0.0
    assert not model.is_trivial
    assert LESModel.linear(0.0).is_trivial


def test_regularized_model_uses_quadrature():
    model = LESModel.smagorinsky(0.5, epsilon_reg=0.1)
    r = np.linspace(-3, 3, 13)
    h = 1e-5
    fd = (model.g(r + h) - model.g(r - h)) / (2 * h)
    np.testing.assert_allclose(fd, model.g_prime(r), rtol=1e-6, atol=1e-9)
    assert model.g(np.array(0.0)) == 0.0
    assert model.f_prime(np.array(0.0)) > 0.0


def test_power_law_model():
    model = LESModel.power_law(2.0, 0.25)
    assert model.kind is ModelKind.POWER_LAW
    assert model.f(16.0) == pytest.approx(2.0 * 2.0 * 16.0)
    assert model.growth_consts == (0.0, pytest.approx(2.5))

# --- Unit Tests for parameter validation ---

@pytest.mark.parametrize("kwargs", [
    dict(kind="smagorinsky", cs_delta=-0.1),
    dict(kind="smagorinsky", cs_delta=0.1, alpha=0.3),
    dict(kind="power_law", cs_delta=1.0),
    dict(kind="power_law", cs_delta=1.0, alpha=1.5),
    dict(kind="linear", cs_delta=1.0, epsilon_reg=-1.0),
    dict(kind="linear", cs_delta=1.0, growth_consts=(-1.0, 0.0)),
])
def test_invalid_models(kwargs):
    with pytest.raises(ModelError):
        LESModel(**kwargs)


def test_unknown_kind():
    with pytest.raises(ValueError):
        LESModel(kind="dynamic")


def test_describe_round_trip():
    model = LESModel.smagorinsky(0.2, epsilon_reg=0.01)
    assert LESModel(**{**model.describe(), "growth_consts": tuple(model.describe()["growth_consts"])}) == model

# --- Unit Tests for validate_model ---

def test_validate_smagorinsky_passes():
    report = validate_model(LESModel.smagorinsky(1.0), (-10.0, 10.0), 1001)
    assert report.passed, [c.name for c in report.failures]
    assert report.model["alpha"] == 0.5
    assert {c.name for c in report.checks} >= {"f_prime_growth", "f_growth", "g_zero", "g_monotone",
                                               "g_prime_relation", "g_derivative", "g_increment"}


def test_validate_linear_passes():
    report = validate_model(LESModel.linear(1.0))
    assert report.passed


def test_validate_regularized_passes():
    assert validate_model(LESModel.smagorinsky(0.5, epsilon_reg=0.1)).passed


def test_validate_reports_g_prime_violation():
    report = validate_model(_BrokenGPrime.smagorinsky(1.0))
    assert not report.passed
    assert "g_prime_relation" in [c.name for c in report.failures]
    assert report.check("g_prime_relation").witness is not None


def test_validate_reports_growth_violation():
    model = LESModel(ModelKind.SMAGORINSKY, cs_delta=1.0, growth_consts=(0.0, 0.1))
    report = validate_model(model)
    assert report.check("f_prime_growth").passed is False


def test_validate_needs_samples():
    with pytest.raises(ModelError):
        validate_model(LESModel.linear(1.0), samples=1)

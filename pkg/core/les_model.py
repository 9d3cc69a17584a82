"""
Noise modulation f and the induced eddy diffusion g.

    g(r) = 1/4 int_0^r f'(t)^2 dt,   g' = f'^2 / 4 >= 0,   g(0) = 0

Kinds:
    smagorinsky  f(r) = 4/3 cs_delta |r|^{1/2} r   ->  g(r) = cs_delta^2 r |r| / 2
    power_law    f(r) = cs_delta |r|^alpha r
    linear       f(r) = cs_delta r                 ->  g' = cs_delta^2 / 4

With epsilon_reg > 0 every |r| is replaced by sqrt(r^2 + eps^2); g then has no
closed form and is integrated by Gauss-Legendre quadrature.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core.exceptions import ModelError

logger = logging.getLogger(__name__)

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(48)


class ModelKind(str, Enum):
    SMAGORINSKY = "smagorinsky"
    POWER_LAW = "power_law"
    LINEAR = "linear"


@dataclass(frozen=True)
class LESModel:
    """Immutable (f, f', g) triple.

    growth_consts (A, B) bound |f'(r)| <= A + B |r|^alpha; derived from the
    kind when not given.
    """

    kind: ModelKind = ModelKind.SMAGORINSKY
    cs_delta: float = 0.1
    alpha: Optional[float] = None
    epsilon_reg: float = 0.0
    growth_consts: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        kind = ModelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.cs_delta < 0:
            raise ModelError(f"cs_delta must be nonnegative, got {self.cs_delta}")
        if self.epsilon_reg < 0:
            raise ModelError(f"epsilon_reg must be nonnegative, got {self.epsilon_reg}")
        default_alpha = {ModelKind.SMAGORINSKY: 0.5, ModelKind.LINEAR: 0.0}.get(kind)
        alpha = self.alpha
        if alpha is None:
            if default_alpha is None:
                raise ModelError("power_law model needs an explicit alpha")
            alpha = default_alpha
        elif default_alpha is not None and alpha != default_alpha:
            raise ModelError(f"{kind.value} model has alpha={default_alpha}, got {alpha}")
        if not 0.0 <= alpha <= 1.0:
            raise ModelError(f"alpha must lie in [0, 1], got {alpha}")
        object.__setattr__(self, "alpha", float(alpha))
        if self.growth_consts is None:
            # |f'| <= c(1+alpha)(r^2+eps^2)^{alpha/2} <= c(1+alpha)(eps^alpha + |r|^alpha)
            lead = self.coefficient * (1.0 + alpha)
            if alpha == 0.0:
                consts = (lead, 0.0)
            elif self.epsilon_reg > 0:
                consts = (lead * self.epsilon_reg ** alpha, lead)
            else:
                consts = (0.0, lead)
            object.__setattr__(self, "growth_consts", consts)
        else:
            a, b = self.growth_consts
            if a < 0 or b < 0:
                raise ModelError(f"growth constants must be nonnegative, got {self.growth_consts}")
            object.__setattr__(self, "growth_consts", (float(a), float(b)))

    @classmethod
    def smagorinsky(cls, cs_delta: float, epsilon_reg: float = 0.0) -> "LESModel":
        return cls(ModelKind.SMAGORINSKY, cs_delta=cs_delta, epsilon_reg=epsilon_reg)

    @classmethod
    def linear(cls, slope: float = 1.0) -> "LESModel":
        return cls(ModelKind.LINEAR, cs_delta=slope)

    @classmethod
    def power_law(cls, coefficient: float, alpha: float, epsilon_reg: float = 0.0) -> "LESModel":
        return cls(ModelKind.POWER_LAW, cs_delta=coefficient, alpha=alpha, epsilon_reg=epsilon_reg)

    @property
    def coefficient(self) -> float:
        """The constant c in f(r) = c |r|^alpha r."""
        if self.kind is ModelKind.SMAGORINSKY:
            return 4.0 / 3.0 * self.cs_delta
        return self.cs_delta

    @property
    def is_trivial(self) -> bool:
        """f constant: noise and eddy diffusion both vanish."""
        return self.coefficient == 0.0

    def _modulus(self, r: np.ndarray) -> np.ndarray:
        if self.epsilon_reg > 0:
            return np.sqrt(r * r + self.epsilon_reg ** 2)
        return np.abs(r)

    def f(self, r):
        r = np.asarray(r, dtype=float)
        if self.alpha == 0.0:
            return self.coefficient * r
        return self.coefficient * self._modulus(r) ** self.alpha * r

    def f_prime(self, r):
        r = np.asarray(r, dtype=float)
        c, a = self.coefficient, self.alpha
        if a == 0.0:
            return np.full_like(r, c)
        if self.epsilon_reg == 0.0:
            return c * (1.0 + a) * np.abs(r) ** a
        s = self._modulus(r)
        return c * (s ** a + a * r * r * s ** (a - 2.0))

    def g_prime(self, r):
        return 0.25 * self.f_prime(r) ** 2

    def g(self, r):
        r = np.asarray(r, dtype=float)
        c, a = self.coefficient, self.alpha
        if self.epsilon_reg == 0.0:
            return c * c * (1.0 + a) ** 2 * np.abs(r) ** (2.0 * a) * r / (4.0 * (2.0 * a + 1.0))
        return self.g_quadrature(r)

    def g_quadrature(self, r):
        """1/4 int_0^r f'(t)^2 dt by 48-point Gauss-Legendre on [0, r]."""
        r = np.asarray(r, dtype=float)
        t = 0.5 * r[..., None] * (1.0 + _GAUSS_NODES)
        return 0.5 * r * np.sum(_GAUSS_WEIGHTS * self.g_prime(t), axis=-1)

    def describe(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "cs_delta": self.cs_delta,
            "alpha": self.alpha,
            "epsilon_reg": self.epsilon_reg,
            "growth_consts": list(self.growth_consts),
        }


def f_eval(model: LESModel, r):
    return model.f(r)


def f_prime(model: LESModel, r):
    return model.f_prime(r)


def g_eval(model: LESModel, r):
    return model.g(r)


# --- model audit -------------------------------------------------------------

@dataclass
class BoundCheck:
    name: str
    passed: bool
    value: float
    bound: float
    witness: Optional[float] = None
    detail: str = ""


@dataclass
class ModelReport:
    model: Dict[str, Any]
    checks: List[BoundCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[BoundCheck]:
        return [c for c in self.checks if not c.passed]

    def check(self, name: str) -> BoundCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _worst(excess: np.ndarray, r: np.ndarray) -> Tuple[float, float]:
    i = int(np.argmax(excess))
    return float(excess[i]), float(r[i])


def validate_model(model: LESModel, sample_range: Tuple[float, float] = (-10.0, 10.0),
                   samples: int = 1001, seed: int = 0) -> ModelReport:
    """Sweep the growth, monotonicity and g' = f'^2/4 relations over a sample set.

    Violations are reported, never raised.
    """
    if samples < 2:
        raise ModelError(f"validate_model needs at least 2 samples, got {samples}")
    lo, hi = sample_range
    r = np.linspace(lo, hi, samples)
    alpha = model.alpha
    a_const, b_const = model.growth_consts
    report = ModelReport(model=model.describe())

    fp = np.abs(model.f_prime(r))
    growth = a_const + b_const * np.abs(r) ** alpha
    excess, witness = _worst(fp - growth - 1e-12 * (1.0 + growth), r)
    report.checks.append(BoundCheck("f_prime_growth", excess <= 0.0, float(fp.max()), float(growth.max()), witness,
                                    f"|f'(r)| <= {a_const:.6g} + {b_const:.6g}|r|^{alpha}"))

    fv = np.abs(model.f(r))
    a1, b1 = a_const, a_const + b_const / (alpha + 1.0)
    fbound = a1 + b1 * np.abs(r) ** (alpha + 1.0)
    excess, witness = _worst(fv - fbound - 1e-12 * (1.0 + fbound), r)
    report.checks.append(BoundCheck("f_growth", excess <= 0.0, float(fv.max()), float(fbound.max()), witness,
                                    f"|f(r)| <= {a1:.6g} + {b1:.6g}|r|^{alpha + 1}"))

    g0 = abs(float(model.g(np.array(0.0))))
    report.checks.append(BoundCheck("g_zero", g0 <= 1e-14, g0, 1e-14, 0.0, "g(0) = 0"))

    gv = model.g(r)
    drops = -np.diff(gv)
    scale = 1e-12 * (1.0 + np.abs(gv).max())
    excess, witness = _worst(drops - scale, r[1:])
    report.checks.append(BoundCheck("g_monotone", excess <= 0.0, float(max(drops.max(), 0.0)), scale, witness,
                                    "g non-decreasing"))

    target = 0.25 * model.f_prime(r) ** 2
    rel = np.abs(model.g_prime(r) - target) - 1e-10 * np.maximum(1.0, np.abs(target))
    excess, witness = _worst(rel, r)
    report.checks.append(BoundCheck("g_prime_relation", excess <= 0.0, float(excess), 1e-10, witness,
                                    "g' = f'^2 / 4"))

    h = 1e-6 * np.maximum(1.0, np.abs(r))
    fd = (model.g(r + h) - model.g(r - h)) / (2.0 * h)
    lipschitz = float(np.max(np.abs(np.diff(target) / np.diff(r)))) if samples > 2 else 0.0
    tol = 1e-6 * np.abs(target) + h * lipschitz + 1e-12
    excess, witness = _worst(np.abs(fd - target) - tol, r)
    report.checks.append(BoundCheck("g_derivative", excess <= 0.0, float(np.abs(fd - target).max()),
                                    float(tol.max()), witness, "centered difference of g equals f'^2 / 4"))

    # bound on g increments; the constant is fitted, the check is that it stays finite
    rng = np.random.default_rng(seed)
    x = np.concatenate([r[:-1], rng.uniform(lo, hi, samples)])
    y = np.concatenate([r[1:], rng.uniform(lo, hi, samples)])
    ax, ay = np.abs(x) ** (2 * alpha), np.abs(y) ** (2 * alpha)
    denom = np.abs(y - x) * (1.0 + ax) + np.abs(y) * np.abs(ay - ax)
    mask = denom > 0
    ratio = np.abs(model.g(y[mask]) - model.g(x[mask])) / denom[mask]
    fitted = float(ratio.max()) if ratio.size else 0.0
    report.checks.append(BoundCheck("g_increment", bool(np.isfinite(fitted)), fitted, float("inf"),
                                    float(x[mask][int(np.argmax(ratio))]) if ratio.size else None,
                                    f"|g(y)-g(x)| <= C(|y-x|(1+|x|^2a) + |y|||y|^2a-|x|^2a|), C={fitted:.6g}"))

    for failed in report.failures:
        logger.warning(f"model check '{failed.name}' failed at r={failed.witness}: {failed.detail}")
    return report

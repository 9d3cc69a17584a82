"""
JSON schema of run and study configurations.

parse_config validates a document with pydantic (unknown keys rejected) and
builds the immutable solver/study objects; render_config is its canonical
inverse.
"""

import json
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.dynamics import InitialCondition, Scheme, SolverConfig, StabilityPolicy
from core.exceptions import ArtifactIOError, ConfigError, SimulationError
from core.les_model import LESModel, ModelKind
from core.noise import NoiseCoefficients, make_shell_coefficients
from core.spectral import GridSpec
from handlers.consistency_handler import ConsistencyStudySpec
from handlers.scaling_handler import ScalingStudySpec
from handlers.uniqueness_handler import UniquenessStudySpec


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# --- solver ------------------------------------------------------------------

class GridModel(StrictModel):
    """Galerkin grid"""
    n: int = Field(..., gt=0, description="Physical points per axis (even)")
    max_mode: Optional[int] = Field(None, gt=0, description="Cutoff; defaults to n // 3")
    dealias_pad: float = Field(1.5, ge=1.5, description="Padding factor for quadratic products")
    radial: bool = Field(True, description="Disk cutoff |l| <= max_mode instead of the square")


class ModelModel(StrictModel):
    """Noise modulation f and eddy diffusion g"""
    kind: ModelKind = Field(ModelKind.SMAGORINSKY, description="smagorinsky, power_law or linear")
    cs_delta: float = Field(0.1, ge=0, description="C_s * filter width (slope for linear)")
    alpha: Optional[float] = Field(None, ge=0, le=1, description="Exponent of |r|; fixed by smagorinsky and linear")
    epsilon_reg: float = Field(0.0, ge=0, description="Regularization of |r|")
    growth_consts: Optional[Tuple[float, float]] = Field(None, description="(A, B) in |f'(r)| <= A + B|r|^alpha")


class CoefficientModel(StrictModel):
    k: Tuple[int, int] = Field(..., description="Lattice point")
    theta: float = Field(..., ge=0, description="Noise intensity theta_k")


class NoiseModel(StrictModel):
    """Either an annulus family or an explicit coefficient list"""
    shell: Optional[int] = Field(None, ge=1, description="Annulus N <= |k| <= 2N with uniform theta")
    coefficients: Optional[List[CoefficientModel]] = Field(None, description="Explicit (k, theta) list")

    @model_validator(mode="after")
    def _one_source(self):
        if (self.shell is None) == (self.coefficients is None):
            raise ValueError("give exactly one of 'shell' and 'coefficients'")
        return self


class RandomICModel(StrictModel):
    kind: Literal["random"] = "random"
    max_radius: float = Field(4.0, gt=0)
    l2_norm: float = Field(1.0, ge=0)
    seed: int = Field(0, ge=0)


class ModeICModel(StrictModel):
    kind: Literal["mode"]
    l: Tuple[int, int]
    amplitude: float = 1.0


class SnapshotICModel(StrictModel):
    kind: Literal["snapshot"]
    path: str


InitialConditionModel = Annotated[Union[RandomICModel, ModeICModel, SnapshotICModel], Field(discriminator="kind")]


class SolverModel(StrictModel):
    """One trajectory configuration"""
    grid: Union[int, GridModel] = Field(..., description="n, or a grid object")
    nu: float = Field(..., gt=0, description="Molecular viscosity")
    dt: float = Field(..., gt=0, description="Time step")
    horizon: float = Field(..., gt=0, description="Final time T")
    scheme: Scheme = Field(Scheme.DETERMINISTIC, description="ito_em, stratonovich_heun or deterministic")
    model: ModelModel = Field(default_factory=ModelModel)
    noise: Optional[NoiseModel] = None
    record_stride: int = Field(1, ge=1)
    enstrophy_guard: float = Field(2.0, ge=1)
    keep_snapshots: bool = False
    stability_policy: StabilityPolicy = StabilityPolicy.WARN
    stability_safety: float = Field(1.0, gt=0)
    initial_condition: InitialConditionModel = Field(default_factory=RandomICModel)
    master_seed: int = Field(0, ge=0)


# --- studies -----------------------------------------------------------------

class ScalingStudyModel(StrictModel):
    study: Literal["scaling"]
    base: SolverModel
    shells: List[int] = Field(..., min_length=1)
    paths_per_shell: int = Field(..., ge=1)
    delta: float = Field(1.0, gt=0, le=2)
    reference_check: bool = True


class ConsistencyStudyModel(StrictModel):
    study: Literal["consistency"]
    base: SolverModel
    dt_list: List[float] = Field(..., min_length=1)
    paths: int = Field(..., ge=1)


class UniquenessStudyModel(StrictModel):
    study: Literal["uniqueness"]
    base: SolverModel
    resolutions: List[int] = Field(..., min_length=2)


StudyModel = Annotated[Union[ScalingStudyModel, ConsistencyStudyModel, UniquenessStudyModel],
                       Field(discriminator="study")]


class StudyDocument(StrictModel):
    document: StudyModel


# --- conversion --------------------------------------------------------------

def _grid(model: Union[int, GridModel]) -> GridSpec:
    if isinstance(model, int):
        return GridSpec.for_size(model)
    max_mode = model.max_mode if model.max_mode is not None else model.n // 3
    return GridSpec(model.n, max_mode, model.dealias_pad, model.radial)


def _theta(model: Optional[NoiseModel]) -> Optional[NoiseCoefficients]:
    if model is None:
        return None
    if model.shell is not None:
        return make_shell_coefficients(model.shell)
    return NoiseCoefficients.from_mapping({tuple(c.k): c.theta for c in model.coefficients})


def _initial_condition(model) -> InitialCondition:
    if model.kind == "random":
        return InitialCondition("random", model.max_radius, model.l2_norm, model.seed)
    if model.kind == "mode":
        return InitialCondition("mode", l=tuple(model.l), amplitude=model.amplitude)
    return InitialCondition("snapshot", path=model.path)


def _with_prefix(prefix: str, fn, *args):
    """Re-raise domain errors as ConfigError under the key path they came from."""
    try:
        return fn(*args)
    except ConfigError as e:
        path = ".".join(p for p in (prefix, e.key_path) if p)
        message = str(e).split(": ", 1)[-1] if e.key_path else str(e)
        raise ConfigError(message, path or None, e.constraint) from e
    except SimulationError as e:
        raise ConfigError(str(e), prefix or None) from e


def _solver(model: SolverModel, prefix: str = "") -> SolverConfig:
    def key(name):
        return f"{prefix}.{name}" if prefix else name

    grid = _with_prefix(key("grid"), _grid, model.grid)
    lm = model.model
    les = _with_prefix(key("model"), LESModel, lm.kind, lm.cs_delta, lm.alpha, lm.epsilon_reg, lm.growth_consts)
    theta = _with_prefix(key("noise"), _theta, model.noise)

    def build():
        return SolverConfig(
            grid=grid, nu=model.nu, dt=model.dt, horizon=model.horizon, scheme=model.scheme, model=les,
            theta=theta, record_stride=model.record_stride, enstrophy_guard=model.enstrophy_guard,
            keep_snapshots=model.keep_snapshots, stability_policy=model.stability_policy,
            stability_safety=model.stability_safety,
            initial_condition=_initial_condition(model.initial_condition), master_seed=model.master_seed,
        )

    return _with_prefix(prefix, build)


def _study(model) -> Union[ScalingStudySpec, ConsistencyStudySpec, UniquenessStudySpec]:
    if model.study == "scaling":
        data = model.base
        if data.noise is None and data.scheme is not Scheme.DETERMINISTIC:
            data = data.model_copy(update={"noise": NoiseModel(shell=model.shells[0])})
        base = _solver(data, "base")
        return _with_prefix("", ScalingStudySpec, base, tuple(model.shells), model.paths_per_shell,
                            model.delta, model.reference_check)
    base = _solver(model.base, "base")
    if model.study == "consistency":
        return _with_prefix("", ConsistencyStudySpec, base, tuple(model.dt_list), model.paths)
    return _with_prefix("", UniquenessStudySpec, base, tuple(model.resolutions))


def _validation_error(e: ValidationError) -> ConfigError:
    first = e.errors()[0]
    loc = [str(p) for p in first["loc"]]
    if loc and loc[0] == "document":
        loc = loc[2:] if len(loc) > 2 else ["study"]  # drop the wrapper and the union tag
    return ConfigError(first["msg"], ".".join(loc) or None, first["type"])


def parse_config(text: str) -> Union[SolverConfig, ScalingStudySpec, ConsistencyStudySpec, UniquenessStudySpec]:
    """UTF-8 JSON text to a validated SolverConfig or study spec."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    try:
        if "study" in data:
            return _study(StudyDocument.model_validate({"document": data}).document)
        return _solver(SolverModel.model_validate(data))
    except ValidationError as e:
        raise _validation_error(e) from e


def load_config(path: str):
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ArtifactIOError(f"cannot read config {path}: {e}") from e
    return parse_config(text)


# --- rendering ---------------------------------------------------------------

def _render_solver(cfg: SolverConfig) -> Dict[str, Any]:
    m = cfg.model
    out: Dict[str, Any] = {
        "grid": cfg.grid.describe(),
        "nu": cfg.nu,
        "dt": cfg.dt,
        "horizon": cfg.horizon,
        "scheme": cfg.scheme.value,
        "model": {"kind": m.kind.value, "cs_delta": m.cs_delta, "alpha": m.alpha,
                  "epsilon_reg": m.epsilon_reg, "growth_consts": list(m.growth_consts)},
        "record_stride": cfg.record_stride,
        "enstrophy_guard": cfg.enstrophy_guard,
        "keep_snapshots": cfg.keep_snapshots,
        "stability_policy": cfg.stability_policy.value,
        "stability_safety": cfg.stability_safety,
        "master_seed": cfg.master_seed,
    }
    if cfg.theta is not None:
        if cfg.theta.shell is not None:
            out["noise"] = {"shell": cfg.theta.shell}
        else:
            out["noise"] = {"coefficients": [{"k": list(k), "theta": v}
                                             for k, v in zip(cfg.theta.points, cfg.theta.values)]}
    ic = cfg.initial_condition
    if ic.kind == "random":
        out["initial_condition"] = {"kind": "random", "max_radius": ic.max_radius, "l2_norm": ic.l2_norm,
                                    "seed": ic.seed}
    elif ic.kind == "mode":
        out["initial_condition"] = {"kind": "mode", "l": list(ic.l), "amplitude": ic.amplitude}
    else:
        out["initial_condition"] = {"kind": "snapshot", "path": ic.path}
    return out


def config_dict(obj) -> Dict[str, Any]:
    if isinstance(obj, SolverConfig):
        return _render_solver(obj)
    if isinstance(obj, ScalingStudySpec):
        return {"study": "scaling", "base": _render_solver(obj.base), "shells": list(obj.shells),
                "paths_per_shell": obj.paths_per_shell, "delta": obj.delta, "reference_check": obj.reference_check}
    if isinstance(obj, ConsistencyStudySpec):
        return {"study": "consistency", "base": _render_solver(obj.base), "dt_list": list(obj.dt_list),
                "paths": obj.paths}
    if isinstance(obj, UniquenessStudySpec):
        return {"study": "uniqueness", "base": _render_solver(obj.base), "resolutions": list(obj.resolutions)}
    raise ConfigError(f"cannot render {type(obj).__name__}")


def render_config(obj) -> str:
    """Canonical JSON: sorted keys, every default explicit."""
    return json.dumps(config_dict(obj), indent=2, sort_keys=True)

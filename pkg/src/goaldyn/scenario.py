"""Scenario files: validation, overrides and construction of runtime objects."""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import InvalidSpec, ScenarioInvalid
from .model import (
    H0_REGISTRY,
    PAYOFF_REGISTRY,
    ControlMatrix,
    DiffusionSpec,
    DriftSpec,
    MatchContext,
    ModelSpec,
    ObjectiveSpec,
    OppositionMix,
    OppositionState,
    WeatherSpec,
)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DriftCfg(_Strict):
    z_star: list[float] = [0.0]
    kappa_d: float = Field(1.0, gt=0)
    c_w: float = 0.0


class DiffusionCfg(_Strict):
    gamma_opp: float = Field(0.1, gt=0)
    rho1: float = Field(0.0, gt=-1, lt=1)
    rho2: float = Field(0.0, gt=-1, lt=1)
    rho3: float = Field(0.0, gt=-1, lt=1)
    p0: float = Field(0.0, ge=0)
    kappa_p: float = Field(0.0, ge=0)
    a0: float = Field(0.0, ge=0)
    sigma_hat_max: float = Field(1.0, gt=0)


class WeatherCfg(_Strict):
    s_w: float = Field(1.5, gt=1, lt=2)
    lambda_dew: Optional[float] = None
    dew_temp: Optional[float] = Field(None, gt=-237.3)
    lambda_wind: float = 1.0
    truncation: int = Field(64, ge=1)

    @model_validator(mode="after")
    def _dew(self):
        if self.lambda_dew is None and self.dew_temp is None:
            raise ValueError("give lambda_dew or dew_temp")
        return self


class ContextCfg(_Strict):
    e_zd1: float = Field(0.0, ge=0)
    e_zd2: float = Field(0.0, ge=0)
    e_zdn1: float = Field(0.0, ge=0)
    e_zdn2: float = Field(0.0, ge=0)
    toss_won: bool = False
    crowd_fraction: float = Field(0.5, ge=0, le=1)
    venue_home: bool = True


class OppStateCfg(_Strict):
    v_ball: float = Field(20.0, ge=0)
    x: float = Field(100.0, ge=0)
    theta1: float = 0.0
    theta2: float = 0.0
    g_guess: float = Field(0.5, ge=0, le=1)


class OppositionCfg(_Strict):
    probs: list[float] = [1 / 3, 1 / 3, 1 / 3]
    evaluators: list[str] = ["free_kick", "dribble", "tackle"]
    k_bound: int = Field(1, ge=1)
    state: OppStateCfg = OppStateCfg()

    @field_validator("evaluators")
    @classmethod
    def _known(cls, v):
        if len(v) != 3:
            raise ValueError("exactly three evaluators are needed")
        for name in v:
            if name not in PAYOFF_REGISTRY:
                raise ValueError(f"unknown evaluator {name!r}; choose from {sorted(PAYOFF_REGISTRY)}")
        return v


class ObjectiveCfg(_Strict):
    alpha: list[float] = [1.0]
    rho_disc: list[float] = [0.1]
    h0: str = "sqrt"
    h0_star: float = Field(0.0, ge=0)
    n_matches: int = Field(1, ge=1)
    epsilon_floor: float = 0.0

    @field_validator("rho_disc")
    @classmethod
    def _rho(cls, v):
        for r in v:
            if not 0 <= r < 1:
                raise ValueError(f"discount rate {r} outside [0, 1)")
        return v

    @field_validator("h0")
    @classmethod
    def _h0(cls, v):
        if v not in H0_REGISTRY:
            raise ValueError(f"unknown h0 {v!r}; choose from {sorted(H0_REGISTRY)}")
        return v


class ModelCfg(_Strict):
    w: list[list[float]] = [[1.0]]
    w_max: float = Field(10.0, gt=0)
    drift: DriftCfg = DriftCfg()
    diffusion: DiffusionCfg = DiffusionCfg()
    weather: Optional[WeatherCfg] = None
    context: ContextCfg = ContextCfg()
    opposition: OppositionCfg = OppositionCfg()
    objective: ObjectiveCfg = ObjectiveCfg()
    expected_prev: list[float] = [0.0]
    noise: bool = True


class SimulationCfg(_Strict):
    dt: float = Field(0.01, gt=0)
    horizon: float = Field(1.0, gt=0)
    n_paths: int = Field(1000, ge=2)
    z0: list[float] = [0.0]
    export_paths: int = Field(20, ge=0)


class StoppingCfg(_Strict):
    b: float = 1.0
    epsilon_resume: float = Field(0.0, ge=0)
    dt: float = Field(1e-3, gt=0)


class GridCfg(_Strict):
    low: list[float] = [-3.0]
    high: list[float] = [3.0]
    nodes: list[int] = [64]


class AlphaGridCfg(_Strict):
    low: float = -2.0
    high: float = 2.0
    points: int = Field(101, ge=2)


class PathIntegralCfg(_Strict):
    g: Literal["saturating", "quadratic", "constant"] = "saturating"
    g_params: dict[str, float] = {}
    s: float = Field(0.0, ge=0)
    z: list[float] = [0.0]
    eps_step: float = Field(0.05, gt=0)
    n_steps: int = Field(10, ge=1)
    grid: GridCfg = GridCfg()
    kernel_mean: list[float] = [0.0]
    kernel_var: float = Field(1.0, gt=0)
    include_gradient: bool = False
    lambda_dyn: float = Field(0.0, ge=0)
    lambda_lqg: float = Field(0.0, ge=0)
    alpha_grid: AlphaGridCfg = AlphaGridCfg()
    bracket: list[float] = [-1000.0, 1000.0]
    brute_paths: int = Field(500, ge=2)


class GaugeCfg(_Strict):
    integrand: Literal["sin", "cos", "exp", "square"] = "sin"
    interval: list[float] = [0.0, 3.141592653589793]
    tol: float = Field(1e-8, gt=0)
    rain_gauge: bool = False


class TopologyCfg(_Strict):
    complex: dict[str, Any] = {"example": "hexagon"}
    vertex_map: Optional[dict[int, int]] = None
    rotation: int = 1
    rounds: int = Field(1, ge=0)


class LqgCfg(_Strict):
    n: int = Field(32, ge=3)
    n_pairs: int = Field(20, ge=1)
    r: float = 1.0


class Scenario(_Strict):
    seed: int = Field(0, ge=0)
    model: ModelCfg = ModelCfg()
    simulation: SimulationCfg = SimulationCfg()
    stopping: StoppingCfg = StoppingCfg()
    pathintegral: PathIntegralCfg = PathIntegralCfg()
    game: dict[str, Any] = {"builtin": "goal_race"}
    topology: TopologyCfg = TopologyCfg()
    lqg: LqgCfg = LqgCfg()
    gauge: GaugeCfg = GaugeCfg()

    def digest(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


SHIPPED = resources.files("goaldyn") / "scenarios"


def shipped_scenarios() -> list[str]:
    return sorted(p.name[:-5] for p in SHIPPED.iterdir() if p.name.endswith(".yaml"))


def _read(source) -> dict:
    if source is None:
        source = "default"
    path = Path(source)
    if path.exists():
        text = path.read_text()
    else:
        shipped = SHIPPED / f"{source}.yaml"
        if not shipped.is_file():
            raise ScenarioInvalid(f"scenario {source!r} not found", [f"scenario: no such file or shipped name {source!r}"])
        text = shipped.read_text()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ScenarioInvalid(f"scenario is not valid YAML: {exc}", [str(exc)]) from exc
    if not isinstance(data, dict):
        raise ScenarioInvalid("scenario must be a mapping", ["<root>: not a mapping"])
    return data


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``a.b.c=value`` overrides; values are parsed as YAML scalars/lists."""
    out = copy.deepcopy(data)
    for item in overrides or []:
        if "=" not in item:
            raise ScenarioInvalid(f"override {item!r} lacks '='", [f"--set {item}: expected key=value"])
        key, raw = item.split("=", 1)
        node = out
        parts = key.strip().split(".")
        for p in parts[:-1]:
            nxt = node.get(p)
            if not isinstance(nxt, dict):
                nxt = {}
                node[p] = nxt
            node = nxt
        node[parts[-1]] = yaml.safe_load(raw)
    return out


def _format_errors(exc: ValidationError) -> list[str]:
    return [f"{'.'.join(str(x) for x in e['loc']) or '<root>'}: {e['msg']}" for e in exc.errors()]


def load_scenario(source=None, overrides: list[str] | None = None, seed: int | None = None) -> Scenario:
    data = apply_overrides(_read(source), overrides or [])
    if seed is not None:
        data["seed"] = seed
    try:
        sc = Scenario.model_validate(data)
    except ValidationError as exc:
        errs = _format_errors(exc)
        raise ScenarioInvalid("scenario failed validation: " + "; ".join(errs), errs) from exc
    try:
        build_model(sc)
    except (InvalidSpec, ValueError) as exc:
        raise ScenarioInvalid(f"model: {exc}", [f"model: {exc}"]) from exc
    return sc


def build_model(sc: Scenario) -> ModelSpec:
    m = sc.model
    w = np.asarray(m.w, dtype=float)
    if w.ndim != 2 or w.size == 0:
        raise InvalidSpec("model.w must be a non-empty matrix")
    weather = None
    if m.weather is not None:
        wc = m.weather
        if wc.lambda_dew is not None:
            weather = WeatherSpec(wc.s_w, wc.lambda_dew, wc.lambda_wind, wc.dew_temp, wc.truncation)
        else:
            weather = WeatherSpec.from_dew_point(wc.dew_temp, wc.lambda_wind, wc.s_w, wc.truncation)
    opp = m.opposition
    return ModelSpec(
        drift_spec=DriftSpec(m.drift.z_star, m.drift.kappa_d, m.drift.c_w),
        diffusion_spec=DiffusionSpec(**m.diffusion.model_dump()),
        context=MatchContext(**m.context.model_dump()),
        objective=ObjectiveSpec(
            m.objective.alpha,
            m.objective.rho_disc,
            H0_REGISTRY[m.objective.h0],
            m.objective.h0_star,
            m.objective.n_matches,
            m.objective.epsilon_floor,
        ),
        control=ControlMatrix(w, m.w_max),
        weather=weather,
        opposition=OppositionMix(tuple(opp.probs), *(PAYOFF_REGISTRY[e] for e in opp.evaluators), opp.k_bound),
        opposition_state=OppositionState(**opp.state.model_dump()),
        expected_prev=m.expected_prev,
        noise=m.noise,
    )

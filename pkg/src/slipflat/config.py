"""Run configuration: a flat INI-style file with strict key checking.

Every key is optional and falls back to the package defaults; unknown keys
or sections are rejected by name so typos cannot silently change behavior.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field, fields

from .controller import ControllerConfig, Scheme
from .dynamics import IntegratorConfig
from .flight_planner import FlightConfig
from .harness import NoiseSpec, RoaGridSpec, SCENARIOS
from .model import SlipParams
from .stance_planner import StanceWeights


class ConfigError(ValueError):
    pass


@dataclass
class SimulateSpec:
    apex_z: float = 1.8
    apex_dy: float = 4.0
    n_steps: int = 8
    stride: int = 10          # trajectory sample decimation


@dataclass
class PlanStanceSpec:
    theta: float = math.pi / 2
    dtheta: float = 0.0
    ell: float = 1.0
    dell: float = -1.0
    u1: float = 0.0
    u2: float = 0.0


@dataclass
class PlanFlightSpec:
    y: float = 0.0
    dy: float = 4.5
    z: float = 1.02
    dz: float = 0.0
    theta: float = math.pi / 2


@dataclass
class RunConfig:
    params: SlipParams = field(default_factory=SlipParams)
    sim: IntegratorConfig = field(default_factory=IntegratorConfig)
    plan: IntegratorConfig = field(default_factory=lambda: IntegratorConfig(dt=1e-3, t_max=3.0))
    weights: StanceWeights = field(default_factory=StanceWeights)
    flight: FlightConfig = field(default_factory=FlightConfig)
    scheme: Scheme = Scheme.EVENT_TRIGGERED
    desired_apex: tuple[float, float] = (1.02, 4.5)
    replan_hz: float = 20.0
    control_hz: float = 1000.0
    noise: float = 0.0
    stance_overrun: float = 0.1
    min_replan_window: float = 0.04
    roa: RoaGridSpec = field(default_factory=RoaGridSpec)
    roa_scenarios: tuple[str, ...] = ("proposed",)
    noise_spec: NoiseSpec = field(default_factory=NoiseSpec)
    simulate: SimulateSpec = field(default_factory=SimulateSpec)
    plan_stance_state: PlanStanceSpec = field(default_factory=PlanStanceSpec)
    plan_flight_state: PlanFlightSpec = field(default_factory=PlanFlightSpec)
    seed: int = 0

    def controller(self) -> ControllerConfig:
        return ControllerConfig(
            scheme=self.scheme,
            desired_apex=self.desired_apex,
            replan_hz=self.replan_hz,
            control_hz=self.control_hz,
            noise=self.noise,
            weights=self.weights,
            flight=self.flight,
            sim=self.sim,
            plan=self.plan,
            stance_overrun=self.stance_overrun,
            min_replan_window=self.min_replan_window,
        )

    def canonical_text(self) -> str:
        """Stable key=value rendering of every effective setting."""
        parts: list[str] = []

        def emit(prefix: str, obj) -> None:
            for f in fields(obj):
                v = getattr(obj, f.name)
                if isinstance(v, Scheme):
                    v = v.value
                parts.append(f"{prefix}.{f.name}={v!r}")

        emit("slip", self.params)
        emit("integrator", self.sim)
        emit("plan_integrator", self.plan)
        emit("weights", self.weights)
        emit("flight", self.flight)
        parts.append(f"controller.scheme={self.scheme.value!r}")
        parts.append(f"controller.desired_apex={self.desired_apex!r}")
        for name in ("replan_hz", "control_hz", "noise", "stance_overrun", "min_replan_window", "seed"):
            parts.append(f"controller.{name}={getattr(self, name)!r}")
        emit("roa", self.roa)
        parts.append(f"roa.scenarios={self.roa_scenarios!r}")
        emit("noise", self.noise_spec)
        emit("simulate", self.simulate)
        emit("plan_stance", self.plan_stance_state)
        emit("plan_flight", self.plan_flight_state)
        return "\n".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:12]


_SCHEMES = {"event": Scheme.EVENT_TRIGGERED, "receding": Scheme.RECEDING_HORIZON}


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def _parse_section(parser, section: str, known: dict[str, callable], sink: dict) -> None:
    if not parser.has_section(section):
        return
    for key, raw in parser.items(section):
        if key not in known:
            raise ConfigError(f"unknown key [{section}] {key}")
        try:
            sink[key] = known[key](raw)
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"bad value for [{section}] {key}: {raw!r} ({exc})") from exc


def load_config(path: str | None, *, text: str | None = None) -> RunConfig:
    """Parse a config file (or literal text) into a fully-defaulted RunConfig."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if text is not None:
            parser.read_file(io.StringIO(text), source=path or "<config>")
        elif path is not None:
            with open(path) as fh:
                parser.read_file(fh, source=path)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from exc

    known_sections = {
        "slip", "integrator", "planner", "controller",
        "simulate", "roa", "noise", "plan_stance", "plan_flight",
    }
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"unknown section [{section}]")

    slip: dict = {}
    _parse_section(parser, "slip", {
        "m": float, "k": float, "ell0": float, "g": float,
        "u1_max": float, "u2_max": float, "w_max": float,
    }, slip)

    integ: dict = {}
    _parse_section(parser, "integrator", {
        "dt": float, "event_tol": float, "max_bisections": int, "t_max": float,
    }, integ)

    def scheme_of(raw: str) -> Scheme:
        if raw not in _SCHEMES:
            raise ConfigError(f"scheme must be one of {sorted(_SCHEMES)}, got {raw!r}")
        return _SCHEMES[raw]

    planner: dict = {}
    _parse_section(parser, "planner", {
        "plan_dt": float, "plan_t_max": float,
        "q_track": _floats, "q_term": _floats,
        "degree": int, "n_ref": int, "to_margin": float,
        "r_swing": float, "n_grid": int, "refine_tol": float,
        "theta_lo": float, "theta_hi": float, "warm_width": float,
        "arrival_fraction": float, "min_descent": float,
    }, planner)
    for key in ("q_track", "q_term"):
        if key in planner and len(planner[key]) != 3:
            raise ConfigError(f"[planner] {key} needs exactly 3 values")

    ctrl: dict = {}
    _parse_section(parser, "controller", {
        "scheme": scheme_of, "apex_z": float, "apex_dy": float,
        "replan_hz": float, "control_hz": float, "noise": float,
        "stance_overrun": float, "min_replan_window": float,
    }, ctrl)

    simu: dict = {}
    _parse_section(parser, "simulate", {
        "apex_z": float, "apex_dy": float, "n_steps": int, "stride": int,
    }, simu)

    def scenarios_of(raw: str) -> tuple[str, ...]:
        names = tuple(tok.strip() for tok in raw.split(",") if tok.strip())
        for name in names:
            if name not in SCENARIOS:
                raise ConfigError(f"unknown scenario {name!r} (choose from {SCENARIOS})")
        return names

    roa: dict = {}
    _parse_section(parser, "roa", {
        "z_min": float, "z_max": float, "dy_min": float, "dy_max": float,
        "n_z": int, "n_dy": int, "n_steps": int, "tol_z": float, "tol_dy": float,
        "scenarios": scenarios_of,
    }, roa)
    roa_scenarios = roa.pop("scenarios", ("proposed",))

    def schemes_of(raw: str) -> tuple[Scheme, ...]:
        return tuple(scheme_of(tok.strip()) for tok in raw.split(",") if tok.strip())

    noise: dict = {}
    _parse_section(parser, "noise", {
        "levels": _floats, "schemes": schemes_of, "n_seeds": int, "n_steps": int,
        "trailing": int, "mean_tol_z": float, "mean_tol_dy": float,
    }, noise)

    ps: dict = {}
    _parse_section(parser, "plan_stance", {
        "theta": float, "dtheta": float, "ell": float, "dell": float,
        "u1": float, "u2": float,
    }, ps)

    pf: dict = {}
    _parse_section(parser, "plan_flight", {
        "y": float, "dy": float, "z": float, "dz": float, "theta": float,
    }, pf)

    cfg = RunConfig()
    try:
        cfg.params = SlipParams(**slip)
        cfg.sim = IntegratorConfig(**integ)
        plan_kwargs = {}
        if "plan_dt" in planner:
            plan_kwargs["dt"] = planner.pop("plan_dt")
        else:
            planner.pop("plan_dt", None)
            plan_kwargs["dt"] = 1e-3
        plan_kwargs["t_max"] = planner.pop("plan_t_max", 3.0)
        cfg.plan = IntegratorConfig(**plan_kwargs)
        weight_keys = {"q_track", "q_term", "degree", "n_ref", "to_margin"}
        cfg.weights = StanceWeights(**{k: v for k, v in planner.items() if k in weight_keys})
        cfg.flight = FlightConfig(**{k: v for k, v in planner.items() if k not in weight_keys})
        if "apex_z" in ctrl or "apex_dy" in ctrl:
            cfg.desired_apex = (ctrl.pop("apex_z", 1.02), ctrl.pop("apex_dy", 4.5))
        else:
            ctrl.pop("apex_z", None)
            ctrl.pop("apex_dy", None)
        for key, val in ctrl.items():
            setattr(cfg, key, val)
        cfg.roa = RoaGridSpec(**roa)
        cfg.roa_scenarios = roa_scenarios
        cfg.noise_spec = NoiseSpec(**noise)
        cfg.simulate = SimulateSpec(**simu)
        cfg.plan_stance_state = PlanStanceSpec(**ps)
        cfg.plan_flight_state = PlanFlightSpec(**pf)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg

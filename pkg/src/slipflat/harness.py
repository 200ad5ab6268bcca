"""Batch experiments: region-of-attraction sweeps over disturbed apex
states, the accumulated transient apex-error metric, and the measurement-
noise study comparing the two planning schemes.

Cells, noise levels, and seeds are independent; sweeps parallelize over a
process pool and assemble results in deterministic order.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from .controller import (
    ControllerConfig,
    DeadbeatBaseline,
    Scheme,
    deadbeat_build,
    run_deadbeat_gait,
    run_gait,
)
from .dynamics import IntegratorConfig
from .model import FlightState, HybridState, SlipParams

PROPOSED = "proposed"
DEADBEAT_BEFORE = "deadbeat-before-apex"
DEADBEAT_AFTER = "deadbeat-after-apex"
SCENARIOS = (PROPOSED, DEADBEAT_BEFORE, DEADBEAT_AFTER)


@dataclass(frozen=True)
class RoaGridSpec:
    """Apex-state grid over the disturbance ranges."""

    z_min: float = 1.01
    z_max: float = 3.0
    dy_min: float = 1.8
    dy_max: float = 7.3
    n_z: int = 40
    n_dy: int = 40
    n_steps: int = 8
    tol_z: float = 0.01      # convergence tolerance on apex height [m]
    tol_dy: float = 0.05     # and on apex speed [m/s]

    def z_values(self) -> np.ndarray:
        return np.linspace(self.z_min, self.z_max, self.n_z)

    def dy_values(self) -> np.ndarray:
        return np.linspace(self.dy_min, self.dy_max, self.n_dy)

    def cells(self) -> list[tuple[float, float]]:
        return [(float(z), float(dy)) for z in self.z_values() for dy in self.dy_values()]


@dataclass(frozen=True)
class CellResult:
    apex_z: float
    apex_dy: float
    scenario: str
    converged: bool
    steps_to_converge: int    # first step from which all later apexes stay in tolerance; -1 if never
    acc_error: float          # accumulated squared apex error over the step budget
    failure: str              # empty when the run completed
    seed: int


@dataclass
class RoaGrid:
    spec: RoaGridSpec
    scenario: str
    records: list[CellResult] = field(default_factory=list)

    def converged_count(self) -> int:
        return sum(r.converged for r in self.records)


def accumulated_apex_error(
    apex_states: list[tuple[float, float]], desired: tuple[float, float], n: int = 8
) -> float:
    """Sum of squared apex errors over the first ``n`` apexes, unweighted
    across height [m] and speed [m/s]; ``inf`` when fewer apexes exist."""
    if len(apex_states) < n:
        return math.inf
    z_d, dy_d = desired
    return float(sum((z - z_d) ** 2 + (dy - dy_d) ** 2 for z, dy in apex_states[:n]))


def _classify(apex_states, desired, spec: RoaGridSpec, failed: bool) -> tuple[bool, int, float]:
    acc = accumulated_apex_error(apex_states, desired, spec.n_steps)
    if failed or len(apex_states) < spec.n_steps:
        return False, -1, math.inf if failed else acc
    z_d, dy_d = desired
    inside = [abs(z - z_d) < spec.tol_z and abs(dy - dy_d) < spec.tol_dy for z, dy in apex_states]
    converged = inside[spec.n_steps - 1]
    steps = -1
    for i in range(spec.n_steps):
        if all(inside[i:spec.n_steps]):
            steps = i + 1
            break
    return converged, steps, acc


def _start_state(z: float, dy: float) -> HybridState:
    # Disturbed apex: level flight at the given height/speed, leg vertical.
    return HybridState.in_flight(FlightState(0.0, dy, z, 0.0, math.pi / 2))


def _roa_cell(args) -> CellResult:
    (z, dy, scenario, p, cfg, spec, base, seed) = args
    desired = cfg.desired_apex
    if scenario == PROPOSED:
        res = run_gait(_start_state(z, dy), cfg, p, n_apexes=spec.n_steps, rng_seed=seed)
        conv, steps, acc = _classify(res.apex_states, desired, spec, res.failed)
        return CellResult(z, dy, scenario, conv, steps, acc, res.failure_reason, seed)
    which = "before" if scenario == DEADBEAT_BEFORE else "after"
    run = run_deadbeat_gait((z, dy), base, which, p, cfg.sim, spec.n_steps)
    conv, steps, acc = _classify(run.apexes, desired, spec, run.failed)
    return CellResult(z, dy, scenario, conv, steps, acc, run.failure_reason, seed)


def roa_sweep(
    spec: RoaGridSpec,
    scenario: str,
    p: SlipParams,
    cfg: ControllerConfig,
    *,
    jobs: int = 1,
    seed: int = 0,
    baseline: DeadbeatBaseline | None = None,
) -> RoaGrid:
    """Classify every grid cell under one controller scenario.

    Cells run independently (process pool when ``jobs > 1``); records are
    assembled in grid order so output is deterministic for a given seed.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    if scenario != PROPOSED and baseline is None:
        baseline = deadbeat_build(p, cfg.desired_apex, cfg.sim)
    cells = spec.cells()
    tasks = [
        (z, dy, scenario, p, cfg, spec, baseline, seed + i)
        for i, (z, dy) in enumerate(cells)
    ]
    if jobs > 1:
        with multiprocessing.Pool(jobs) as pool:
            records = pool.map(_roa_cell, tasks, chunksize=8)
    else:
        records = [_roa_cell(t) for t in tasks]
    return RoaGrid(spec=spec, scenario=scenario, records=list(records))


@dataclass(frozen=True)
class NoiseSpec:
    levels: tuple[float, ...] = (0.0, 0.25, 0.5)
    schemes: tuple[Scheme, ...] = (Scheme.EVENT_TRIGGERED, Scheme.RECEDING_HORIZON)
    n_seeds: int = 20
    n_steps: int = 30
    trailing: int = 20
    # "handled" additionally requires the trailing mean error inside this box
    mean_tol_z: float = 0.1
    mean_tol_dy: float = 0.5


@dataclass(frozen=True)
class NoiseRun:
    level: float
    scheme: Scheme
    seed_index: int
    apexes: tuple[tuple[float, float], ...]
    failed: bool


@dataclass(frozen=True)
class NoiseLevelStats:
    level: float
    scheme: Scheme
    survived: bool              # every seed completed all steps
    mean_z: float
    std_z: float
    mean_dy: float
    std_dy: float
    err_std: float              # std of the apex error norm, trailing window x seeds
    handled: bool


@dataclass
class NoiseStudy:
    spec: NoiseSpec
    desired: tuple[float, float]
    runs: list[NoiseRun] = field(default_factory=list)
    stats: list[NoiseLevelStats] = field(default_factory=list)

    def stat(self, level: float, scheme: Scheme) -> NoiseLevelStats:
        for s in self.stats:
            if s.scheme is scheme and abs(s.level - level) < 1e-12:
                return s
        raise KeyError((level, scheme))


def cycle_apex_state(p: SlipParams, cfg: ControllerConfig) -> FlightState:
    """Apex state on the converged zero-noise cycle (swing angle included).

    The noise study perturbs the steady gait, so its runs start on the cycle
    rather than at the leg-vertical pose used for disturbed-apex sweeps.
    """
    res = run_gait(
        HybridState.in_flight(FlightState(0.0, cfg.desired_apex[1], cfg.desired_apex[0], 0.0, math.pi / 2)),
        cfg, p, n_apexes=9, rng_seed=0, stride=2,
    )
    if res.failed or not res.apexes:
        return FlightState(0.0, cfg.desired_apex[1], cfg.desired_apex[0], 0.0, math.pi / 2)
    t_apex = res.apexes[-1][0]
    best_t, best_s = math.inf, None
    for seg in res.trajectory.segments:
        if seg.mode.value == "flight":
            for t, s in zip(seg.times, seg.states):
                if abs(t - t_apex) < best_t:
                    best_t, best_s = abs(t - t_apex), s
    if best_s is None:
        return FlightState(0.0, cfg.desired_apex[1], cfg.desired_apex[0], 0.0, math.pi / 2)
    return FlightState(0.0, cfg.desired_apex[1], cfg.desired_apex[0], 0.0, best_s[4])


def _noise_run(args) -> NoiseRun:
    (level, scheme, seed_idx, p, cfg, spec, seed0, start) = args
    run_cfg = ControllerConfig(
        scheme=scheme,
        desired_apex=cfg.desired_apex,
        replan_hz=cfg.replan_hz,
        control_hz=cfg.control_hz,
        noise=level,
        weights=cfg.weights,
        flight=cfg.flight,
        sim=IntegratorConfig(
            dt=cfg.sim.dt, event_tol=cfg.sim.event_tol,
            max_bisections=cfg.sim.max_bisections,
            t_max=max(cfg.sim.t_max, 2.0 * spec.n_steps),
        ),
        plan=cfg.plan,
        stance_overrun=cfg.stance_overrun,
        min_replan_window=cfg.min_replan_window,
    )
    res = run_gait(
        HybridState.in_flight(start), run_cfg, p,
        n_apexes=spec.n_steps,
        rng_seed=[seed0, int(round(level * 1000)), 0 if scheme is Scheme.EVENT_TRIGGERED else 1, seed_idx],
    )
    complete = (not res.failed) and len(res.apexes) >= spec.n_steps
    return NoiseRun(level, scheme, seed_idx, tuple(res.apex_states), not complete)


def noise_sweep(
    spec: NoiseSpec,
    p: SlipParams,
    cfg: ControllerConfig,
    *,
    jobs: int = 1,
    seed: int = 0,
) -> NoiseStudy:
    """Run the measurement-noise study over levels, schemes, and seeds.

    Runs start on the converged cycle's apex state (the study measures the
    steady gait's noise response; disturbed starts belong to the RoA sweep).
    """
    start = cycle_apex_state(p, cfg)
    tasks = [
        (level, scheme, k, p, cfg, spec, seed, start)
        for level in spec.levels
        for scheme in spec.schemes
        for k in range(spec.n_seeds)
    ]
    if jobs > 1:
        with multiprocessing.Pool(jobs) as pool:
            runs = pool.map(_noise_run, tasks, chunksize=1)
    else:
        runs = [_noise_run(t) for t in tasks]
    study = NoiseStudy(spec=spec, desired=cfg.desired_apex, runs=list(runs))

    z_d, dy_d = cfg.desired_apex
    for level in spec.levels:
        for scheme in spec.schemes:
            group = [r for r in study.runs if r.scheme is scheme and abs(r.level - level) < 1e-12]
            survived = all(not r.failed for r in group)
            trail_z, trail_dy, errs = [], [], []
            for r in group:
                tail = r.apexes[-spec.trailing:] if len(r.apexes) >= spec.trailing else r.apexes
                for z, dy in tail:
                    trail_z.append(z)
                    trail_dy.append(dy)
                    errs.append(math.hypot(z - z_d, dy - dy_d))
            if trail_z:
                mean_z, std_z = float(np.mean(trail_z)), float(np.std(trail_z))
                mean_dy, std_dy = float(np.mean(trail_dy)), float(np.std(trail_dy))
                err_std = float(np.std(errs))
            else:
                mean_z = std_z = mean_dy = std_dy = err_std = math.nan
            handled = (
                survived
                and abs(mean_z - z_d) < spec.mean_tol_z
                and abs(mean_dy - dy_d) < spec.mean_tol_dy
            )
            study.stats.append(
                NoiseLevelStats(level, scheme, survived, mean_z, std_z, mean_dy, std_dy, err_std, handled)
            )
    return study

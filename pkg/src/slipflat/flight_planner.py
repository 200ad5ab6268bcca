"""Flight-phase planning: closed-form flight timing, the touchdown-state
map, and the one-dimensional touchdown-angle optimization against the stance
value function.

The ballistic arc makes the touchdown manifold one-dimensional: picking the
touchdown angle fixes the flight time and the full touchdown state in closed
form.  The planner scores candidate angles by swing effort plus the stance
cost-to-go from the implied stance entry, on a coarse grid followed by
golden-section refinement; the swing rate realizing the winner is the
clamped constant-rate law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import IntegratorConfig
from .model import FlightState, SlipParams, StanceInput, StanceState, flight_to_stance
from .polyqp import QPSolveError
from .stance_planner import (
    InfeasibleReferenceError,
    StanceWeights,
    plan_stance,
    stance_value,
)


class UnreachableTouchdownError(RuntimeError):
    """The requested touchdown height lies above the remaining flight arc."""


class FlightPlanError(RuntimeError):
    """No candidate touchdown angle admits a feasible stance."""


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class FlightConfig:
    """Swing-effort weight and search controls for the touchdown-angle
    optimization.  The angle interval is the leg-in-front half plane, kept
    slightly inside its open ends."""

    r_swing: float = 0.1
    n_grid: int = 61
    refine_tol: float = 1e-4          # [rad]
    theta_lo: float = math.pi / 2 + 0.02
    theta_hi: float = math.pi - 0.02
    warm_width: float = 0.06          # local-search bracket half width [rad]
    # Fraction of the predicted flight time over which the swing reaches its
    # angle; arriving early and parking keeps the touchdown state on the
    # angle-parameterized manifold even when the timing was mismeasured,
    # where an exact-arrival sweep would collide mid-swing.
    arrival_fraction: float = 0.65
    # Candidate floor on the descent speed at touchdown, proportional to the
    # measured horizontal speed (an angle-of-attack condition): touchdowns
    # right under the arc peak at speed load the spring too weakly to avoid
    # vaulting, while slow hops land shallow safely.  The absolute floor
    # keeps a minimum loading under measurement noise on the arc peak.
    descent_ratio: float = 0.32
    min_descent: float = 0.3
    # Weight on the squared fractional excess of a candidate's planned input
    # peaks over the actuator limits.  The stance cost alone ranks plans the
    # clamped execution cannot follow; this surcharge prefers angles whose
    # plans are actually executable.
    limit_penalty: float = 0.0
    # Full-sweep trust region around the previous step's angle (the first
    # plan of a run is unrestricted).  Gait geometry drifts by small steps;
    # an abrupt lunge to an extreme angle is a planning artifact of noisy
    # arc estimates.
    trust_width: float = math.inf
    # Fraction of the flight-time budget the sweep may use.
    reach_margin: float = 1.0
    # Candidates whose stance cost exceeds this are not worth landing on:
    # the plan would bear no resemblance to what the clamped execution can
    # do, and braking on a held swing angle recovers better.
    value_cap: float = 10.0


@dataclass(frozen=True)
class FlightPlan:
    theta_td: float           # touchdown angle [rad]
    t_flight: float           # time to touchdown [s]
    w: float                  # constant swing rate [rad/s]
    td_state: FlightState
    predicted_value: float    # swing cost plus stance cost-to-go
    reach_clamped: bool = False   # target angle not reachable under the rate bound


def flight_time(x_f0: FlightState, theta_td: float, p: SlipParams) -> float:
    """Closed-form time until the CoM descends to the touchdown height."""
    disc = x_f0.dz * x_f0.dz - 2.0 * p.g * (p.ell0 * math.sin(theta_td) - x_f0.z)
    if disc < 0.0:
        raise UnreachableTouchdownError(
            f"touchdown height {p.ell0 * math.sin(theta_td):.3f} above the flight arc"
        )
    t = (x_f0.dz + math.sqrt(disc)) / p.g
    if t <= 0.0:
        raise UnreachableTouchdownError("touchdown height already passed on descent")
    return t


def touchdown_state(x_f0: FlightState, theta_td: float, p: SlipParams) -> FlightState:
    """Flight state at touchdown for the given angle (closed form)."""
    t = flight_time(x_f0, theta_td, p)
    disc = x_f0.dz * x_f0.dz - 2.0 * p.g * (p.ell0 * math.sin(theta_td) - x_f0.z)
    return FlightState(
        y=x_f0.y + x_f0.dy * t,
        dy=x_f0.dy,
        z=p.ell0 * math.sin(theta_td),
        dz=-math.sqrt(disc),
        theta=theta_td,
    )


def swing_rate(theta_td: float, x_f0: FlightState, t_flight_: float, p: SlipParams) -> float:
    """Constant swing rate reaching the touchdown angle, clamped to bounds."""
    if not t_flight_ > 0.0:
        raise ValueError("flight time must be positive")
    w = (theta_td - x_f0.theta) / t_flight_
    return min(p.w_max, max(-p.w_max, w))


def _scored_stance_cost(
    x_s: StanceState, x_d: StanceState, p: SlipParams,
    fcfg: FlightConfig, weights: StanceWeights, plan_cfg: IntegratorConfig,
) -> float:
    """Stance cost plus a surcharge on planned input peaks beyond the
    actuator limits: the clamped execution cannot follow such plans, so
    candidate angles demanding them score worse than executable ones."""
    try:
        plan = plan_stance(x_s, StanceInput(), x_d, p, weights, plan_cfg)
    except (InfeasibleReferenceError, QPSolveError, ValueError):
        return math.inf
    excess = max(0.0, plan.max_u1 / p.u1_max - 1.0) + max(0.0, plan.max_u2 / p.u2_max - 1.0)
    return plan.value + fcfg.limit_penalty * excess * excess


def stance_entry(td: FlightState, p: SlipParams) -> StanceState:
    """Stance chart at touchdown, foot placed so the leg is at rest length."""
    foot_y = td.y - p.ell0 * math.cos(td.theta)
    return flight_to_stance(td, foot_y)


def plan_flight(
    x_f0: FlightState,
    x_d: StanceState,
    p: SlipParams,
    fcfg: FlightConfig,
    weights: StanceWeights,
    plan_cfg: IntegratorConfig,
    *,
    prev_theta: float | None = None,
    local_only: bool = False,
) -> FlightPlan:
    """Pick the touchdown angle minimizing swing effort plus stance cost.

    The feasible set is the angle interval restricted to candidates whose
    touchdown height is reachable on the remaining arc and whose angle change
    fits under the swing-rate bound.  If rate bounds exclude every reachable
    candidate, the nearest reachable angle is returned with the rate clamped
    and the plan flagged instead of failing.  With ``local_only`` the search
    is a golden-section refinement bracketing ``prev_theta`` (receding-
    horizon replans); it falls back to the full grid when the local bracket
    has no feasible candidate.
    """

    min_disc = max(fcfg.min_descent, fcfg.descent_ratio * abs(x_f0.dy)) ** 2

    def objective(theta: float) -> float:
        try:
            t_f = flight_time(x_f0, theta, p)
        except UnreachableTouchdownError:
            return math.inf
        td_dz_sq = x_f0.dz * x_f0.dz - 2.0 * p.g * (p.ell0 * math.sin(theta) - x_f0.z)
        if td_dz_sq < min_disc:
            return math.inf
        if abs(theta - x_f0.theta) > p.w_max * fcfg.reach_margin * t_f + 1e-12:
            return math.inf
        w = _exec_rate(theta, x_f0, t_f, p, fcfg)
        td = touchdown_state(x_f0, theta, p)
        v = _scored_stance_cost(stance_entry(td, p), x_d, p, fcfg, weights, plan_cfg)
        if v > fcfg.value_cap:
            return math.inf
        return fcfg.r_swing * w * w * t_f + v

    lo, hi = fcfg.theta_lo, fcfg.theta_hi

    if local_only and prev_theta is not None:
        a = max(lo, prev_theta - fcfg.warm_width)
        b = min(hi, prev_theta + fcfg.warm_width)
        theta, value = _golden_section(objective, a, b, fcfg.refine_tol)
        if math.isfinite(value):
            return _finalize(x_f0, theta, value, p, fcfg)
        # Local bracket infeasible: fall through to the full sweep.

    if prev_theta is not None and math.isfinite(fcfg.trust_width):
        t_lo = max(lo, prev_theta - fcfg.trust_width)
        t_hi = min(hi, prev_theta + fcfg.trust_width)
        if t_hi > t_lo:
            n = max(15, int(round(fcfg.n_grid * (t_hi - t_lo) / (hi - lo))))
            grid = np.linspace(t_lo, t_hi, n)
            values = [objective(float(th)) for th in grid]
            best = int(np.argmin(values))
            if math.isfinite(values[best]):
                h = (t_hi - t_lo) / (n - 1)
                a = max(t_lo, float(grid[best]) - h)
                b = min(t_hi, float(grid[best]) + h)
                theta, value = _golden_section(objective, a, b, fcfg.refine_tol)
                if value > values[best]:
                    theta, value = float(grid[best]), values[best]
                return _finalize(x_f0, theta, value, p, fcfg)
            # Trust region infeasible: fall through to the full sweep.

    grid = np.linspace(lo, hi, fcfg.n_grid)
    values = _grid_values(x_f0, grid, x_d, p, fcfg, weights, plan_cfg)
    best = int(np.argmin(values))
    if math.isinf(values[best]):
        arc_reach = _feasibility(x_f0, grid, p)
        if not any(arc for arc, _ in arc_reach):
            raise FlightPlanError("no touchdown angle is reachable on the flight arc")
        if not any(arc and reach for arc, reach in arc_reach):
            return _nearest_reachable(x_f0, grid, x_d, p, fcfg, weights, plan_cfg)
        raise FlightPlanError("no touchdown angle admits a feasible stance")
    h = (hi - lo) / (fcfg.n_grid - 1)
    a = max(lo, float(grid[best]) - h)
    b = min(hi, float(grid[best]) + h)
    theta, value = _golden_section(objective, a, b, fcfg.refine_tol)
    if value > values[best]:
        theta, value = float(grid[best]), values[best]
    return _finalize(x_f0, theta, value, p, fcfg)


def _grid_values(
    x_f0: FlightState, grid, x_d: StanceState, p: SlipParams,
    fcfg: FlightConfig, weights: StanceWeights, plan_cfg: IntegratorConfig,
) -> list[float]:
    """Coarse-grid objective values with the passive references computed in
    one vectorized batch (each candidate angle implies a stance entry)."""
    min_disc = max(fcfg.min_descent, fcfg.descent_ratio * abs(x_f0.dy)) ** 2
    n = len(grid)
    entries: list[StanceState | None] = [None] * n
    w_cost = [0.0] * n
    for i, th in enumerate(grid):
        th = float(th)
        try:
            t_f = flight_time(x_f0, th, p)
        except UnreachableTouchdownError:
            continue
        dz_sq = x_f0.dz * x_f0.dz - 2.0 * p.g * (p.ell0 * math.sin(th) - x_f0.z)
        if dz_sq < min_disc:
            continue
        if abs(th - x_f0.theta) > p.w_max * fcfg.reach_margin * t_f + 1e-12:
            continue
        w = _exec_rate(th, x_f0, t_f, p, fcfg)
        entries[i] = stance_entry(touchdown_state(x_f0, th, p), p)
        w_cost[i] = fcfg.r_swing * w * w * t_f
    values = [math.inf] * n
    for i in range(n):
        if entries[i] is None:
            continue
        try:
            plan = plan_stance(entries[i], StanceInput(), x_d, p, weights, plan_cfg)
        except (InfeasibleReferenceError, QPSolveError, ValueError):
            continue
        excess = max(0.0, plan.max_u1 / p.u1_max - 1.0) + max(0.0, plan.max_u2 / p.u2_max - 1.0)
        v = plan.value + fcfg.limit_penalty * excess * excess
        if v > fcfg.value_cap:
            continue
        values[i] = w_cost[i] + v
    return values


def _feasibility(x_f0: FlightState, grid, p: SlipParams) -> list[tuple[bool, bool]]:
    """Per-node (arc-feasible, rate-reachable) flags."""
    out = []
    for th in grid:
        th = float(th)
        try:
            t_f = flight_time(x_f0, th, p)
        except UnreachableTouchdownError:
            out.append((False, False))
            continue
        out.append((True, abs(th - x_f0.theta) <= p.w_max * t_f + 1e-12))
    return out


def _exec_rate(theta: float, x_f0: FlightState, t_f: float, p: SlipParams, fcfg: FlightConfig) -> float:
    """Swing rate as executed: the constant-rate law over the shortened
    arrival window (the swing then parks at the angle until touchdown)."""
    return swing_rate(theta, x_f0, max(fcfg.arrival_fraction, 1e-6) * t_f, p)


def _finalize(x_f0: FlightState, theta: float, value: float, p: SlipParams, fcfg: FlightConfig) -> FlightPlan:
    t_f = flight_time(x_f0, theta, p)
    return FlightPlan(
        theta_td=theta,
        t_flight=t_f,
        w=_exec_rate(theta, x_f0, t_f, p, fcfg),
        td_state=touchdown_state(x_f0, theta, p),
        predicted_value=value,
    )


def _nearest_reachable(x_f0, grid, x_d, p, fcfg, weights, plan_cfg) -> FlightPlan:
    """Degraded plan when the rate bound excludes every reachable angle:
    minimize the reachability violation among arc-feasible candidates."""
    best = None
    for th in grid:
        th = float(th)
        try:
            t_f = flight_time(x_f0, th, p)
        except UnreachableTouchdownError:
            continue
        violation = abs(th - x_f0.theta) - p.w_max * t_f
        if best is None or violation < best[0]:
            best = (violation, th, t_f)
    if best is None:
        raise FlightPlanError("no touchdown angle is reachable on the flight arc")
    _, theta, t_f = best
    td = touchdown_state(x_f0, theta, p)
    v = _scored_stance_cost(stance_entry(td, p), x_d, p, fcfg, weights, plan_cfg)
    if math.isinf(v):
        raise FlightPlanError("no touchdown angle admits a feasible stance")
    w = _exec_rate(theta, x_f0, t_f, p, fcfg)
    return FlightPlan(
        theta_td=theta, t_flight=t_f, w=w, td_state=td,
        predicted_value=fcfg.r_swing * w * w * t_f + v,
        reach_clamped=True,
    )


def _golden_section(fn, a: float, b: float, tol: float) -> tuple[float, float]:
    """Golden-section minimization returning the best point probed."""
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = fn(x1), fn(x2)
    best = (x1, f1) if f1 <= f2 else (x2, f2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = fn(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = fn(x2)
        if f1 < best[1]:
            best = (x1, f1)
        if f2 < best[1]:
            best = (x2, f2)
    return best

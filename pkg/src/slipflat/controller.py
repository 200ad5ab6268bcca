"""Closed-loop gait execution under the two planning schemes, apex-target
construction, and the once-per-step linearized deadbeat baseline.

The event-triggered scheme plans once per phase (flight plan at takeoff and
at run start, stance plan at touchdown) and executes open loop between
events.  The receding-horizon scheme re-solves the active phase's problem
from the measured state at a fixed rate and applies the inputs zero-order
held at the actuation rate; stance replans keep the touchdown plan's time
base and re-solve over the remaining window.

The deadbeat baseline controls a variable-stiffness SLIP once per apex:
touchdown angle plus the stance stiffness applied from maximum compression
onward.  A whole-stance stiffness cannot change the apex energy (the spring
starts and ends unloaded), so the energy-effective knob is the stiffness
switch at maximum compression; the touchdown angle redistributes the
remaining energy between height and speed.  Its gains invert the numerically
linearized apex return map; per the comparison protocol it is unclamped.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    ELL_CRASH_HI,
    ELL_CRASH_LO,
    EventRecord,
    HybridTrajectory,
    IntegratorConfig,
    PhaseEnd,
    PhaseTrace,
    integrate_flight,
    integrate_stance,
    takeoff_reset,
    touchdown_reset,
)
from .flight_planner import (
    FlightConfig,
    FlightPlan,
    FlightPlanError,
    UnreachableTouchdownError,
    flight_time,
    plan_flight,
    swing_rate,
    touchdown_state,
)
from .model import (
    FlightState,
    HybridState,
    Mode,
    SlipParams,
    StanceInput,
    StanceState,
    flight_to_stance,
    stance_to_flight,
)
from .flatness import FlatPoint, flat_from_stance
from .polyqp import QPSolveError
from .stance_planner import (
    InfeasibleReferenceError,
    StancePlan,
    StanceWeights,
    fallback_reference,
    plan_stance,
    slice_reference,
    stance_input_policy,
    takeoff_flat_target,
)


class TargetConstructionError(RuntimeError):
    """The desired apex cannot be produced by any takeoff at the given angle."""


class Scheme(enum.Enum):
    EVENT_TRIGGERED = "event"
    RECEDING_HORIZON = "receding"


def govern_target(
    x_d: StanceState, entry_dy: float, entry_dz: float,
    dv_max: float, dvz_max: float, p: SlipParams,
) -> StanceState:
    """Cap the per-stance corrections the takeoff target demands.

    Saturated hip torque can transfer only so much momentum per stance;
    demanding the full correction from a far state just saturates the
    braking while the leg-length pump keeps feeding speed in (the radial
    push points forward once the leg passes vertical).  Capping the
    horizontal correction at ``dv_max`` and the demanded upward takeoff
    speed at the entry descent speed plus ``dvz_max`` keeps each step
    inside the actuators' reach; later steps finish the job.
    """
    s, c = math.sin(x_d.theta), math.cos(x_d.theta)
    dy_d = -x_d.ell * x_d.dtheta * s + x_d.dell * c
    dz_d = x_d.ell * x_d.dtheta * c + x_d.dell * s
    dy_gov = dy_d
    if math.isfinite(dv_max):
        dy_gov = entry_dy + min(dv_max, max(-dv_max, dy_d - entry_dy))
    dz_gov = dz_d
    if math.isfinite(dvz_max):
        dz_gov = min(dz_d, abs(entry_dz) + dvz_max)
    if dy_gov == dy_d and dz_gov == dz_d:
        return x_d
    return StanceState(
        theta=x_d.theta,
        dtheta=(dz_gov * c - dy_gov * s) / x_d.ell,
        ell=x_d.ell,
        dell=dy_gov * c + dz_gov * s,
    )


@dataclass(frozen=True)
class ControllerConfig:
    scheme: Scheme = Scheme.EVENT_TRIGGERED
    desired_apex: tuple[float, float] = (1.02, 4.5)   # (height [m], speed [m/s])
    replan_hz: float = 20.0
    control_hz: float = 1000.0
    noise: float = 0.0            # uniform measurement noise on (dy, dz) [m/s]
    weights: StanceWeights = StanceWeights()
    flight: FlightConfig = FlightConfig()
    sim: IntegratorConfig = IntegratorConfig()
    plan: IntegratorConfig = IntegratorConfig(dt=1e-3, t_max=3.0)
    stance_overrun: float = 0.1   # forced takeoff at (1 + overrun) * plan window
    min_replan_window: float = 0.04   # skip stance replans below this remainder [s]
    dv_max: float = 0.6           # per-stance horizontal speed correction cap [m/s]
    dvz_max: float = math.inf     # optional cap on demanded takeoff speed over the entry descent [m/s]

    def __post_init__(self) -> None:
        if not (self.control_hz >= self.replan_hz > 0.0):
            raise ValueError("need control_hz >= replan_hz > 0")


@dataclass
class GaitResult:
    trajectory: HybridTrajectory
    apexes: list[tuple[float, float, float]] = field(default_factory=list)  # (t, z, dy)
    flight_plans: list[FlightPlan] = field(default_factory=list)
    stance_plans: list[StancePlan] = field(default_factory=list)
    clamp_u1: int = 0
    clamp_u2: int = 0
    failed: bool = False
    failure_reason: str = ""
    final_state: HybridState | None = None

    @property
    def apex_states(self) -> list[tuple[float, float]]:
        return [(z, dy) for _, z, dy in self.apexes]


def apex_to_to_target(
    apex: tuple[float, float], p: SlipParams, theta_td: float = math.pi / 2,
    *, margin: float = 1e-3,
) -> tuple[StanceState, FlatPoint]:
    """Takeoff-state target whose ballistic arc peaks at the desired apex.

    The takeoff angle mirrors the step's touchdown angle about vertical
    (neutral-point symmetry); the vertical takeoff speed follows from the
    apex height and the takeoff height.  Rejects apexes at or below the
    takeoff height (the terminal upward-velocity margin would be violated).
    """
    z_apex, dy_apex = apex
    theta_to = math.pi - theta_td
    s, c = math.sin(theta_to), math.cos(theta_to)
    z_to = p.ell0 * s
    gap = 2.0 * p.g * (z_apex - z_to)
    if gap <= margin * margin:
        raise TargetConstructionError(
            f"desired apex height {z_apex:.3f} not above takeoff height {z_to:.3f}"
        )
    dz_to = math.sqrt(gap)
    x_d = StanceState(
        theta=theta_to,
        dtheta=(dz_to * c - dy_apex * s) / p.ell0,
        ell=p.ell0,
        dell=dy_apex * c + dz_to * s,
    )
    return x_d, takeoff_flat_target(x_d, p.g)


def measure_flight(x_f: FlightState, rng, noise: float) -> FlightState:
    """Velocity measurements carry i.i.d. uniform noise; positions are exact."""
    if noise <= 0.0:
        return x_f
    return FlightState(
        y=x_f.y,
        dy=x_f.dy + rng.uniform(-noise, noise),
        z=x_f.z,
        dz=x_f.dz + rng.uniform(-noise, noise),
        theta=x_f.theta,
    )


def measure_stance(x_s: StanceState, foot_y: float, rng, noise: float) -> StanceState:
    """Stance-chart measurement: perturb the Cartesian velocities, then map
    back, so the noise model matches the flight chart's."""
    if noise <= 0.0:
        return x_s
    x_f = stance_to_flight(x_s, foot_y)
    return flight_to_stance(measure_flight(x_f, rng, noise), foot_y)


def _zoh(policy, t0: float, control_hz: float):
    """Quantize a phase-time policy to the actuation rate."""
    period = 1.0 / control_hz

    def held(t: float) -> tuple[float, float]:
        return policy(t0 + math.floor((t - t0) / period + 1e-9) * period)

    return held


def run_gait(
    x0: HybridState,
    cfg: ControllerConfig,
    p: SlipParams,
    n_events: int = 10 ** 9,
    rng_seed=0,
    *,
    n_apexes: int | None = None,
    stride: int = 0,
) -> GaitResult:
    """Run the closed-loop gait until ``n_events`` hybrid events have fired,
    ``n_apexes`` flight apexes have been logged, or the horizon/crash ends
    the run.  Measurement noise enters planning only; the simulated plant
    always advances from the true state.
    """
    rng = np.random.default_rng(rng_seed)
    result = GaitResult(trajectory=HybridTrajectory())
    state = x0
    t = 0.0
    theta_td_prev = None

    def fail(reason: str) -> GaitResult:
        result.failed = True
        result.failure_reason = reason
        result.trajectory.failed = True
        result.trajectory.failure_reason = reason
        result.final_state = state
        return result

    def done() -> bool:
        if n_apexes is not None and len(result.apexes) >= n_apexes:
            return True
        return len(result.trajectory.events) >= n_events or t >= cfg.sim.t_max

    while not done():
        if state.mode is Mode.FLIGHT:
            outcome = _run_flight_phase(state, t, cfg, p, rng, result, theta_td_prev, stride, n_apexes)
            if outcome is None:
                return fail("flight planning failed")
            state, t, theta_td_prev, ended = outcome
            if ended is PhaseEnd.CRASH:
                return fail(result.trajectory.failure_reason or "flight crash")
            if ended is PhaseEnd.HORIZON:
                break
        else:
            outcome = _run_stance_phase(state, t, cfg, p, rng, result, theta_td_prev, stride)
            if outcome is None:
                return fail("stance planning failed")
            state, t, ended = outcome
            if ended is PhaseEnd.CRASH:
                return fail(result.trajectory.failure_reason or "stance crash")
            if ended is PhaseEnd.HORIZON:
                break
    result.final_state = state
    return result


def _run_flight_phase(state, t, cfg, p, rng, result, theta_td_prev, stride, n_apexes):
    """Advance one flight phase to touchdown; returns (state, t, theta_td, end)."""
    x_d, _ = apex_to_to_target(cfg.desired_apex, p, theta_td_prev or math.pi / 2)
    meas = measure_flight(state.flight, rng, cfg.noise)
    x_d = govern_target(x_d, meas.dy, math.inf, cfg.dv_max, math.inf, p)
    try:
        fplan = plan_flight(
            meas, x_d, p, cfg.flight, cfg.weights, cfg.plan, prev_theta=theta_td_prev
        )
    except FlightPlanError:
        # Degenerate arc (no candidate admits a feasible stance): swing
        # toward the last good touchdown angle and brake on whatever contact
        # results, rather than giving up the run.
        fplan = _recovery_flight_plan(meas, theta_td_prev or math.pi / 2, p)
    except TargetConstructionError:
        return None
    result.flight_plans.append(fplan)
    theta_td = fplan.theta_td

    receding = cfg.scheme is Scheme.RECEDING_HORIZON
    replan_period = 1.0 / cfg.replan_hz
    next_replan = t + replan_period
    apexes_before = len(result.apexes)

    while True:
        t_seg_end = min(next_replan, cfg.sim.t_max) if receding else cfg.sim.t_max
        res = integrate_flight(
            state.flight, fplan.w, cfg.sim, p,
            t0=t, t_end=t_seg_end, foot_y=state.foot_y, stride=stride,
            apex_log=result.apexes, theta_park=fplan.theta_td,
        )
        result.trajectory.segments.append(res.trace)
        if res.end is PhaseEnd.TOUCHDOWN:
            pre = HybridState.in_flight(res.flight, state.foot_y)
            post = touchdown_reset(res.flight, p)
            result.trajectory.events.append(EventRecord(res.t_end, "TD", pre, post))
            return post, res.t_end, theta_td, PhaseEnd.TOUCHDOWN
        if res.end is PhaseEnd.CRASH:
            result.trajectory.failure_reason = res.crash_reason
            return HybridState.in_flight(res.flight, state.foot_y), res.t_end, theta_td, PhaseEnd.CRASH
        state = HybridState.in_flight(res.flight, state.foot_y)
        t = res.t_end
        if n_apexes is not None and len(result.apexes) >= n_apexes and len(result.apexes) > apexes_before:
            return state, t, theta_td, PhaseEnd.HORIZON
        if not receding or t >= cfg.sim.t_max:
            return state, t, theta_td, PhaseEnd.HORIZON
        # Receding horizon: replan locally around the previous angle.
        next_replan += replan_period
        meas = measure_flight(state.flight, rng, cfg.noise)
        try:
            fplan = plan_flight(
                meas, x_d, p, cfg.flight, cfg.weights, cfg.plan,
                prev_theta=theta_td, local_only=True,
            )
            result.flight_plans.append(fplan)
            theta_td = fplan.theta_td
        except (FlightPlanError, TargetConstructionError):
            pass  # hold the previous swing command until the next replan


def _run_stance_phase(state, t, cfg, p, rng, result, theta_td, stride):
    """Advance one stance phase to takeoff; returns (state, t, end)."""
    x_d, y_d = apex_to_to_target(cfg.desired_apex, p, theta_td)
    meas = measure_stance(state.stance, state.foot_y, rng, cfg.noise)
    entry = stance_to_flight(meas, state.foot_y)
    x_d = govern_target(x_d, entry.dy, entry.dz, cfg.dv_max, cfg.dvz_max, p)
    try:
        splan = plan_stance(meas, StanceInput(), x_d, p, cfg.weights, cfg.plan)
    except InfeasibleReferenceError:
        # The plant landed on an entry whose passive stance never takes off
        # (possible under measurement noise).  Chasing the desired takeoff
        # from such an entry demands far more than the actuators have; aim
        # for a safe redirecting bounce instead and let later steps re-target.
        try:
            x_d, y_d = _rescue_bounce_target(meas, state.foot_y, p)
            y0 = flat_from_stance(meas, StanceInput(), p)
            splan = plan_stance(
                meas, StanceInput(), x_d, p, cfg.weights, cfg.plan,
                reference=fallback_reference(y0, y_d, meas, cfg.weights.n_ref),
            )
        except (InfeasibleReferenceError, QPSolveError, ValueError, TargetConstructionError):
            return None
    except (QPSolveError, ValueError):
        return None
    result.stance_plans.append(splan)

    t_td = t
    t_cut = t_td + (1.0 + cfg.stance_overrun) * splan.duration
    # A takeoff forced while the body still moves downward or backward would
    # inject an absurd flight state; in that case the stance continues (the
    # plan holds its terminal input) until a real crossing, a sane cut, or
    # the hard cap below.
    t_cap = t_td + max(3.0 * splan.duration, 0.6)
    receding = cfg.scheme is Scheme.RECEDING_HORIZON
    replan_period = 1.0 / cfg.replan_hz

    policy, clamps = stance_input_policy(splan, p)
    if receding:
        exec_policy = _zoh(_shifted(policy, t_td), t_td, cfg.control_hz)
    else:
        exec_policy = _shifted(policy, t_td)
    next_replan = t + replan_period

    while True:
        t_seg_end = min(next_replan, t_cut) if receding else t_cut
        if t_cut <= t:
            t_seg_end = min(next_replan, t_cap) if receding else t_cap
        res = integrate_stance(
            state.stance, exec_policy, cfg.sim, p,
            t0=t, t_end=t_seg_end,
            force_takeoff_at_end=t_seg_end >= t_cut,
            foot_y=state.foot_y, stride=stride,
        )
        if res.end is PhaseEnd.FORCED_TAKEOFF and t_seg_end < t_cap:
            fs = stance_to_flight(res.stance, state.foot_y)
            if fs.dz <= 0.0 or fs.dy <= 0.0:
                res.end = PhaseEnd.HORIZON
                t_cut = t_cap
        result.trajectory.segments.append(res.trace)
        result.clamp_u1 += clamps[0]
        result.clamp_u2 += clamps[1]
        clamps[0] = clamps[1] = 0
        if res.end in (PhaseEnd.TAKEOFF, PhaseEnd.FORCED_TAKEOFF):
            pre = HybridState.in_stance(res.stance, state.foot_y)
            post = takeoff_reset(res.stance, state.foot_y)
            result.trajectory.events.append(
                EventRecord(res.t_end, "TO", pre, post, forced=res.end is PhaseEnd.FORCED_TAKEOFF)
            )
            return post, res.t_end, res.end
        if res.end is PhaseEnd.CRASH:
            result.trajectory.failure_reason = res.crash_reason
            return HybridState.in_stance(res.stance, state.foot_y), res.t_end, PhaseEnd.CRASH
        state = HybridState.in_stance(res.stance, state.foot_y)
        t = res.t_end
        if res.end is PhaseEnd.HORIZON and t >= cfg.sim.t_max:
            return state, t, PhaseEnd.HORIZON
        # Receding horizon: re-solve on the remaining window, original time base.
        next_replan += replan_period
        elapsed = t - t_td
        remaining = splan.duration - elapsed
        if remaining > cfg.min_replan_window:
            meas = measure_stance(state.stance, state.foot_y, rng, cfg.noise)
            ref = slice_reference(splan.ref_values, splan.duration, elapsed, cfg.weights.n_ref)
            try:
                replanned = plan_stance(
                    meas, StanceInput(*exec_policy(t)), x_d, p, cfg.weights, cfg.plan,
                    reference=(remaining, ref),
                )
                # Adopt only executable replans.  When the demanded inputs sit
                # far beyond the clamps, re-solving from noisy measurements
                # rectifies toward under-actuation: overestimates ask for
                # effort the clamp discards while underestimates genuinely
                # reduce it.  The committed plan already allocates the whole
                # window's authority.
                if (replanned.max_u1 <= 1.5 * p.u1_max
                        and replanned.max_u2 <= 1.5 * p.u2_max):
                    result.stance_plans.append(replanned)
                    policy, clamps = stance_input_policy(replanned, p)
                    exec_policy = _zoh(_shifted(policy, t), t, cfg.control_hz)
            except (InfeasibleReferenceError, QPSolveError, ValueError):
                pass  # keep executing the previous plan


def _shifted(policy, t0: float):
    def shifted(t: float) -> tuple[float, float]:
        return policy(t - t0)

    return shifted


def _rescue_bounce_target(
    meas: StanceState, foot_y: float, p: SlipParams
) -> tuple[StanceState, FlatPoint]:
    """Stutter-step takeoff target for a stumble entry: leave at a modest
    forward-leaning angle with at least the entry's descent speed redirected
    upward, keeping the horizontal speed as is."""
    fs = stance_to_flight(meas, foot_y)
    theta_to = min(max(math.pi - meas.theta, 0.9), math.pi / 2 - 0.02)
    dz_to = max(1.5, 0.9 * abs(fs.dz))
    s, c = math.sin(theta_to), math.cos(theta_to)
    x_d = StanceState(
        theta=theta_to,
        dtheta=(dz_to * c - fs.dy * s) / p.ell0,
        ell=p.ell0,
        dell=fs.dy * c + dz_to * s,
    )
    return x_d, takeoff_flat_target(x_d, p.g)


def _recovery_flight_plan(meas: FlightState, theta_rec: float, p: SlipParams) -> FlightPlan:
    """Degraded plan for arcs where no touchdown angle scores finite cost.

    Sweep hard toward the steepest braking angle the fall time allows: on a
    low arc the foot must clear vertical and emerge ahead of the body before
    the descent grounds it, or the landing comes foot-behind.  The target is
    capped at the sweep reachable within most of the fall and at the last
    good touchdown angle plus a stride of adjustment.
    """
    t_fall = (meas.dz + math.sqrt(meas.dz * meas.dz + 2.0 * p.g * max(meas.z, 1e-6))) / p.g
    # Steep-brake cap: parking much past ~2.45 rad means a touchdown height
    # under two thirds of the leg, an extreme pose on any arc.
    theta = min(meas.theta + p.w_max * 0.85 * max(t_fall, 1e-3), 2.45)
    if theta <= meas.theta:
        theta = min(meas.theta + 1e-3, math.pi - 0.05)
    try:
        t_est = flight_time(meas, theta, p)
        td = touchdown_state(meas, theta, p)
    except UnreachableTouchdownError:
        t_est = max(t_fall, 1e-3)
        td = meas
    return FlightPlan(
        theta_td=theta, t_flight=t_est, w=p.w_max, td_state=td,
        predicted_value=math.inf, reach_clamped=True,
    )


# ---------------------------------------------------------------------------
# Linearized deadbeat baseline (variable-stiffness SLIP, once per apex).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeadbeatBaseline:
    apex: tuple[float, float]   # fixed-point apex (z, dy)
    ctrl: tuple[float, float]   # nominal (touchdown angle, push stiffness)
    A: np.ndarray               # apex-map state Jacobian (2x2)
    B: np.ndarray               # apex-map control Jacobian (2x2)


@dataclass
class DeadbeatRun:
    apexes: list[tuple[float, float]] = field(default_factory=list)
    controls: list[tuple[float, float]] = field(default_factory=list)
    failed: bool = False
    failure_reason: str = ""
    fail_step: int = -1
    trajectory: HybridTrajectory = field(default_factory=HybridTrajectory)


def _deadbeat_stance(
    x_s: StanceState, k_down: float, k_up: float, p: SlipParams, cfg: IntegratorConfig,
    trace: PhaseTrace | None = None, stride: int = 0, t0: float = 0.0,
) -> tuple[StanceState, float] | None:
    """Passive stance with a stiffness switch at maximum compression.

    Returns the takeoff state with its time, or None on collapse or
    no-takeoff.  The switch instant (leg-length rate zero crossing) is
    localized by bisection so the stored-energy change is applied at the
    right compression.
    """
    from .dynamics import _stance_rk4

    g, m, ell0 = p.g, p.m, p.ell0
    th, dth, ell, dell = x_s.as_tuple()
    dt = cfg.dt
    km = k_down / m
    switched = False
    ell_lo, ell_hi = ELL_CRASH_LO * ell0, ELL_CRASH_HI * ell0
    u = (0.0, 0.0)
    t = t0
    n = 0
    if trace is not None and stride:
        trace.times.append(t)
        trace.states.append((th, dth, ell, dell))
        trace.inputs.append(u)

    t_end = t0 + cfg.t_max
    while t < t_end:
        s1 = _stance_rk4(th, dth, ell, dell, u, u, u, dt, g, km, m, ell0)
        # Stiffness switch at the compression bottom.
        if not switched and dell < 0.0 <= s1[3]:
            lo, hi = 0.0, dt
            for _ in range(cfg.max_bisections):
                mid = 0.5 * (lo + hi)
                sm = _stance_rk4(th, dth, ell, dell, u, u, u, mid, g, km, m, ell0)
                if abs(sm[3]) < 1e-12:
                    break
                if sm[3] < 0.0:
                    lo = mid
                else:
                    hi = mid
            th, dth, ell, dell = _stance_rk4(th, dth, ell, dell, u, u, u, mid, g, km, m, ell0)
            t += mid
            km = k_up / m
            switched = True
            continue
        # Takeoff: leg back at rest length while extending.
        if (ell - ell0 < 0.0) != (s1[2] - ell0 < 0.0):
            lo, hi = 0.0, dt
            for _ in range(cfg.max_bisections):
                mid = 0.5 * (lo + hi)
                sm = _stance_rk4(th, dth, ell, dell, u, u, u, mid, g, km, m, ell0)
                if abs(sm[2] - ell0) < cfg.event_tol:
                    break
                if (ell - ell0 < 0.0) != (sm[2] - ell0 < 0.0):
                    hi = mid
                else:
                    lo = mid
            sm = _stance_rk4(th, dth, ell, dell, u, u, u, mid, g, km, m, ell0)
            r_v = sm[2] * sm[1] * math.cos(sm[0]) + sm[3] * math.sin(sm[0])
            if r_v > 0.0:
                if trace is not None and stride:
                    trace.times.append(t + mid)
                    trace.states.append(sm)
                    trace.inputs.append(u)
                return StanceState(*sm), t + mid
        t += dt
        th, dth, ell, dell = s1
        n += 1
        if trace is not None and stride and n % stride == 0:
            trace.times.append(t)
            trace.states.append((th, dth, ell, dell))
            trace.inputs.append(u)
        if not (ell_lo < ell < ell_hi) or not (0.001 < th < math.pi - 0.001) or not math.isfinite(ell):
            return None
    return None


def deadbeat_return_map(
    apex: tuple[float, float], ctrl: tuple[float, float], p: SlipParams, cfg: IntegratorConfig,
) -> tuple[float, float] | None:
    """Apex-to-apex map of the baseline model: instantaneous leg placement,
    exact ballistic flight, simulated variable-stiffness stance.  Returns the
    next apex or None when the step fails."""
    z_a, dy_a = apex
    theta_td, k_up = ctrl
    if not (0.0 < theta_td < math.pi) or k_up <= 0.0:
        return None
    z_td = p.ell0 * math.sin(theta_td)
    drop = 2.0 * p.g * (z_a - z_td)
    if drop <= 0.0:
        return None
    td = FlightState(0.0, dy_a, z_td, -math.sqrt(drop), theta_td)
    x_s = flight_to_stance(td, td.y - p.ell0 * math.cos(theta_td))
    out = _deadbeat_stance(x_s, p.k, k_up, p, cfg)
    if out is None:
        return None
    fs = stance_to_flight(out[0], 0.0)
    if fs.dz < 0.0:
        return None
    return (fs.z + 0.5 * fs.dz * fs.dz / p.g, fs.dy)


def deadbeat_build(
    p: SlipParams, desired_apex: tuple[float, float], cfg: IntegratorConfig,
) -> DeadbeatBaseline:
    """Locate the baseline's fixed point and linearize its return map.

    At the fixed point the stance is fully passive (push stiffness equals
    the spring constant), so the search is one-dimensional: the touchdown
    angle at which the apex speed returns (the height then returns by energy
    conservation).  Jacobians use central differences; the stiffness step is
    relative since an absolute 1e-5 N/m step is below the event-localization
    noise floor.
    """
    z_d, dy_d = desired_apex

    def speed_defect(theta: float) -> float | None:
        out = deadbeat_return_map((z_d, dy_d), (theta, p.k), p, cfg)
        return None if out is None else out[1] - dy_d

    thetas = np.linspace(math.pi / 2 + 0.08, math.pi - 0.35, 48)
    vals = [(float(th), speed_defect(float(th))) for th in thetas]
    vals = [(th, v) for th, v in vals if v is not None]
    bracket = None
    for (a, fa), (b, fb) in zip(vals, vals[1:]):
        if fa == 0.0:
            bracket = (a, a, fa, fa)
            break
        if fa * fb < 0.0:
            bracket = (a, b, fa, fb)
            break
    if bracket is None:
        raise RuntimeError("no passive fixed point near the desired apex")
    a, b, fa, fb = bracket
    for _ in range(80):
        mid = 0.5 * (a + b)
        fm = speed_defect(mid)
        if fm is None:
            raise RuntimeError("return map failed while refining the fixed point")
        if fa * fm <= 0.0:
            b, fb = mid, fm
        else:
            a, fa = mid, fm
        if b - a < 1e-13:
            break
    theta_star = 0.5 * (a + b)
    ctrl_star = (theta_star, p.k)

    check = deadbeat_return_map(desired_apex, ctrl_star, p, cfg)
    if check is None or max(abs(check[0] - z_d), abs(check[1] - dy_d)) > 1e-6:
        raise RuntimeError("fixed-point residual exceeds tolerance")

    d_state = 1e-5
    d_theta = 1e-5
    d_k = 1e-5 * p.k

    def diff(f_plus, f_minus, h):
        return (np.asarray(f_plus) - np.asarray(f_minus)) / (2.0 * h)

    def P(apex, ctrl):
        out = deadbeat_return_map(apex, ctrl, p, cfg)
        if out is None:
            raise RuntimeError("return map failed during linearization")
        return out

    A = np.column_stack([
        diff(P((z_d + d_state, dy_d), ctrl_star), P((z_d - d_state, dy_d), ctrl_star), d_state),
        diff(P((z_d, dy_d + d_state), ctrl_star), P((z_d, dy_d - d_state), ctrl_star), d_state),
    ])
    B = np.column_stack([
        diff(P(desired_apex, (theta_star + d_theta, p.k)), P(desired_apex, (theta_star - d_theta, p.k)), d_theta),
        diff(P(desired_apex, (theta_star, p.k + d_k)), P(desired_apex, (theta_star, p.k - d_k)), d_k),
    ])
    if abs(np.linalg.det(B)) < 1e-12 * np.abs(B).max() ** 2:
        raise RuntimeError("control Jacobian is singular")
    return DeadbeatBaseline(apex=desired_apex, ctrl=ctrl_star, A=A, B=B)


def deadbeat_step(apex_meas: tuple[float, float], base: DeadbeatBaseline) -> tuple[float, float]:
    """One-step error-cancelling control update (no clamping)."""
    err = np.array([apex_meas[0] - base.apex[0], apex_meas[1] - base.apex[1]])
    ctrl = np.array(base.ctrl) - np.linalg.solve(base.B, base.A @ err)
    return (float(ctrl[0]), float(ctrl[1]))


def run_deadbeat_gait(
    apex0: tuple[float, float],
    base: DeadbeatBaseline,
    scenario: str,
    p: SlipParams,
    cfg: IntegratorConfig,
    n_steps: int = 8,
    *,
    stride: int = 0,
) -> DeadbeatRun:
    """Run the baseline for ``n_steps`` apex returns.

    ``scenario`` selects when the initial disturbance is seen: "before"
    lets the controller react to the disturbed apex immediately; "after"
    means the disturbance struck after the apex update, so the first step
    flies on the nominal controls.  With ``stride`` the trajectory records
    flight samples from the closed-form arc (the baseline's leg teleports to
    its commanded angle) and stance samples from the simulation.
    """
    if scenario not in ("before", "after"):
        raise ValueError("scenario must be 'before' or 'after'")
    run = DeadbeatRun()
    apex = apex0
    t = 0.0
    y = 0.0

    def record_flight(y0, dy0, z0, dz0, theta_cmd, duration, foot_y):
        nonlocal t
        if stride:
            trace = PhaseTrace(Mode.FLIGHT, foot_y)
            n = max(1, int(duration / (cfg.dt * stride)))
            for i in range(n + 1):
                tau = duration * i / n
                trace.times.append(t + tau)
                trace.states.append((
                    y0 + dy0 * tau, dy0,
                    z0 + (dz0 - 0.5 * p.g * tau) * tau, dz0 - p.g * tau,
                    theta_cmd,
                ))
                trace.inputs.append((0.0,))
            run.trajectory.segments.append(trace)
        t += duration

    for i in range(n_steps):
        ctrl = base.ctrl if (scenario == "after" and i == 0) else deadbeat_step(apex, base)
        run.controls.append(ctrl)
        theta_td, k_up = ctrl
        z_a, dy_a = apex
        fail = None
        if not (0.0 < theta_td < math.pi) or k_up <= 0.0:
            fail = "commanded controls are unphysical"
        else:
            z_td = p.ell0 * math.sin(theta_td)
            drop = 2.0 * p.g * (z_a - z_td)
            if drop <= 0.0:
                fail = "commanded touchdown height above the apex"
        if fail is None:
            t_desc = math.sqrt(drop) / p.g
            record_flight(y, dy_a, z_a, 0.0, theta_td, t_desc, foot_y=y)
            y += dy_a * t_desc
            td = FlightState(y, dy_a, z_td, -math.sqrt(drop), theta_td)
            foot_y = y - p.ell0 * math.cos(theta_td)
            x_s = flight_to_stance(td, foot_y)
            trace = PhaseTrace(Mode.STANCE, foot_y) if stride else None
            out = _deadbeat_stance(x_s, p.k, k_up, p, cfg, trace=trace, stride=stride, t0=t)
            if trace is not None:
                run.trajectory.segments.append(trace)
            if out is None:
                fail = "no admissible takeoff (vault or leg collapse)"
            else:
                to_state, t = out
                fs = stance_to_flight(to_state, foot_y)
                if fs.dz < 0.0:
                    fail = "takeoff with downward velocity"
                else:
                    y = fs.y
                    t_up = fs.dz / p.g
                    record_flight(y, fs.dy, fs.z, fs.dz, fs.theta, t_up, foot_y=foot_y)
                    y += fs.dy * t_up
                    apex = (fs.z + 0.5 * fs.dz * fs.dz / p.g, fs.dy)
                    run.apexes.append(apex)
        if fail is not None:
            run.failed = True
            run.failure_reason = f"baseline step failed: {fail}"
            run.fail_step = i
            run.trajectory.failed = True
            run.trajectory.failure_reason = run.failure_reason
            return run
    return run

"""Continuous phase integration with event localization, and the hybrid
executor that chains phases through the touchdown/takeoff resets.

Integration is fixed-step.  The flight field is ballistic with a constant
swing rate per call, for which the classical 4th-order step is exact, so the
flight stepper applies the closed-form update directly.  Stance uses an
inlined classical Runge-Kutta step.  Events are localized by bisection on
the step that brackets the guard's sign change; the admissibility inequality
is checked at the localized point and inadmissible crossings are ignored.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

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

# Stance leg-length window outside which the run is declared crashed, as
# fractions of the rest length.  The lower bound is a bottom-out, the upper
# a hyperextension that no admissible takeoff produced.
ELL_CRASH_LO = 0.01
ELL_CRASH_HI = 1.5


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-4            # base step [s]
    event_tol: float = 1e-10    # residual tolerance at localized events
    max_bisections: int = 90
    t_max: float = 20.0         # simulation horizon cap [s]

    def __post_init__(self) -> None:
        if not (self.dt > 0.0 and self.event_tol > 0.0 and self.t_max > 0.0):
            raise ValueError("dt, event_tol and t_max must be positive")


class PhaseEnd(enum.Enum):
    TOUCHDOWN = "TD"
    TAKEOFF = "TO"
    FORCED_TAKEOFF = "TO_forced"
    HORIZON = "horizon"
    CRASH = "crash"


@dataclass
class PhaseTrace:
    """Samples of one continuous phase (decimated by the caller's stride)."""

    mode: Mode
    foot_y: float
    times: list[float] = field(default_factory=list)
    states: list[tuple] = field(default_factory=list)
    inputs: list[tuple] = field(default_factory=list)


@dataclass
class PhaseResult:
    end: PhaseEnd
    t_end: float
    flight: FlightState | None = None
    stance: StanceState | None = None
    residual: float = math.nan   # guard residual at a localized event
    crash_reason: str = ""
    trace: PhaseTrace | None = None


@dataclass(frozen=True)
class EventRecord:
    t: float
    kind: str                    # "TD" or "TO"
    pre: HybridState
    post: HybridState
    forced: bool = False


@dataclass
class HybridTrajectory:
    """Multi-phase trajectory: per-phase sample traces plus event records."""

    segments: list[PhaseTrace] = field(default_factory=list)
    events: list[EventRecord] = field(default_factory=list)
    failed: bool = False
    failure_reason: str = ""

    def iter_samples(self) -> Iterator[tuple[float, HybridState, tuple]]:
        for seg in self.segments:
            if seg.mode is Mode.FLIGHT:
                for t, s, u in zip(seg.times, seg.states, seg.inputs):
                    yield t, HybridState.in_flight(FlightState(*s), seg.foot_y), u
            else:
                for t, s, u in zip(seg.times, seg.states, seg.inputs):
                    yield t, HybridState.in_stance(StanceState(*s), seg.foot_y), u

    def mode_sequence(self) -> list[Mode]:
        return [seg.mode for seg in self.segments]


def flight_field(x_f: FlightState, w: float, p: SlipParams) -> tuple[float, float, float, float, float]:
    """Time derivative of the flight chart under swing rate ``w``."""
    return (x_f.dy, 0.0, x_f.dz, -p.g, w)


def stance_field(x_s: StanceState, u: StanceInput, p: SlipParams) -> tuple[float, float, float, float]:
    """Time derivative of the stance chart under input ``u``."""
    if not x_s.ell > 0.0:
        raise ValueError("stance leg length must be positive")
    th, dth, ell, dell = x_s.theta, x_s.dtheta, x_s.ell, x_s.dell
    km = p.k / p.m
    ddth = -2.0 * dth * dell / ell - p.g * math.cos(th) / ell + u.u2 / (p.m * ell * ell)
    ddell = -p.g * math.sin(th) + dth * dth * ell + km * (p.ell0 - ell) + km * u.u1
    return (dth, ddth, dell, ddell)


def mechanical_energy(x: HybridState, p: SlipParams) -> float:
    """Total mechanical energy; the swing angle carries none (massless leg)."""
    if x.mode is Mode.FLIGHT:
        f = x.flight
        return p.m * p.g * f.z + 0.5 * p.m * (f.dy * f.dy + f.dz * f.dz)
    s = x.stance
    spring = p.ell0 - s.ell
    return (
        0.5 * p.m * (s.dell * s.dell + s.ell * s.ell * s.dtheta * s.dtheta)
        + p.m * p.g * s.ell * math.sin(s.theta)
        + 0.5 * p.k * spring * spring
    )


def _ballistic(y: float, dy: float, z: float, dz: float, th: float, w: float, h: float, g: float):
    """Exact flight-chart update over a step of size h with constant w."""
    return (y + dy * h, dy, z + (dz - 0.5 * g * h) * h, dz - g * h, th + w * h)


_HALF_PI = math.pi / 2


def _graze_angle(th: float, z: float, ell0: float) -> float:
    """Angle at which a leg of reach ``ell0`` meets the ground at height
    ``z``, on the same side of vertical as ``th``."""
    a = math.asin(min(z / ell0, 1.0))
    return (math.pi - a) if th >= _HALF_PI else a


def integrate_flight(
    x_f: FlightState,
    w: float,
    cfg: IntegratorConfig,
    p: SlipParams,
    *,
    t0: float = 0.0,
    t_end: float | None = None,
    foot_y: float = 0.0,
    stride: int = 0,
    apex_log: list | None = None,
    theta_park: float | None = None,
) -> PhaseResult:
    """Advance the flight phase until touchdown, the time limit, or a crash.

    The swing rotates at ``w``; with ``theta_park`` it stops on reaching that
    angle (a rate command past its target is undefined, and a late touchdown
    should land at the intended angle).  Touchdown fires when the guard
    changes sign at a descending localized point; rising crossings and
    grazing contacts are not events.  If descent begins while the commanded
    foot already lies below the surface (possible when plans were made from
    noisy measurements), contact happens right there, with the leg on the
    ground at its actual reach angle.  When ``apex_log`` is given, each
    vertical-velocity zero crossing appends ``(t_apex, z_apex, dy)`` from
    the closed-form arc.
    """
    g, ell0 = p.g, p.ell0
    dt = cfg.dt
    tol = cfg.event_tol
    t_stop = cfg.t_max if t_end is None else min(t_end, cfg.t_max)
    y, dy, z, dz, th = x_f.as_tuple()
    t = t0

    def parked(th_raw: float) -> float:
        if theta_park is None or w == 0.0:
            return th_raw
        if (w > 0.0 and th_raw > theta_park) or (w < 0.0 and th_raw < theta_park):
            return theta_park
        return th_raw

    # Height of the parked foot: while the commanded foot is in the ground
    # (possible when plans came from noisy measurements), a descending CoM
    # makes contact no later than this height, exactly where a finished
    # sweep would have touched down.
    park_floor = ell0 * math.sin(theta_park) if theta_park is not None else math.inf

    trace = PhaseTrace(Mode.FLIGHT, foot_y)
    if stride:
        trace.times.append(t)
        trace.states.append((y, dy, z, dz, th))
        trace.inputs.append((w,))

    def ground_touchdown(t_ev, y_ev, z_ev, dz_ev, th_cmd) -> PhaseResult:
        th_gr = _graze_angle(th_cmd, z_ev, ell0)
        end_state = FlightState(y_ev, dy, z_ev, dz_ev, th_gr)
        if stride:
            trace.times.append(t_ev)
            trace.states.append(end_state.as_tuple())
            trace.inputs.append((w,))
        return PhaseResult(
            PhaseEnd.TOUCHDOWN, t_ev, flight=end_state,
            residual=z_ev - ell0 * math.sin(th_gr), trace=trace,
        )

    r_prev = z - ell0 * math.sin(th)
    if dz < 0.0 and r_prev <= 0.0 and z <= park_floor:
        return ground_touchdown(t, y, z, dz, th)

    n = 0
    while t < t_stop - 1e-15:
        h = dt if t + dt <= t_stop else t_stop - t
        y1, dy1, z1, dz1, _ = _ballistic(y, dy, z, dz, th, 0.0, h, g)
        th1 = parked(th + w * h)
        r_new = z1 - ell0 * math.sin(th1)

        if apex_log is not None and dz > 0.0 >= dz1:
            t_ap = t + dz / g
            apex_log.append((t_ap, z + 0.5 * dz * dz / g, dy))

        if r_prev <= 0.0 and dz1 < 0.0 and r_new <= 0.0 and z1 <= park_floor:
            # Descending with the commanded foot already in the ground and no
            # higher parked height left to cross: contact at the leg's reach.
            return ground_touchdown(t + h, y1, z1, dz1, parked(th + w * h))

        # Only downward guard crossings are candidate contacts; a swept foot
        # emerging from the ground (below-to-above) is not a touchdown.
        if r_prev > 0.0 >= r_new:
            # Localize the guard crossing within [t, t+h].
            lo, hi = 0.0, h
            mid = h
            r_mid = r_new
            for _ in range(cfg.max_bisections):
                mid = 0.5 * (lo + hi)
                ym, dym, zm, dzm, _ = _ballistic(y, dy, z, dz, th, 0.0, mid, g)
                r_mid = zm - ell0 * math.sin(parked(th + w * mid))
                if abs(r_mid) < tol:
                    break
                if (r_prev > 0.0) != (r_mid > 0.0):
                    hi = mid
                else:
                    lo = mid
            ym, dym, zm, dzm, _ = _ballistic(y, dy, z, dz, th, 0.0, mid, g)
            thm = parked(th + w * mid)
            if dzm < 0.0:
                end_state = FlightState(ym, dym, zm, dzm, thm)
                if stride:
                    trace.times.append(t + mid)
                    trace.states.append((ym, dym, zm, dzm, thm))
                    trace.inputs.append((w,))
                return PhaseResult(
                    PhaseEnd.TOUCHDOWN, t + mid, flight=end_state, residual=r_mid, trace=trace
                )
            # Rising crossing: not a touchdown.

        t += h
        y, dy, z, dz, th = y1, dy1, z1, dz1, th1
        r_prev = r_new
        n += 1
        if stride and n % stride == 0:
            trace.times.append(t)
            trace.states.append((y, dy, z, dz, th))
            trace.inputs.append((w,))
        if z <= 0.0:
            return PhaseResult(
                PhaseEnd.CRASH, t, flight=FlightState(y, dy, z, dz, th),
                crash_reason="flight: CoM reached the ground without touchdown", trace=trace,
            )

    return PhaseResult(PhaseEnd.HORIZON, t, flight=FlightState(y, dy, z, dz, th), trace=trace)


def _stance_rates(th, dth, ell, dell, u1, u2, g, km, m, ell0):
    ddth = -2.0 * dth * dell / ell - g * math.cos(th) / ell + u2 / (m * ell * ell)
    ddell = -g * math.sin(th) + dth * dth * ell + km * (ell0 - ell) + km * u1
    return dth, ddth, dell, ddell


def _stance_rk4(th, dth, ell, dell, ua, ub, uc, h, g, km, m, ell0):
    """One classical step; inputs at the three distinct stage times.

    Stage evaluations are inlined: this is the per-step kernel of every
    simulation and planning rollout.
    """
    sin, cos = math.sin, math.cos
    a1 = dth
    a2 = -2.0 * dth * dell / ell - g * cos(th) / ell + ua[1] / (m * ell * ell)
    a3 = dell
    a4 = -g * sin(th) + dth * dth * ell + km * (ell0 - ell) + km * ua[0]
    h2 = 0.5 * h
    t1, t2, t3, t4 = th + h2 * a1, dth + h2 * a2, ell + h2 * a3, dell + h2 * a4
    b1 = t2
    b2 = -2.0 * t2 * t4 / t3 - g * cos(t1) / t3 + ub[1] / (m * t3 * t3)
    b3 = t4
    b4 = -g * sin(t1) + t2 * t2 * t3 + km * (ell0 - t3) + km * ub[0]
    t1, t2, t3, t4 = th + h2 * b1, dth + h2 * b2, ell + h2 * b3, dell + h2 * b4
    c1 = t2
    c2 = -2.0 * t2 * t4 / t3 - g * cos(t1) / t3 + ub[1] / (m * t3 * t3)
    c3 = t4
    c4 = -g * sin(t1) + t2 * t2 * t3 + km * (ell0 - t3) + km * ub[0]
    t1, t2, t3, t4 = th + h * c1, dth + h * c2, ell + h * c3, dell + h * c4
    d1 = t2
    d2 = -2.0 * t2 * t4 / t3 - g * cos(t1) / t3 + uc[1] / (m * t3 * t3)
    d3 = t4
    d4 = -g * sin(t1) + t2 * t2 * t3 + km * (ell0 - t3) + km * uc[0]
    s = h / 6.0
    return (
        th + s * (a1 + 2.0 * (b1 + c1) + d1),
        dth + s * (a2 + 2.0 * (b2 + c2) + d2),
        ell + s * (a3 + 2.0 * (b3 + c3) + d3),
        dell + s * (a4 + 2.0 * (b4 + c4) + d4),
    )


_PASSIVE = (0.0, 0.0)


def integrate_stance(
    x_s: StanceState,
    policy: Callable[[float], tuple[float, float]] | None,
    cfg: IntegratorConfig,
    p: SlipParams,
    *,
    t0: float = 0.0,
    t_end: float | None = None,
    force_takeoff_at_end: bool = False,
    foot_y: float = 0.0,
    stride: int = 0,
) -> PhaseResult:
    """Advance the stance phase until takeoff, the time limit, or a crash.

    ``policy`` maps phase time to the applied ``(u1, u2)`` pair (already
    clamped by the caller); ``None`` means passive.  Takeoff fires at the
    first sign change of the force residual whose localized point moves
    upward; with ``force_takeoff_at_end`` the phase is cut at ``t_end`` and
    reported as a forced takeoff if no admissible crossing occurred.
    """
    g, km, m, ell0 = p.g, p.k / p.m, p.m, p.ell0
    dt = cfg.dt
    tol = cfg.event_tol
    t_stop = cfg.t_max if t_end is None else min(t_end, cfg.t_max)
    th, dth, ell, dell = x_s.as_tuple()
    t = t0
    ell_lo, ell_hi = ELL_CRASH_LO * ell0, ELL_CRASH_HI * ell0

    def u_at(tau: float) -> tuple[float, float]:
        return _PASSIVE if policy is None else policy(tau)

    def residual(th_, dth_, ell_, dell_, u_) -> tuple[float, float]:
        s_, c_ = math.sin(th_), math.cos(th_)
        r_eq_ = km * s_ * (ell0 - ell_ + u_[0]) + c_ * u_[1] / (m * ell_)
        r_v_ = ell_ * dth_ * c_ + dell_ * s_
        return r_eq_, r_v_

    trace = PhaseTrace(Mode.STANCE, foot_y)
    u_now = u_at(t)
    if stride:
        trace.times.append(t)
        trace.states.append((th, dth, ell, dell))
        trace.inputs.append(u_now)

    r_prev, _ = residual(th, dth, ell, dell, u_now)
    n = 0
    while t < t_stop - 1e-15:
        h = dt if t + dt <= t_stop else t_stop - t
        u_a = u_now
        u_b = u_at(t + 0.5 * h)
        u_c = u_at(t + h)
        th1, dth1, ell1, dell1 = _stance_rk4(th, dth, ell, dell, u_a, u_b, u_c, h, g, km, m, ell0)
        r_new, _ = residual(th1, dth1, ell1, dell1, u_c)

        if (r_prev > 0.0) != (r_new > 0.0):
            lo, hi = 0.0, h
            mid = h
            r_mid = r_new
            for _ in range(cfg.max_bisections):
                mid = 0.5 * (lo + hi)
                um_b = u_at(t + 0.5 * mid)
                um_c = u_at(t + mid)
                sm = _stance_rk4(th, dth, ell, dell, u_a, um_b, um_c, mid, g, km, m, ell0)
                r_mid, _ = residual(*sm, um_c)
                if abs(r_mid) < tol:
                    break
                if (r_prev > 0.0) != (r_mid > 0.0):
                    hi = mid
                else:
                    lo = mid
            um_b = u_at(t + 0.5 * mid)
            um_c = u_at(t + mid)
            sm = _stance_rk4(th, dth, ell, dell, u_a, um_b, um_c, mid, g, km, m, ell0)
            r_mid, r_v = residual(*sm, um_c)
            if r_v > 0.0:
                end_state = StanceState(*sm)
                if stride:
                    trace.times.append(t + mid)
                    trace.states.append(sm)
                    trace.inputs.append(um_c)
                return PhaseResult(
                    PhaseEnd.TAKEOFF, t + mid, stance=end_state, residual=r_mid, trace=trace
                )
            # Crossing while still descending: not a takeoff.

        t += h
        th, dth, ell, dell = th1, dth1, ell1, dell1
        u_now = u_c
        r_prev = r_new
        n += 1
        if stride and n % stride == 0:
            trace.times.append(t)
            trace.states.append((th, dth, ell, dell))
            trace.inputs.append(u_now)
        bad = not (ell_lo < ell < ell_hi) or not (0.001 < th < math.pi - 0.001)
        if bad or not math.isfinite(ell):
            return PhaseResult(
                PhaseEnd.CRASH, t, stance=StanceState(th, dth, ell, dell),
                crash_reason=f"stance: state left the admissible chart (ell={ell:.4g}, theta={th:.4g})",
                trace=trace,
            )

    end_state = StanceState(th, dth, ell, dell)
    if force_takeoff_at_end:
        r_eq, r_v = residual(th, dth, ell, dell, u_now)
        return PhaseResult(PhaseEnd.FORCED_TAKEOFF, t, stance=end_state, residual=r_eq, trace=trace)
    return PhaseResult(PhaseEnd.HORIZON, t, stance=end_state, trace=trace)


def integrate_phase(
    x0: HybridState,
    input_policy,
    cfg: IntegratorConfig,
    p: SlipParams,
    *,
    t0: float = 0.0,
    t_end: float | None = None,
    force_takeoff_at_end: bool = False,
    stride: int = 0,
    apex_log: list | None = None,
) -> PhaseResult:
    """Integrate whichever phase ``x0`` is in.

    For flight, ``input_policy`` is a constant swing rate (or None for zero);
    for stance it is a time-to-input callable (or None for passive).
    """
    if x0.mode is Mode.FLIGHT:
        w = 0.0 if input_policy is None else float(input_policy)
        return integrate_flight(
            x0.flight, w, cfg, p,
            t0=t0, t_end=t_end, foot_y=x0.foot_y, stride=stride, apex_log=apex_log,
        )
    return integrate_stance(
        x0.stance, input_policy, cfg, p,
        t0=t0, t_end=t_end, force_takeoff_at_end=force_takeoff_at_end,
        foot_y=x0.foot_y, stride=stride,
    )


def touchdown_reset(x_f: FlightState, p: SlipParams) -> HybridState:
    """Apply the flight-to-stance reset at a localized touchdown.

    The foot anchor is placed so the leg starts exactly at its rest length,
    which keeps event-localization error out of the initial spring force.
    """
    foot_y = x_f.y - p.ell0 * math.cos(x_f.theta)
    return HybridState.in_stance(flight_to_stance(x_f, foot_y), foot_y)


def takeoff_reset(x_s: StanceState, foot_y: float) -> HybridState:
    return HybridState.in_flight(stance_to_flight(x_s, foot_y), foot_y)


def step_hybrid(
    x0: HybridState,
    cfg: IntegratorConfig,
    p: SlipParams,
    n_events: int,
    *,
    w: float = 0.0,
    stance_policy: Callable[[float], tuple[float, float]] | None = None,
    stride: int = 0,
    apex_log: list | None = None,
) -> HybridTrajectory:
    """Chain phases through the reset maps for ``n_events`` events.

    Open-loop executor: constant swing rate in flight, a single stance
    policy for every stance (phase-local time).  Controllers that replan at
    events drive :func:`integrate_phase` themselves.
    """
    traj = HybridTrajectory()
    state = x0
    t = 0.0
    while len(traj.events) < n_events and t < cfg.t_max:
        if state.mode is Mode.FLIGHT:
            res = integrate_flight(
                state.flight, w, cfg, p,
                t0=t, foot_y=state.foot_y, stride=stride, apex_log=apex_log,
            )
            traj.segments.append(res.trace)
            if res.end is PhaseEnd.TOUCHDOWN:
                pre = HybridState.in_flight(res.flight, state.foot_y)
                state = touchdown_reset(res.flight, p)
                traj.events.append(EventRecord(res.t_end, "TD", pre, state))
                t = res.t_end
                continue
        else:
            res = integrate_stance(
                state.stance, stance_policy, cfg, p,
                t0=t, foot_y=state.foot_y, stride=stride,
            )
            traj.segments.append(res.trace)
            if res.end is PhaseEnd.TAKEOFF:
                pre = HybridState.in_stance(res.stance, state.foot_y)
                state = takeoff_reset(res.stance, state.foot_y)
                traj.events.append(EventRecord(res.t_end, "TO", pre, state))
                t = res.t_end
                continue
        if res.end is PhaseEnd.CRASH:
            traj.failed = True
            traj.failure_reason = res.crash_reason
        break
    return traj

"""Stance-phase planning: passive reference generation, the flat-space QP
plan toward a takeoff target, and the stance value function used by flight
planning.

The stance window is not optimized: the passive (zero-input) stance from the
entry state fixes both the duration and the tracking reference, so planned
motions deviate from a physically valid trajectory only as much as reaching
the takeoff target demands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import IntegratorConfig, PhaseEnd, integrate_stance
from .flatness import FlatPoint, flat_from_stance, input_from_flat
from .model import SlipParams, StanceInput, StanceState
from .polyqp import PolyPlan, assemble_qp, plan_from_qp, QPSolveError


class InfeasibleReferenceError(RuntimeError):
    """The passive stance from the entry state produces no usable window."""


@dataclass(frozen=True)
class StanceWeights:
    """Tracking/terminal weights per derivative order (both outputs), the
    polynomial degree, and the reference/quadrature grid size."""

    q_track: tuple[float, float, float] = (10.0, 1.0, 0.01)
    q_term: tuple[float, float, float] = (1e4, 1e4, 1e2)
    degree: int = 9
    n_ref: int = 201
    to_margin: float = 1e-3   # terminal upward-velocity floor [m/s]


@dataclass(frozen=True)
class StancePlan:
    poly: PolyPlan
    ref_values: np.ndarray          # (n_ref, 6) flat reference samples
    duration: float
    x_s0: StanceState
    u0: StanceInput
    y_d: FlatPoint
    value: float
    max_u1: float                   # input magnitude peaks on the plan grid
    max_u2: float
    u1_exceeds: bool
    u2_exceeds: bool

    @property
    def limit_flags(self) -> tuple[bool, bool]:
        return (self.u1_exceeds, self.u2_exceeds)


def passive_reference(
    x_s0: StanceState, p: SlipParams, cfg: IntegratorConfig, n_ref: int = 201
) -> tuple[float, np.ndarray]:
    """Simulate the passive stance to takeoff and return its duration plus
    the flat reference resampled on a uniform grid of ``n_ref`` nodes.

    Raises :class:`InfeasibleReferenceError` when the entry state is already
    past takeoff, when the leg collapses, or when no takeoff occurs within
    the horizon.
    """
    from .model import to_residual

    r_eq, r_v = to_residual(x_s0, StanceInput(), p)
    if r_eq < 1e-9 and r_v > 0.0:
        raise InfeasibleReferenceError("stance entry already satisfies takeoff")

    res = integrate_stance(x_s0, None, cfg, p, stride=1)
    if res.end is not PhaseEnd.TAKEOFF:
        raise InfeasibleReferenceError(
            f"passive stance ended without takeoff ({res.end.value}: {res.crash_reason})"
        )
    duration = res.t_end
    if duration < 5.0 * cfg.dt:
        raise InfeasibleReferenceError("passive stance window is degenerate")

    times = np.array(res.trace.times)
    states = np.array(res.trace.states)
    th, dth, ell, dell = states[:, 0], states[:, 1], states[:, 2], states[:, 3]
    s, c = np.sin(th), np.cos(th)
    km = p.k / p.m
    spring = km * (p.ell0 - ell)
    flat = np.column_stack([
        c * ell,
        -s * dth * ell + c * dell,
        c * spring,
        s * ell,
        c * dth * ell + s * dell,
        s * spring - p.g,
    ])
    grid = np.linspace(0.0, duration, n_ref)
    ref = np.column_stack([np.interp(grid, times, flat[:, j]) for j in range(6)])
    return duration, ref


def slice_reference(ref: np.ndarray, duration: float, t_start: float, n_ref: int) -> np.ndarray:
    """Re-sample a reference over the remaining window ``[t_start, duration]``
    of its original time base (receding-horizon replans keep that base)."""
    times = np.linspace(0.0, duration, ref.shape[0])
    grid = np.linspace(t_start, duration, n_ref)
    return np.column_stack([np.interp(grid, times, ref[:, j]) for j in range(6)])


def fallback_reference(
    y0: FlatPoint, y_d: FlatPoint, x_s0: StanceState, n_ref: int
) -> tuple[float, np.ndarray]:
    """Straight-line flat reference for stance entries whose passive motion
    never takes off (the plant can land on such states under measurement
    noise).  The window is the pendular sweep time from the entry angle to
    its mirror at the entry rate, clamped to a plausible stance range."""
    sweep = 2.0 * x_s0.theta - math.pi
    rate = abs(x_s0.dtheta)
    duration = sweep / rate if (sweep > 0.0 and rate > 1e-6) else 0.3
    duration = min(0.6, max(0.1, duration))
    a = np.array(y0.as_tuple())
    b = np.array(y_d.as_tuple())
    lam = np.linspace(0.0, 1.0, n_ref)[:, None]
    return duration, (1.0 - lam) * a + lam * b


def takeoff_flat_target(x_d: StanceState, g: float) -> FlatPoint:
    """Terminal flat point for a takeoff-state target: positions and
    velocities from the state, vertical acceleration pinned at ``-g`` (no leg
    force at takeoff), horizontal acceleration softly centered at zero."""
    s, c = math.sin(x_d.theta), math.cos(x_d.theta)
    return FlatPoint(
        x=c * x_d.ell,
        dx=-s * x_d.dtheta * x_d.ell + c * x_d.dell,
        ddx=0.0,
        z=s * x_d.ell,
        dz=c * x_d.dtheta * x_d.ell + s * x_d.dell,
        ddz=-g,
    )


def _input_peaks(plan: PolyPlan, n_grid: int, p: SlipParams) -> tuple[float, float]:
    from .polyqp import _cache

    c = _cache(len(plan.coeffs_x) - 1, n_grid)
    T = plan.duration
    scale = T ** np.arange(len(plan.coeffs_x), dtype=float)
    cx = np.asarray(plan.coeffs_x) * scale
    cz = np.asarray(plan.coeffs_z) * scale
    iT2 = 1.0 / (T * T)
    x = c.P0 @ cx
    z = c.P0 @ cz
    ddx = (c.P2 @ cx) * iT2
    ddz = (c.P2 @ cz) * iT2
    ell = np.sqrt(x * x + z * z)
    u1 = ell + p.m * (x * ddx + z * ddz + p.g * z) / (p.k * ell) - p.ell0
    u2 = p.m * (p.g * x + x * ddz - z * ddx)
    return float(np.abs(u1).max()), float(np.abs(u2).max())


def plan_stance(
    x_s0: StanceState,
    u0: StanceInput,
    x_d: StanceState,
    p: SlipParams,
    weights: StanceWeights,
    cfg: IntegratorConfig,
    *,
    reference: tuple[float, np.ndarray] | None = None,
) -> StancePlan:
    """Solve the stance problem from ``(x_s0, u0)`` toward the takeoff target
    ``x_d`` over the passive window.

    ``reference`` short-circuits the passive simulation with a precomputed
    ``(duration, ref_values)`` pair (used by receding-horizon replans).
    """
    if reference is None:
        duration, ref = passive_reference(x_s0, p, cfg, weights.n_ref)
    else:
        duration, ref = reference
        if duration < 2e-3:
            raise InfeasibleReferenceError("remaining stance window is degenerate")
    y0 = flat_from_stance(x_s0, u0, p)
    y_d = takeoff_flat_target(x_d, p.g)
    qp = assemble_qp(
        y0, ref, y_d, duration,
        weights.q_track, weights.q_term, weights.degree, p.g,
        ineq_margin=weights.to_margin,
    )
    poly = plan_from_qp(qp, duration)
    max_u1, max_u2 = _input_peaks(poly, weights.n_ref, p)
    return StancePlan(
        poly=poly,
        ref_values=ref,
        duration=duration,
        x_s0=x_s0,
        u0=u0,
        y_d=y_d,
        value=poly.cost,
        max_u1=max_u1,
        max_u2=max_u2,
        u1_exceeds=max_u1 > p.u1_max,
        u2_exceeds=max_u2 > p.u2_max,
    )


def stance_value(
    x_s0: StanceState,
    u0: StanceInput,
    x_d: StanceState,
    p: SlipParams,
    weights: StanceWeights,
    cfg: IntegratorConfig,
) -> float:
    """Optimal stance cost from the entry condition, or ``inf`` when no plan
    exists, so flight planning can reject the candidate."""
    try:
        return plan_stance(x_s0, u0, x_d, p, weights, cfg).value
    except (InfeasibleReferenceError, QPSolveError, ValueError):
        return math.inf


def stance_input_policy(plan: StancePlan, p: SlipParams, *, clamp: bool = True):
    """Open-loop input policy realizing the plan through the input map.

    Past the plan horizon the terminal input is held (the takeoff event or
    the executor's overrun cut ends the phase).  Returns the policy and a
    mutable clamp counter ``[n_u1, n_u2]``.
    """
    poly = plan.poly
    duration = plan.duration
    u1_max, u2_max = p.u1_max, p.u2_max
    clamp_count = [0, 0]
    cx = poly.coeffs_x
    cz = poly.coeffs_z
    cx2 = tuple(i * (i - 1) * c for i, c in enumerate(cx))[2:]
    cz2 = tuple(i * (i - 1) * c for i, c in enumerate(cz))[2:]
    m, k, g, ell0 = p.m, p.k, p.g, p.ell0

    def policy(t: float) -> tuple[float, float]:
        if t > duration:
            t = duration
        x = 0.0
        for c in reversed(cx):
            x = x * t + c
        z = 0.0
        for c in reversed(cz):
            z = z * t + c
        ddx = 0.0
        for c in reversed(cx2):
            ddx = ddx * t + c
        ddz = 0.0
        for c in reversed(cz2):
            ddz = ddz * t + c
        ell = math.sqrt(x * x + z * z)
        u1 = ell + m * (x * ddx + z * ddz + g * z) / (k * ell) - ell0
        u2 = m * (g * x + x * ddz - z * ddx)
        if clamp:
            if u1 > u1_max:
                u1 = u1_max
                clamp_count[0] += 1
            elif u1 < -u1_max:
                u1 = -u1_max
                clamp_count[0] += 1
            if u2 > u2_max:
                u2 = u2_max
                clamp_count[1] += 1
            elif u2 < -u2_max:
                u2 = -u2_max
                clamp_count[1] += 1
        return (u1, u2)

    return policy, clamp_count

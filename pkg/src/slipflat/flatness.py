"""Flat-output algebra for the stance phase.

The stance dynamics are differentially flat in the foot-relative Cartesian
CoM coordinates.  ``FlatPoint`` holds those two outputs and their first two
time derivatives; the three maps below convert between (state, input) pairs
and flat points in both directions, turning stance dynamics into algebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import SlipParams, StanceInput, StanceState


@dataclass(frozen=True)
class FlatPoint:
    """Foot-relative CoM position/velocity/acceleration, horizontal then
    vertical: ``(x, dx, ddx, z, dz, ddz)``."""

    x: float
    dx: float
    ddx: float
    z: float
    dz: float
    ddz: float

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return (self.x, self.dx, self.ddx, self.z, self.dz, self.ddz)


def flat_from_stance(x_s: StanceState, u: StanceInput, p: SlipParams) -> FlatPoint:
    """Forward map: stance state plus input to the flat point."""
    if not x_s.ell > 0.0:
        raise ValueError("stance leg length must be positive")
    s = math.sin(x_s.theta)
    c = math.cos(x_s.theta)
    ell, dell, dth = x_s.ell, x_s.dell, x_s.dtheta
    spring = (p.k / p.m) * (p.ell0 - ell + u.u1)
    torque = u.u2 / (p.m * ell)
    return FlatPoint(
        x=c * ell,
        dx=-s * dth * ell + c * dell,
        ddx=c * spring - s * torque,
        z=s * ell,
        dz=c * dth * ell + s * dell,
        ddz=s * spring + c * torque - p.g,
    )


def stance_from_flat(f: FlatPoint) -> StanceState:
    """State half of the inverse map.

    The leg-length rate is the radial velocity component
    ``(x*dx + z*dz) / ell``; dividing by the squared radius instead fails
    the round trip against :func:`flat_from_stance`.
    """
    r_sq = f.x * f.x + f.z * f.z
    if r_sq <= 0.0:
        raise ValueError("flat point coincides with the foot")
    ell = math.sqrt(r_sq)
    return StanceState(
        theta=math.atan2(f.z, f.x),
        dtheta=(f.x * f.dz - f.z * f.dx) / r_sq,
        ell=ell,
        dell=(f.x * f.dx + f.z * f.dz) / ell,
    )


def input_from_flat(f: FlatPoint, p: SlipParams) -> StanceInput:
    """Input half of the inverse map."""
    r_sq = f.x * f.x + f.z * f.z
    if r_sq <= 0.0:
        raise ValueError("flat point coincides with the foot")
    ell = math.sqrt(r_sq)
    u1 = ell + p.m * (f.x * f.ddx + f.z * f.ddz + p.g * f.z) / (p.k * ell) - p.ell0
    u2 = p.m * (p.g * f.x + f.x * f.ddz - f.z * f.ddx)
    return StanceInput(u1=u1, u2=u2)

"""Core types for the actuated SLIP: parameters, the two state charts, the
chart changes used at touchdown/takeoff, and the event residuals.

Conventions
-----------
The flight chart is the CoM in world coordinates plus the swing-leg angle,
``(y, dy, z, dz, theta)``.  The stance chart is polar about the stance foot,
``(theta, dtheta, ell, dell)``.  ``theta`` is measured counterclockwise from
the positive y axis to the leg (foot -> CoM direction), so ``theta > pi/2``
means the foot is ahead of the CoM.  The ground is fixed at ``z = 0``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


@dataclass(frozen=True)
class SlipParams:
    """Physical constants and actuator/swing limits.

    Defaults model an 80 kg runner with a 1 m leg and 11 kN/m leg spring.
    """

    m: float = 80.0        # mass [kg]
    k: float = 11000.0     # spring stiffness [N/m]
    ell0: float = 1.0      # rest leg length [m]
    g: float = 9.81        # gravity [m/s^2]
    u1_max: float = 0.1    # max linear-actuator displacement magnitude [m]
    u2_max: float = 400.0  # max hip torque magnitude [N*m]
    w_max: float = 6.0     # max swing angular speed magnitude [rad/s]

    def __post_init__(self) -> None:
        for name in ("m", "k", "ell0", "g", "u1_max", "u2_max", "w_max"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"SlipParams.{name} must be strictly positive")


@dataclass(frozen=True)
class FlightState:
    y: float       # CoM horizontal position [m]
    dy: float      # CoM horizontal velocity [m/s]
    z: float       # CoM height [m]
    dz: float      # CoM vertical velocity [m/s]
    theta: float   # swing-leg angle [rad]

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.y, self.dy, self.z, self.dz, self.theta)


@dataclass(frozen=True)
class StanceState:
    theta: float    # leg angle [rad]
    dtheta: float   # leg angular rate [rad/s]
    ell: float      # leg length [m]
    dell: float     # leg length rate [m/s]

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.theta, self.dtheta, self.ell, self.dell)


@dataclass(frozen=True)
class StanceInput:
    u1: float = 0.0  # linear-actuator displacement [m]
    u2: float = 0.0  # hip torque [N*m]

    def clamped(self, p: SlipParams) -> "StanceInput":
        u1 = min(p.u1_max, max(-p.u1_max, self.u1))
        u2 = min(p.u2_max, max(-p.u2_max, self.u2))
        return StanceInput(u1, u2)


class Mode(enum.Enum):
    FLIGHT = "flight"
    STANCE = "stance"


@dataclass(frozen=True)
class HybridState:
    """Mode flag plus whichever chart is active, with the stance-foot anchor.

    ``foot_y`` is fixed while in stance and carries the most recent touchdown
    location during flight.  Exactly one of ``flight``/``stance`` is set.
    """

    mode: Mode
    flight: FlightState | None = None
    stance: StanceState | None = None
    foot_y: float = 0.0

    def __post_init__(self) -> None:
        if self.mode is Mode.FLIGHT and (self.flight is None or self.stance is not None):
            raise ValueError("flight mode requires exactly the flight chart")
        if self.mode is Mode.STANCE and (self.stance is None or self.flight is not None):
            raise ValueError("stance mode requires exactly the stance chart")

    @staticmethod
    def in_flight(x_f: FlightState, foot_y: float = 0.0) -> "HybridState":
        return HybridState(mode=Mode.FLIGHT, flight=x_f, foot_y=foot_y)

    @staticmethod
    def in_stance(x_s: StanceState, foot_y: float) -> "HybridState":
        return HybridState(mode=Mode.STANCE, stance=x_s, foot_y=foot_y)


def flight_to_stance(x_f: FlightState, foot_y: float) -> StanceState:
    """Rewrite a flight state in the polar stance chart about ``foot_y``.

    The angle is taken as atan2(z, y - foot_y) so it lands on the (0, pi)
    branch for any CoM above ground.
    """
    ry = x_f.y - foot_y
    rz = x_f.z
    ell_sq = ry * ry + rz * rz
    if ell_sq <= 0.0:
        raise ValueError("CoM coincides with the stance foot")
    ell = math.sqrt(ell_sq)
    theta = math.atan2(rz, ry)
    dtheta = (ry * x_f.dz - rz * x_f.dy) / ell_sq
    dell = (ry * x_f.dy + rz * x_f.dz) / ell
    return StanceState(theta=theta, dtheta=dtheta, ell=ell, dell=dell)


def stance_to_flight(x_s: StanceState, foot_y: float) -> FlightState:
    """Rewrite a stance state in the Cartesian flight chart (inverse of
    :func:`flight_to_stance`); the swing angle continues from the leg angle."""
    s = math.sin(x_s.theta)
    c = math.cos(x_s.theta)
    return FlightState(
        y=x_s.ell * c + foot_y,
        dy=-x_s.ell * x_s.dtheta * s + x_s.dell * c,
        z=x_s.ell * s,
        dz=x_s.ell * x_s.dtheta * c + x_s.dell * s,
        theta=x_s.theta,
    )


def td_residual(x_f: FlightState, p: SlipParams) -> float:
    """Touchdown guard: height of the CoM above the leg-reach surface.

    Touchdown is admissible when this crosses zero with ``dz < 0``.
    """
    return x_f.z - p.ell0 * math.sin(x_f.theta)


def to_residual(x_s: StanceState, u: StanceInput, p: SlipParams) -> tuple[float, float]:
    """Takeoff guard pair ``(r_eq, r_v)``.

    ``r_eq`` is the net upward actuated-force component per unit mass (zero
    when the leg stops pushing); ``r_v`` is the vertical CoM velocity.
    Takeoff is admissible when ``r_eq`` crosses zero with ``r_v > 0``.
    """
    if not x_s.ell > 0.0:
        raise ValueError("stance leg length must be positive")
    s = math.sin(x_s.theta)
    c = math.cos(x_s.theta)
    r_eq = (p.k / p.m) * s * (p.ell0 - x_s.ell + u.u1) + c * u.u2 / (p.m * x_s.ell)
    r_v = x_s.ell * x_s.dtheta * c + x_s.dell * s
    return (r_eq, r_v)

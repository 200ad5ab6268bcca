"""Actuated spring-loaded inverted pendulum: hybrid simulation, flat-output
stance planning, touchdown-angle flight optimization, and gait experiments."""

from .model import (
    FlightState,
    HybridState,
    Mode,
    SlipParams,
    StanceInput,
    StanceState,
    flight_to_stance,
    stance_to_flight,
    td_residual,
    to_residual,
)
from .flatness import FlatPoint, flat_from_stance, input_from_flat, stance_from_flat
from .dynamics import (
    EventRecord,
    HybridTrajectory,
    IntegratorConfig,
    PhaseEnd,
    PhaseResult,
    flight_field,
    integrate_flight,
    integrate_phase,
    integrate_stance,
    mechanical_energy,
    stance_field,
    step_hybrid,
    takeoff_reset,
    touchdown_reset,
)

__all__ = [
    "EventRecord",
    "FlatPoint",
    "FlightState",
    "HybridState",
    "HybridTrajectory",
    "IntegratorConfig",
    "Mode",
    "PhaseEnd",
    "PhaseResult",
    "SlipParams",
    "StanceInput",
    "StanceState",
    "flat_from_stance",
    "flight_field",
    "flight_to_stance",
    "input_from_flat",
    "integrate_flight",
    "integrate_phase",
    "integrate_stance",
    "mechanical_energy",
    "stance_field",
    "stance_from_flat",
    "stance_to_flight",
    "step_hybrid",
    "takeoff_reset",
    "td_residual",
    "to_residual",
    "touchdown_reset",
]

__version__ = "0.1.0"

#!/usr/bin/env python3
"""Run the closed-loop gait from a disturbed apex and print the apex log.

Usage: python scripts/run_gait_demo.py [apex_z apex_dy [n_steps]]
"""

import math
import sys

from slipflat.controller import ControllerConfig, run_gait
from slipflat.model import FlightState, HybridState, SlipParams


def main() -> None:
    apex_z = float(sys.argv[1]) if len(sys.argv) > 1 else 1.8
    apex_dy = float(sys.argv[2]) if len(sys.argv) > 2 else 4.0
    n_steps = int(sys.argv[3]) if len(sys.argv) > 3 else 8

    p = SlipParams()
    cfg = ControllerConfig()
    x0 = HybridState.in_flight(FlightState(0.0, apex_dy, apex_z, 0.0, math.pi / 2))
    res = run_gait(x0, cfg, p, n_apexes=n_steps, rng_seed=0)

    z_d, dy_d = cfg.desired_apex
    print(f"start apex ({apex_z}, {apex_dy}), target ({z_d}, {dy_d})")
    for i, (t, z, dy) in enumerate(res.apexes):
        print(f"  apex {i + 1:2d} @ t={t:6.3f}s  z={z:.5f}  dy={dy:.5f}  "
              f"err=({z - z_d:+.2e}, {dy - dy_d:+.2e})")
    if res.failed:
        print(f"run failed: {res.failure_reason}")
    print(f"input clamp events: u1={res.clamp_u1}, u2={res.clamp_u2}")


if __name__ == "__main__":
    main()

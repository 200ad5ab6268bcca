#!/usr/bin/env python3
"""Locate a symmetric passive gait (fixed touchdown angle, no actuation)
for a given apex state and report its step geometry.

Usage: python scripts/find_passive_gait.py [apex_z apex_dy]
"""

import math
import sys

import numpy as np

from slipflat.dynamics import IntegratorConfig, PhaseEnd, integrate_stance
from slipflat.model import FlightState, SlipParams, flight_to_stance, stance_to_flight


def takeoff_speed_defect(theta, apex_z, apex_dy, p, cfg):
    z_td = p.ell0 * math.sin(theta)
    if apex_z <= z_td:
        return None
    dz_td = -math.sqrt(2 * p.g * (apex_z - z_td))
    td = FlightState(0.0, apex_dy, z_td, dz_td, theta)
    x_s = flight_to_stance(td, td.y - p.ell0 * math.cos(theta))
    res = integrate_stance(x_s, None, cfg, p)
    if res.end is not PhaseEnd.TAKEOFF:
        return None
    return stance_to_flight(res.stance, 0.0).dz + dz_td


def main() -> None:
    apex_z = float(sys.argv[1]) if len(sys.argv) > 1 else 1.05
    apex_dy = float(sys.argv[2]) if len(sys.argv) > 2 else 3.0
    p = SlipParams()
    cfg = IntegratorConfig()

    grid = np.linspace(math.pi / 2 + 0.08, math.pi - 0.35, 60)
    vals = [(float(th), takeoff_speed_defect(float(th), apex_z, apex_dy, p, cfg)) for th in grid]
    vals = [(a, b) for a, b in vals if b is not None]
    bracket = next(((a, b, fa, fb) for (a, fa), (b, fb) in zip(vals, vals[1:]) if fa * fb < 0), None)
    if bracket is None:
        print(f"no symmetric passive gait found near apex ({apex_z}, {apex_dy})")
        return
    a, b, fa, fb = bracket
    for _ in range(60):
        mid = 0.5 * (a + b)
        fm = takeoff_speed_defect(mid, apex_z, apex_dy, p, cfg)
        if fa * fm <= 0:
            b, fb = mid, fm
        else:
            a, fa = mid, fm
    theta = 0.5 * (a + b)
    z_td = p.ell0 * math.sin(theta)
    dz_td = -math.sqrt(2 * p.g * (apex_z - z_td))
    td = FlightState(0.0, apex_dy, z_td, dz_td, theta)
    x_s = flight_to_stance(td, td.y - p.ell0 * math.cos(theta))
    res = integrate_stance(x_s, None, cfg, p)
    fs = stance_to_flight(res.stance, 0.0)
    print(f"apex ({apex_z}, {apex_dy}): touchdown angle {theta:.6f} rad "
          f"({math.degrees(theta):.2f} deg)")
    print(f"  touchdown state: {x_s}")
    print(f"  stance duration: {res.t_end:.4f} s")
    print(f"  takeoff flight:  dz={fs.dz:.4f} dy={fs.dy:.4f} "
          f"-> next apex z={fs.z + fs.dz ** 2 / (2 * p.g):.6f}")


if __name__ == "__main__":
    main()

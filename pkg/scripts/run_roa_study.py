#!/usr/bin/env python3
"""Region-of-attraction sweep over all three controller scenarios.

Writes out/roa.csv (same schema as the CLI) and prints converged-cell
counts.  Full 40x40 grid; pass a smaller n for a quick look.

Usage: python scripts/run_roa_study.py [n_per_axis] [jobs]
"""

import os
import sys
import time

from slipflat.cli import ROA_COLUMNS, _fmt, _write_table
from slipflat.config import RunConfig
from slipflat.controller import deadbeat_build
from slipflat.harness import SCENARIOS, RoaGridSpec, roa_sweep
from slipflat.model import SlipParams


def main() -> None:
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 40
    jobs = int(sys.argv[2]) if len(sys.argv) > 2 else os.cpu_count() or 1
    p = SlipParams()
    cfg = RunConfig()
    spec = RoaGridSpec(n_z=n, n_dy=n)
    base = deadbeat_build(p, cfg.desired_apex, cfg.sim)
    rows = []
    for scenario in SCENARIOS:
        t0 = time.time()
        grid = roa_sweep(spec, scenario, p, cfg.controller(), jobs=jobs, seed=0, baseline=base)
        print(f"{scenario}: {grid.converged_count()}/{n * n} converged "
              f"[{time.time() - t0:.0f}s, jobs={jobs}]")
        for r in grid.records:
            rows.append((
                _fmt(r.apex_z), _fmt(r.apex_dy), r.scenario,
                str(int(r.converged)), str(r.steps_to_converge), _fmt(r.acc_error),
            ))
    _write_table("out/roa.csv", cfg.digest(), ROA_COLUMNS, rows)
    print("wrote out/roa.csv")


if __name__ == "__main__":
    main()

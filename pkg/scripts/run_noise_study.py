#!/usr/bin/env python3
"""Measurement-noise study across both planning schemes.

Writes out/noise.csv and prints per-level trailing statistics.

Usage: python scripts/run_noise_study.py [n_seeds] [jobs]
"""

import os
import sys

from slipflat.cli import NOISE_COLUMNS, _fmt, _write_table
from slipflat.config import RunConfig
from slipflat.controller import Scheme
from slipflat.harness import NoiseSpec, noise_sweep
from slipflat.model import SlipParams


def main() -> None:
    n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 20
    jobs = int(sys.argv[2]) if len(sys.argv) > 2 else os.cpu_count() or 1
    p = SlipParams()
    cfg = RunConfig()
    spec = NoiseSpec(
        levels=(0.0, 0.25, 0.5, 0.7),
        schemes=(Scheme.EVENT_TRIGGERED, Scheme.RECEDING_HORIZON),
        n_seeds=n_seeds,
    )
    study = noise_sweep(spec, p, cfg.controller(), jobs=jobs, seed=cfg.seed)
    for s in study.stats:
        print(f"level {s.level:4.2f} {s.scheme.value:9s}: survived={s.survived} "
              f"z {s.mean_z:.4f}±{s.std_z:.4f}  dy {s.mean_dy:.4f}±{s.std_dy:.4f}  "
              f"err std {s.err_std:.4f}  handled={s.handled}")
    rows = []
    for run in study.runs:
        for idx, (z, dy) in enumerate(run.apexes):
            rows.append((_fmt(run.level), run.scheme.value, str(run.seed_index),
                         str(idx), _fmt(z), _fmt(dy)))
    _write_table("out/noise.csv", cfg.digest(), NOISE_COLUMNS, rows)
    print("wrote out/noise.csv")


if __name__ == "__main__":
    main()

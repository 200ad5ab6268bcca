"""Command-line entry point: experiment dispatch and table serialization.

Subcommands: simulate | roa | noise | plan-stance | plan-flight.
Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

Every output table starts with a comment line embedding the hash of the
effective configuration, then a header row; identical (config, seed) pairs
produce byte-identical files.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from .config import ConfigError, RunConfig, load_config
from .controller import (
    Scheme,
    deadbeat_build,
    run_deadbeat_gait,
    run_gait,
)
from .dynamics import Mode
from .flight_planner import FlightPlanError, UnreachableTouchdownError, plan_flight
from .harness import PROPOSED, NoiseSpec, noise_sweep, roa_sweep
from .model import FlightState, HybridState, StanceInput, StanceState, stance_to_flight
from .polyqp import QPSolveError
from .stance_planner import InfeasibleReferenceError, plan_stance
from .controller import apex_to_to_target

TRAJ_COLUMNS = "t,mode,y,z,dy,dz,theta,ell,dtheta,dell,u1,u2,w,clamped"
ROA_COLUMNS = "apex_z,apex_dy,scenario,converged,steps,acc_error"
NOISE_COLUMNS = "level,scheme,seed,apex_idx,z,dy"


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.12g}"


def _write_table(path: str, digest: str, header: str, rows) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"# config_hash={digest}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _trajectory_rows(traj, p):
    clamp_u1 = p.u1_max - 1e-12
    clamp_u2 = p.u2_max - 1e-12
    for seg in traj.segments:
        if seg.mode is Mode.FLIGHT:
            for t, s, u in zip(seg.times, seg.states, seg.inputs):
                y, dy, z, dz, th = s
                yield (
                    _fmt(t), "flight", _fmt(y), _fmt(z), _fmt(dy), _fmt(dz), _fmt(th),
                    "nan", "nan", "nan", "nan", "nan", _fmt(u[0]), "0",
                )
        else:
            for t, s, u in zip(seg.times, seg.states, seg.inputs):
                th, dth, ell, dell = s
                fs = stance_to_flight(StanceState(th, dth, ell, dell), seg.foot_y)
                clamped = int(abs(u[0]) >= clamp_u1 or abs(u[1]) >= clamp_u2)
                yield (
                    _fmt(t), "stance", _fmt(fs.y), _fmt(fs.z), _fmt(fs.dy), _fmt(fs.dz),
                    _fmt(th), _fmt(ell), _fmt(dth), _fmt(dell),
                    _fmt(u[0]), _fmt(u[1]), "nan", str(clamped),
                )


def cmd_simulate(cfg: RunConfig, out_dir: str, controller: str, jobs: int) -> int:
    spec = cfg.simulate
    x0 = HybridState.in_flight(
        FlightState(0.0, spec.apex_dy, spec.apex_z, 0.0, math.pi / 2)
    )
    path = os.path.join(out_dir, "trajectory.csv")
    if controller == "deadbeat":
        base = deadbeat_build(cfg.params, cfg.desired_apex, cfg.sim)
        run = run_deadbeat_gait(
            (spec.apex_z, spec.apex_dy), base, "before", cfg.params, cfg.sim,
            spec.n_steps, stride=spec.stride,
        )
        _write_table(path, cfg.digest(), TRAJ_COLUMNS, _trajectory_rows(run.trajectory, cfg.params))
        if run.failed:
            print(f"deadbeat run failed at step {run.fail_step}: {run.failure_reason}", file=sys.stderr)
            return 1
        return 0
    res = run_gait(
        x0, cfg.controller(), cfg.params,
        n_apexes=spec.n_steps, rng_seed=cfg.seed, stride=spec.stride,
    )
    _write_table(path, cfg.digest(), TRAJ_COLUMNS, _trajectory_rows(res.trajectory, cfg.params))
    if res.failed:
        print(f"run failed: {res.failure_reason}", file=sys.stderr)
        return 1
    return 0


def cmd_roa(cfg: RunConfig, out_dir: str, controller: str, jobs: int) -> int:
    scenarios = cfg.roa_scenarios
    if controller == "deadbeat":
        scenarios = tuple(s for s in scenarios if s != PROPOSED) or (
            "deadbeat-before-apex", "deadbeat-after-apex",
        )
    rows = []
    baseline = None
    ctrl_cfg = cfg.controller()
    for scenario in scenarios:
        if scenario != PROPOSED and baseline is None:
            baseline = deadbeat_build(cfg.params, cfg.desired_apex, cfg.sim)
        grid = roa_sweep(
            cfg.roa, scenario, cfg.params, ctrl_cfg,
            jobs=jobs, seed=cfg.seed, baseline=baseline,
        )
        for r in grid.records:
            rows.append((
                _fmt(r.apex_z), _fmt(r.apex_dy), r.scenario,
                str(int(r.converged)), str(r.steps_to_converge), _fmt(r.acc_error),
            ))
    _write_table(os.path.join(out_dir, "roa.csv"), cfg.digest(), ROA_COLUMNS, rows)
    return 0


def cmd_noise(cfg: RunConfig, out_dir: str, controller: str, jobs: int) -> int:
    study = noise_sweep(cfg.noise_spec, cfg.params, cfg.controller(), jobs=jobs, seed=cfg.seed)
    rows = []
    for run in study.runs:
        for idx, (z, dy) in enumerate(run.apexes):
            rows.append((
                _fmt(run.level), run.scheme.value, str(run.seed_index),
                str(idx), _fmt(z), _fmt(dy),
            ))
    _write_table(os.path.join(out_dir, "noise.csv"), cfg.digest(), NOISE_COLUMNS, rows)
    return 0


def cmd_plan_stance(cfg: RunConfig, out_dir: str, controller: str, jobs: int) -> int:
    st = cfg.plan_stance_state
    x_s0 = StanceState(st.theta, st.dtheta, st.ell, st.dell)
    x_d, _ = apex_to_to_target(cfg.desired_apex, cfg.params)
    try:
        plan = plan_stance(
            x_s0, StanceInput(st.u1, st.u2), x_d, cfg.params, cfg.weights, cfg.plan
        )
    except (InfeasibleReferenceError, QPSolveError, ValueError) as exc:
        print(f"stance planning failed: {exc}", file=sys.stderr)
        return 1
    nv = cfg.weights.degree + 1
    lines = [
        f"# config_hash={cfg.digest()}",
        f"qp_variables={2 * nv}",
        f"qp_equalities=7",
        f"duration={_fmt(plan.duration)}",
        f"value={_fmt(plan.value)}",
        f"max_u1={_fmt(plan.max_u1)}",
        f"max_u2={_fmt(plan.max_u2)}",
        f"u1_exceeds_limit={int(plan.u1_exceeds)}",
        f"u2_exceeds_limit={int(plan.u2_exceeds)}",
        "coeffs_x=" + ",".join(_fmt(c) for c in plan.poly.coeffs_x),
        "coeffs_z=" + ",".join(_fmt(c) for c in plan.poly.coeffs_z),
    ]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "stance_plan.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


def cmd_plan_flight(cfg: RunConfig, out_dir: str, controller: str, jobs: int) -> int:
    st = cfg.plan_flight_state
    x_f0 = FlightState(st.y, st.dy, st.z, st.dz, st.theta)
    x_d, _ = apex_to_to_target(cfg.desired_apex, cfg.params)
    try:
        plan = plan_flight(x_f0, x_d, cfg.params, cfg.flight, cfg.weights, cfg.plan)
    except (FlightPlanError, UnreachableTouchdownError) as exc:
        print(f"flight planning failed: {exc}", file=sys.stderr)
        return 1
    td = plan.td_state
    lines = [
        f"# config_hash={cfg.digest()}",
        f"theta_td={_fmt(plan.theta_td)}",
        f"t_flight={_fmt(plan.t_flight)}",
        f"w={_fmt(plan.w)}",
        f"predicted_value={_fmt(plan.predicted_value)}",
        f"reach_clamped={int(plan.reach_clamped)}",
        "td_state=" + ",".join(_fmt(v) for v in td.as_tuple()),
    ]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "flight_plan.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "roa": cmd_roa,
    "noise": cmd_noise,
    "plan-stance": cmd_plan_stance,
    "plan-flight": cmd_plan_flight,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="slipflat",
        description="Actuated-SLIP gait simulation and planning experiments",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", default=None, help="INI config path (defaults used when omitted)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="base RNG seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    parser.add_argument("--controller", choices=["proposed", "deadbeat"], default="proposed")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed

    try:
        return _COMMANDS[args.command](cfg, args.out, args.controller, max(1, args.jobs))
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

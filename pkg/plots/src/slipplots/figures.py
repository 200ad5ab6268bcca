"""Render publication-style figures from slipflat output tables.

Each figure kind is a pure function of its input tables: region-of-
attraction maps with boundaries, transient-error colormaps, CoM trajectory
panels, and noise mean/std bars.  Input schemas are the ones the slipflat
CLI writes (comment line, header row, comma-separated values).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("roa", "transient", "trajectory", "noise")

ROA_COLUMNS = ["apex_z", "apex_dy", "scenario", "converged", "steps", "acc_error"]
TRAJ_COLUMNS = ["t", "mode", "y", "z", "dy", "dz", "theta", "ell",
                "dtheta", "dell", "u1", "u2", "w", "clamped"]
NOISE_COLUMNS = ["level", "scheme", "seed", "apex_idx", "z", "dy"]


class SchemaError(ValueError):
    """An input table is missing columns the figure kind needs."""


@dataclass
class Table:
    columns: list[str]
    rows: list[list[str]]

    def column(self, name: str) -> list[str]:
        if name not in self.columns:
            raise SchemaError(f"missing column {name!r} (have {self.columns})")
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def floats(self, name: str) -> np.ndarray:
        return np.array([float(v) for v in self.column(name)])


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple[str, ...]
    output: str


def read_table(path: str) -> Table:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return Table(columns=header, rows=[row for row in reader if row])


def _require(table: Table, columns: list[str]) -> None:
    missing = [c for c in columns if c not in table.columns]
    if missing:
        raise SchemaError(f"missing columns {missing} (have {table.columns})")


def _merge(tables: list[Table], columns: list[str]) -> Table:
    for t in tables:
        _require(t, columns)
    rows = []
    for t in tables:
        idx = [t.columns.index(c) for c in columns]
        rows.extend([[r[i] for i in idx] for r in t.rows])
    return Table(columns=columns, rows=rows)


def _grid_of(table: Table, values: np.ndarray):
    zs = np.unique(table.floats("apex_z"))
    dys = np.unique(table.floats("apex_dy"))
    grid = np.full((len(dys), len(zs)), np.nan)
    z_idx = {v: i for i, v in enumerate(zs)}
    dy_idx = {v: i for i, v in enumerate(dys)}
    for z, dy, v in zip(table.floats("apex_z"), table.floats("apex_dy"), values):
        grid[dy_idx[dy], z_idx[z]] = v
    return zs, dys, grid


def _scenario_split(table: Table) -> dict[str, Table]:
    out: dict[str, Table] = {}
    names = table.column("scenario")
    for name in dict.fromkeys(names):
        rows = [r for r, n in zip(table.rows, names) if n == name]
        out[name] = Table(columns=table.columns, rows=rows)
    return out


def render_roa(tables: list[Table], out_path: str) -> None:
    """Converged regions per scenario on one axis set: baseline regions
    filled, the proposed region's boundary drawn on top."""
    merged = _merge(tables, ROA_COLUMNS)
    per_scenario = _scenario_split(merged)
    fig, ax = plt.subplots(figsize=(6.5, 5))
    fills = {"deadbeat-before-apex": "#74c476", "deadbeat-after-apex": "#238b45"}
    for name, sub in per_scenario.items():
        zs, dys, grid = _grid_of(sub, sub.floats("converged"))
        if name == "proposed":
            ax.contourf(zs, dys, grid, levels=[0.5, 1.5], colors=["#6baed6"], alpha=0.45)
            ax.contour(zs, dys, grid, levels=[0.5], colors="red", linewidths=2.0)
        else:
            ax.contourf(zs, dys, grid, levels=[0.5, 1.5],
                        colors=[fills.get(name, "#bdbdbd")], alpha=0.6)
            ax.contour(zs, dys, grid, levels=[0.5], colors="black", linewidths=1.2)
    ax.set_xlabel("apex height [m]")
    ax.set_ylabel("apex speed [m/s]")
    ax.set_title("regions of attraction: " + ", ".join(per_scenario))
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_transient(tables: list[Table], out_path: str) -> None:
    """Accumulated apex-error colormaps, one panel per scenario."""
    merged = _merge(tables, ROA_COLUMNS)
    per_scenario = _scenario_split(merged)
    n = len(per_scenario)
    fig, axes = plt.subplots(1, n, figsize=(5.5 * n, 4.5), squeeze=False)
    for ax, (name, sub) in zip(axes[0], per_scenario.items()):
        err = sub.floats("acc_error")
        finite = err[np.isfinite(err)]
        cap = np.percentile(finite, 95) if finite.size else 1.0
        zs, dys, grid = _grid_of(sub, np.minimum(err, cap))
        pc = ax.pcolormesh(zs, dys, grid, shading="nearest", cmap="viridis")
        fig.colorbar(pc, ax=ax, label="accumulated apex error")
        ax.set_xlabel("apex height [m]")
        ax.set_ylabel("apex speed [m/s]")
        ax.set_title(name)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_trajectory(tables: list[Table], out_path: str) -> None:
    """Two panels: CoM path and horizontal speed profile, stance shaded."""
    fig, (ax_path, ax_speed) = plt.subplots(2, 1, figsize=(7, 6))
    for table in tables:
        _require(table, TRAJ_COLUMNS)
        t = table.floats("t")
        y = table.floats("y")
        z = table.floats("z")
        dy = table.floats("dy")
        modes = table.column("mode")
        ax_path.plot(y, z, lw=1.2)
        ax_speed.plot(t, dy, lw=1.2)
        stance = np.array([m == "stance" for m in modes])
        if stance.any():
            ax_path.plot(y[stance], z[stance], ".", ms=1.5, color="black", alpha=0.4)
    ax_path.set_xlabel("horizontal position [m]")
    ax_path.set_ylabel("CoM height [m]")
    ax_path.set_title("CoM trajectory (stance dotted)")
    ax_speed.set_xlabel("time [s]")
    ax_speed.set_ylabel("horizontal speed [m/s]")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_noise(tables: list[Table], out_path: str) -> None:
    """Mean and standard deviation of trailing apexes per level and scheme."""
    merged = _merge(tables, NOISE_COLUMNS)
    levels = sorted(set(merged.floats("level")))
    schemes = list(dict.fromkeys(merged.column("scheme")))
    stats: dict[tuple[float, str], tuple[float, float, float, float]] = {}
    lev = merged.floats("level")
    idxs = merged.floats("apex_idx")
    zval = merged.floats("z")
    dyval = merged.floats("dy")
    sch = np.array(merged.column("scheme"))
    for level in levels:
        for scheme in schemes:
            pick = (np.abs(lev - level) < 1e-12) & (sch == scheme)
            if not pick.any():
                continue
            half = np.median(idxs[pick])
            tail = pick & (idxs >= half)
            stats[(level, scheme)] = (
                float(np.mean(zval[tail])), float(np.std(zval[tail])),
                float(np.mean(dyval[tail])), float(np.std(dyval[tail])),
            )
    fig, (ax_z, ax_dy) = plt.subplots(1, 2, figsize=(10, 4))
    width = 0.8 / max(len(schemes), 1)
    xs = np.arange(len(levels))
    for k, scheme in enumerate(schemes):
        mz = [stats.get((lvl, scheme), (np.nan,) * 4)[0] for lvl in levels]
        sz = [stats.get((lvl, scheme), (np.nan,) * 4)[1] for lvl in levels]
        md = [stats.get((lvl, scheme), (np.nan,) * 4)[2] for lvl in levels]
        sd = [stats.get((lvl, scheme), (np.nan,) * 4)[3] for lvl in levels]
        off = (k - (len(schemes) - 1) / 2) * width
        ax_z.bar(xs + off, mz, width, yerr=sz, capsize=3, label=scheme)
        ax_dy.bar(xs + off, md, width, yerr=sd, capsize=3, label=scheme)
    for ax, label in ((ax_z, "apex height [m]"), (ax_dy, "apex speed [m/s]")):
        ax.set_xticks(xs)
        ax.set_xticklabels([f"{lvl:g}" for lvl in levels])
        ax.set_xlabel("noise level [m/s]")
        ax.set_ylabel(label)
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


_RENDERERS = {
    "roa": render_roa,
    "transient": render_transient,
    "trajectory": render_trajectory,
    "noise": render_noise,
}


def render(spec: FigureSpec) -> None:
    """Render one figure kind from its input tables."""
    if spec.kind not in _RENDERERS:
        raise ValueError(f"unknown figure kind {spec.kind!r} (choose from {KINDS})")
    tables = [read_table(path) for path in spec.inputs]
    if not tables:
        raise ValueError("at least one input table is required")
    _RENDERERS[spec.kind](tables, spec.output)

"""Polynomial parameterization of flat-output trajectories, tracking-cost
quadrature, and a dense equality-constrained QP solver.

One polynomial of degree ``N`` parameterizes each flat output over the
stance window.  The tracking integral is discretized by the trapezoid rule
on the reference sample grid.  Internally the decision variables are the
coefficients over normalized time ``tau = t / T``; a monomial basis over an
unnormalized window would degrade the reduced-Hessian solve at the default
degree.  Coefficients are rescaled to plain time on output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flatness import FlatPoint


class QPSolveError(RuntimeError):
    """Raised when the QP is degenerate (rank-deficient equalities or a cost
    that is indefinite on the feasible subspace)."""


def basis_rows(t: float, degree: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Monomial basis row and its first two derivative rows at time ``t``."""
    if degree < 2:
        raise ValueError("polynomial degree must be at least 2")
    n = degree + 1
    p0 = np.empty(n)
    p1 = np.empty(n)
    p2 = np.empty(n)
    for i in range(n):
        p0[i] = t ** i
        p1[i] = i * t ** (i - 1) if i >= 1 else 0.0
        p2[i] = i * (i - 1) * t ** (i - 2) if i >= 2 else 0.0
    return p0, p1, p2


class _BasisCache:
    """Quadrature-grid basis matrices and Gram blocks over tau in [0, 1]."""

    def __init__(self, degree: int, n_nodes: int):
        self.degree = degree
        self.n_nodes = n_nodes
        tau = np.linspace(0.0, 1.0, n_nodes)
        self.tau = tau
        rows = [basis_rows(float(s), degree) for s in tau]
        self.P0 = np.array([r[0] for r in rows])
        self.P1 = np.array([r[1] for r in rows])
        self.P2 = np.array([r[2] for r in rows])
        wbar = np.full(n_nodes, 1.0 / (n_nodes - 1))
        wbar[0] *= 0.5
        wbar[-1] *= 0.5
        self.wbar = wbar
        self.P0w = self.P0 * wbar[:, None]
        self.P1w = self.P1 * wbar[:, None]
        self.P2w = self.P2 * wbar[:, None]
        self.G00 = self.P0.T @ self.P0w
        self.G11 = self.P1.T @ self.P1w
        self.G22 = self.P2.T @ self.P2w
        self.e0, self.e1, self.e2 = basis_rows(1.0, degree)
        self.s0, self.s1, self.s2 = basis_rows(0.0, degree)


_caches: dict[tuple[int, int], _BasisCache] = {}


def _cache(degree: int, n_nodes: int) -> _BasisCache:
    key = (degree, n_nodes)
    c = _caches.get(key)
    if c is None:
        c = _BasisCache(degree, n_nodes)
        _caches[key] = c
    return c


@dataclass
class QPProblem:
    """Dense QP ``min g'Hg + f'g + c0  s.t.  Aeq g = beq, <a_ineq, g> > 0``.

    The strict inequality is handled with margin ``ineq_margin``: if the
    equality-constrained minimizer violates it, the solver re-solves with the
    inequality pinned active at the margin.  ``coef_scale`` maps the decision
    variables back to plain-time polynomial coefficients.
    """

    H: np.ndarray
    f: np.ndarray
    c0: float
    Aeq: np.ndarray
    beq: np.ndarray
    a_ineq: np.ndarray
    ineq_margin: float = 1e-3
    coef_scale: np.ndarray | None = None
    # Residual-form evaluator of the same objective.  The expanded
    # (H, f, c0) form loses ~7 digits to cancellation under the default
    # terminal weights; sums of squares do not.
    objective_fn: object | None = None

    def objective(self, g: np.ndarray) -> float:
        if self.objective_fn is not None:
            return float(self.objective_fn(g))
        return max(float(g @ self.H @ g + self.f @ g + self.c0), 0.0)


def assemble_qp(
    y0: FlatPoint,
    ref_values: np.ndarray,
    y_d: FlatPoint,
    duration: float,
    q_track: tuple[float, float, float],
    q_term: tuple[float, float, float],
    degree: int,
    g: float,
    *,
    ineq_margin: float = 1e-3,
) -> QPProblem:
    """Build the stance QP over the window ``[0, duration]``.

    ``ref_values`` is the flat reference sampled on a uniform grid of the
    window including both ends, one row per node, columns ordered like
    :class:`FlatPoint`.  The tracking weights apply per derivative order to
    both outputs.  Equalities pin the six initial components and the terminal
    vertical acceleration at ``-g``; the inequality row is the terminal
    vertical velocity.
    """
    ref = np.asarray(ref_values, dtype=float)
    if ref.ndim != 2 or ref.shape[1] != 6:
        raise ValueError("ref_values must be (n, 6)")
    n_nodes = ref.shape[0]
    if n_nodes < degree + 1:
        raise ValueError("reference must carry at least degree+1 samples")
    if min(q_track) < 0.0 or min(q_term) < 0.0:
        raise ValueError("weights must be nonnegative")
    if not duration > 0.0:
        raise ValueError("duration must be positive")

    c = _cache(degree, n_nodes)
    T = duration
    q0, q1, q2 = q_track
    t0, t1, t2 = q_term
    iT, iT2 = 1.0 / T, 1.0 / (T * T)

    # Shared per-output Hessian block: tracking Grams plus the terminal rows.
    Hb = T * (q0 * c.G00 + q1 * iT2 * c.G11 + q2 * iT2 * iT2 * c.G22)
    Hb += t0 * np.outer(c.e0, c.e0) + t1 * iT2 * np.outer(c.e1, c.e1) + t2 * iT2 * iT2 * np.outer(c.e2, c.e2)

    def f_block(r_pos, r_vel, r_acc, d_pos, d_vel, d_acc):
        fb = -2.0 * T * (q0 * (c.P0w.T @ r_pos) + q1 * iT * (c.P1w.T @ r_vel) + q2 * iT2 * (c.P2w.T @ r_acc))
        fb -= 2.0 * (t0 * d_pos * c.e0 + t1 * iT * d_vel * c.e1 + t2 * iT2 * d_acc * c.e2)
        return fb

    def c_block(r_pos, r_vel, r_acc, d_pos, d_vel, d_acc):
        cb = T * (q0 * float(c.wbar @ (r_pos * r_pos)) + q1 * float(c.wbar @ (r_vel * r_vel)) + q2 * float(c.wbar @ (r_acc * r_acc)))
        return cb + t0 * d_pos ** 2 + t1 * d_vel ** 2 + t2 * d_acc ** 2

    fx = f_block(ref[:, 0], ref[:, 1], ref[:, 2], y_d.x, y_d.dx, y_d.ddx)
    fz = f_block(ref[:, 3], ref[:, 4], ref[:, 5], y_d.z, y_d.dz, y_d.ddz)
    c0 = c_block(ref[:, 0], ref[:, 1], ref[:, 2], y_d.x, y_d.dx, y_d.ddx)
    c0 += c_block(ref[:, 3], ref[:, 4], ref[:, 5], y_d.z, y_d.dz, y_d.ddz)

    nv = degree + 1
    H = np.zeros((2 * nv, 2 * nv))
    H[:nv, :nv] = Hb
    H[nv:, nv:] = Hb
    f = np.concatenate([fx, fz])

    Aeq = np.zeros((7, 2 * nv))
    Aeq[0, :nv] = c.s0
    Aeq[1, :nv] = c.s1 * iT
    Aeq[2, :nv] = c.s2 * iT2
    Aeq[3, nv:] = c.s0
    Aeq[4, nv:] = c.s1 * iT
    Aeq[5, nv:] = c.s2 * iT2
    Aeq[6, nv:] = c.e2 * iT2
    beq = np.array([y0.x, y0.dx, y0.ddx, y0.z, y0.dz, y0.ddz, -g])

    a_ineq = np.zeros(2 * nv)
    a_ineq[nv:] = c.e1 * iT

    scale = np.concatenate([T ** -np.arange(nv, dtype=float)] * 2)

    d_tuple = (y_d.x, y_d.dx, y_d.ddx, y_d.z, y_d.dz, y_d.ddz)

    def residual_objective(gvar: np.ndarray) -> float:
        a, b = gvar[:nv], gvar[nv:]
        cols = (
            c.P0 @ a, (c.P1 @ a) * iT, (c.P2 @ a) * iT2,
            c.P0 @ b, (c.P1 @ b) * iT, (c.P2 @ b) * iT2,
        )
        qs = (q0, q1, q2, q0, q1, q2)
        qt = (t0, t1, t2, t0, t1, t2)
        total = 0.0
        for col, rcol, q, qT, d in zip(cols, ref.T, qs, qt, d_tuple):
            err = col - rcol
            total += T * q * float(c.wbar @ (err * err))
            term = col[-1] - d
            total += qT * term * term
        return total

    return QPProblem(H=H, f=f, c0=float(c0), Aeq=Aeq, beq=beq, a_ineq=a_ineq,
                     ineq_margin=ineq_margin, coef_scale=scale,
                     objective_fn=residual_objective)


def _solve_equality(H: np.ndarray, f: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Null-space solve of ``min g'Hg + f'g  s.t.  A g = b``."""
    m, n = A.shape
    if m == 0:
        g_part = np.zeros(n)
        Z = np.eye(n)
    else:
        Q, R = np.linalg.qr(A.T, mode="complete")
        Rm = R[:m, :m]
        diag = np.abs(np.diag(Rm))
        if diag.min() <= 1e-12 * max(diag.max(), 1.0):
            raise QPSolveError("equality constraints are rank deficient")
        g_part = Q[:, :m] @ np.linalg.solve(Rm.T, b)
        Z = Q[:, m:]
    if Z.shape[1] == 0:
        return g_part
    Hr = Z.T @ H @ Z
    rhs = -Z.T @ (H @ g_part + 0.5 * f)
    try:
        L = np.linalg.cholesky(Hr)
        xi = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
        # Monomial Grams are Hilbert-like at the default degree; a couple of
        # refinement sweeps recover the digits the factorization loses.
        for _ in range(2):
            resid = rhs - Hr @ xi
            xi += np.linalg.solve(L.T, np.linalg.solve(L, resid))
    except np.linalg.LinAlgError:
        evals = np.linalg.eigvalsh(Hr)
        if evals.min() < -1e-8 * max(abs(evals.max()), 1.0):
            raise QPSolveError("cost is indefinite on the feasible subspace")
        xi = np.linalg.lstsq(Hr, rhs, rcond=None)[0]
    return g_part + Z @ xi


def solve_qp(qp: QPProblem) -> tuple[np.ndarray, float]:
    """Solve the QP; returns the minimizer and its objective value.

    The strict terminal inequality is verified after the equality-constrained
    solve and, if violated, activated at the margin and re-solved.
    """
    g = _solve_equality(qp.H, qp.f, qp.Aeq, qp.beq)
    if float(qp.a_ineq @ g) < qp.ineq_margin:
        A = np.vstack([qp.Aeq, qp.a_ineq])
        b = np.concatenate([qp.beq, [qp.ineq_margin]])
        g = _solve_equality(qp.H, qp.f, A, b)
    return g, qp.objective(g)


def _poly_derivative(coeffs: tuple[float, ...]) -> tuple[float, ...]:
    return tuple(i * coeffs[i] for i in range(1, len(coeffs)))


def _horner(coeffs: tuple[float, ...], t: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * t + c
    return acc


@dataclass(frozen=True)
class PolyPlan:
    """Solved flat-output polynomial pair over a stance window.

    Coefficients are in plain time (lowest order first); ``cost`` is the QP
    objective at the minimizer.
    """

    coeffs_x: tuple[float, ...]
    coeffs_z: tuple[float, ...]
    duration: float
    cost: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "_dx", _poly_derivative(self.coeffs_x))
        object.__setattr__(self, "_ddx", _poly_derivative(_poly_derivative(self.coeffs_x)))
        object.__setattr__(self, "_dz", _poly_derivative(self.coeffs_z))
        object.__setattr__(self, "_ddz", _poly_derivative(_poly_derivative(self.coeffs_z)))

    def point_at(self, t: float) -> FlatPoint:
        return FlatPoint(
            x=_horner(self.coeffs_x, t),
            dx=_horner(self._dx, t),
            ddx=_horner(self._ddx, t),
            z=_horner(self.coeffs_z, t),
            dz=_horner(self._dz, t),
            ddz=_horner(self._ddz, t),
        )

    def sample(self, times: np.ndarray) -> np.ndarray:
        out = np.empty((len(times), 6))
        for i, t in enumerate(times):
            out[i] = self.point_at(float(t)).as_tuple()
        return out


def plan_from_qp(qp: QPProblem, duration: float) -> PolyPlan:
    """Solve ``qp`` and package the minimizer as a plain-time polynomial plan."""
    g, value = solve_qp(qp)
    if qp.coef_scale is not None:
        g = g * qp.coef_scale
    nv = g.size // 2
    return PolyPlan(
        coeffs_x=tuple(float(v) for v in g[:nv]),
        coeffs_z=tuple(float(v) for v in g[nv:]),
        duration=duration,
        cost=value,
    )

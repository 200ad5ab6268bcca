import math

import numpy as np
import pytest

from slipflat.flatness import FlatPoint
from slipflat.polyqp import (
    PolyPlan,
    QPProblem,
    QPSolveError,
    assemble_qp,
    basis_rows,
    plan_from_qp,
    solve_qp,
)

W_TRACK = (10.0, 1.0, 0.01)
W_TERM = (1e4, 1e4, 1e2)
G = 9.81


def feasible_reference(seed: int, T: float, degree: int):
    """Random polynomial pair satisfying the terminal takeoff rows."""
    rng = np.random.default_rng(seed)
    cx = rng.normal(size=degree + 1) * 0.1
    cz = rng.normal(size=degree + 1) * 0.1
    pv = np.polynomial.polynomial.polyval
    der = np.polynomial.polynomial.polyder
    n = degree
    A = np.array([
        [n * (n - 1) * T ** (n - 2), (n - 1) * (n - 2) * T ** (n - 3)],
        [n * T ** (n - 1), (n - 1) * T ** (n - 2)],
    ])
    ddz_T = pv(T, der(cz, 2))
    dz_T = pv(T, der(cz, 1))
    corr = np.linalg.solve(A.T if False else np.array(
        [[n * (n - 1) * T ** (n - 2), (n - 1) * (n - 2) * T ** (n - 3)],
         [n * T ** (n - 1), (n - 1) * T ** (n - 2)]]
    ), [-G - ddz_T, 1.0 - dz_T])
    cz[n] += corr[0]
    cz[n - 1] += corr[1]

    def point(t: float) -> FlatPoint:
        return FlatPoint(
            pv(t, cx), pv(t, der(cx, 1)), pv(t, der(cx, 2)),
            pv(t, cz), pv(t, der(cz, 1)), pv(t, der(cz, 2)),
        )

    return cx, cz, point


class TestBasisRows:
    def test_at_zero(self):
        p0, p1, p2 = basis_rows(0.0, 4)
        assert list(p0) == [1, 0, 0, 0, 0]
        assert list(p1) == [0, 1, 0, 0, 0]
        assert list(p2) == [0, 0, 2, 0, 0]

    def test_second_derivative_row(self):
        _, _, p2 = basis_rows(1.0, 3)
        assert list(p2) == [0, 0, 2, 6]

    def test_derivative_matches_finite_difference(self):
        rng = np.random.default_rng(3)
        c = rng.normal(size=7)
        h = 1e-6
        for t in (0.1, 0.5, 0.9):
            p0p, _, _ = basis_rows(t + h, 6)
            p0m, _, _ = basis_rows(t - h, 6)
            _, p1, _ = basis_rows(t, 6)
            fd = (p0p @ c - p0m @ c) / (2 * h)
            assert abs(fd - p1 @ c) < 1e-7

    def test_low_degree_rejected(self):
        with pytest.raises(ValueError):
            basis_rows(0.0, 1)


class TestAssembly:
    def test_dimensions_default_degree(self):
        _, _, point = feasible_reference(0, 0.4, 9)
        ts = np.linspace(0, 0.4, 201)
        ref = np.array([point(t).as_tuple() for t in ts])
        qp = assemble_qp(point(0.0), ref, point(0.4), 0.4, W_TRACK, W_TERM, 9, G)
        assert qp.H.shape == (20, 20)
        assert qp.Aeq.shape == (7, 20)
        assert qp.beq.shape == (7,)
        assert qp.a_ineq.shape == (20,)

    def test_zero_tracking_weight_reaches_zero_cost(self):
        _, _, point = feasible_reference(1, 0.4, 9)
        ts = np.linspace(0, 0.4, 201)
        ref = np.array([point(t).as_tuple() for t in ts])
        qp = assemble_qp(point(0.0), ref, point(0.4), 0.4, (0.0, 0.0, 0.0), W_TERM, 9, G)
        _, value = solve_qp(qp)
        assert value < 1e-10

    def test_trapezoid_quadrature_of_cubic(self):
        # The assembled tracking cost of a pure-x cubic against a zero
        # reference equals its analytic squared integral to the trapezoid
        # rule's accuracy on 201 nodes.
        T = 0.4
        coeffs = np.array([0.3, -1.2, 0.8, 2.0])
        pv = np.polynomial.polynomial.polyval
        ts = np.linspace(0, T, 201)
        ref = np.zeros((201, 6))
        zero = FlatPoint(0, 0, 0, 0, 0, 0)
        qp = assemble_qp(zero, ref, zero, T, (1.0, 0.0, 0.0), (0, 0, 0), 3, G)
        gsol = np.concatenate([coeffs / (T ** -np.arange(4.0)), np.zeros(4)])
        # scale into the solver's normalized variables
        gsol = np.concatenate([coeffs * T ** np.arange(4.0), np.zeros(4)])
        cost = qp.objective(gsol)
        sq = np.polynomial.polynomial.polymul(coeffs, coeffs)
        integ = np.polynomial.polynomial.polyint(sq)
        exact = pv(T, integ)
        assert abs(cost - exact) / exact < 1e-4

    def test_too_few_samples_rejected(self):
        zero = FlatPoint(0, 0, 0, 1, 0, -G)
        with pytest.raises(ValueError):
            assemble_qp(zero, np.zeros((5, 6)), zero, 0.4, W_TRACK, W_TERM, 9, G)

    def test_negative_weights_rejected(self):
        zero = FlatPoint(0, 0, 0, 1, 0, -G)
        with pytest.raises(ValueError):
            assemble_qp(zero, np.zeros((201, 6)), zero, 0.4, (-1, 0, 0), W_TERM, 9, G)


class TestSolver:
    def test_min_norm_projection(self):
        qp = QPProblem(
            H=np.eye(2), f=np.zeros(2), c0=0.0,
            Aeq=np.array([[1.0, 1.0]]), beq=np.array([1.0]),
            a_ineq=np.zeros(2), ineq_margin=-math.inf,
        )
        g, value = solve_qp(qp)
        assert np.allclose(g, [0.5, 0.5], atol=1e-12)
        assert value == pytest.approx(0.5, abs=1e-12)

    def test_point_projection_onto_line(self):
        qp = QPProblem(
            H=np.eye(2), f=np.array([-4.0, 0.0]), c0=4.0,
            Aeq=np.array([[1.0, 1.0]]), beq=np.array([1.0]),
            a_ineq=np.zeros(2), ineq_margin=-math.inf,
        )
        g, _ = solve_qp(qp)
        assert np.allclose(g, [1.5, -0.5], atol=1e-12)

    def test_matches_dense_kkt_oracle(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(100):
            n, m = 8, 3
            M = rng.normal(size=(n, n))
            H = M @ M.T + n * np.eye(n)
            f = rng.normal(size=n)
            A = rng.normal(size=(m, n))
            b = rng.normal(size=m)
            qp = QPProblem(H=H, f=f, c0=0.0, Aeq=A, beq=b,
                           a_ineq=np.zeros(n), ineq_margin=-math.inf)
            g, _ = solve_qp(qp)
            kkt = np.block([[2 * H, A.T], [A, np.zeros((m, m))]])
            oracle = np.linalg.solve(kkt, np.concatenate([-f, b]))[:n]
            worst = max(worst, float(np.abs(oracle - g).max()))
        assert worst < 1e-9

    def test_inequality_activation(self):
        # Unconstrained minimizer at the origin violates <a, g> > margin;
        # the re-solve pins the inequality at the margin.
        qp = QPProblem(
            H=np.eye(2), f=np.zeros(2), c0=0.0,
            Aeq=np.zeros((0, 2)), beq=np.zeros(0),
            a_ineq=np.array([1.0, 0.0]), ineq_margin=0.25,
        )
        g, value = solve_qp(qp)
        assert g[0] == pytest.approx(0.25, abs=1e-12)
        assert value == pytest.approx(0.0625, abs=1e-12)

    def test_rank_deficient_equalities_reported(self):
        qp = QPProblem(
            H=np.eye(2), f=np.zeros(2), c0=0.0,
            Aeq=np.array([[1.0, 1.0], [2.0, 2.0]]), beq=np.array([1.0, 2.0]),
            a_ineq=np.zeros(2), ineq_margin=-math.inf,
        )
        with pytest.raises(QPSolveError):
            solve_qp(qp)

    def test_indefinite_reduced_cost_reported(self):
        qp = QPProblem(
            H=np.diag([1.0, -1.0]), f=np.zeros(2), c0=0.0,
            Aeq=np.zeros((0, 2)), beq=np.zeros(0),
            a_ineq=np.zeros(2), ineq_margin=-math.inf,
        )
        with pytest.raises(QPSolveError):
            solve_qp(qp)


class TestStanceShapedProblems:
    def test_exact_recovery_of_feasible_reference(self):
        cx, cz, point = feasible_reference(1, 0.4, 9)
        ts = np.linspace(0, 0.4, 201)
        ref = np.array([point(t).as_tuple() for t in ts])
        qp = assemble_qp(point(0.0), ref, point(0.4), 0.4, W_TRACK, W_TERM, 9, G)
        plan = plan_from_qp(qp, 0.4)
        assert plan.cost < 1e-10

    def test_constraints_satisfied_at_solution(self):
        cx, cz, point = feasible_reference(2, 0.35, 9)
        ts = np.linspace(0, 0.35, 201)
        ref = np.array([point(t).as_tuple() for t in ts])
        y0 = point(0.0)
        # perturbed target: terminal rows must still hold exactly
        yT = point(0.35)
        y_d = FlatPoint(yT.x + 0.05, yT.dx - 0.2, 0.0, yT.z - 0.03, yT.dz + 0.3, -G)
        qp = assemble_qp(y0, ref, y_d, 0.35, W_TRACK, W_TERM, 9, G)
        g, _ = solve_qp(qp)
        assert float(np.abs(qp.Aeq @ g - qp.beq).max()) < 1e-8
        assert float(qp.a_ineq @ g) >= qp.ineq_margin - 1e-10
        plan = plan_from_qp(qp, 0.35)
        p0 = plan.point_at(0.0)
        assert max(abs(a - b) for a, b in zip(p0.as_tuple(), y0.as_tuple())) < 1e-8
        pT = plan.point_at(0.35)
        assert abs(pT.ddz + G) < 1e-8

    def test_null_space_perturbations_cannot_improve(self):
        cx, cz, point = feasible_reference(3, 0.3, 9)
        ts = np.linspace(0, 0.3, 201)
        ref = np.array([point(t).as_tuple() for t in ts])
        yT = point(0.3)
        y_d = FlatPoint(yT.x + 0.1, yT.dx, 0.0, yT.z, yT.dz + 0.5, -G)
        qp = assemble_qp(point(0.0), ref, y_d, 0.3, W_TRACK, W_TERM, 9, G)
        g, value = solve_qp(qp)
        _, R = np.linalg.qr(qp.Aeq.T, mode="complete")
        Q, _ = np.linalg.qr(qp.Aeq.T, mode="complete")
        Z = Q[:, qp.Aeq.shape[0]:]
        rng = np.random.default_rng(11)
        for _ in range(40):
            pert = Z @ rng.normal(size=Z.shape[1]) * 1e-2
            assert qp.objective(g + pert) >= value - 1e-12

    def test_plan_eval_consistency(self):
        plan = PolyPlan(coeffs_x=(1.0, 2.0, 3.0), coeffs_z=(0.5, 0.0, -4.905), duration=1.0, cost=0.0)
        pt = plan.point_at(2.0)
        assert pt.x == pytest.approx(1 + 4 + 12)
        assert pt.dx == pytest.approx(2 + 12)
        assert pt.ddx == pytest.approx(6.0)
        assert pt.dz == pytest.approx(-4.905 * 2 * 2)

import numpy as np
import pytest

from qradmm import (
    PenaltySpec,
    PolyhedronProjector,
    project_nonneg,
    project_polyhedron,
    prox_check,
    prox_penalty,
    soft_threshold,
)
from qradmm.exceptions import (
    ConcavityTooLarge,
    InfeasiblePolyhedron,
    ProjectionNotConverged,
)
from qradmm.problem import check_loss, penalty_value

from conftest import grid_argmin, rng


def check_prox_objective(r, v, tau, gamma):
    return np.where(r > 0, tau * r, (tau - 1.0) * r) + gamma / 2 * (v - r) ** 2


def penalty_prox_objective(z, delta, pen, gamma):
    vals = np.array([penalty_value([t], pen) for t in np.atleast_1d(z)])
    return vals + gamma / 2 * (delta - np.atleast_1d(z)) ** 2


class TestProxCheck:
    def test_zero_anchor(self):
        for tau in (0.1, 0.5, 0.9):
            for g in (0.5, 1.0, 4.0):
                assert prox_check(np.zeros(3), tau, g) == pytest.approx(np.zeros(3))

    def test_median_unit_weight(self):
        assert prox_check(np.array([2.0]), 0.5, 1.0)[0] == pytest.approx(1.5)
        oracle = grid_argmin(lambda r: check_prox_objective(r, 2.0, 0.5, 1.0))
        assert oracle == pytest.approx(1.5, abs=1e-3)

    def test_quarter_double_weight(self):
        assert prox_check(np.array([-1.0]), 0.25, 2.0)[0] == pytest.approx(-0.625)
        oracle = grid_argmin(lambda r: check_prox_objective(r, -1.0, 0.25, 2.0))
        assert oracle == pytest.approx(-0.625, abs=1e-3)

    def test_beats_grid_oracle_random(self):
        r = rng(10)
        for _ in range(60):
            v = float(r.uniform(-4, 4))
            tau = float(r.uniform(0.05, 0.95))
            g = float(r.uniform(0.2, 5.0))
            out = float(prox_check(np.array([v]), tau, g)[0])
            xs = np.arange(-5, 5, 1e-3)
            best = np.min(check_prox_objective(xs, v, tau, g))
            assert check_prox_objective(out, v, tau, g) <= best + 1e-6

    def test_nonexpansive(self):
        r = rng(11)
        for _ in range(50):
            a, b = r.uniform(-5, 5, 2)
            tau, g = float(r.uniform(0.1, 0.9)), float(r.uniform(0.3, 3.0))
            pa = prox_check(np.array([a]), tau, g)
            pb = prox_check(np.array([b]), tau, g)
            assert abs(pa - pb) <= abs(a - b) + 1e-14


class TestPenaltyProx:
    def test_lasso_shift(self):
        pen = PenaltySpec("lasso", 1.0)
        assert prox_penalty(np.array([2.0]), pen, 2.0)[0] == pytest.approx(1.5)
        oracle = grid_argmin(
            lambda z: penalty_prox_objective(z, 2.0, pen, 2.0)
        )
        assert oracle == pytest.approx(1.5, abs=1e-3)

    def test_scad_identity_region(self):
        pen = PenaltySpec("scad", 1.0, xi=3.7)
        assert prox_penalty(np.array([10.0]), pen, 1.0)[0] == pytest.approx(10.0)

    def test_mcp_origin(self):
        pen = PenaltySpec("mcp", 1.0, xi=1.0)
        assert prox_penalty(np.array([0.0]), pen, 2.0)[0] == 0.0

    def test_mcp_rescaled_threshold(self):
        pen = PenaltySpec("mcp", 1.0, xi=1.0)
        assert prox_penalty(np.array([1.0]), pen, 2.0)[0] == pytest.approx(1.0)
        oracle = grid_argmin(lambda z: penalty_prox_objective(z, 1.0, pen, 2.0))
        assert oracle == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.parametrize("family,xi", [("scad", 3.7), ("mcp", 2.5)])
    def test_beats_grid_oracle_random(self, family, xi):
        r = rng(12)
        for _ in range(40):
            delta = float(r.uniform(-4.5, 4.5))
            lam = float(r.uniform(0.05, 1.5))
            g = float(r.uniform(0.8, 4.0))
            pen = PenaltySpec(family, lam, xi)
            out = float(prox_penalty(np.array([delta]), pen, g)[0])
            xs = np.arange(-5, 5, 1e-3)
            best = np.min(penalty_prox_objective(xs, delta, pen, g))
            assert penalty_prox_objective(out, delta, pen, g)[0] <= best + 1e-5

    def test_lasso_nonexpansive(self):
        r = rng(13)
        pen = PenaltySpec("lasso", 0.7)
        for _ in range(50):
            a, b = r.uniform(-5, 5, 2)
            g = float(r.uniform(0.3, 3.0))
            pa, pb = prox_penalty(np.array([a]), pen, g), prox_penalty(np.array([b]), pen, g)
            assert abs(pa - pb) <= abs(a - b) + 1e-14

    def test_scad_small_region_equals_lasso(self):
        lam, xi, g = 1.0, 3.7, 1.0
        scad = PenaltySpec("scad", lam, xi)
        lasso = PenaltySpec("lasso", lam)
        # interior of |delta| <= lam + lam/gamma
        for delta in (-1.7, -0.4, 0.9, 1.9):
            assert prox_penalty(np.array([delta]), scad, g)[0] == pytest.approx(
                prox_penalty(np.array([delta]), lasso, g)[0]
            )

    def test_mcp_large_region_identity(self):
        pen = PenaltySpec("mcp", 0.5, xi=2.0)
        for delta in (-3.0, 1.5, 7.0):
            if abs(delta) > 1.0:  # xi * lam = 1
                assert prox_penalty(np.array([delta]), pen, 2.0)[0] == delta

    def test_concavity_guard(self):
        with pytest.raises(ConcavityTooLarge):
            prox_penalty(np.array([1.0]), PenaltySpec("scad", 1.0, xi=1.5), 1.0)
        with pytest.raises(ConcavityTooLarge):
            # xi > 2 required for scad even when 1/gamma + 1 is small
            prox_penalty(np.array([1.0]), PenaltySpec("scad", 1.0, xi=1.9), 100.0)
        with pytest.raises(ConcavityTooLarge):
            prox_penalty(np.array([1.0]), PenaltySpec("mcp", 1.0, xi=0.4), 2.0)

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            soft_threshold(np.array([1.0]), -0.1)


class TestProjections:
    def test_nonneg(self):
        assert project_nonneg(np.array([1.0, -2.0, 0.0])) == pytest.approx(
            np.array([1.0, 0.0, 0.0])
        )
        assert project_nonneg(-np.ones(4)) == pytest.approx(np.zeros(4))
        v = np.array([0.3, 2.0, 5.0])
        assert project_nonneg(v) == pytest.approx(v)

    def test_point_already_inside_is_fixed(self):
        C = np.array([[1.0, 0.0], [0.0, 1.0]])
        d = np.array([-1.0, -1.0])
        E = np.zeros((0, 2))
        v = np.array([0.5, 0.2])
        w = project_polyhedron(v, C, d, E, np.zeros(0), tol=1e-10)
        assert w == pytest.approx(v, abs=1e-8)

    def test_reduces_to_nonneg(self):
        w = project_polyhedron(
            np.array([-1.0, 2.0]), np.eye(2), np.zeros(2), np.zeros((0, 2)), np.zeros(0),
            tol=1e-10,
        )
        assert w == pytest.approx(np.array([0.0, 2.0]), abs=1e-8)

    def test_affine_closed_form(self):
        E = np.array([[1.0, 1.0]])
        f = np.array([1.0])
        w = project_polyhedron(np.zeros(2), np.zeros((0, 2)), np.zeros(0), E, f)
        assert w == pytest.approx(np.array([0.5, 0.5]), abs=1e-12)
        # closed form: v + E'(EE')^{-1}(f - Ev)
        v = np.array([2.0, -1.0])
        expect = v + E.T @ np.linalg.solve(E @ E.T, f - E @ v)
        assert project_polyhedron(v, np.zeros((0, 2)), np.zeros(0), E, f) == pytest.approx(
            expect, abs=1e-12
        )

    def test_random_polyhedra_against_slsqp(self):
        from scipy.optimize import minimize

        r = rng(21)
        for trial in range(8):
            p, q, s = 5, 3, 1
            C = r.standard_normal((q, p))
            E = r.standard_normal((s, p))
            x_feas = r.standard_normal(p)
            d = C @ x_feas - np.abs(r.standard_normal(q))
            f = E @ x_feas
            v = x_feas + 2.0 * r.standard_normal(p)
            w = project_polyhedron(v, C, d, E, f, tol=1e-10, max_iters=200000)
            ref = minimize(
                lambda x: 0.5 * np.sum((x - v) ** 2),
                x_feas,
                jac=lambda x: x - v,
                constraints=[
                    {"type": "ineq", "fun": lambda x: C @ x - d, "jac": lambda x: C},
                    {"type": "eq", "fun": lambda x: E @ x - f, "jac": lambda x: E},
                ],
                method="SLSQP",
                options={"maxiter": 500, "ftol": 1e-14},
            )
            assert np.linalg.norm(w - ref.x) < 1e-5
            assert np.all(C @ w >= d - 1e-8)
            assert np.linalg.norm(E @ w - f, np.inf) <= 1e-8

    def test_feasibility_of_output(self):
        r = rng(22)
        proj = None
        for _ in range(5):
            p, q, s = 4, 3, 1
            C = r.standard_normal((q, p))
            E = r.standard_normal((s, p))
            x0 = r.standard_normal(p)
            d = C @ x0 - np.abs(r.standard_normal(q))
            f = E @ x0
            proj = PolyhedronProjector(C, d, E, f)
            tol = 1e-9
            w = proj(r.standard_normal(p) * 3, tol=tol, max_iters=100000)
            assert np.all(C @ w >= d - tol)
            assert np.linalg.norm(E @ w - f, np.inf) <= tol

    def test_infeasible_detected(self):
        # w >= 1 and w = 0 cannot both hold
        with pytest.raises(InfeasiblePolyhedron):
            project_polyhedron(
                np.array([0.5]),
                np.array([[1.0]]),
                np.array([1.0]),
                np.array([[1.0]]),
                np.array([0.0]),
                tol=1e-8,
                max_iters=100000,
            )

    def test_inconsistent_equalities_detected(self):
        E = np.array([[1.0, 0.0], [1.0, 0.0]])
        f = np.array([0.0, 1.0])
        with pytest.raises(InfeasiblePolyhedron):
            project_polyhedron(np.zeros(2), np.zeros((0, 2)), np.zeros(0), E, f)

    def test_not_converged_carries_residual(self):
        r = rng(23)
        C = r.standard_normal((3, 4))
        x0 = r.standard_normal(4)
        d = C @ x0 - np.abs(r.standard_normal(3))
        with pytest.raises(ProjectionNotConverged) as ei:
            project_polyhedron(
                x0 + 10 * r.standard_normal(4), C, d, np.zeros((0, 4)), np.zeros(0),
                tol=1e-14, max_iters=3,
            )
        assert np.isfinite(ei.value.kkt_residual)

    def test_empty_constraints_identity(self):
        v = np.array([1.0, -2.0])
        out = project_polyhedron(v, np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2)), np.zeros(0))
        assert out == pytest.approx(v)

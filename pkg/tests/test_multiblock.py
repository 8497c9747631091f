import numpy as np
import pytest

from qradmm import (
    BlockSpec,
    IterateState,
    MultiBlockProblem,
    SolverConfig,
    find_valid_partition,
    residuals_4block,
    run_extended_admm,
    verify_partition,
)
from qradmm.exceptions import PartitionNotFound
from qradmm.multiblock import DenseBlock, SelectorBlock

from conftest import rng


def col(h, i):
    """h-row single-column matrix e_i."""
    out = np.zeros((h, 1))
    out[i, 0] = 1.0
    return out


def blocks_from(mats):
    return [BlockSpec(A, prox=None, label=f"b{i}") for i, A in enumerate(mats)]


class TestVerifyPartition:
    def test_case1_structure(self):
        # blocks 2..4 occupy disjoint rows; block 1 dense
        r = rng(1)
        h = 6
        A1 = r.standard_normal((h, 2))
        A2 = np.vstack([np.eye(2), np.zeros((4, 2))])
        A3 = np.vstack([np.zeros((2, 2)), np.eye(2), np.zeros((2, 2))])
        A4 = np.vstack([np.zeros((4, 2)), np.eye(2)])
        assert verify_partition(blocks_from([A1, A2, A3, A4]), 1)

    def test_case2_structure(self):
        h = 4
        A1, A2 = col(h, 0), col(h, 2)  # A1'A2 = 0
        A3, A4 = col(h, 1), col(h, 3)  # A3'A4 = 0
        assert verify_partition(blocks_from([A1, A2, A3, A4]), 2)

    def test_case3_structure(self):
        h = 4
        A1, A2, A3 = col(h, 0), col(h, 1), col(h, 2)
        A4 = np.ones((h, 1))
        assert verify_partition(blocks_from([A1, A2, A3, A4]), 3)

    def test_two_blocks_any_split(self):
        bl = blocks_from([np.eye(2), np.eye(2)])
        assert verify_partition(bl, 1)  # singleton groups, nothing to test

    def test_identical_identities_fail_when_grouped(self):
        bl = blocks_from([np.eye(2), np.eye(2), np.eye(2)])
        assert not verify_partition(bl, 2)  # A1'A2 = I inside group one

    def test_threshold_on_near_zero(self):
        A1 = np.array([[1.0], [0.0]])
        barely = np.array([[1e-11], [1.0]])  # above the numeric-zero cutoff
        under = np.array([[1e-13], [1.0]])  # below it
        assert verify_partition(blocks_from([A1, barely, col(2, 1)]), 2) is False
        assert verify_partition(blocks_from([A1, under, col(2, 1)]), 2) is True

    def test_selector_blocks_supported(self):
        h = 6
        bl = [
            BlockSpec(rng(0).standard_normal((h, 3)), None),
            BlockSpec(SelectorBlock(h, 0, 2), None),
            BlockSpec(SelectorBlock(h, 2, 2, -1.0), None),
            BlockSpec(SelectorBlock(h, 4, 2, -1.0), None),
        ]
        assert verify_partition(bl, 1)
        assert not verify_partition([bl[1], bl[1], bl[2]], 2)


class TestFindPartition:
    def test_case2_only_structure_gives_two(self):
        h = 4
        A1 = col(h, 0)
        A2 = col(h, 2)
        A3 = col(h, 0) + col(h, 2)  # overlaps A1 and A2
        A4 = col(h, 3)
        bl = blocks_from([A1, A2, A3, A4])
        assert not verify_partition(bl, 1)
        assert find_valid_partition(bl) == 2

    def test_all_orthogonal_gives_one(self):
        h = 4
        bl = blocks_from([col(h, 0), col(h, 1), col(h, 2), col(h, 3)])
        assert find_valid_partition(bl) == 1

    def test_no_partition_gives_none(self):
        one = np.ones((3, 1))
        bl = blocks_from([one, one, one])
        assert find_valid_partition(bl) is None


def quad_prox(target, A_diag_sign=1.0):
    """argmin 1/2 (x - target)^2 + gamma/2 (sign*x - v)^2, scalar blocks."""

    def prox(v, gamma):
        return (target + gamma * A_diag_sign * v) / (1.0 + gamma)

    return prox


def consensus_toy(gamma=1.0):
    b1 = BlockSpec(np.array([[1.0]]), quad_prox(1.0, 1.0), "x1", np.zeros(1))
    b2 = BlockSpec(np.array([[-1.0]]), quad_prox(3.0, -1.0), "x2", np.zeros(1))
    return MultiBlockProblem([b1, b2], c=np.zeros(1), gamma=gamma)


class TestEngine:
    def test_two_block_toy_converges_to_two(self):
        mp = consensus_toy()
        cfg = SolverConfig(eps_abs=1e-10, eps_rel=1e-10, max_iters=20000)
        rep = run_extended_admm(mp, cfg)
        assert rep.converged
        assert rep.xs[0][0] == pytest.approx(2.0, abs=1e-7)
        assert rep.xs[1][0] == pytest.approx(2.0, abs=1e-7)

    def test_feasible_start_converges_in_one_check(self):
        h = 2
        A1 = np.array([[1.0], [0.0]])
        A2 = np.array([[0.0], [1.0]])

        def ls_prox(A):
            def prox(v, gamma):
                return np.linalg.lstsq(A, v, rcond=None)[0]

            return prox

        x1, x2 = np.array([2.0]), np.array([3.0])
        c = A1 @ x1 + A2 @ x2
        mp = MultiBlockProblem(
            [BlockSpec(A1, ls_prox(A1), x0=x1), BlockSpec(A2, ls_prox(A2), x0=x2)],
            c=c,
        )
        rep = run_extended_admm(mp, SolverConfig())
        assert rep.converged and rep.iterations == 1
        assert rep.r_pri_trace[-1] == 0.0

    def test_dual_update_identity(self):
        mp = consensus_toy()
        seen = []

        def watch(xs, Ax, u):
            seen.append((float(sum(Ax)[0] - mp.c[0]), float(u[0])))
            return 0.0

        run_extended_admm(
            mp, SolverConfig(eps_abs=1e-12, eps_rel=1e-12, max_iters=30),
            monitors={"watch": watch},
        )
        u_prev = 0.0
        for r_pri, u_now in seen:
            assert u_now == pytest.approx(u_prev + r_pri, abs=1e-15)
            u_prev = u_now

    def test_matches_classic_two_block_scheme(self):
        gamma = 1.3
        mp = consensus_toy(gamma)
        xs_trace = []
        run_extended_admm(
            mp,
            SolverConfig(gamma=gamma, eps_abs=1e-30, eps_rel=1e-30, max_iters=50),
            monitors={"snap": lambda xs, Ax, u: xs_trace.append(
                (xs[0][0], xs[1][0], u[0])
            ) or 0.0},
        )
        # independent classic alternating scheme: x1-min, x2-min, dual step
        x1 = x2 = u = 0.0
        for k in range(50):
            x1 = (1.0 + gamma * (x2 - u)) / (1.0 + gamma)
            x2 = (3.0 + gamma * (x1 + u)) / (1.0 + gamma)
            u = u + (x1 - x2)
            assert abs(xs_trace[k][0] - x1) <= 1e-12
            assert abs(xs_trace[k][1] - x2) <= 1e-12
            assert abs(xs_trace[k][2] - u) <= 1e-12

    def test_refuses_unverified_partition(self):
        one = np.ones((2, 1))

        def id_prox(v, gamma):
            return np.array([v.mean()])

        bl = [BlockSpec(one, id_prox), BlockSpec(one, id_prox), BlockSpec(one, id_prox)]
        mp = MultiBlockProblem(bl, c=np.ones(2))
        with pytest.raises(PartitionNotFound):
            run_extended_admm(mp, SolverConfig())

    def test_override_runs_and_reports_honestly(self):
        r = rng(5)
        h = 4
        mats = [r.standard_normal((h, 2)) for _ in range(4)]

        def ls_prox(A):
            G = A.T @ A + 1e-9 * np.eye(A.shape[1])

            def prox(v, gamma):
                return np.linalg.solve(G, A.T @ v)

            return prox

        bl = [BlockSpec(A, ls_prox(A)) for A in mats]
        mp = MultiBlockProblem(bl, c=r.standard_normal(h))
        assert find_valid_partition(bl) is None
        rep = run_extended_admm(
            mp, SolverConfig(max_iters=40), allow_unverified=True
        )
        assert rep.iterations >= 1
        assert isinstance(rep.converged, bool)
        assert len(rep.r_pri_trace) == rep.iterations

    def test_kkt_residual_at_convergence(self):
        gamma = 1.0
        cfg = SolverConfig(gamma=gamma, eps_abs=1e-8, eps_rel=1e-8, max_iters=50000)
        mp = consensus_toy(gamma)
        rep = run_extended_admm(mp, cfg)
        assert rep.converged
        x1, x2, u = rep.xs[0][0], rep.xs[1][0], rep.u[0]
        # smooth blocks: gradient + gamma * A' u should nearly vanish
        scale = max(abs(u) * gamma, 1.0)
        bound = 10 * (cfg.eps_abs + cfg.eps_rel * scale)
        assert abs((x1 - 1.0) + gamma * u) <= bound
        assert abs((x2 - 3.0) - gamma * u) <= bound

    def test_traces_have_iteration_length(self):
        mp = consensus_toy()
        rep = run_extended_admm(mp, SolverConfig(max_iters=17, eps_abs=1e-30, eps_rel=1e-30))
        assert not rep.converged
        assert rep.iterations == 17
        assert len(rep.r_pri_trace) == 17
        assert rep.s_trace.shape == (17, 1)


class TestResiduals4Block:
    def _random_setup(self, seed):
        r = rng(seed)
        h = 7
        sizes = [3, 2, 2, 1]
        mats = [r.standard_normal((h, a)) for a in sizes]
        blocks = [BlockSpec(A, None) for A in mats]
        mp = MultiBlockProblem(blocks, c=r.standard_normal(h), gamma=float(r.uniform(0.5, 2)))
        xs = [r.standard_normal(a) for a in sizes]
        prev = [r.standard_normal(a) for a in sizes]
        u = r.standard_normal(h)
        return mp, mats, xs, prev, u

    def test_matches_direct_formulas(self):
        for seed in range(10):
            mp, A, xs, prev, u = self._random_setup(seed)
            g = mp.gamma
            rep = residuals_4block(IterateState(xs, u), IterateState(prev, u), mp)
            d = [xs[i] - prev[i] for i in range(4)]
            s1 = g * A[2].T @ (A[3] @ d[3])
            s2 = g * (A[1].T @ (A[2] @ d[2]) + A[1].T @ (A[3] @ d[3]))
            s3 = g * (
                A[0].T @ (A[1] @ d[1])
                + A[0].T @ (A[2] @ d[2])
                + A[0].T @ (A[3] @ d[3])
            )
            r_pri = sum(A[i] @ xs[i] for i in range(4)) - mp.c
            assert np.allclose(rep.r_pri, r_pri, atol=1e-12)
            assert np.allclose(rep.s_list[0], s1, atol=1e-12)
            assert np.allclose(rep.s_list[1], s2, atol=1e-12)
            assert np.allclose(rep.s_list[2], s3, atol=1e-12)

    def test_tolerances_match_printed_rule(self):
        mp, A, xs, prev, u = self._random_setup(3)
        eps_abs, eps_rel = 1e-3, 1e-2
        rep = residuals_4block(
            IterateState(xs, u), IterateState(prev, u), mp, eps_abs, eps_rel
        )
        h = mp.c.shape[0]
        scale = max(
            [np.linalg.norm(A[i] @ xs[i]) for i in range(4)] + [np.linalg.norm(mp.c)]
        )
        assert rep.eps_pri == pytest.approx(np.sqrt(h) * eps_abs + eps_rel * scale)
        # eps_dual_list k-th entry belongs to block N-1-k (reverse order)
        for k, bi in enumerate((2, 1, 0)):
            expect = np.sqrt(A[bi].shape[1]) * eps_abs + mp.gamma * eps_rel * np.linalg.norm(
                A[bi].T @ u
            )
            assert rep.eps_dual_list[k] == pytest.approx(expect)

    def test_unchanged_state_zero_duals(self):
        mp, A, xs, prev, u = self._random_setup(4)
        rep = residuals_4block(IterateState(xs, u), IterateState(xs, u), mp)
        for s in rep.s_list:
            assert np.allclose(s, 0.0)

    def test_feasible_state_zero_primal(self):
        mp, A, xs, prev, u = self._random_setup(5)
        mp.c = sum(A[i] @ xs[i] for i in range(4))
        rep = residuals_4block(IterateState(xs, u), IterateState(prev, u), mp)
        assert np.allclose(rep.r_pri, 0.0, atol=1e-12)

"""Consensus ADMM over row-partitioned data.

Each shard owns a local coefficient vector tied to a shared global one;
fit residuals stay local while the penalty copy, the inequality slack and
the consensus coefficients are updated globally from shard averages at a
barrier.  Only the lasso penalty is supported: the averaged
soft-threshold update for the global penalty copy is exact for the l1
norm and has no analogue for the folded-concave penalties.

Wall-clock numbers come in two flavors.  ``wall_time`` is the in-process
elapsed time.  ``distributed_time`` models one machine per shard: per
iteration it charges the *maximum* per-shard local time plus the
coordinator time, which is what an actual cluster would observe and what
the partition-count sweeps report.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .exceptions import TooManyPartitions, UnsupportedPenalty
from .multiblock import SolveReport
from .problem import LASSO, check_loss, penalty_value
from .prox import prox_check, soft_threshold
from .solvers import _factor_spd


@dataclass
class PartitionedDataset:
    """Row shards of (y_m, X_m) plus the shared constraint geometry."""

    shards: list
    D: np.ndarray
    C: np.ndarray
    d: np.ndarray
    E: np.ndarray
    f: np.ndarray
    tau: float

    @property
    def M(self):
        return len(self.shards)

    @property
    def p(self):
        return self.shards[0][1].shape[1]

    @property
    def n(self):
        return sum(len(y_m) for y_m, _ in self.shards)


@dataclass
class WorkerState:
    """One shard's live variables between barriers."""

    beta_m: np.ndarray
    r_m: np.ndarray
    u_m1: np.ndarray
    u_m2: np.ndarray
    u_m3: np.ndarray
    u_m4: np.ndarray
    u_m5: np.ndarray


@dataclass
class GlobalState:
    z: np.ndarray
    w: np.ndarray
    beta: np.ndarray


@dataclass
class AggregatedResiduals:
    r_pri: float
    s: float
    pass_pri: bool = None
    pass_dual: bool = None


def aggregate_residuals(worker_reports, eps_pri=None, eps_dual=None):
    """Root-sum-of-squares aggregation of per-shard residuals.

    ``worker_reports`` is a sequence of objects (or pairs) carrying the
    per-shard primal residual vector and dual residual vector.  When
    tolerances are given the pass/fail flags are filled in.
    """
    r_sq = 0.0
    s_sq = 0.0
    for wr in worker_reports:
        r_vec, s_vec = (wr.r_pri, wr.s) if hasattr(wr, "r_pri") else wr
        r_sq += float(np.dot(r_vec, r_vec))
        s_sq += float(np.dot(s_vec, s_vec))
    agg = AggregatedResiduals(r_pri=np.sqrt(r_sq), s=np.sqrt(s_sq))
    if eps_pri is not None:
        agg.pass_pri = agg.r_pri <= eps_pri
    if eps_dual is not None:
        agg.pass_dual = agg.s <= eps_dual
    return agg


@dataclass
class ShardResidual:
    r_pri: np.ndarray
    s: np.ndarray


def partition(y, X, M, seed, *, D=None, C=None, d=None, E=None, f=None, tau=0.5):
    """Randomly split the rows into M shards.

    The permutation is drawn from a counter-based generator keyed on
    ``seed``; the first M-1 shards have floor(n/M) rows and the last
    takes the remainder.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if M < 1:
        raise ValueError("M must be >= 1")
    if M > n:
        raise TooManyPartitions(f"M={M} shards for n={n} observations")
    rng = np.random.Generator(np.random.Philox(seed))
    perm = rng.permutation(n)
    base = n // M
    bounds = [base * k for k in range(M)] + [n]
    shards = []
    for k in range(M):
        idx = perm[bounds[k] : bounds[k + 1]]
        shards.append((y[idx].copy(), X[idx].copy()))
    if D is None:
        D = np.eye(p)
    C = np.zeros((0, p)) if C is None else np.atleast_2d(np.asarray(C, dtype=float))
    E = np.zeros((0, p)) if E is None else np.atleast_2d(np.asarray(E, dtype=float))
    d = np.zeros(0) if d is None else np.asarray(d, dtype=float).ravel()
    f = np.zeros(0) if f is None else np.asarray(f, dtype=float).ravel()
    return PartitionedDataset(
        shards=shards, D=np.asarray(D, dtype=float), C=C, d=d, E=E, f=f, tau=tau
    )


def partition_problem(p, M, seed):
    """Shard an existing problem instance."""
    return partition(
        p.y, p.X, M, seed, D=p.D, C=p.C, d=p.d, E=p.E, f=p.f, tau=p.tau
    )


def solve_parallel(ds, pen, cfg, threads=1):
    """Consensus fit over the shards of ``ds`` with the lasso penalty.

    Per iteration: each shard updates its coefficients and fit residuals
    from the latest globals; at the barrier the coordinator refreshes the
    penalty copy (averaged soft threshold), the inequality slack (averaged
    clamp) and the consensus coefficients (shard mean); the shards then
    advance their scaled duals.  Shard contributions are always combined
    in shard-index order, so the iterate sequence is identical no matter
    how many worker threads run the local phases.
    """
    if pen.family != LASSO:
        raise UnsupportedPenalty(
            "parallel consensus updates are derived for the lasso penalty only"
        )
    D, C, E = ds.D, ds.C, ds.E
    d, f, tau = ds.d, ds.f, ds.tau
    M, p = ds.M, ds.p
    m, q, s = D.shape[0], C.shape[0], E.shape[0]
    n = ds.n
    gamma, lam = cfg.gamma, pen.lam

    shared_gram = D.T @ D + C.T @ C + E.T @ E + np.eye(p)
    factors = [
        _factor_spd(X_m.T @ X_m + shared_gram) for _, X_m in ds.shards
    ]

    workers = []
    beta_stack = np.empty((M, p))
    for k, (y_m, X_m) in enumerate(ds.shards):
        b0 = np.linalg.lstsq(X_m, y_m, rcond=None)[0]
        beta_stack[k] = b0
        workers.append(
            WorkerState(
                beta_m=b0,
                r_m=y_m - X_m @ b0,
                u_m1=np.zeros(len(y_m)),
                u_m2=np.zeros(m),
                u_m3=np.zeros(q),
                u_m4=np.zeros(s),
                u_m5=np.zeros(p),
            )
        )
    beta = beta_stack.mean(axis=0)
    g = GlobalState(z=D @ beta, w=C @ beta - d, beta=beta)

    # constant pieces of the tolerance rule
    b_sq = sum(float(y_m @ y_m) for y_m, _ in ds.shards) + M * (
        float(d @ d) + float(f @ f)
    )
    dim_pri = np.sqrt(n + M * (m + q + s + p))
    dim_dual = np.sqrt(M * p)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def local_phase(k):
        t0 = time.perf_counter()
        y_m, X_m = ds.shards[k]
        ws = workers[k]
        rhs = (
            X_m.T @ (y_m - ws.r_m - ws.u_m1)
            + D.T @ (g.z - ws.u_m2)
            + C.T @ (g.w + d - ws.u_m3)
            + E.T @ (f - ws.u_m4)
            + (g.beta - ws.u_m5)
        )
        ws.beta_m = sla.cho_solve(factors[k], rhs)
        Xb = X_m @ ws.beta_m
        ws.r_m = prox_check(y_m - Xb - ws.u_m1, tau, gamma)
        # shard contributions consumed by the coordinator
        out = (
            D @ ws.beta_m + ws.u_m2,
            (C @ ws.beta_m - d + ws.u_m3) if q else np.zeros(0),
            ws.beta_m + ws.u_m5,
            Xb,
        )
        return out, time.perf_counter() - t0

    def dual_phase(k, z_prev, w_prev, beta_prev, Xb):
        t0 = time.perf_counter()
        y_m, X_m = ds.shards[k]
        ws = workers[k]
        r1 = Xb + ws.r_m - y_m
        r2 = D @ ws.beta_m - g.z
        r3 = (C @ ws.beta_m - g.w - d) if q else np.zeros(0)
        r4 = (E @ ws.beta_m - f) if s else np.zeros(0)
        r5 = ws.beta_m - g.beta
        ws.u_m1 = ws.u_m1 + r1
        ws.u_m2 = ws.u_m2 + r2
        ws.u_m3 = ws.u_m3 + r3
        ws.u_m4 = ws.u_m4 + r4
        ws.u_m5 = ws.u_m5 + r5
        r_pri_m = np.concatenate([r1, r2, r3, r4, r5])
        s_m = gamma * (
            X_m.T @ (ws.r_m - _prev_r[k])
            - D.T @ (g.z - z_prev)
            - C.T @ (g.w - w_prev)
            - (g.beta - beta_prev)
        )
        # scale pieces for the tolerance rule
        A1b_sq = (
            float(Xb @ Xb)
            + float(r2 @ r2 + 2 * r2 @ g.z + g.z @ g.z)  # ||D beta_m||^2
            + (float(np.sum((C @ ws.beta_m) ** 2)) if q else 0.0)
            + (float(np.sum((E @ ws.beta_m) ** 2)) if s else 0.0)
            + float(ws.beta_m @ ws.beta_m)
        )
        A1Tu = (
            X_m.T @ ws.u_m1
            + D.T @ ws.u_m2
            + C.T @ ws.u_m3
            + E.T @ ws.u_m4
            + ws.u_m5
        )
        pieces = (
            float(r_pri_m @ r_pri_m),
            float(s_m @ s_m),
            A1b_sq,
            float(ws.r_m @ ws.r_m),
            float(A1Tu @ A1Tu),
        )
        return pieces, time.perf_counter() - t0

    def run_over_shards(fn, *args):
        if pool is None:
            return [fn(k, *args) for k in range(M)]
        futs = [pool.submit(fn, k, *args) for k in range(M)]
        return [ft.result() for ft in futs]

    r_trace, s_trace, obj_trace, eq_trace = [], [], [], []
    dist_time = 0.0
    converged = False
    _prev_r = [ws.r_m for ws in workers]
    it = 0
    t_start = time.perf_counter()
    for it in range(1, cfg.max_iters + 1):
        _prev_r = [ws.r_m for ws in workers]
        z_prev, w_prev, beta_prev = g.z, g.w, g.beta

        results = run_over_shards(local_phase)
        dist_time += max(t for _, t in results)
        t0 = time.perf_counter()
        zx = np.stack([out[0] for out, _ in results])
        wx = np.stack([out[1] for out, _ in results]) if q else np.zeros((M, 0))
        bx = np.stack([out[2] for out, _ in results])
        g.z = soft_threshold(zx.mean(axis=0), lam / (gamma * M))
        if q:
            g.w = np.maximum(wx.mean(axis=0), 0.0)
        g.beta = bx.mean(axis=0)
        t_coord = time.perf_counter() - t0

        Xbs = [out[3] for out, _ in results]
        duals = run_over_shards(
            lambda k: dual_phase(k, z_prev, w_prev, beta_prev, Xbs[k])
        )
        dist_time += t_coord + max(t for _, t in duals)

        t0 = time.perf_counter()
        sums = np.sum(np.array([pc for pc, _ in duals]), axis=0)
        r_pri = float(np.sqrt(sums[0]))
        s_norm = float(np.sqrt(sums[1]))
        scale = max(
            np.sqrt(sums[2]),
            np.sqrt(sums[3]),
            np.sqrt(M) * np.linalg.norm(g.z),
            np.sqrt(M) * np.linalg.norm(g.w) if q else 0.0,
            np.sqrt(M) * np.linalg.norm(g.beta),
            np.sqrt(b_sq),
        )
        eps_pri = dim_pri * cfg.eps_abs + cfg.eps_rel * scale
        eps_dual = dim_dual * cfg.eps_abs + cfg.eps_rel * gamma * np.sqrt(sums[4])

        obj = sum(
            check_loss(y_m - X_m @ g.beta, tau) for y_m, X_m in ds.shards
        ) + penalty_value(D @ g.beta, pen)
        eq = float(np.abs(E @ g.beta - f).sum()) if s else 0.0
        r_trace.append(r_pri)
        s_trace.append(s_norm)
        obj_trace.append(obj)
        eq_trace.append(eq)
        dist_time += time.perf_counter() - t0
        if r_pri <= eps_pri and s_norm <= eps_dual:
            converged = True
            break
    wall = time.perf_counter() - t_start
    if pool is not None:
        pool.shutdown()

    rep = SolveReport(
        xs=[g.beta],
        u=None,
        beta_hat=g.beta,
        iterations=it,
        converged=converged,
        r_pri_trace=np.asarray(r_trace),
        s_trace=np.asarray(s_trace),
        objective_trace=np.asarray(obj_trace),
        eq_violation_trace=np.asarray(eq_trace),
        wall_time=wall,
        r_pri_norm=r_trace[-1] if r_trace else np.inf,
        s_norms=np.array([s_trace[-1] if s_trace else np.inf]),
        eps_pri=eps_pri if r_trace else np.nan,
        eps_dual=np.array([eps_dual]) if r_trace else None,
    )
    rep.extras["distributed_time"] = dist_time
    rep.extras["workers"] = workers
    rep.extras["global_state"] = g
    rep.extras["beta_m_stack"] = np.stack([ws.beta_m for ws in workers])
    return rep

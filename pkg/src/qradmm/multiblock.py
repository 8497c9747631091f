"""Generic N-block ADMM engine.

The engine minimizes ``sum_l f_l(x_l)`` subject to ``sum_l A_l x_l = c``
by a Gauss-Seidel sweep over the blocks followed by a scaled dual ascent
step.  Each block supplies its own subproblem solver: a callable mapping
an anchor vector ``v`` to ``argmin_x f_l(x) + (gamma/2) ||A_l x - v||^2``.

The direct extension of the two-block scheme to N blocks is convergent
when the blocks can be split into two groups whose coefficient matrices
are mutually orthogonal within each group; :func:`verify_partition`
checks that condition and :func:`run_extended_admm` refuses to run
without it unless explicitly overridden.

Coefficient matrices may be dense arrays or the light-weight
:class:`SelectorBlock` (a signed identity sitting at a row offset inside
the coupling rows), which is what the concrete regression formulations
use for their copy blocks.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import PartitionNotFound

ORTHO_TOL = 1e-12  # entrywise |A_i' A_j| below this counts as zero


class _Transposed:
    """Adapter so ``op.T @ v`` works on the block operators."""

    def __init__(self, op):
        self._op = op

    def __matmul__(self, v):
        return self._op.rmv(v)


class DenseBlock:
    """Plain dense coefficient matrix."""

    def __init__(self, arr):
        self.arr = np.asarray(arr, dtype=float)
        if self.arr.ndim != 2:
            raise ValueError("block matrix must be 2-d")

    @property
    def shape(self):
        return self.arr.shape

    @property
    def T(self):
        return _Transposed(self)

    def __matmul__(self, x):
        return self.arr @ x

    def rmv(self, v):
        return self.arr.T @ v

    def toarray(self):
        return self.arr


class SelectorBlock:
    """``sign * identity`` occupying rows [offset, offset+size) of an
    h-row coupling stack; zero elsewhere."""

    def __init__(self, h, offset, size, sign=1.0):
        if offset < 0 or offset + size > h:
            raise ValueError("selector rows out of range")
        self.h = h
        self.offset = offset
        self.size = size
        self.sign = float(sign)

    @property
    def shape(self):
        return (self.h, self.size)

    @property
    def T(self):
        return _Transposed(self)

    def __matmul__(self, x):
        out = np.zeros(self.h)
        out[self.offset : self.offset + self.size] = self.sign * x
        return out

    def rmv(self, v):
        return self.sign * v[self.offset : self.offset + self.size]

    def toarray(self):
        out = np.zeros(self.shape)
        idx = np.arange(self.size)
        out[self.offset + idx, idx] = self.sign
        return out


def as_block_operator(A):
    if isinstance(A, (DenseBlock, SelectorBlock)):
        return A
    if sp.issparse(A):
        return DenseBlock(A.toarray())
    return DenseBlock(A)


def _gram_max_abs(Ai, Aj):
    """max |entry| of Ai' Aj without materializing it for selector pairs."""
    if isinstance(Ai, SelectorBlock) and isinstance(Aj, SelectorBlock):
        lo = max(Ai.offset, Aj.offset)
        hi = min(Ai.offset + Ai.size, Aj.offset + Aj.size)
        return 0.0 if hi <= lo else abs(Ai.sign * Aj.sign)
    if isinstance(Ai, SelectorBlock):
        sub = Aj.arr[Ai.offset : Ai.offset + Ai.size, :]
        return 0.0 if sub.size == 0 else float(np.max(np.abs(sub)))
    if isinstance(Aj, SelectorBlock):
        sub = Ai.arr[Aj.offset : Aj.offset + Aj.size, :]
        return 0.0 if sub.size == 0 else float(np.max(np.abs(sub)))
    G = Ai.arr.T @ Aj.arr
    return 0.0 if G.size == 0 else float(np.max(np.abs(G)))


@dataclass
class BlockSpec:
    """One variable block: coefficient matrix, subproblem solver, and
    initial value.

    ``A`` may be a dense ndarray, a scipy.sparse matrix, or one of the
    block operators above; all blocks of one problem must share the row
    count.  ``prox(v, gamma)`` must return the argmin of
    ``f_l(x) + (gamma/2)||A x - v||^2``.
    """

    A: object
    prox: object
    label: str = ""
    x0: np.ndarray = None

    def __post_init__(self):
        self.A = as_block_operator(self.A)

    @property
    def shape(self):
        return self.A.shape


@dataclass
class MultiBlockProblem:
    blocks: list
    c: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        if len(self.blocks) < 2:
            raise ValueError("need at least two blocks")
        h = self.blocks[0].shape[0]
        for b in self.blocks:
            if b.shape[0] != h:
                raise ValueError("all block matrices must share the row count")
        self.c = np.asarray(self.c, dtype=float).ravel()
        if self.c.shape[0] != h:
            raise ValueError("c length must equal the block row count")


@dataclass
class ResidualReport:
    """Primal residual, the per-block dual residuals, and their tolerances.

    ``s_list[i]`` is the (i+1)-th dual residual in reverse block order:
    s_1 couples the last two blocks, s_{N-1} belongs to the first block
    and aggregates every later block's change.
    """

    r_pri: np.ndarray
    s_list: list
    eps_pri: float
    eps_dual_list: list


@dataclass
class IterateState:
    xs: list
    u: np.ndarray


@dataclass
class SolveReport:
    """Result of one solve: final variables, traces, and convergence flag.

    ``s_trace`` has one column per dual residual (reverse block order, so
    the last column is the first block's aggregated residual; for the
    regression solvers all earlier columns are identically zero and the
    last column is the single combined dual residual used to stop).
    """

    xs: list
    u: np.ndarray
    beta_hat: np.ndarray
    iterations: int
    converged: bool
    r_pri_trace: np.ndarray
    s_trace: np.ndarray
    objective_trace: np.ndarray = None
    eq_violation_trace: np.ndarray = None
    wall_time: float = 0.0
    r_pri_norm: float = np.inf
    s_norms: np.ndarray = None
    eps_pri: float = np.nan
    eps_dual: np.ndarray = None
    extras: dict = field(default_factory=dict)


def verify_partition(blocks, M):
    """True iff splitting the blocks after index ``M`` (1-based count of
    the first group) leaves each group with mutually orthogonal
    coefficient matrices."""
    N = len(blocks)
    if not (1 <= M < N):
        raise ValueError(f"split index must satisfy 1 <= M < N, got M={M}, N={N}")
    ops = [b.A for b in blocks]
    for grp in (range(0, M), range(M, N)):
        idx = list(grp)
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                if _gram_max_abs(ops[idx[a]], ops[idx[b]]) > ORTHO_TOL:
                    return False
    return True


def find_valid_partition(blocks):
    """Smallest split index with :func:`verify_partition` true, else None."""
    for M in range(1, len(blocks)):
        if verify_partition(blocks, M):
            return M
    return None


def _nrm(v):
    return math.sqrt(float(v @ v))


def _dual_residuals(blocks, xs, prev_xs, gamma):
    """Dual residual vectors s_1..s_{N-1} (reverse block order).

    s_i = gamma * A_{N-i}' * sum_{j > N-i} A_j (x_j - x_j_prev)
    """
    N = len(blocks)
    s_rev = []
    suffix = blocks[-1].A @ (xs[-1] - prev_xs[-1])
    for i in range(N - 2, -1, -1):
        s_rev.append(gamma * blocks[i].A.rmv(suffix))
        if i > 0:
            suffix = suffix + blocks[i].A @ (xs[i] - prev_xs[i])
    return s_rev


def _tolerances(blocks, Ax, c_norm, u, gamma, eps_abs, eps_rel, sqrt_h, sqrt_a):
    scale = c_norm
    for a in Ax:
        nv = _nrm(a)
        if nv > scale:
            scale = nv
    eps_pri = sqrt_h * eps_abs + eps_rel * scale
    eps_dual = [
        sqrt_a[i] * eps_abs + gamma * eps_rel * _nrm(blocks[i].A.rmv(u))
        for i in range(len(blocks) - 2, -1, -1)
    ]
    return eps_pri, eps_dual


def residuals_4block(state, prev_state, mp, eps_abs=1e-3, eps_rel=1e-3):
    """Residuals and tolerances for one iteration of a 4-block problem.

    ``state`` and ``prev_state`` are :class:`IterateState` values from
    consecutive iterations; ``state.u`` must be the dual after its update.
    """
    if len(mp.blocks) != 4:
        raise ValueError("residuals_4block requires exactly four blocks")
    Ax = [b.A @ x for b, x in zip(mp.blocks, state.xs)]
    r_pri = sum(Ax) - mp.c
    s_list = _dual_residuals(mp.blocks, state.xs, prev_state.xs, mp.gamma)
    sqrt_a = [np.sqrt(b.shape[1]) for b in mp.blocks]
    eps_pri, eps_dual = _tolerances(
        mp.blocks, Ax, _nrm(mp.c), state.u, mp.gamma, eps_abs, eps_rel,
        np.sqrt(mp.c.shape[0]), sqrt_a,
    )
    return ResidualReport(r_pri=r_pri, s_list=s_list, eps_pri=eps_pri, eps_dual_list=eps_dual)


def run_extended_admm(
    mp,
    cfg,
    u0=None,
    allow_unverified=False,
    monitors=None,
):
    """Run the Gauss-Seidel block sweep until the residual criterion holds.

    Parameters
    ----------
    mp : MultiBlockProblem
    cfg : SolverConfig (gamma is taken from ``mp``, not ``cfg``)
    u0 : optional initial scaled dual (defaults to zero)
    allow_unverified : skip the orthogonal-partition precondition check
    monitors : optional dict name -> fn(xs, Ax, u) recorded per iteration

    Returns a :class:`SolveReport`; a run that hits the iteration cap is
    returned flagged ``converged=False`` rather than raising, so traces
    remain available.
    """
    blocks = mp.blocks
    N = len(blocks)
    gamma = mp.gamma
    if not allow_unverified and find_valid_partition(blocks) is None:
        raise PartitionNotFound(
            "no block split satisfies the orthogonality condition; "
            "pass allow_unverified=True to run anyway"
        )
    h = mp.c.shape[0]
    xs = []
    for b in blocks:
        if b.x0 is None:
            xs.append(np.zeros(b.shape[1]))
        else:
            xs.append(np.asarray(b.x0, dtype=float).ravel().copy())
    u = np.zeros(h) if u0 is None else np.asarray(u0, dtype=float).ravel().copy()

    Ax = [b.A @ x for b, x in zip(blocks, xs)]
    total = np.zeros(h)
    for a in Ax:
        total += a
    c = mp.c
    c_norm = _nrm(c)
    sqrt_h = np.sqrt(h)
    sqrt_a = [np.sqrt(b.shape[1]) for b in blocks]
    monitors = monitors or {}
    mon_traces = {k: [] for k in monitors}
    r_trace, s_trace = [], []
    converged = False
    eps_pri = np.nan
    eps_dual = [np.nan] * (N - 1)
    s_norms = np.full(N - 1, np.inf)
    r_norm = np.inf
    t0 = time.perf_counter()
    it = 0
    for it in range(1, cfg.max_iters + 1):
        prev_xs = list(xs)  # prox calls rebind, never mutate, so no copy
        for l in range(N):
            v = c - total - u
            v += Ax[l]
            xs[l] = blocks[l].prox(v, gamma)
            new_Axl = blocks[l].A @ xs[l]
            total += new_Axl
            total -= Ax[l]
            Ax[l] = new_Axl
        r_pri = total - c
        u = u + r_pri
        s_list = _dual_residuals(blocks, xs, prev_xs, gamma)
        r_norm = _nrm(r_pri)
        s_norms = np.array([_nrm(s) for s in s_list])
        eps_pri, eps_dual = _tolerances(
            blocks, Ax, c_norm, u, gamma, cfg.eps_abs, cfg.eps_rel, sqrt_h, sqrt_a
        )
        r_trace.append(r_norm)
        s_trace.append(s_norms)
        for k, fn in monitors.items():
            mon_traces[k].append(fn(xs, Ax, u))
        if r_norm <= eps_pri and np.all(s_norms <= np.asarray(eps_dual)):
            converged = True
            break
    wall = time.perf_counter() - t0
    rep = SolveReport(
        xs=xs,
        u=u,
        beta_hat=xs[0],
        iterations=it,
        converged=converged,
        r_pri_trace=np.asarray(r_trace),
        s_trace=np.asarray(s_trace),
        wall_time=wall,
        r_pri_norm=r_norm,
        s_norms=s_norms,
        eps_pri=eps_pri,
        eps_dual=np.asarray(eps_dual),
    )
    if "objective" in mon_traces:
        rep.objective_trace = np.asarray(mon_traces.pop("objective"))
    if "eq_violation" in mon_traces:
        rep.eq_violation_trace = np.asarray(mon_traces.pop("eq_violation"))
    rep.extras.update({k: np.asarray(v) for k, v in mon_traces.items()})
    return rep

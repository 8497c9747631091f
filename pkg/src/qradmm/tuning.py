"""Penalty-level selection on a grid via a high-dimensional BIC.

The criterion is the log of the summed check loss plus a complexity term
proportional to the number of interpolated observations (fit residuals
numerically at zero), scaled by log(log n)/n and a user constant.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import QradmmError
from .problem import PenaltySpec, SolverConfig, check_loss
from .solvers import solve


@dataclass
class TuningGrid:
    """Descending penalty-level grid plus the criterion's constants.

    Cn : multiplier of the complexity term (log(p) is the usual choice).
    df_tol : residual magnitude below which an observation counts as
        interpolated.
    """

    lambdas: np.ndarray
    Cn: float
    df_tol: float

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float).ravel()
        if lam.size == 0:
            raise ValueError("lambda grid must be nonempty")
        if np.any(lam <= 0):
            raise ValueError("lambda grid must be strictly positive")
        if np.any(np.diff(lam) >= 0):
            raise ValueError("lambda grid must be strictly descending")
        if self.Cn <= 0:
            raise ValueError("Cn must be positive")
        self.lambdas = lam


def default_df_tol(y):
    """Scale-relative interpolation tolerance: 1e-4 * median(|y|)."""
    return 1e-4 * float(np.median(np.abs(y)))


def interpolation_count(p, beta_hat, df_tol):
    """Number of observations whose fit residual is within df_tol of zero."""
    resid = p.y - p.X @ np.asarray(beta_hat, dtype=float).ravel()
    return int(np.sum(np.abs(resid) <= df_tol))


def hbic(p, beta_hat, Cn, df_tol):
    """log(sum of check losses) + df * log(log n)/n * Cn.

    df counts interpolated observations.  A nonpositive loss sum (perfect
    fit) returns -inf; callers flag such grid points as degenerate.
    Requires n >= 3 so log(log n) is defined and positive.
    """
    n = p.n
    if n < 3:
        raise ValueError("criterion needs n >= 3")
    resid = p.y - p.X @ np.asarray(beta_hat, dtype=float).ravel()
    loss = check_loss(resid, p.tau)
    df = int(np.sum(np.abs(resid) <= df_tol))
    if loss <= 0.0:
        return -np.inf
    return float(np.log(loss) + df * np.log(np.log(n)) / n * Cn)


def default_grid(p, family="lasso", cfg=None, n_lambdas=30, xi=3.7, span=1e-3):
    """Log-spaced grid from an estimated all-zero penalty level downward.

    A pilot solve at a data-driven upper bound checks that the penalized
    transform of the fit is numerically zero, doubling the bound when it
    is not, then bisecting down a few steps to tighten it.  The grid runs
    from that level down to ``span`` times it.
    """
    tau = p.tau
    qy = np.quantile(p.y, tau)
    score = np.where(p.y <= qy, tau - 1.0, tau)
    lam_hi = float(np.max(np.abs(p.X.T @ score)))
    if lam_hi <= 0:
        lam_hi = 1.0
    pilot_cfg = SolverConfig(
        gamma=(cfg.gamma if cfg else 1.0),
        eps_abs=1e-2,
        eps_rel=1e-2,
        max_iters=2000,
    )
    zero_tol = 1e-2 * max(1.0, float(np.median(np.abs(p.y))))

    def all_zero(lam):
        rep = solve(p, PenaltySpec(family, lam, xi), pilot_cfg)
        return float(np.max(np.abs(p.D @ rep.beta_hat))) <= zero_tol

    for _ in range(6):
        if all_zero(lam_hi):
            break
        lam_hi *= 2.0
    for _ in range(4):
        if all_zero(lam_hi / 2.0):
            lam_hi /= 2.0
        else:
            break
    lambdas = np.geomspace(lam_hi, span * lam_hi, n_lambdas)
    return TuningGrid(lambdas=lambdas, Cn=float(np.log(p.p)), df_tol=default_df_tol(p.y))


@dataclass
class GridPoint:
    lam: float
    hbic: float
    df: int
    objective: float
    converged: bool
    degenerate: bool = False
    failed: bool = False
    message: str = ""


def select_lambda(
    p,
    family,
    grid,
    cfg,
    solver="admm4_constr",
    xi=3.7,
    warm_start=True,
):
    """Fit every grid level (largest first) and return the criterion argmin.

    Each solve warm-starts from the previous level's final state unless
    disabled.  Ties break toward the larger (sparser) level; levels whose
    solve raises are excluded with a warning.

    Returns ``(lam_star, report_star)``; the winning report carries the
    full per-level table under ``extras['tuning_table']``.
    """
    table = []
    best = None  # (hbic, lam, report)
    state = None
    for lam in grid.lambdas:
        pen = PenaltySpec(family, float(lam), xi)
        try:
            rep = solve(p, pen, cfg, solver=solver, init=state if warm_start else None)
        except QradmmError as exc:
            warnings.warn(f"solve failed at lam={lam:.4g}: {exc}")
            table.append(
                GridPoint(lam=float(lam), hbic=np.nan, df=-1, objective=np.nan,
                          converged=False, failed=True, message=str(exc))
            )
            continue
        if warm_start:
            state = rep.extras["state"]
        crit = hbic(p, rep.beta_hat, grid.Cn, grid.df_tol)
        gp = GridPoint(
            lam=float(lam),
            hbic=crit,
            df=interpolation_count(p, rep.beta_hat, grid.df_tol),
            objective=float(rep.objective_trace[-1]),
            converged=rep.converged,
            degenerate=not np.isfinite(crit),
        )
        table.append(gp)
        if best is None or crit < best[0]:
            best = (crit, float(lam), rep)
    if best is None:
        raise QradmmError("every grid point failed to solve")
    _, lam_star, rep_star = best
    rep_star.extras["tuning_table"] = table
    rep_star.extras["lambda_star"] = lam_star
    return lam_star, rep_star

"""Problem definition: data, constraints, penalty and solver settings.

A quantile-regression instance couples a response ``y`` and design ``X``
with a generalized-lasso penalty matrix ``D`` and linear constraints
``C beta >= d`` and ``E beta = f``.  Every solver in this package consumes
the same immutable :class:`Problem`, so validation lives here and nowhere
else.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    ConcavityTooLarge,
    DimensionMismatch,
    NonFiniteEntry,
    TauOutOfRange,
)

LASSO = "lasso"
SCAD = "scad"
MCP = "mcp"
PENALTY_FAMILIES = (LASSO, SCAD, MCP)


def _as_matrix(a, name):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-d array, got ndim={a.ndim}")
    return a


def _as_vector(a, name):
    a = np.asarray(a, dtype=float).ravel()
    return a


@dataclass(frozen=True)
class Problem:
    """Immutable instance of the constrained penalized quantile regression.

    Parameters
    ----------
    y : (n,) response vector.
    X : (n, p) dense design matrix.
    D : (m, p) penalty matrix (identity gives the lasso, first differences
        the fused lasso).
    C : (q, p) inequality matrix for ``C beta >= d``; ``q = 0`` allowed.
    d : (q,) inequality bounds.
    E : (s, p) equality matrix for ``E beta = f``; ``s = 0`` allowed.
    f : (s,) equality targets.
    tau : quantile level in (0, 1).
    """

    y: np.ndarray
    X: np.ndarray
    D: np.ndarray
    C: np.ndarray
    d: np.ndarray
    E: np.ndarray
    f: np.ndarray
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "y", _as_vector(self.y, "y"))
        object.__setattr__(self, "X", _as_matrix(self.X, "X"))
        p = self.X.shape[1]
        object.__setattr__(self, "D", _reshape_empty(self.D, p, "D"))
        object.__setattr__(self, "C", _reshape_empty(self.C, p, "C"))
        object.__setattr__(self, "E", _reshape_empty(self.E, p, "E"))
        object.__setattr__(self, "d", _as_vector(self.d, "d"))
        object.__setattr__(self, "f", _as_vector(self.f, "f"))
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def m(self):
        return self.D.shape[0]

    @property
    def q(self):
        return self.C.shape[0]

    @property
    def s(self):
        return self.E.shape[0]


def _reshape_empty(a, p, name):
    """Coerce to a 2-d float array; a 0-row block may be given as None,
    [] or an empty array and becomes a (0, p) matrix."""
    if a is None:
        return np.zeros((0, p))
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros((0, p))
    return _as_matrix(a, name)


def unconstrained(y, X, D=None, tau=0.5):
    """Convenience constructor: no inequality or equality constraints.

    ``D`` defaults to the identity (plain lasso geometry).
    """
    X = _as_matrix(X, "X")
    p = X.shape[1]
    if D is None:
        D = np.eye(p)
    return validate_problem(
        Problem(y=y, X=X, D=D, C=None, d=[], E=None, f=[], tau=tau)
    )


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family with tuning scalar ``lam`` and concavity ``xi``.

    ``xi`` is ignored for the lasso.  The concavity conditions coupling
    ``xi`` to the augmented-Lagrangian weight are checked at prox time,
    not here, because they depend on the solver's gamma.
    """

    family: str
    lam: float
    xi: float = 3.7

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in PENALTY_FAMILIES:
            raise ValueError(f"unknown penalty family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")


def validate_penalty_for_gamma(pen, gamma):
    """Check the concavity condition that keeps the scalar prox objective
    convex for the given quadratic weight ``gamma``.

    Raises ConcavityTooLarge when it fails; no-op for the lasso.
    """
    if pen.family == SCAD:
        if not (pen.xi > 1.0 / gamma + 1.0 and pen.xi > 2.0):
            raise ConcavityTooLarge(
                f"SCAD needs xi > max(1/gamma + 1, 2); got xi={pen.xi}, gamma={gamma}"
            )
    elif pen.family == MCP:
        if not (pen.xi > 1.0 / gamma):
            raise ConcavityTooLarge(
                f"MCP needs xi > 1/gamma; got xi={pen.xi}, gamma={gamma}"
            )


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls shared by every solver.

    gamma : augmented-Lagrangian weight.
    eps_abs, eps_rel : absolute / relative stopping tolerances.
    max_iters : outer iteration cap.
    inner_max_iters, inner_tol : caps for nested subproblem solves
        (generalized-lasso coefficient updates and polyhedral projections).
    """

    gamma: float = 1.0
    eps_abs: float = 1e-3
    eps_rel: float = 1e-3
    max_iters: int = 10000
    inner_max_iters: int = 500
    inner_tol: float = 1e-8

    def __post_init__(self):
        for name in ("gamma", "eps_abs", "eps_rel", "inner_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1 or self.inner_max_iters < 1:
            raise ValueError("iteration caps must be >= 1")


def validate_problem(p):
    """Check all dimensional and numerical invariants; return ``p`` unchanged.

    Raises
    ------
    DimensionMismatch
        naming the offending pair of arrays.
    NonFiniteEntry
        if any entry is NaN or infinite.
    TauOutOfRange
        unless 0 < tau < 1.
    """
    n, pp = p.X.shape
    if p.y.shape[0] != n:
        raise DimensionMismatch(f"y has length {p.y.shape[0]} but X has {n} rows")
    for name in ("D", "C", "E"):
        mat = getattr(p, name)
        if mat.shape[1] != pp:
            raise DimensionMismatch(
                f"{name}.cols = {mat.shape[1]} != p = {pp}"
            )
    if p.d.shape[0] != p.C.shape[0]:
        raise DimensionMismatch(
            f"d has length {p.d.shape[0]} but C has {p.C.shape[0]} rows"
        )
    if p.f.shape[0] != p.E.shape[0]:
        raise DimensionMismatch(
            f"f has length {p.f.shape[0]} but E has {p.E.shape[0]} rows"
        )
    for name in ("y", "X", "D", "C", "d", "E", "f"):
        if not np.all(np.isfinite(getattr(p, name))):
            raise NonFiniteEntry(f"{name} contains non-finite entries")
    if not (0.0 < p.tau < 1.0):
        raise TauOutOfRange(f"tau must lie in (0, 1), got {p.tau}")
    return p


def check_loss(r, tau):
    """Asymmetric absolute loss, summed over the residual vector.

    Each component contributes ``tau*z`` for ``z > 0`` and ``(tau-1)*z``
    for ``z <= 0``.
    """
    r = np.asarray(r, dtype=float)
    return float(np.sum(np.where(r > 0, tau * r, (tau - 1.0) * r)))


def penalty_value(t, pen):
    """Componentwise penalty value at ``t``, summed.

    Lasso: lam*|t|.  SCAD and MCP use the standard folded-concave value
    functions whose scalar prox maps are implemented in :mod:`qradmm.prox`.
    """
    t = np.abs(np.asarray(t, dtype=float))
    lam, xi = pen.lam, pen.xi
    if pen.family == LASSO:
        return float(lam * t.sum())
    if pen.family == SCAD:
        inner = t <= lam
        outer = t > xi * lam
        mid = ~inner & ~outer
        vals = np.empty_like(t)
        vals[inner] = lam * t[inner]
        vals[mid] = (2 * xi * lam * t[mid] - t[mid] ** 2 - lam**2) / (2 * (xi - 1))
        vals[outer] = lam**2 * (xi + 1) / 2
        return float(vals.sum())
    # MCP
    inner = t <= xi * lam
    vals = np.where(inner, lam * t - t**2 / (2 * xi), xi * lam**2 / 2)
    return float(vals.sum())


def check_objective(p, pen, beta):
    """Objective value at ``beta``: check loss of the fit residuals plus
    the penalty evaluated on ``D beta``.  Constraints are not included
    (they are feasibility conditions, not costs)."""
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != p.p:
        raise DimensionMismatch(
            f"beta has length {beta.shape[0]} but problem has p = {p.p}"
        )
    resid = p.y - p.X @ beta
    return check_loss(resid, p.tau) + penalty_value(p.D @ beta, pen)

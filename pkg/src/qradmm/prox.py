"""Closed-form proximal maps and projections used by the solver updates.

All operations are pure functions of their inputs (the polyhedral
projector carries a factorization cache and warm-start state, but its
output depends only on the arguments and the configured tolerance).
"""

import numpy as np
import scipy.linalg as sla

from .exceptions import InfeasiblePolyhedron, ProjectionNotConverged
from .problem import LASSO, MCP, SCAD, validate_penalty_for_gamma


def _pos(x):
    return np.maximum(x, 0.0)


def prox_check(v, tau, gamma):
    """Minimizer of ``rho_tau(r) + (gamma/2) * ||v - r||^2``, componentwise.

    r_i = [v_i - tau/gamma]_+ - [-v_i + (tau-1)/gamma]_+
    """
    v = np.asarray(v, dtype=float)
    return _pos(v - tau / gamma) - _pos(-v + (tau - 1.0) / gamma)


def soft_threshold(t, lam):
    """sign(t) * (|t| - lam)_+ with ``lam >= 0`` required."""
    if lam < 0:
        raise ValueError(f"soft threshold level must be nonnegative, got {lam}")
    t = np.asarray(t, dtype=float)
    return np.sign(t) * _pos(np.abs(t) - lam)


def prox_penalty(delta, pen, gamma):
    """Componentwise minimizer of ``p_lam(z) + (gamma/2)(delta - z)^2``.

    Lasso is plain soft thresholding at level lam/gamma.  SCAD uses the
    three-region rule (threshold, rescaled threshold, identity) and MCP
    the two-region rule; both require the concavity condition on xi that
    keeps the scalar objective convex, else ConcavityTooLarge is raised.
    Ties at region boundaries resolve to the first matching branch.
    """
    validate_penalty_for_gamma(pen, gamma)
    delta = np.asarray(delta, dtype=float)
    lam, xi = pen.lam, pen.xi
    if pen.family == LASSO:
        return soft_threshold(delta, lam / gamma)
    a = np.abs(delta)
    if pen.family == SCAD:
        out = np.where(
            a <= lam + lam / gamma,
            soft_threshold(delta, lam / gamma),
            np.where(
                a <= xi * lam,
                soft_threshold(delta, xi * lam / ((xi - 1.0) * gamma))
                / (1.0 - 1.0 / ((xi - 1.0) * gamma)),
                delta,
            ),
        )
        return out
    # MCP
    return np.where(
        a <= xi * lam,
        soft_threshold(delta, lam / gamma) / (1.0 - 1.0 / (xi * gamma)),
        delta,
    )


def project_nonneg(v):
    """Euclidean projection onto the nonnegative orthant."""
    return _pos(np.asarray(v, dtype=float))


class PolyhedronProjector:
    """Euclidean projection onto ``{w : Cw >= d, Ew = f}``.

    Solved by a two-block splitting on the inequality slack ``t = Cw - d``:
    the w-step is a cached SPD solve of ``(I + g C'C + g E'E)``, the
    t-step a clamp to the orthant.  The instance keeps the factorization
    and the previous dual/slack state, so repeated projections inside an
    outer solver are warm-started.

    When there are no inequality rows the projection is affine and
    computed exactly through a pseudoinverse (no iterations).
    """

    def __init__(self, C, d, E, f, gamma=1.0):
        self.C = np.atleast_2d(np.asarray(C, dtype=float)) if np.size(C) else np.zeros((0, 0))
        self.E = np.atleast_2d(np.asarray(E, dtype=float)) if np.size(E) else np.zeros((0, 0))
        self.d = np.asarray(d, dtype=float).ravel()
        self.f = np.asarray(f, dtype=float).ravel()
        self.gamma = float(gamma)
        self.q = self.C.shape[0]
        self.s = self.E.shape[0]
        self.p = self.C.shape[1] if self.q else (self.E.shape[1] if self.s else 0)
        self._state = None
        self._factor = None
        self._E_pinv = None
        if self.q:
            K = np.eye(self.p) + self.gamma * (self.C.T @ self.C)
            if self.s:
                K += self.gamma * (self.E.T @ self.E)
            self._factor = sla.cho_factor(K, lower=True)
        elif self.s:
            self._E_pinv = np.linalg.pinv(self.E)

    def reset(self):
        self._state = None

    def __call__(self, v, tol=1e-8, max_iters=20000, warm=True, raise_on_fail=True):
        """Return the projection of ``v``; see :func:`project_polyhedron`.

        With ``raise_on_fail=False`` the current iterate is returned when
        the cap is hit (inexact mode for use inside outer solvers whose
        own residual criterion controls overall quality).
        """
        v = np.asarray(v, dtype=float).ravel()
        if self.q == 0 and self.s == 0:
            return v.copy()
        if self.q == 0:
            # affine case: exact single-shot projection onto Ew = f
            w = v - self._E_pinv @ (self.E @ v - self.f)
            if np.linalg.norm(self.E @ w - self.f, np.inf) > max(tol, 1e-9):
                raise InfeasiblePolyhedron("equality system Ew = f is inconsistent")
            return w

        C, E, d, f, g = self.C, self.E, self.d, self.f, self.gamma
        if warm and self._state is not None:
            t, a1, a2 = (x.copy() for x in self._state)
        else:
            t = _pos(C @ v - d)
            a1 = np.zeros(self.q)
            a2 = np.zeros(self.s)

        r_hist = []
        w = v.copy()
        kkt = np.inf
        for k in range(max_iters):
            rhs = v + g * (C.T @ (t + d - a1))
            if self.s:
                rhs += g * (E.T @ (f - a2))
            w = sla.cho_solve(self._factor, rhs)
            Cw = C @ w
            t = _pos(Cw - d + a1)
            r1 = Cw - t - d
            a1 = a1 + r1
            if self.s:
                r2 = E @ w - f
                a2 = a2 + r2
                r_norm = np.sqrt(r1 @ r1 + r2 @ r2)
            else:
                r_norm = np.linalg.norm(r1)
            kkt = self._kkt_residual(w, v, t, a1, a2)
            if kkt <= tol:
                self._state = (t, a1, a2)
                return w
            r_hist.append(r_norm)
            # stalled primal residual bounded away from zero certifies
            # (numerically) an empty intersection
            if k >= 500 and k % 100 == 0:
                recent = r_hist[-300:]
                if min(recent) > 1e3 * tol and (max(recent) - min(recent)) < 1e-10 * (
                    1.0 + max(recent)
                ):
                    raise InfeasiblePolyhedron(
                        f"projection stalled with primal residual {r_norm:.3e}"
                    )
        self._state = (t, a1, a2)
        if raise_on_fail:
            raise ProjectionNotConverged(
                f"projection KKT residual {kkt:.3e} > tol {tol:.3e} "
                f"after {max_iters} iterations",
                kkt_residual=kkt,
            )
        return w

    def _kkt_residual(self, w, v, t, a1, a2):
        # multipliers recovered from the scaled duals: nu = -g*a1 (>= 0
        # required), mu = g*a2
        g = self.gamma
        nu = -g * a1
        stat = w - v - self.C.T @ nu
        if self.s:
            stat = stat + self.E.T @ (g * a2)
        Cw_d = self.C @ w - self.d
        parts = [
            np.linalg.norm(stat, np.inf),
            np.linalg.norm(_pos(-Cw_d), np.inf) if self.q else 0.0,
            np.linalg.norm(self.E @ w - self.f, np.inf) if self.s else 0.0,
            np.linalg.norm(_pos(-nu), np.inf) if self.q else 0.0,
            np.linalg.norm(nu * Cw_d, np.inf) if self.q else 0.0,
        ]
        return max(parts)


def project_polyhedron(v, C, d, E, f, tol=1e-8, max_iters=20000):
    """One-shot projection of ``v`` onto ``{w : Cw >= d, Ew = f}``.

    The result satisfies the projection problem's KKT conditions to
    within ``tol``.  Raises ProjectionNotConverged (carrying the final
    KKT residual) if the iteration cap is hit first, and
    InfeasiblePolyhedron when the primal residual stalls at a clearly
    nonzero value, which certifies an empty set numerically.
    """
    return PolyhedronProjector(C, d, E, f)(v, tol=tol, max_iters=max_iters, warm=False)

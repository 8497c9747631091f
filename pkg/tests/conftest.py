import numpy as np
import pytest

from qradmm import Problem, SolverConfig, validate_problem


def rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def grid_argmin(f, lo=-5.0, hi=5.0, step=1e-4):
    """Brute-force scalar minimizer on a regular grid."""
    xs = np.arange(lo, hi + step, step)
    return float(xs[np.argmin(f(xs))])


def make_problem(
    n=40, p=5, tau=0.5, seed=0, q=2, s=1, D=None, noise=0.2, unit_rows=True
):
    """Random instance with constraints feasible at the generating point."""
    r = rng(seed)
    X = r.standard_normal((n, p))
    beta0 = r.standard_normal(p)
    y = X @ beta0 + noise * r.standard_normal(n)
    if D is None:
        D = np.eye(p)
    C = r.standard_normal((q, p))
    E = r.standard_normal((s, p))
    if unit_rows:
        if q:
            C /= np.linalg.norm(C, axis=1, keepdims=True)
        if s:
            E /= np.linalg.norm(E, axis=1, keepdims=True)
    d = C @ beta0 - np.abs(r.standard_normal(q)) - 0.1 if q else np.zeros(0)
    f = E @ beta0 if s else np.zeros(0)
    return validate_problem(
        Problem(y=y, X=X, D=D, C=C, d=d, E=E, f=f, tau=tau)
    )


@pytest.fixture
def tight_cfg():
    return SolverConfig(eps_abs=1e-6, eps_rel=1e-6, max_iters=200000)

"""Benchmark harness: timing comparisons, replicated selection metrics,
and partition-count sweeps, all on the synthetic design at desk scale.

Every number derives from seeded draws (child seeds are spawned per
replication), so metric tables reproduce exactly across reruns; wall
times of course do not.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .consensus import partition, solve_parallel
from .exceptions import MatchedAccuracyUnreachable, QradmmError
from .problem import PenaltySpec, SolverConfig
from .simulate import ScenarioSpec, build_constraint_problem, evaluate, gen_scenario, true_beta
from .solvers import compare_solvers, solve_admm4_constr
from .tuning import default_grid, select_lambda

N_TEST = 2000  # held-out rows for fit/prediction metrics

# tight enough that interpolated observations are recognizable by the
# criterion's residual tolerance
TABLE2_CFG = SolverConfig(gamma=1.0, eps_abs=3e-5, eps_rel=3e-5, max_iters=60000)


def _child_seeds(seed, k):
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, dtype=np.uint64)[0] % (2**63)) for c in ss.spawn(k)]


def _gen_pair(n, p, tau, seed):
    """Training data plus an independent test set from the same design."""
    s_train, s_test = _child_seeds(seed, 2)
    X, y, beta = gen_scenario(ScenarioSpec(n=n, p=p, tau=tau, seed=s_train))
    Xt, yt, _ = gen_scenario(ScenarioSpec(n=N_TEST, p=p, tau=tau, seed=s_test))
    return X, y, beta, Xt, yt


def _agg(values):
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=0))


@dataclass
class Table2Row:
    n: int
    p: int
    tau: float
    reps_done: int
    reps_failed: int
    size_mean: float
    size_std: float
    p1_mean: float
    p2_mean: float
    ae_mean: float
    ae_std: float
    mad_mean: float
    mad_std: float
    mape_mean: float
    mape_std: float
    eq_violation_mean: float
    e_beta_true: float  # equality row evaluated at the true coefficients
    lambda_mean: float


def run_table2(reps, sizes, taus, seed, cfg=None, n_lambdas=20, threads=1):
    """Replicated selection/estimation metrics with HBIC-chosen penalty.

    For every (n, p) in ``sizes`` and every tau, each replication draws
    fresh training and test data, picks the penalty level by HBIC on a
    default grid, and scores the winning fit.  Failed replications are
    excluded and counted.
    """
    cfg = cfg or TABLE2_CFG
    rows = []
    for n, p in sizes:
        for tau in taus:
            rep_seeds = _child_seeds(seed + 1000 * n + p + int(tau * 100), reps)

            def one(rs):
                X, y, beta_true_tau, Xt, yt = _gen_pair(n, p, tau, rs)
                prob, _ = build_constraint_problem(X, y, tau)
                grid = default_grid(prob, "lasso", cfg, n_lambdas=n_lambdas)
                lam, rep = select_lambda(prob, "lasso", grid, cfg)
                met = evaluate(rep.beta_hat, beta_true_tau, Xt, yt)
                eqv = float(rep.eq_violation_trace[-1])
                return met, lam, eqv

            results, failed = [], 0
            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    futs = [pool.submit(one, rs) for rs in rep_seeds]
                    for ft in futs:
                        try:
                            results.append(ft.result())
                        except QradmmError:
                            failed += 1
            else:
                for rs in rep_seeds:
                    try:
                        results.append(one(rs))
                    except QradmmError:
                        failed += 1
            if not results:
                raise QradmmError(f"all replications failed at (n,p,tau)=({n},{p},{tau})")
            mets = [r[0] for r in results]
            size_m, size_s = _agg([m.size for m in mets])
            ae_m, ae_s = _agg([m.ae for m in mets])
            mad_m, mad_s = _agg([m.mad for m in mets])
            mape_m, mape_s = _agg([m.mape for m in mets])
            prob_ref, _ = build_constraint_problem(
                *gen_scenario(ScenarioSpec(n=max(16, 2 * p), p=p, tau=tau, seed=0))[:2], tau
            )
            ebt = float((prob_ref.E @ true_beta(p, tau))[0])
            rows.append(
                Table2Row(
                    n=n,
                    p=p,
                    tau=tau,
                    reps_done=len(results),
                    reps_failed=failed,
                    size_mean=size_m,
                    size_std=size_s,
                    p1_mean=_agg([m.p1 for m in mets])[0],
                    p2_mean=_agg([m.p2 for m in mets])[0],
                    ae_mean=ae_m,
                    ae_std=ae_s,
                    mad_mean=mad_m,
                    mad_std=mad_s,
                    mape_mean=mape_m,
                    mape_std=mape_s,
                    eq_violation_mean=_agg([r[2] for r in results])[0],
                    e_beta_true=ebt,
                    lambda_mean=_agg([r[1] for r in results])[0],
                )
            )
    return rows


@dataclass
class Table1Row:
    n: int
    p: int
    tau: float
    mean_times: dict
    mean_iters: dict
    objectives: dict
    ordering_constr_fastest: bool
    ordering_proj3_slowest: bool


def run_table1(sizes, taus, seed, reps=2, lam=0.5, cfg=None, target_rel=1e-3):
    """Mean wall times of the four formulations at matched accuracy.

    Each row times all four solvers on fresh draws of the synthetic
    design; a row is only valid when every solver's final objective is
    within ``target_rel`` (relative) of the best, else
    MatchedAccuracyUnreachable is raised.
    """
    cfg = cfg or SolverConfig(eps_abs=1e-4, eps_rel=1e-4, max_iters=60000)
    rows = []
    for n, p in sizes:
        for tau in taus:
            rep_seeds = _child_seeds(seed + 7000 * n + p + int(tau * 100), reps)
            times = {k: [] for k in ("admm4_constr", "admm4_proj", "admm3_constr", "admm3_proj")}
            iters = {k: [] for k in times}
            objs = {k: [] for k in times}
            for rs in rep_seeds:
                X, y, _, _, _ = _gen_pair(n, p, tau, rs)
                prob, pen = build_constraint_problem(X, y, tau, lam)
                table = compare_solvers(prob, pen, cfg, target_rel=target_rel)
                bad = [r for r in table if r.status != "ok" or not r.matched]
                if bad:
                    raise MatchedAccuracyUnreachable(
                        f"objectives not matched to {target_rel} at "
                        f"(n,p,tau)=({n},{p},{tau}): "
                        + "; ".join(f"{r.solver}[{r.status}]" for r in bad)
                    )
                for r in table:
                    times[r.solver].append(r.wall_time)
                    iters[r.solver].append(r.iterations)
                    objs[r.solver].append(r.objective)
            mean_times = {k: float(np.mean(v)) for k, v in times.items()}
            rows.append(
                Table1Row(
                    n=n,
                    p=p,
                    tau=tau,
                    mean_times=mean_times,
                    mean_iters={k: float(np.mean(v)) for k, v in iters.items()},
                    objectives={k: float(np.mean(v)) for k, v in objs.items()},
                    ordering_constr_fastest=(
                        mean_times["admm4_constr"]
                        < min(mean_times["admm4_proj"], mean_times["admm3_constr"])
                    ),
                    ordering_proj3_slowest=(
                        mean_times["admm3_proj"]
                        > max(mean_times["admm4_proj"], mean_times["admm3_constr"])
                    ),
                )
            )
    return rows


@dataclass
class Fig4Result:
    Ms: list
    ae: list
    dist_time: list
    wall_time: list
    iterations: list
    objective: list


def run_fig4(N, p, Ms, tau, seed, lam=0.5, cfg=None, threads=1):
    """Estimation error and computing time versus partition count.

    One dataset is drawn once; for each M it is re-sharded and solved by
    the consensus scheme.  ``dist_time`` charges, per iteration, the
    slowest shard's local work plus the coordinator work -- the wall
    clock a one-machine-per-shard deployment would see -- and is the
    number the partition sweep trends are read from.
    """
    cfg = cfg or SolverConfig(eps_abs=1e-4, eps_rel=1e-4, max_iters=20000)
    data_seed, part_seed = _child_seeds(seed, 2)
    X, y, beta_true_tau = gen_scenario(ScenarioSpec(n=N, p=p, tau=tau, seed=data_seed))
    prob, pen = build_constraint_problem(X, y, tau, lam)
    res = Fig4Result(Ms=list(Ms), ae=[], dist_time=[], wall_time=[], iterations=[], objective=[])
    for M in Ms:
        ds = partition(
            y, X, M, part_seed, D=prob.D, C=prob.C, d=prob.d, E=prob.E, f=prob.f, tau=tau
        )
        rep = solve_parallel(ds, pen, cfg, threads=threads)
        res.ae.append(float(np.abs(rep.beta_hat - beta_true_tau).sum()))
        res.dist_time.append(rep.extras["distributed_time"])
        res.wall_time.append(rep.wall_time)
        res.iterations.append(rep.iterations)
        res.objective.append(float(rep.objective_trace[-1]))
    return res


def replication_study(n, p, tau, reps, lam, seed, cfg=None):
    """Fixed-penalty replication metrics used by the CLI simulate command."""
    cfg = cfg or SolverConfig()
    rep_seeds = _child_seeds(seed, reps)
    mets = []
    failed = 0
    for rs in rep_seeds:
        X, y, beta_true_tau, Xt, yt = _gen_pair(n, p, tau, rs)
        prob, pen = build_constraint_problem(X, y, tau, lam)
        try:
            rep = solve_admm4_constr(prob, pen, cfg)
        except QradmmError:
            failed += 1
            continue
        mets.append(evaluate(rep.beta_hat, beta_true_tau, Xt, yt))
    if not mets:
        raise QradmmError("all replications failed")
    out = {"reps": len(mets), "failed": failed}
    for name in ("size", "p1", "p2", "ae", "mad", "mape"):
        mean, std = _agg([getattr(m, name) for m in mets])
        out[f"{name}_mean"] = mean
        out[f"{name}_std"] = std
    return out

"""Command-line front end.

Commands
--------
fit           fit one model from a CSV (first column = response by default)
tune          grid search over penalty levels with the HBIC criterion
simulate      generate synthetic benchmark data; fit repeatedly and report
              aggregated metrics, or just emit the dataset as CSV
compare       run all four formulations on one instance and tabulate them
parallel-fit  consensus fit over row shards of the data

Exit codes: 0 command completed (and, for fit/tune/parallel-fit, the
solver converged); 2 bad usage, unparsable input or invalid
configuration; 3 solver finished without converging; 4 I/O failure;
1 anything unexpected.

File formats
------------
Data CSV: RFC-4180-style, UTF-8, '.' decimal point, optional header row
(pass --header).  The response is the first column unless --response-col
says otherwise.

Constraint spec: line-oriented text, '#' starts a comment.  Recognized
forms (indices are 1-based)::

    nonneg = [5, 6, 11, 12]          # each listed beta_j >= 0
    lasso = true                     # penalty matrix includes identity
    fused_lasso = true               # identity stacked on differences
    penalty: [1@3, -1@4]             # explicit penalty row
    ineq: [1@2, 1@3] >= 0.5          # explicit inequality row
    eq: [-3@5, 1@10, 1@12, 1@15] = -1  # explicit equality row

Report: 'key = value' lines; vectors are comma-separated.  The optional
trace CSV starts with a '# qradmm-trace v1' header line followed by
'iteration,objective,r_pri,s,eq_violation' rows.
"""

import argparse
import csv
import sys

import numpy as np

from . import bench
from .consensus import partition, solve_parallel
from .exceptions import (
    EmptyFile,
    ParseError,
    QradmmError,
    SpecDimensionMismatch,
    UnknownKey,
)
from .problem import PenaltySpec, Problem, SolverConfig, validate_problem
from .simulate import MetricsReport, ScenarioSpec, evaluate, fused_lasso_matrix, gen_scenario
from .solvers import SOLVER_NAMES, compare_solvers, solve
from .tuning import default_grid, select_lambda

TRACE_HEADER = "# qradmm-trace v1"

_SOLVER_FLAGS = {
    "admm4c": "admm4_constr",
    "admm4p": "admm4_proj",
    "admm3c": "admm3_constr",
    "admm3p": "admm3_proj",
}


def ingest_csv(path, response_col=0, header=False):
    """Read a numeric CSV into (y, X).

    Returns the response column and the matrix of remaining columns, in
    file order.  Raises ParseError with the offending 1-based line and
    column for any non-numeric cell, and EmptyFile for headerless empty
    input.
    """
    rows = []
    names = None
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise EmptyFile(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        for lineno, rec in enumerate(reader, start=1):
            if not rec or all(cell.strip() == "" for cell in rec):
                continue
            if header and names is None:
                names = [cell.strip() for cell in rec]
                continue
            vals = []
            for colno, cell in enumerate(rec, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"non-numeric cell {cell!r} at line {lineno}, column {colno}",
                        line=lineno,
                        column=colno,
                    ) from None
            if rows and len(vals) != len(rows[0]):
                raise ParseError(
                    f"row width {len(vals)} != {len(rows[0])} at line {lineno}",
                    line=lineno,
                )
            rows.append(vals)
    if not rows:
        raise EmptyFile(f"{path} contains no data rows")
    M = np.asarray(rows, dtype=float)
    if not (0 <= response_col < M.shape[1]):
        raise ParseError(f"response column {response_col} out of range", line=1)
    y = M[:, response_col].copy()
    X = np.delete(M, response_col, axis=1)
    return y, X


def _parse_sparse_row(text, lineno):
    """Parse '[c1@i1, c2@i2, ...]' into (coefs, 1-based indices)."""
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise ParseError(f"expected [coef@index, ...] at line {lineno}", line=lineno)
    coefs, idx = [], []
    body = text[1:-1].strip()
    if not body:
        raise ParseError(f"empty coefficient list at line {lineno}", line=lineno)
    for part in body.split(","):
        part = part.strip()
        if "@" in part:
            coef_s, idx_s = part.split("@", 1)
        else:
            raise ParseError(
                f"expected coef@index, got {part!r} at line {lineno}", line=lineno
            )
        try:
            coefs.append(float(coef_s))
            idx.append(int(idx_s))
        except ValueError:
            raise ParseError(
                f"bad coef@index pair {part!r} at line {lineno}", line=lineno
            ) from None
    if any(i < 1 for i in idx):
        raise SpecDimensionMismatch(f"indices are 1-based; got {min(idx)} at line {lineno}")
    return coefs, idx


class ConstraintSpec:
    """Parsed constraint file, materialized once p is known."""

    def __init__(self):
        self.nonneg = []
        self.lasso = False
        self.fused = False
        self.penalty_rows = []
        self.ineq_rows = []  # (coefs, idx, rhs)
        self.eq_rows = []

    def min_p(self):
        out = max(self.nonneg, default=0)
        for rows in (self.penalty_rows, self.ineq_rows, self.eq_rows):
            for _, idx, *_ in rows:
                out = max(out, max(idx))
        return max(out, 1)

    def materialize(self, p):
        """Build (D, C, d, E, f) with p columns."""
        if self.min_p() > p:
            raise SpecDimensionMismatch(
                f"constraint spec references coefficient {self.min_p()} "
                f"but the data has p = {p}"
            )
        D_parts = []
        if self.lasso or self.fused:
            if self.fused:
                D_parts.append(fused_lasso_matrix(p))
            else:
                D_parts.append(np.eye(p))
        for coefs, idx in self.penalty_rows:
            row = np.zeros(p)
            row[np.asarray(idx) - 1] = coefs
            D_parts.append(row[None, :])
        D = np.vstack(D_parts) if D_parts else np.eye(p)
        C_rows, d_vals = [], []
        for j in self.nonneg:
            row = np.zeros(p)
            row[j - 1] = 1.0
            C_rows.append(row)
            d_vals.append(0.0)
        for coefs, idx, rhs in self.ineq_rows:
            row = np.zeros(p)
            row[np.asarray(idx) - 1] = coefs
            C_rows.append(row)
            d_vals.append(rhs)
        E_rows, f_vals = [], []
        for coefs, idx, rhs in self.eq_rows:
            row = np.zeros(p)
            row[np.asarray(idx) - 1] = coefs
            E_rows.append(row)
            f_vals.append(rhs)
        C = np.vstack(C_rows) if C_rows else np.zeros((0, p))
        E = np.vstack(E_rows) if E_rows else np.zeros((0, p))
        return D, C, np.asarray(d_vals), E, np.asarray(f_vals)


def parse_constraints(path, p=None):
    """Parse a constraint-spec file.

    With ``p`` given returns the materialized (D, C, d, E, f); otherwise
    returns them at the smallest dimension the spec itself implies (the
    caller cross-checks against the data).
    """
    spec = parse_constraint_spec(path)
    return spec.materialize(p if p is not None else spec.min_p())


def parse_constraint_spec(path):
    spec = ConstraintSpec()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line and ":" not in line.split("=", 1)[0]:
                key, val = (t.strip() for t in line.split("=", 1))
                if key == "nonneg":
                    body = val.strip()
                    if not (body.startswith("[") and body.endswith("]")):
                        raise ParseError(f"expected [i, j, ...] at line {lineno}", line=lineno)
                    try:
                        spec.nonneg.extend(int(t) for t in body[1:-1].split(",") if t.strip())
                    except ValueError:
                        raise ParseError(f"bad index list at line {lineno}", line=lineno) from None
                elif key == "lasso":
                    spec.lasso = val.lower() in ("true", "1", "yes")
                elif key == "fused_lasso":
                    spec.fused = val.lower() in ("true", "1", "yes")
                else:
                    raise UnknownKey(f"unknown key {key!r} at line {lineno}")
                continue
            if ":" in line:
                kind, rest = (t.strip() for t in line.split(":", 1))
                if kind == "penalty":
                    spec.penalty_rows.append(_parse_sparse_row(rest, lineno))
                elif kind == "ineq":
                    if ">=" not in rest:
                        raise ParseError(f"ineq row needs '>= rhs' at line {lineno}", line=lineno)
                    lhs, rhs = rest.rsplit(">=", 1)
                    coefs, idx = _parse_sparse_row(lhs, lineno)
                    spec.ineq_rows.append((coefs, idx, float(rhs)))
                elif kind == "eq":
                    if "=" not in rest:
                        raise ParseError(f"eq row needs '= rhs' at line {lineno}", line=lineno)
                    lhs, rhs = rest.rsplit("=", 1)
                    coefs, idx = _parse_sparse_row(lhs, lineno)
                    spec.eq_rows.append((coefs, idx, float(rhs)))
                else:
                    raise UnknownKey(f"unknown key {kind!r} at line {lineno}")
                continue
            raise UnknownKey(f"unrecognized line {lineno}: {raw.strip()!r}")
    return spec


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    if isinstance(v, np.ndarray):
        return ",".join(repr(float(x)) for x in v.ravel())
    return str(v)


def emit_report(report, path, trace_path=None):
    """Write a solve/metrics report as 'key = value' text.

    SolveReport-like objects get their convergence summary and estimate;
    metric reports and comparison rows are flattened field by field.
    With ``trace_path`` the per-iteration trace CSV is written as well.
    """
    lines = []
    if hasattr(report, "beta_hat"):
        lines.append(f"converged = {str(bool(report.converged)).lower()}")
        lines.append(f"iterations = {report.iterations}")
        lines.append(f"wall_time = {_fmt(float(report.wall_time))}")
        if report.objective_trace is not None and len(report.objective_trace):
            lines.append(f"objective = {_fmt(float(report.objective_trace[-1]))}")
        if report.eq_violation_trace is not None and len(report.eq_violation_trace):
            lines.append(
                f"eq_violation_l1 = {_fmt(float(report.eq_violation_trace[-1]))}"
            )
        if "lambda_star" in report.extras:
            lines.append(f"lambda_star = {_fmt(report.extras['lambda_star'])}")
        if "distributed_time" in report.extras:
            lines.append(
                f"distributed_time = {_fmt(report.extras['distributed_time'])}"
            )
        lines.append(f"beta = {_fmt(report.beta_hat)}")
    elif isinstance(report, MetricsReport):
        for name in ("size", "p1", "p2", "ae", "mad", "mape", "false_pos"):
            lines.append(f"{name} = {_fmt(getattr(report, name))}")
    elif isinstance(report, dict):
        for k, v in report.items():
            lines.append(f"{k} = {_fmt(v)}")
    elif isinstance(report, list):  # comparison rows
        for row in report:
            lines.append(
                f"{row.solver} = iterations:{row.iterations}"
                f" wall_time:{_fmt(row.wall_time)}"
                f" objective:{_fmt(row.objective)}"
                f" eq_violation_l1:{_fmt(row.eq_violation_l1)}"
                f" converged:{str(bool(row.converged)).lower()}"
                f" matched:{str(bool(row.matched)).lower()}"
                f" status:{row.status}"
            )
    else:
        raise TypeError(f"cannot emit report of type {type(report).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    if trace_path is not None and hasattr(report, "r_pri_trace"):
        _write_trace(report, trace_path)
    return path


def _write_trace(report, path):
    n = len(report.r_pri_trace)
    obj = report.objective_trace if report.objective_trace is not None else [np.nan] * n
    eqv = (
        report.eq_violation_trace
        if report.eq_violation_trace is not None
        else [np.nan] * n
    )
    s_tr = report.s_trace
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRACE_HEADER + "\n")
        fh.write("iteration,objective,r_pri,s,eq_violation\n")
        for k in range(n):
            s_val = s_tr[k]
            s_scalar = float(np.max(s_val)) if np.ndim(s_val) else float(s_val)
            fh.write(
                f"{k + 1},{_fmt(float(obj[k]))},{_fmt(float(report.r_pri_trace[k]))},"
                f"{_fmt(s_scalar)},{_fmt(float(eqv[k]))}\n"
            )


def write_dataset_csv(path, y, X, header=True):
    """Emit a dataset in the same CSV dialect ingest_csv reads.

    Values are written with shortest round-trip precision, so reading
    the file back reproduces the arrays bit for bit.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(["y"] + [f"x{j + 1}" for j in range(X.shape[1])])
        for i in range(len(y)):
            w.writerow([repr(float(y[i]))] + [repr(float(v)) for v in X[i]])
    return path


def build_parser():
    ap = argparse.ArgumentParser(
        prog="qradmm",
        description="constrained penalized quantile regression via multi-block ADMM",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(sp, data=True):
        if data:
            sp.add_argument("--data", required=True, help="input CSV path")
            sp.add_argument("--constraints", help="constraint spec path")
            sp.add_argument("--response-col", type=int, default=0)
            sp.add_argument("--header", action="store_true")
        sp.add_argument("--tau", type=float, default=0.5)
        sp.add_argument("--lambda", dest="lam", type=float, default=1.0)
        sp.add_argument("--penalty", choices=["lasso", "scad", "mcp"], default="lasso")
        sp.add_argument("--xi", type=float, default=3.7)
        sp.add_argument("--gamma", type=float, default=1.0)
        sp.add_argument("--eps-abs", type=float, default=1e-3)
        sp.add_argument("--eps-rel", type=float, default=1e-3)
        sp.add_argument("--max-iters", type=int, default=10000)
        sp.add_argument(
            "--solver", choices=sorted(_SOLVER_FLAGS), default="admm4c"
        )
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="report output path")
        sp.add_argument("--trace", help="per-iteration trace CSV path")

    sp = sub.add_parser("fit", help="fit one model")
    add_common(sp)

    sp = sub.add_parser("tune", help="select the penalty level by HBIC")
    add_common(sp)
    sp.add_argument("--n-lambdas", type=int, default=30)
    sp.add_argument("--cn", type=float, help="criterion constant (default log p)")
    sp.add_argument("--df-tol", type=float)
    sp.add_argument("--cold-start", action="store_true")

    sp = sub.add_parser("simulate", help="benchmark on generated data")
    add_common(sp, data=False)
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--p", type=int, default=15)
    sp.add_argument("--reps", type=int, default=1)
    sp.add_argument("--emit-data", help="write one generated dataset as CSV and exit")

    sp = sub.add_parser("compare", help="run all four formulations")
    add_common(sp)

    sp = sub.add_parser("parallel-fit", help="consensus fit over data shards")
    add_common(sp)
    sp.add_argument("--partitions", type=int, default=2)
    sp.add_argument("--threads", type=int, default=1)
    return ap


def _load_problem(args):
    y, X = ingest_csv(args.data, response_col=args.response_col, header=args.header)
    p = X.shape[1]
    if args.constraints:
        D, C, d, E, f = parse_constraints(args.constraints, p=p)
    else:
        D, C, d, E, f = np.eye(p), np.zeros((0, p)), np.zeros(0), np.zeros((0, p)), np.zeros(0)
    return validate_problem(Problem(y=y, X=X, D=D, C=C, d=d, E=E, f=f, tau=args.tau))


def _config(args):
    return SolverConfig(
        gamma=args.gamma,
        eps_abs=args.eps_abs,
        eps_rel=args.eps_rel,
        max_iters=args.max_iters,
    )


def _emit(args, report):
    if args.out:
        emit_report(report, args.out, trace_path=args.trace)
    else:
        if hasattr(report, "beta_hat"):
            print(f"converged = {str(bool(report.converged)).lower()}")
            print(f"iterations = {report.iterations}")
            if report.objective_trace is not None and len(report.objective_trace):
                print(f"objective = {float(report.objective_trace[-1])!r}")
            print(f"beta = {_fmt(report.beta_hat)}")
        elif isinstance(report, list):
            for row in report:
                print(
                    f"{row.solver}: iters={row.iterations} time={row.wall_time:.3f}s "
                    f"obj={row.objective:.6f} eq={row.eq_violation_l1:.2e} "
                    f"status={row.status}"
                )
        elif isinstance(report, dict):
            for k, v in report.items():
                print(f"{k} = {_fmt(v)}")


def _run(args):
    if args.command == "fit":
        prob = _load_problem(args)
        pen = PenaltySpec(args.penalty, args.lam, args.xi)
        rep = solve(prob, pen, _config(args), solver=_SOLVER_FLAGS[args.solver])
        _emit(args, rep)
        return 0 if rep.converged else 3
    if args.command == "tune":
        prob = _load_problem(args)
        cfg = _config(args)
        grid = default_grid(prob, args.penalty, cfg, n_lambdas=args.n_lambdas, xi=args.xi)
        if args.cn is not None:
            grid.Cn = args.cn
        if args.df_tol is not None:
            grid.df_tol = args.df_tol
        lam, rep = select_lambda(
            prob,
            args.penalty,
            grid,
            cfg,
            solver=_SOLVER_FLAGS[args.solver],
            xi=args.xi,
            warm_start=not args.cold_start,
        )
        _emit(args, rep)
        return 0 if rep.converged else 3
    if args.command == "compare":
        prob = _load_problem(args)
        pen = PenaltySpec(args.penalty, args.lam, args.xi)
        rows = compare_solvers(prob, pen, _config(args))
        _emit(args, rows)
        return 0
    if args.command == "parallel-fit":
        prob = _load_problem(args)
        pen = PenaltySpec(args.penalty, args.lam, args.xi)
        ds = partition(
            prob.y, prob.X, args.partitions, args.seed,
            D=prob.D, C=prob.C, d=prob.d, E=prob.E, f=prob.f, tau=prob.tau,
        )
        rep = solve_parallel(ds, pen, _config(args), threads=args.threads)
        _emit(args, rep)
        return 0 if rep.converged else 3
    if args.command == "simulate":
        if args.emit_data:
            spec = ScenarioSpec(n=args.n, p=args.p, tau=args.tau, seed=args.seed)
            X, y, _ = gen_scenario(spec)
            write_dataset_csv(args.emit_data, y, X)
            print(f"wrote {args.emit_data}")
            return 0
        table = bench.replication_study(
            n=args.n,
            p=args.p,
            tau=args.tau,
            reps=args.reps,
            lam=args.lam,
            seed=args.seed,
            cfg=_config(args),
        )
        _emit(args, table)
        return 0
    raise ValueError(f"unhandled command {args.command}")


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return _run(args)
    except (ParseError, EmptyFile, UnknownKey, SpecDimensionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    except QradmmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line front end.

Subcommands
-----------
``experiment NAME``
    Monte Carlo study; writes ``NAME_stats.csv`` and ``NAME_stats.json``
    and, with ``--trajectories``, one CSV per run under ``NAME_runs/``.
``smooth CONFIG DATA``
    Smooth a measurement CSV (header ``t,z_1,...,z_m``; a blank cell marks a
    missing component) and write ``states.csv``, ``trace.csv`` and
    ``diagnostics.csv``.
``check CONFIG``
    Gradient, Jacobian and curvature-factorization self-tests at random states.
``schema``
    Print the JSON schema of model configs (documented in ``docs/config.md``).

Exit codes: 0 success, 1 numerical abort or failed check, 2 usage or
config error. ``TKSMOOTH_OUTPUT_DIR`` sets the default output directory.
"""
import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import CONFIG_SCHEMA, ConfigError, build_problem, load_config, measurement_dim, solver_config
from .errors import DimensionMismatch, InvalidPreset, NotPositiveDefinite
from .experiments import EXPERIMENTS, ExperimentSpec, parse_scheme, run_experiment
from .gauss_newton import SmootherConfig, run, write_trace_csv
from .linalg import factor
from .model import fd_jacobian
from .objective import evaluate, gradient_check

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2

GRAD_TOL = 1e-5
JAC_TOL = 1e-5


def fmt(x):
    """Shortest round-trip text for a float."""
    return repr(float(x))


def _out_dir(args):
    path = Path(args.out or os.environ.get("TKSMOOTH_OUTPUT_DIR") or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        out.writerows(rows)


def _solver_overrides(args):
    return dict(epsilon=args.epsilon, beta=args.beta, gamma=args.gamma, max_iter=args.max_iter)


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


# ---------------------------------------------------------------- experiment

def _parse_pair(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"expected 'r,s', got {text!r}")
    return float(parts[0]), float(parts[1])


def cmd_experiment(args):
    try:
        scheme = parse_scheme(args.scheme) if args.scheme else None
        smoothers = tuple(args.smoothers.split(",")) if args.smoothers else None
        dof = _parse_pair(args.dof) if args.dof else None
        scen_args = []
        if args.N is not None:
            scen_args.append(("N", args.N))
        if args.jump_size is not None:
            if not args.name.startswith("jump"):
                raise ValueError("--jump-size applies to the jump experiments only")
            scen_args.append(("jump_size", args.jump_size))
        config = SmootherConfig(**{k: v for k, v in _solver_overrides(args).items() if v is not None})
        spec = ExperimentSpec(args.name, runs=args.runs, seed=args.seed, smoothers=smoothers,
                              scheme=scheme, dof=dof, config=config, scenario_args=tuple(scen_args))
    except (ValueError, TypeError) as exc:
        _err(exc)
        return EXIT_USAGE

    stats = run_experiment(spec, n_jobs=args.jobs, keep_trajectories=args.trajectories)

    out = _out_dir(args)
    stem = args.name
    rows = []
    for s in stats.smoothers.values():
        d = s.summary()
        rows.append([stats.experiment, stats.scheme, stats.seed, d["smoother"], d["runs"],
                     fmt(d["median_mse"]), fmt(d["q025"]), fmt(d["q975"]),
                     fmt(d["mean_iterations"]), d["failures"], d["descent_violations"]])
    _write_csv(out / f"{stem}_stats.csv",
               ["experiment", "scheme", "seed", "smoother", "runs", "median_mse", "q025", "q975",
                "mean_iterations", "failures", "descent_violations"], rows)
    (out / f"{stem}_stats.json").write_text(stats.to_json() + "\n")

    if args.trajectories:
        tdir = out / f"{stem}_runs"
        tdir.mkdir(exist_ok=True)
        names = list(spec.smoothers)
        for i, (truth, z, est) in enumerate(stats.trajectories):
            n, m = truth.shape[1], z.shape[1]
            header = (["k"] + [f"truth_{j + 1}" for j in range(n)] + [f"z_{j + 1}" for j in range(m)]
                      + [f"{name}_{j + 1}" for name in names for j in range(n)])
            rows = []
            for k in range(len(truth)):
                row = [k] + [fmt(v) for v in truth[k]] + [fmt(v) for v in z[k]]
                for name in names:
                    vals = est[name][k] if est[name] is not None else [math.nan] * n
                    row += [fmt(v) for v in vals]
                rows.append(row)
            _write_csv(tdir / f"run_{i:04d}.csv", header, rows)

    for s in stats.smoothers.values():
        print(f"{s.name:>14s}  median MSE {s.median:.4g}  [{s.q025:.4g}, {s.q975:.4g}]  "
              f"failures {s.failures}")
    if stats.aborted:
        _err("some runs aborted on a non-positive-definite curvature matrix")
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------- smooth

def read_measurements(path, m):
    """Parse a measurement CSV into ``(t, z, missing)``.

    Blank cells become ``z = 0`` with ``missing = True``.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    expected = ["t"] + [f"z_{i + 1}" for i in range(m)]
    if header != expected:
        raise ConfigError(f"{path}: header must be {','.join(expected)}, got {','.join(header)}")
    t, z, missing = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != m + 1:
            raise ConfigError(f"{path}:{lineno}: expected {m + 1} fields, got {len(row)}")
        try:
            t.append(float(row[0]))
            cells = [c.strip() for c in row[1:]]
            z.append([float(c) if c else 0.0 for c in cells])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
        missing.append([not c for c in cells])
    t = np.array(t)
    if t.size == 0:
        raise ConfigError(f"{path} has no data rows")
    if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
        raise ConfigError(f"{path}: time column must be finite and strictly increasing")
    z = np.array(z, dtype=float).reshape(len(t), m)
    if not np.all(np.isfinite(z)):
        raise ConfigError(f"{path}: measurements must be finite")
    return t, z, np.array(missing, dtype=bool).reshape(len(t), m)


def cmd_smooth(args):
    try:
        doc = load_config(args.config)
        m = measurement_dim(doc)
        t, z, missing = read_measurements(args.data, m)
        spec = build_problem(doc, z, missing)
        config = solver_config(doc, **_solver_overrides(args))
    except NotPositiveDefinite as exc:
        _err(f"NotPositiveDefinite: {exc}")
        return EXIT_NUMERIC
    except (ConfigError, DimensionMismatch, InvalidPreset, ValueError, TypeError) as exc:
        _err(exc)
        return EXIT_USAGE

    try:
        res = run(spec, None, config)
    except NotPositiveDefinite as exc:
        _err(f"NotPositiveDefinite: {exc}")
        return EXIT_NUMERIC

    out = _out_dir(args)
    x = res.x_hat
    _write_csv(out / "states.csv", ["t"] + [f"x_{i + 1}" for i in range(spec.n)],
               [[fmt(t[k])] + [fmt(v) for v in x[k]] for k in range(spec.N)])
    write_trace_csv(res, out / "trace.csv")
    ev = evaluate(spec, x, hessian=False)
    qv = np.einsum("ki,kij,kj->k", ev.v, spec.precisions.Rinv, ev.v)
    qw = np.einsum("ki,kij,kj->k", ev.w, spec.precisions.Qinv, ev.w)
    _write_csv(out / "diagnostics.csv", ["t", "omega", "tau", "proc_sq_norm", "meas_sq_norm"],
               [[fmt(t[k]), fmt(ev.proc_weights[k]), fmt(ev.meas_weights[k]), fmt(qw[k]), fmt(qv[k])]
                for k in range(spec.N)])
    print(f"status {res.status.value}  iterations {res.iterations}  objective {res.objective:.10g}")
    return EXIT_OK


# ---------------------------------------------------------------- check

def _worst(J, fd):
    err = np.abs(J - fd) / (1.0 + np.abs(J))
    idx = np.unravel_index(int(np.argmax(err)), err.shape)
    return float(err[idx]), tuple(int(i) for i in idx)


def jacobian_errors(spec, x):
    """Worst relative Jacobian error of each model at ``x``.

    Returns ``{"process": (err, (k, i, j)), "measurement": (err, (k, i, j))}``
    with 0-based step and entry indices; ``k`` is the step whose model is
    differentiated.
    """
    out = {}
    proc, meas = spec.process, spec.measurement
    if spec.N > 1:
        J = proc.jacobians(x)
        fd = np.stack([fd_jacobian(lambda xp, k=k: proc.g(k, xp), x[k - 1]) for k in range(1, spec.N)])
        err, (k, i, j) = _worst(J, fd)
        out["process"] = (err, (k + 1, i, j))
    J = meas.jacobians(x)
    fd = np.stack([fd_jacobian(lambda xk, k=k: meas.h(k, xk), x[k]) for k in range(spec.N)])
    out["measurement"] = _worst(J, fd)
    return out


def cmd_check(args):
    try:
        doc = load_config(args.config)
        m = measurement_dim(doc)
        if args.data:
            _, z, missing = read_measurements(args.data, m)
        else:
            N = doc.get("N", 20)
            z = np.zeros((N, m)) if "z" not in doc else np.asarray(doc["z"], dtype=float).reshape(-1, m)
            missing = None
        spec = build_problem(doc, z, missing)
    except NotPositiveDefinite as exc:
        print(f"FAIL  precision check: NotPositiveDefinite: {exc}")
        return EXIT_NUMERIC
    except (ConfigError, DimensionMismatch, InvalidPreset, ValueError, TypeError) as exc:
        _err(exc)
        return EXIT_USAGE

    rng = np.random.Generator(np.random.Philox(args.seed))
    ok = True
    worst_grad = 0.0
    worst_jac = {}
    for trial in range(args.samples):
        x = args.scale * rng.standard_normal((spec.N, spec.n))
        worst_grad = max(worst_grad, gradient_check(spec, x))
        for name, (err, where) in jacobian_errors(spec, x).items():
            if err > worst_jac.get(name, (-1.0,))[0]:
                worst_jac[name] = (err, where, trial)
        try:
            factor(evaluate(spec, x).hessian)
        except NotPositiveDefinite as exc:
            print(f"FAIL  factorization at sample {trial}: NotPositiveDefinite at block {exc.block}")
            ok = False
            break

    grad_ok = worst_grad < GRAD_TOL
    ok &= grad_ok
    print(f"{'PASS' if grad_ok else 'FAIL'}  gradient check: max rel error {worst_grad:.3e} "
          f"(tol {GRAD_TOL:g})")
    for name, (err, (k, i, j), trial) in worst_jac.items():
        passed = err < JAC_TOL
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name} Jacobian: max rel error {err:.3e} "
              f"at k={k}, entry=({i}, {j}), sample {trial} (tol {JAC_TOL:g})")
    if ok:
        print(f"PASS  curvature factorization at {args.samples} random states")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_schema(args):
    print(json.dumps(CONFIG_SCHEMA, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_solver_flags(p):
    g = p.add_argument_group("solver overrides")
    g.add_argument("--epsilon", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--max-iter", type=int, dest="max_iter")


def build_parser():
    parser = argparse.ArgumentParser(prog="tksmooth", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("experiment", help="run a Monte Carlo study")
    p.add_argument("name", choices=EXPERIMENTS)
    p.add_argument("--scheme", help="nominal | gauss:P:VAR | uniform:P:A:B")
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--smoothers", help="comma-separated smoother names")
    p.add_argument("--dof", help="process and measurement dof as 'r,s'")
    p.add_argument("--N", type=int, help="number of time steps")
    p.add_argument("--jump-size", type=float, dest="jump_size")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--trajectories", action="store_true", help="dump per-run trajectory CSVs")
    p.add_argument("--out", help="output directory (default $TKSMOOTH_OUTPUT_DIR or .)")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("smooth", help="smooth a measurement CSV")
    p.add_argument("config")
    p.add_argument("data")
    p.add_argument("--out", help="output directory (default $TKSMOOTH_OUTPUT_DIR or .)")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("check", help="self-test a model config")
    p.add_argument("config")
    p.add_argument("--data", help="measurement CSV (default: config 'z' or zeros)")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0, help="std of random states")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("schema", help="print the config JSON schema")
    p.set_defaults(func=cmd_schema)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

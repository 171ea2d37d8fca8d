"""Command line driver: ``solve``, ``sweep`` and ``quadcheck``."""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .adaptive import run_adaptive
from .benchmarks import registry_get
from .config import RunConfig, load_config, parse_floats
from .errors import ConfigurationError, GegenoptError
from .gegenbauer import REFERENCE, Element
from .io import write_csv_samples, write_solution
from .nlp import solve
from .problem import affine_to_tau
from .quadrature import QuadErrorBound, build_obgim, eval_error_bound
from .transcription import Mesh, SpectralSolution, Transcription

log = logging.getLogger("gegenopt")

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2


# ---------------------------------------------------------------- solve


def run_solve(cfg: RunConfig):
    problem = registry_get(cfg.problem)
    mesh = cfg.initial_mesh(problem.t0, problem.tf)
    return run_adaptive(problem, mesh, cfg.adapt, cfg.nlp, init=cfg.init, solver=cfg.solver, adapt=cfg.adapt_enabled)


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.solution_path or f"{cfg.problem}.sol")
    csv_path = Path(cfg.csv_path) if cfg.csv_path else out.with_suffix(".csv")
    res = run_solve(cfg)
    sol = res.solution
    write_solution(sol, out, res.trace)
    write_csv_samples(sol, csv_path, cfg.samples_per_element)
    if cfg.trace_path:
        Path(cfg.trace_path).write_text("".join(rec.to_text() + "\n" for rec in res.trace))
    print(f"problem   {cfg.problem}")
    print(f"objective {sol.objective:.15g}")
    print(f"elements  {sol.mesh.K}")
    print("interfaces (t) " + " ".join(f"{t:.6g}" for t in sol.interfaces_time()))
    for w in res.warnings:
        print(f"warning: {w}")
    print(f"wrote {out} and {csv_path}" + (f" and {cfg.trace_path}" if cfg.trace_path else ""))
    return EXIT_OK if res.converged else EXIT_SOLVER


# ---------------------------------------------------------------- sweep


def sweep_row(name, alpha, N, L, M, Mbar, edges_tau, row_mode, nlp, init, solver):
    """Solve one fixed-mesh sweep row; runs in a worker process."""
    problem = registry_get(name)
    if edges_tau:
        mesh = Mesh.from_interfaces(edges_tau, N, L, L, M, Mbar, alpha, row_mode)
    else:
        mesh = Mesh.uniform(1, N, L, L, M, Mbar, alpha, row_mode)
    T = Transcription(problem, mesh)
    try:
        rep = solve(T.to_nlp(), T.initial_guess(init), nlp, solver=solver)
    except GegenoptError as exc:
        return dict(alpha=alpha, N=N, L=L, J=math.nan, status=f"error: {exc}", violation=math.nan, last=[])
    sol = SpectralSolution(problem, mesh, rep.z, rep.objective, rep.status)
    last = [np.concatenate([a, b]).tolist() for a, b in sol.last_coefficients()]
    return dict(alpha=alpha, N=N, L=L, J=rep.objective, status=rep.status, violation=rep.violation, last=last)


def run_sweep(cfg: RunConfig, alphas, fixed_edges=None, workers=None):
    """Rows sorted by ``(alpha, N)``."""
    if not alphas:
        raise ConfigurationError("the sweep needs at least one alpha")
    problem = registry_get(cfg.problem)
    edges = cfg.sweep.fixed_edges if fixed_edges is None else fixed_edges
    edges_tau = [float(v) for v in affine_to_tau(edges, problem.t0, problem.tf)] if edges else []
    if any(not -1.0 < v < 1.0 for v in edges_tau) or sorted(edges_tau) != edges_tau:
        raise ConfigurationError("fixed edges must be increasing and strictly inside the horizon")
    jobs = []
    for a in sorted(alphas):
        for i, N in sorted(enumerate(cfg.sweep.N), key=lambda p: p[1]):
            L = cfg.sweep.L_for(i, N)
            jobs.append((cfg.problem, float(a), N, L, cfg.M, cfg.Mbar, edges_tau, cfg.row_mode, cfg.nlp, cfg.init, cfg.solver))
    workers = workers or cfg.sweep.workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(sweep_row, *zip(*jobs)))
    else:
        rows = [sweep_row(*j) for j in jobs]
    return rows


def _last_columns(problem, K):
    names = [f"x{i + 1}" for i in range(problem.n_x)] + [f"u{i + 1}" for i in range(problem.n_u)]
    return [f"last_e{k + 1}_{v}" for k in range(K) for v in names]


def write_sweep_table(rows, path, problem) -> None:
    K = max((len(r["last"]) for r in rows), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "N", "L", "J", "status", "violation", "last_max"] + _last_columns(problem, K))
        for r in rows:
            flat = [v for el in r["last"] for v in el]
            w.writerow(
                [f"{r['alpha']:.17g}", r["N"], r["L"], f"{r['J']:.17g}", r["status"], f"{r['violation']:.3e}",
                 f"{max(flat, default=math.nan):.6e}"] + [f"{v:.6e}" for v in flat]
            )


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    alphas = parse_floats(args.alphas, "--alphas") if args.alphas is not None else cfg.sweep.alphas
    edges = parse_floats(args.fixed_edges, "--fixed-edges") if args.fixed_edges is not None else None
    rows = run_sweep(cfg, alphas, edges, args.workers)
    out = Path(args.out or cfg.sweep.table or f"{cfg.problem}_sweep.csv")
    write_sweep_table(rows, out, registry_get(cfg.problem))
    for r in rows:
        print(f"alpha={r['alpha']:<6g} N={r['N']:<3d} L={r['L']:<3d} J={r['J']:.10g} {r['status']}")
    print(f"wrote {out}")
    return EXIT_OK if all(r["status"] == "converged" for r in rows) else EXIT_SOLVER


# ---------------------------------------------------------------- quadcheck

# allowance for double rounding on top of the truncation bound
ROUNDING_FLOOR = 1e-14


def quadcheck_rows(m: int, alpha: float, exact_tol: float = 1e-12):
    """``(check, element, worst error, threshold, passed)`` tuples."""
    out = []
    for el in (REFERENCE, Element(0.3, 0.7)):
        y = np.linspace(el.left, el.right, 9)[1:]
        Q = build_obgim(el, y, m, alpha)
        worst = 0.0
        for d in range(m + 1):
            approx = Q.integrate(lambda t: t**d)
            exact = (y ** (d + 1) - el.left ** (d + 1)) / (d + 1)
            worst = max(worst, float(np.max(np.abs(approx - exact))))
        out.append((f"monomials deg<={m}", el, worst, exact_tol, worst <= exact_tol))
        err = np.abs(Q.integrate(np.sin) - (np.cos(el.left) - np.cos(y)))
        bound = np.array([eval_error_bound(QuadErrorBound(m, alpha, 1.0, el, yi)) for yi in y])
        ratio = float(np.max(err - bound))
        out.append(("sin within bound", el, float(np.max(err)), float(np.max(bound)) + ROUNDING_FLOOR, ratio <= ROUNDING_FLOOR))
    return out


def cmd_quadcheck(args) -> int:
    if args.m < 1:
        raise ConfigurationError("--m must be positive")
    rows = quadcheck_rows(args.m, args.alpha)
    if args.dump:
        upper = np.linspace(-1.0, 1.0, 9)[1:]
        Path(args.dump).write_text(build_obgim(REFERENCE, upper, args.m, args.alpha).to_text())
    print(f"{'check':<20} {'element':<12} {'error':>10} {'threshold':>10}  result")
    for name, el, err, thr, ok in rows:
        print(f"{name:<20} [{el.left:g},{el.right:g}]".ljust(33) + f" {err:10.2e} {thr:10.2e}  {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_SOLVER


# ---------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gegenopt", description="Adaptive Gegenbauer collocation for optimal control")
    ap.add_argument("-v", "--verbose", action="store_true", help="log every refinement iteration")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a registered benchmark from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="solution file (default from config, else <problem>.sol)")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="fixed-mesh sweep over alpha and degrees")
    w.add_argument("--config", required=True)
    w.add_argument("--alphas", help="comma-separated alpha values (overrides [sweep] alphas)")
    w.add_argument("--fixed-edges", help="comma-separated interior interfaces in original time")
    w.add_argument("--workers", type=int, default=None)
    w.add_argument("--out", help="table path (default from config, else <problem>_sweep.csv)")
    w.set_defaults(func=cmd_sweep)

    q = sub.add_parser("quadcheck", help="integration-matrix exactness and error-bound checks")
    q.add_argument("--m", type=int, required=True)
    q.add_argument("--alpha", type=float, required=True)
    q.add_argument("--dump", help="write the [-1, 1] matrix as comma-separated text")
    q.set_defaults(func=cmd_quadcheck)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GegenoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

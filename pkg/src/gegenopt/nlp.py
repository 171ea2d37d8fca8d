"""Dense nonlinear programming.

The built-in solver is an augmented Lagrangian method of
Powell-Hestenes-Rockafellar type.  Inequality ranges are handled through
slacks eliminated in closed form, so the inner problem only carries the
variable bounds; it is solved by a projected Newton iteration (exact Hessian
when the problem provides one, damped BFGS otherwise) with a backtracking
line search along the projection arc.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, NumericError

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps
_SQRT_EPS = np.sqrt(_EPS)


def fd_gradient(callback: Callable, z, scale: float = 1.0) -> np.ndarray:
    """Forward-difference gradient with steps ``sqrt(eps) * (1 + |z_i|)``."""
    z = np.asarray(z, dtype=float)
    f0 = float(callback(z))
    if not np.isfinite(f0):
        raise NumericError("non-finite objective at the base point")
    g = np.empty_like(z)
    for i in range(z.size):
        h = _SQRT_EPS * (1.0 + abs(z[i]))
        zp = z.copy()
        zp[i] += h
        fi = float(callback(zp))
        if not np.isfinite(fi):
            raise NumericError(f"non-finite objective when perturbing variable {i}")
        g[i] = (fi - f0) / h
    return scale * g


def fd_jacobian(callback: Callable, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    c0 = np.atleast_1d(np.asarray(callback(z), dtype=float))
    if not np.all(np.isfinite(c0)):
        raise NumericError("non-finite constraint values at the base point")
    J = np.empty((c0.size, z.size))
    for i in range(z.size):
        h = _SQRT_EPS * (1.0 + abs(z[i]))
        zp = z.copy()
        zp[i] += h
        ci = np.atleast_1d(np.asarray(callback(zp), dtype=float))
        if not np.all(np.isfinite(ci)):
            raise NumericError(f"non-finite constraint values when perturbing variable {i}")
        J[:, i] = (ci - c0) / h
    return J


def _empty(z):
    return np.zeros(0)


@dataclass
class NLPProblem:
    """``min f(z)`` s.t. ``eq(z) = 0``, ``ineq_lower <= ineq(z) <= ineq_upper``, ``lb <= z <= ub``.

    Derivative callbacks are optional; missing ones are replaced by forward
    differences.  ``hessian(z, y_eq, y_in)`` returns the Hessian of
    ``f - y_eq . eq - y_in . ineq``.  ``linear``, if given, is a triple
    ``(A, lo, hi)`` restating constraints that are linear in ``z``; the
    built-in solver satisfies these before its first nonlinear iteration.
    """

    n: int
    objective: Callable
    gradient: Optional[Callable] = None
    eq: Callable = _empty
    eq_jac: Optional[Callable] = None
    ineq: Callable = _empty
    ineq_jac: Optional[Callable] = None
    ineq_lower: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ineq_upper: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    hessian: Optional[Callable] = None
    partition: dict = field(default_factory=dict)
    linear: Optional[tuple] = None

    def __post_init__(self):
        self.lb = np.full(self.n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(self.n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        self.ineq_lower = np.asarray(self.ineq_lower, dtype=float)
        self.ineq_upper = np.asarray(self.ineq_upper, dtype=float)
        if np.any(self.lb > self.ub) or np.any(self.ineq_lower > self.ineq_upper):
            raise ConfigurationError("NLP bounds are not ordered")

    def grad(self, z):
        return self.gradient(z) if self.gradient else fd_gradient(self.objective, z)

    def jac_eq(self, z):
        return self.eq_jac(z) if self.eq_jac else fd_jacobian(self.eq, z).reshape(-1, self.n)

    def jac_in(self, z):
        return self.ineq_jac(z) if self.ineq_jac else fd_jacobian(self.ineq, z).reshape(-1, self.n)

    def violation(self, z) -> float:
        """Largest violation of equalities, inequality ranges and variable bounds."""
        parts = [0.0]
        ce = np.asarray(self.eq(z))
        if ce.size:
            parts.append(np.max(np.abs(ce)))
        ci = np.asarray(self.ineq(z))
        if ci.size:
            parts.append(np.max(np.maximum(self.ineq_lower - ci, ci - self.ineq_upper)))
        parts.append(np.max(np.maximum(self.lb - z, z - self.ub), initial=0.0))
        return float(max(parts))


@dataclass
class SolveOptions:
    feas_tol: float = 1e-8
    opt_tol: float = 1e-8
    max_iter: int = 60
    max_inner: int = 300
    penalty0: float = 10.0
    penalty_max: float = 1e14


@dataclass
class SolveReport:
    z: np.ndarray
    objective: float
    violation: float
    stationarity: float
    iterations: int
    status: str  # converged | max-iter | line-search-failure
    multipliers_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multipliers_in: np.ndarray = field(default_factory=lambda: np.zeros(0))
    history: list = field(default_factory=list)
    solver: str = "builtin"

    @property
    def converged(self) -> bool:
        return self.status == "converged"


class _Merit:
    """PHR augmented Lagrangian in ``z`` alone.

    Each range constraint ``l <= c_i <= u`` gets an implicit slack, minimized
    in closed form as ``s = clip(c_i - lam_i / mu, l, u)``; the result is once
    differentiable and its generalized Hessian is ``H_L + mu J^T D J`` with
    ``D`` selecting equalities and the clamped ranges.
    """

    def __init__(self, p: NLPProblem, lam, mu):
        self.p, self.lam, self.mu = p, lam, mu
        self.m_eq = None

    def residual(self, z):
        ce = np.atleast_1d(np.asarray(self.p.eq(z), dtype=float))
        ci = np.atleast_1d(np.asarray(self.p.ineq(z), dtype=float))
        self.m_eq = ce.size
        lam_i = self.lam[ce.size :]
        s = np.clip(ci - lam_i / self.mu, self.p.ineq_lower, self.p.ineq_upper)
        clamped = (s == self.p.ineq_lower) | (s == self.p.ineq_upper)
        return np.concatenate([ce, ci - s]), np.concatenate([np.ones(ce.size, bool), clamped])

    def value(self, z):
        r, _ = self.residual(z)
        return float(self.p.objective(z)) - self.lam @ r + 0.5 * self.mu * (r @ r)

    def grad_parts(self, z):
        r, active = self.residual(z)
        J = np.vstack([self.p.jac_eq(z).reshape(-1, self.p.n), self.p.jac_in(z).reshape(-1, self.p.n)])
        y = self.lam - self.mu * r
        return self.p.grad(z) - J.T @ y, J, y, active

    def lagrangian_grad(self, z, J, y):
        return self.p.grad(z) - J.T @ y


# an inner iterate this many times larger than its start is treated as runaway
_RUNAWAY = 1e8


def _project(v, lo, hi):
    return np.minimum(np.maximum(v, lo), hi)


def _stationarity(v, g, lo, hi) -> float:
    return float(np.max(np.abs(_project(v - g, lo, hi) - v), initial=0.0))


def _ldl_solve(K, rhs, n_pos):
    """Solve ``K x = rhs`` by a Bunch-Kaufman factorization if ``K`` has ``n_pos`` positive eigenvalues."""
    if not np.all(np.isfinite(K)):
        return None
    try:
        lu, d, perm = linalg.ldl(K, check_finite=False)
        diag, off = np.diag(d).copy(), np.diag(d, 1).copy()
        ev = linalg.eigvalsh_tridiagonal(diag, off, check_finite=False) if diag.size > 1 else diag
    except (linalg.LinAlgError, ValueError):
        return None
    if np.sum(ev > 0) != n_pos or np.any(ev == 0.0):
        return None
    Lt = lu[perm]
    w = linalg.solve_triangular(Lt, rhs[perm], lower=True, unit_diagonal=True, check_finite=False)
    ab = np.zeros((3, diag.size))
    ab[0, 1:], ab[1], ab[2, :-1] = off, diag, off
    w = linalg.solve_banded((1, 1), ab, w, check_finite=False)
    w = linalg.solve_triangular(Lt.T, w, lower=False, unit_diagonal=True, check_finite=False)
    x = np.empty_like(w)
    x[perm] = w
    return x


def _newton_direction(H, Ja, mu, g, free):
    """Minimizer of the quadratic model over the free variables.

    ``(H + mu Ja^T Ja) d = -g`` is solved in the augmented form
    ``[[H, Ja^T], [Ja, -I/mu]]`` which stays well conditioned as ``mu`` grows;
    the inertia of its factorization certifies a positive definite model.
    """
    d = np.zeros_like(g)
    nf = int(free.sum())
    if not nf:
        return d
    Hff = H[np.ix_(free, free)]
    Jf = Ja[:, free]
    m = Jf.shape[0]
    if not (np.all(np.isfinite(Hff)) and np.all(np.isfinite(Jf))):
        d[free] = -g[free]
        return d
    scale = max(1.0, float(np.max(np.abs(np.diag(Hff)))))
    rhs = np.concatenate([-g[free], np.zeros(m)])
    # a small proximal term pins directions the model does not see at all
    shift = 1e-10 * scale
    for _ in range(40):
        K = np.block([[Hff + shift * np.eye(nf), Jf.T], [Jf, -np.eye(m) / mu]])
        sol = _ldl_solve(K, rhs, nf)
        if sol is not None and np.all(np.isfinite(sol)):
            d[free] = sol[:nf]
            return d
        shift = max(10.0 * shift, 1e-8 * scale)
    d[free] = -g[free] / scale
    return d


def _inner_solve(merit: _Merit, z, tol, max_iter, bfgs):
    """Projected (semismooth) Newton on the merit function.

    Returns ``(z, ok, iterations, diverged)``; ``diverged`` flags an iterate
    running off to infinity, which happens when the penalty is too small to
    bound the merit from below.
    """
    p = merit.p
    lo, hi = p.lb, p.ub
    z_cap = _RUNAWAY * (1.0 + np.max(np.abs(z), initial=0.0))
    phi = merit.value(z)
    g, J, y, active_c = merit.grad_parts(z)
    for it in range(max_iter):
        pg = _stationarity(z, g, lo, hi)
        if pg <= tol:
            return z, True, it, False
        if not np.isfinite(pg) or np.max(np.abs(z), initial=0.0) > z_cap:
            return z, False, it, True
        H_l = p.hessian(z, y[: merit.m_eq], y[merit.m_eq :]) if p.hessian is not None else bfgs.matrix
        Ja = J[active_c]
        eps_act = min(1e-3, pg)
        at_bound = ((z <= lo + eps_act) & (g > 0)) | ((z >= hi - eps_act) & (g < 0))
        free = ~at_bound
        d = _newton_direction(H_l, Ja, merit.mu, g, free)
        if at_bound.any():
            curv = np.abs(np.diag(H_l))[at_bound] + merit.mu * np.sum(Ja[:, at_bound] ** 2, axis=0)
            d[at_bound] = -g[at_bound] / np.maximum(curv, 1e-12)
        step, accepted, parts = 1.0, False, None
        noise = 1e3 * _EPS * max(1.0, abs(phi))
        for _ in range(60):
            trial = _project(z + step * d, lo, hi)
            decrease = g @ (trial - z)
            phi_t = merit.value(trial)
            if np.isfinite(phi_t) and phi_t < phi and phi_t <= phi + 1e-4 * min(decrease, 0.0):
                accepted = True
                break
            if step == 1.0 and np.isfinite(phi_t) and abs(phi_t - phi) <= noise:
                # the merit is flat to rounding: judge the full step by its gradient instead
                parts = merit.grad_parts(trial)
                if _stationarity(trial, parts[0], lo, hi) < pg:
                    accepted = True
                    break
                parts = None
            step *= 0.5
            if step * np.max(np.abs(d), initial=0.0) <= 1e-15 * (1.0 + np.max(np.abs(z), initial=0.0)):
                break
        if not accepted:
            return z, pg <= 100 * tol, it, False
        g_new, J_new, y_new, active_new = parts if parts is not None else merit.grad_parts(trial)
        if p.hessian is None:
            # curvature pairs of the Lagrangian part only; the penalty term is exact
            bfgs.update(trial - z, merit.lagrangian_grad(trial, J_new, y_new) - merit.lagrangian_grad(z, J, y_new))
        z, phi, g, J, y, active_c = trial, phi_t, g_new, J_new, y_new, active_new
    return z, _stationarity(z, g, lo, hi) <= tol, max_iter, False


class _DampedBFGS:
    def __init__(self, n):
        self.matrix = np.eye(n)

    def update(self, s, r):
        B = self.matrix
        Bs = B @ s
        sBs = s @ Bs
        if sBs <= 1e-16:
            return
        sr = s @ r
        theta = 1.0 if sr >= 0.2 * sBs else 0.8 * sBs / (sBs - sr)
        r = theta * r + (1.0 - theta) * Bs
        self.matrix = B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / (s @ r)


def kkt_measure(p: NLPProblem, z, act_tol: float = 1e-8):
    """First-order stationarity at ``z`` with least-squares multipliers.

    Multipliers of the equalities and of the inequality ranges active within
    ``act_tol`` are fitted to ``grad f`` under the sign conditions of a
    minimum; the measure is the projected gradient of the resulting
    Lagrangian.  Returns ``(measure, y_eq, y_in)``.
    """
    from scipy.optimize import lsq_linear

    g = p.grad(z)
    Je = p.jac_eq(z).reshape(-1, p.n)
    ci = np.atleast_1d(np.asarray(p.ineq(z), dtype=float))
    at_lo = np.abs(ci - p.ineq_lower) <= act_tol
    at_hi = (np.abs(ci - p.ineq_upper) <= act_tol) & ~at_lo
    act = np.flatnonzero(at_lo | at_hi)
    y_in = np.zeros(ci.size)
    A = Je.T
    lo = np.full(Je.shape[0], -np.inf)
    hi = np.full(Je.shape[0], np.inf)
    if act.size:
        Ji = p.jac_in(z).reshape(-1, p.n)[act]
        A = np.hstack([A, Ji.T])
        lo = np.concatenate([lo, np.where(at_lo[act], 0.0, -np.inf)])
        hi = np.concatenate([hi, np.where(at_lo[act], np.inf, 0.0)])
    if A.shape[1]:
        # a degenerate equal-bounds column (both range ends active) is free
        y = lsq_linear(A, g, bounds=(lo, hi), method="bvls", tol=1e-14).x
    else:
        y = np.zeros(0)
    y_eq = y[: Je.shape[0]]
    y_in[act] = y[Je.shape[0] :]
    grad_l = g - (A @ y if y.size else 0.0)
    return _stationarity(z, grad_l, p.lb, p.ub), y_eq, y_in


def linear_start(p: NLPProblem, z0, tol: float = 1e-10):
    """Closest point to ``z0`` satisfying the linear rows and the variable bounds."""
    z0 = _project(np.asarray(z0, dtype=float), p.lb, p.ub)
    if p.linear is None:
        return z0
    A, lo, hi = (np.asarray(v, dtype=float) for v in p.linear)
    Az = A @ z0
    if A.shape[0] == 0 or np.all((Az >= lo - tol) & (Az <= hi + tol)):
        return z0
    from scipy import optimize

    bounds = optimize.Bounds(p.lb, p.ub)
    res = optimize.minimize(
        lambda z: 0.5 * np.sum((z - z0) ** 2), z0, jac=lambda z: z - z0, hess=lambda z: np.eye(z.size),
        method="trust-constr", constraints=[optimize.LinearConstraint(A, lo, hi)], bounds=bounds,
        options={"gtol": 1e-12, "xtol": 1e-14, "maxiter": 2000},
    )
    return _project(res.x, p.lb, p.ub)


def solve_builtin(p: NLPProblem, z0, opts: SolveOptions | None = None) -> SolveReport:
    opts = opts or SolveOptions()
    z = linear_start(p, z0)
    m_eq = np.atleast_1d(p.eq(z)).size
    lam = np.zeros(m_eq + p.ineq_lower.size)
    mu = opts.penalty0
    bfgs = _DampedBFGS(p.n)
    history = []
    prev_viol = np.inf
    status, inner_ok = "max-iter", True
    stat = np.inf
    iterations = 0
    for outer in range(1, opts.max_iter + 1):
        iterations = outer
        merit = _Merit(p, lam, mu)
        tol = opts.opt_tol if prev_viol <= opts.feas_tol else max(opts.opt_tol, 10.0 ** (-outer - 1))
        z_start = z
        z, inner_ok, n_inner, diverged = _inner_solve(merit, z, tol, opts.max_inner, bfgs)
        if diverged:
            history.append({"outer": outer, "violation": np.inf, "stationarity": np.inf, "penalty": mu, "inner": n_inner})
            z = z_start
            if mu >= opts.penalty_max:
                status = "line-search-failure"
                break
            mu = min(10.0 * mu, opts.penalty_max)
            continue
        g, _, y, _ = merit.grad_parts(z)
        viol = p.violation(z)
        stat = _stationarity(z, g, p.lb, p.ub)
        if viol <= opts.feas_tol:
            # first-order AL multipliers carry mu * eps noise; refit them
            stat_ls, y_eq, y_in = kkt_measure(p, z, opts.feas_tol)
            if stat_ls < stat:
                stat, kkt_y = stat_ls, np.concatenate([y_eq, y_in])
            else:
                kkt_y = y
        history.append({"outer": outer, "violation": viol, "stationarity": stat, "penalty": mu, "inner": n_inner})
        log.debug("outer %d: viol=%.3e stat=%.3e mu=%.1e inner=%d", outer, viol, stat, mu, n_inner)
        if viol <= opts.feas_tol and stat <= opts.opt_tol:
            lam = kkt_y
            status = "converged"
            break
        if viol <= 0.25 * prev_viol or viol <= opts.feas_tol:
            lam = y
        else:
            mu = min(10.0 * mu, opts.penalty_max)
        prev_viol = min(prev_viol, viol)
    else:
        status = "max-iter"
    if status == "max-iter" and not inner_ok:
        status = "line-search-failure"
    return SolveReport(
        z=z.copy(),
        objective=float(p.objective(z)),
        violation=p.violation(z),
        stationarity=stat,
        iterations=iterations,
        status=status,
        multipliers_eq=lam[:m_eq].copy(),
        multipliers_in=lam[m_eq:].copy(),
        history=history,
    )


def _solve_slsqp(p: NLPProblem, z0, opts: SolveOptions | None = None) -> SolveReport:
    from scipy import optimize

    opts = opts or SolveOptions()
    cons = []
    if p.partition.get("eq", None) != 0 and np.atleast_1d(p.eq(z0)).size:
        cons.append({"type": "eq", "fun": p.eq, "jac": p.jac_eq})
    if p.ineq_lower.size:
        lo_ok, hi_ok = np.isfinite(p.ineq_lower), np.isfinite(p.ineq_upper)
        cons.append({"type": "ineq", "fun": lambda z: (p.ineq(z) - p.ineq_lower)[lo_ok], "jac": lambda z: p.jac_in(z)[lo_ok]})
        cons.append({"type": "ineq", "fun": lambda z: (p.ineq_upper - p.ineq(z))[hi_ok], "jac": lambda z: -p.jac_in(z)[hi_ok]})
    bounds = list(zip(np.where(np.isfinite(p.lb), p.lb, None), np.where(np.isfinite(p.ub), p.ub, None)))
    res = optimize.minimize(
        p.objective, np.asarray(z0, dtype=float), jac=p.grad, method="SLSQP", bounds=bounds,
        constraints=cons, options={"maxiter": 50 * opts.max_iter, "ftol": opts.opt_tol**2},
    )
    viol = p.violation(res.x)
    ok = res.success and viol <= opts.feas_tol
    return SolveReport(
        z=res.x, objective=float(res.fun), violation=viol, stationarity=float("nan"),
        iterations=int(res.nit), status="converged" if ok else "max-iter", solver="scipy-slsqp",
    )


_SOLVERS: dict[str, Callable] = {"builtin": solve_builtin, "scipy-slsqp": _solve_slsqp}
_DEFAULT = "builtin"


def register_external_solver(name: str, adapter: Callable, default: bool = False) -> None:
    """Register ``adapter(problem, z0, opts) -> SolveReport`` under ``name``."""
    global _DEFAULT
    if not callable(adapter):
        raise ConfigurationError("solver adapter must be callable")
    _SOLVERS[name] = adapter
    if default:
        _DEFAULT = name


def unregister_solver(name: str) -> None:
    global _DEFAULT
    if name == "builtin":
        raise ConfigurationError("the built-in solver cannot be removed")
    _SOLVERS.pop(name, None)
    if _DEFAULT == name:
        _DEFAULT = "builtin"


def get_solver(name: str | None = None) -> Callable:
    key = name or _DEFAULT
    try:
        return _SOLVERS[key]
    except KeyError:
        raise ConfigurationError(f"unknown NLP solver {key!r}; registered: {sorted(_SOLVERS)}") from None


def available_solvers() -> list[str]:
    return sorted(_SOLVERS)


def solve(p: NLPProblem, z0, opts: SolveOptions | None = None, solver: str | None = None) -> SolveReport:
    return get_solver(solver)(p, z0, opts or SolveOptions())

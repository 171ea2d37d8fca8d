"""h/p mesh refinement driven by midpoint residuals and trailing coefficients.

Each element is checked at the midpoints of its augmented collocation nodes:
the integral form of the dynamics is re-evaluated there with a small check
quadrature, and the element is accepted when the largest residual and every
trailing spectral coefficient are small.  Failing elements are split at the
peaks of the normalized residual profile or get more nodes and terms.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .gegenbauer import Element, basis_row, collocation_nodes
from .nlp import SolveOptions, solve
from .problem import OCProblem, PointwiseFunction, tau_to_t
from .quadrature import build_obgim, row_params
from .transcription import ElementConfig, Mesh, SpectralSolution, Transcription, alternating_ones, refit

log = logging.getLogger(__name__)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0

ACCEPT = "accept"
SPLIT = "split"
P_INCREASE = "p-increase"
FORCED_GOLDEN = "forced-golden-split"
CAPPED = "capped-accept-with-warning"


@dataclass(frozen=True)
class AdaptParams:
    eps_R: float = 1e-2
    eps_coeff: float = 1e-3
    rho: float = 1.5
    k_max: int = 20
    eps_ES: float = 0.1
    N_bar: int = 4
    Lx_bar: int = 4
    Lu_bar: int = 4
    N_max: int = 30
    Lx_max: int = 30
    Lu_max: int = 30
    Mbar: int = 4
    max_iter: int = 30
    check_mode: str = "fixed"

    def __post_init__(self):
        if not self.rho > 1:
            raise ConfigurationError("rho must exceed 1")
        if not self.eps_ES > 0:
            raise ConfigurationError("edge spacing must be positive")
        if min(self.N_bar, self.Lx_bar, self.Lu_bar, self.Mbar, self.k_max, self.max_iter) < 1:
            raise ConfigurationError("increments, Mbar, k_max and max_iter must be positive")
        if self.eps_R <= 0 or self.eps_coeff <= 0:
            raise ConfigurationError("acceptance thresholds must be positive")

    def check_caps(self, cfg: ElementConfig) -> None:
        if cfg.N > self.N_max or cfg.Lx > self.Lx_max or cfg.Lu > self.Lu_max:
            raise ConfigurationError("degree caps must not be below the initial degrees")


@dataclass
class ElementReport:
    residual: np.ndarray  # (N + 1, n_x)
    i_max: int
    j_max: int
    beta: Optional[np.ndarray]
    peaks: list
    condition_A: bool
    condition_B: bool
    last_coefficients: np.ndarray
    midpoints: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(self.residual[self.i_max, self.j_max])


@dataclass(frozen=True)
class Action:
    kind: str
    points: tuple = ()
    config: Optional[ElementConfig] = None
    warning: str = ""


# -- diagnostics ---------------------------------------------------------
def midpoints(element: Element, N: int, alpha: float) -> np.ndarray:
    nodes = collocation_nodes(alpha, N, element)
    return 0.5 * (nodes[:-1] + nodes[1:])


def residual_matrix(problem: OCProblem, cfg: ElementConfig, alpha: float, A, B, mode: str = "fixed") -> np.ndarray:
    """Absolute integral-dynamics residuals at the element midpoints, ``(N + 1, n_x)``."""
    el = cfg.element
    mids = midpoints(el, cfg.N, alpha)
    # check samples are indexed 0..Mbar, so Mbar + 1 adjoint nodes
    P = build_obgim(el, mids, cfg.Mbar, row_params(mode, alpha, cfg.Mbar, el, mids))
    A = np.asarray(A, dtype=float).reshape(problem.n_x, cfg.Lx + 1)
    B = np.asarray(B, dtype=float).reshape(problem.n_u, cfg.Lu + 1)
    z = P.adjoint_nodes
    x = np.tensordot(A, basis_row(alpha, cfg.Lx, el, z), axes=([1], [-1]))
    u = np.tensordot(B, basis_row(alpha, cfg.Lu, el, z), axes=([1], [-1]))
    w = np.concatenate([x, u])
    f = PointwiseFunction(problem.dynamics, problem.n_x, problem.n_u, problem.n_x, "dynamics")
    t = tau_to_t(z, problem.t0, problem.tf)
    F = f(w.reshape(w.shape[0], -1), t.ravel(), " at the residual check points").reshape(x.shape)
    integral = np.einsum("ij,rij->ri", P.entries, F)
    x_mid = A @ basis_row(alpha, cfg.Lx, el, mids).T
    left = A @ alternating_ones(cfg.Lx + 1)
    return np.abs(x_mid - left[:, None] - problem.half_horizon * integral).T


def condition_A(R, eps_R: float) -> bool:
    return bool(np.max(R) < eps_R)


def condition_B(A, B, eps_coeff: float) -> bool:
    last = np.concatenate([np.abs(np.atleast_2d(A)[:, -1]), np.abs(np.atleast_2d(B)[:, -1])])
    return bool(np.all(last < eps_coeff))


def worst_column(R) -> tuple[int, int]:
    i, j = np.unravel_index(int(np.argmax(R)), R.shape)
    return int(i), int(j)


def beta_vector(R) -> Optional[np.ndarray]:
    """Worst residual column over its mean; ``None`` when that mean is zero."""
    R = np.asarray(R, dtype=float)
    _, j = worst_column(R)
    r = R[:, j]
    mean = r.mean()
    if mean == 0.0:
        return None
    return r / mean


def beta_peaks(beta) -> list[tuple[int, float]]:
    """Strict interior local maxima plus the endpoint cases."""
    b = np.asarray(beta, dtype=float)
    n = b.size
    if n == 0:
        return []
    if n == 1:
        return []
    peaks = [(i, float(b[i])) for i in range(1, n - 1) if b[i - 1] < b[i] > b[i + 1]]
    if b[0] > b[1]:
        peaks.insert(0, (0, float(b[0])))
    if b[-1] > b[-2]:
        peaks.append((n - 1, float(b[-1])))
    return peaks


def element_report(problem: OCProblem, cfg: ElementConfig, alpha: float, A, B, params: AdaptParams) -> ElementReport:
    R = residual_matrix(problem, cfg, alpha, A, B, params.check_mode)
    i_max, j_max = worst_column(R)
    beta = beta_vector(R)
    last = np.concatenate([np.abs(A[:, -1]), np.abs(B[:, -1])])
    return ElementReport(
        residual=R,
        i_max=i_max,
        j_max=j_max,
        beta=beta,
        peaks=beta_peaks(beta) if beta is not None else [],
        condition_A=condition_A(R, params.eps_R),
        condition_B=condition_B(A, B, params.eps_coeff),
        last_coefficients=last,
        midpoints=midpoints(cfg.element, cfg.N, alpha),
    )


# -- decisions -------------------------------------------------------------
def golden_split_point(element: Element) -> float:
    return element.left + element.length / GOLDEN


def _raised(cfg: ElementConfig, params: AdaptParams) -> ElementConfig:
    return replace(
        cfg,
        N=min(cfg.N + params.N_bar, params.N_max),
        Lx=min(cfg.Lx + params.Lx_bar, params.Lx_max),
        Lu=min(cfg.Lu + params.Lu_bar, params.Lu_max),
    )


def _at_caps(cfg: ElementConfig, params: AdaptParams) -> bool:
    return cfg.N >= params.N_max and cfg.Lx >= params.Lx_max and cfg.Lu >= params.Lu_max


def _p_or_capped(cfg, params) -> Action:
    if _at_caps(cfg, params):
        msg = f"element [{cfg.element.left:.6g}, {cfg.element.right:.6g}] accepted at the degree caps without meeting both conditions"
        return Action(CAPPED, warning=msg)
    return Action(P_INCREASE, config=_raised(cfg, params))


def decide(cfg: ElementConfig, report: ElementReport, params: AdaptParams, splits_so_far: int) -> Action:
    """Refinement action for one element."""
    if report.condition_A and report.condition_B:
        return Action(ACCEPT)
    el = cfg.element
    budget = params.k_max - splits_so_far
    wide = el.length >= params.eps_ES
    over = [(i, b) for i, b in report.peaks if b > params.rho]
    if not over:
        if _at_caps(cfg, params) and wide and budget > 0:
            return Action(FORCED_GOLDEN, points=(golden_split_point(el),))
        return _p_or_capped(cfg, params)
    if not wide or budget <= 0:
        return _p_or_capped(cfg, params)
    mids = report.midpoints
    cand = [(mids[i], b) for i, b in over]
    keep = [(p, b) for p, b in cand if p - el.left >= params.eps_ES and el.right - p >= params.eps_ES]
    if not keep:
        return Action(SPLIT, points=(golden_split_point(el),))
    if len(keep) > budget:
        keep = sorted(keep, key=lambda pb: -pb[1])[:budget]
    return Action(SPLIT, points=tuple(sorted(float(p) for p, _ in keep)))


def apply_actions(mesh: Mesh, actions: list[Action]) -> Mesh:
    out = []
    for cfg, act in zip(mesh.elements, actions):
        if act.kind in (SPLIT, FORCED_GOLDEN):
            pts = [cfg.element.left, *act.points, cfg.element.right]
            out.extend(replace(cfg, element=Element(a, b)) for a, b in zip(pts[:-1], pts[1:]))
        elif act.kind == P_INCREASE:
            out.append(act.config)
        else:
            out.append(cfg)
    return Mesh(tuple(out), mesh.alpha, mesh.row_mode)


# -- driver ----------------------------------------------------------------
@dataclass
class IterationRecord:
    iteration: int
    interfaces: list
    objective: float
    status: str
    violation: float
    max_residuals: list
    actions: list
    degrees: list

    def to_text(self) -> str:
        acts = ";".join(
            a.kind + ("@" + "|".join(f"{p:.17g}" for p in a.points) if a.points else "") for a in self.actions
        )
        return (
            f"iter={self.iteration} status={self.status} J={self.objective:.17g} viol={self.violation:.3e} "
            f"interfaces={','.join(f'{p:.17g}' for p in self.interfaces)} "
            f"maxR={','.join(f'{r:.3e}' for r in self.max_residuals)} "
            f"degrees={','.join(f'{n}/{lx}/{lu}' for n, lx, lu in self.degrees)} actions={acts}"
        )


@dataclass
class AdaptiveResult:
    solution: SpectralSolution
    trace: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    converged: bool = False
    splits: int = 0


def run_adaptive(
    problem: OCProblem,
    mesh: Mesh,
    params: AdaptParams,
    nlp_opts: Optional[SolveOptions] = None,
    init: float = 0.0,
    solver: Optional[str] = None,
    adapt: bool = True,
) -> AdaptiveResult:
    """Solve, diagnose every element, refine, and repeat until all elements pass.

    With ``adapt=False`` the mesh is solved once and only diagnosed; the
    result then counts as converged when the NLP did.
    """
    for cfg in mesh.elements:
        params.check_caps(cfg)
    nlp_opts = nlp_opts or SolveOptions()
    z0 = Transcription(problem, mesh).initial_guess(init)
    splits = 0
    trace: list[IterationRecord] = []
    warnings: list[str] = []
    sol = None
    reports: list[ElementReport] = []
    for it in range(1, params.max_iter + 1):
        T = Transcription(problem, mesh)
        rep = solve(T.to_nlp(), z0, nlp_opts, solver=solver)
        sol = SpectralSolution(problem, mesh, rep.z, rep.objective, rep.status)
        reports = [element_report(problem, cfg, mesh.alpha, A, B, params) for cfg, (A, B) in zip(mesh.elements, sol.blocks)]
        actions = []
        for cfg, r in zip(mesh.elements, reports):
            act = decide(cfg, r, params, splits)
            splits += len(act.points)
            actions.append(act)
        trace.append(
            IterationRecord(
                it,
                list(tau_to_t(mesh.interfaces, problem.t0, problem.tf)),
                rep.objective,
                rep.status,
                rep.violation,
                [r.max_residual for r in reports],
                actions,
                [(c.N, c.Lx, c.Lu) for c in mesh.elements],
            )
        )
        log.info("%s", trace[-1].to_text())
        if not rep.converged:
            warnings.append(f"iteration {it}: NLP solver status {rep.status}")
        done = all(a.kind in (ACCEPT, CAPPED) for a in actions)
        if done or not adapt:
            warnings.extend(a.warning for a in actions if a.warning)
            sol.warnings = list(warnings)
            ok = (done or not adapt) and rep.converged
            return AdaptiveResult(sol, trace, reports, warnings, converged=ok, splits=splits)
        new_mesh = apply_actions(mesh, actions)
        z0 = refit(sol, new_mesh)
        mesh = new_mesh
    warnings.append(f"refinement stopped after {params.max_iter} iterations")
    sol.warnings = list(warnings)
    return AdaptiveResult(sol, trace, reports, warnings, converged=False, splits=splits)

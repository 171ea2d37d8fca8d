"""Rectangular barycentric Gegenbauer integration matrices.

Row ``i`` of an :class:`IntegrationMatrix` maps samples of ``g`` at that
row's adjoint nodes to an approximation of ``int_{left}^{y_i} g``.  The
adjoint nodes are the Gauss nodes of the degree ``M + 1`` shifted Gegenbauer
polynomial on the whole element, so every row is exact on polynomials of
degree ``M``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .errors import DomainError
from .gegenbauer import REFERENCE, Element, check_alpha, shifted_gauss_nodes

# search domain [-1/2 + eps, r] for the bound-minimizing parameter
ALPHA_GRID = np.linspace(-0.5 + 0.1, 2.0, 101)


@dataclass(frozen=True)
class IntegrationMatrix:
    entries: np.ndarray  # (rows, M + 1)
    upper_limits: np.ndarray  # (rows,)
    adjoint_nodes: np.ndarray  # (rows, M + 1)
    row_params: np.ndarray  # (rows,)
    element: Element

    @property
    def M(self) -> int:
        return self.entries.shape[1] - 1

    @property
    def shape(self):
        return self.entries.shape

    def apply(self, samples: np.ndarray) -> np.ndarray:
        """Integrals for every row; ``samples`` has the shape of ``adjoint_nodes``."""
        return np.einsum("ij,ij->i", self.entries, samples)

    def integrate(self, g) -> np.ndarray:
        """Apply every row to a vectorized callable ``g``."""
        return self.apply(g(self.adjoint_nodes))

    def to_text(self) -> str:
        """Row-major comma separated dump with 17 significant digits."""
        return "\n".join(",".join(f"{v:.17g}" for v in row) for row in self.entries) + "\n"


def barycentric_weights(nodes) -> np.ndarray:
    """Weights ``1 / prod_{l != j} (z_j - z_l)`` scaled to unit max modulus."""
    z = np.asarray(nodes, dtype=float)
    diff = z[:, None] - z[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise DomainError("barycentric weights need pairwise distinct nodes")
    # scale differences by the node spread to stay clear of under/overflow
    scale = 4.0 / (z.max() - z.min()) if z.size > 1 else 1.0
    w = 1.0 / np.prod(diff * scale, axis=1)
    return w / np.max(np.abs(w))


def lagrange_basis(nodes, weights, t) -> np.ndarray:
    """Barycentric Lagrange basis values, shape ``(len(t), len(nodes))``."""
    z = np.asarray(nodes, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    diff = t[:, None] - z[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = weights[None, :] / diff
        out = terms / terms.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    if hit.any():
        out[hit] = exact[hit].astype(float)
    return out


def barycentric_interpolate(nodes, values, t) -> np.ndarray:
    w = barycentric_weights(nodes)
    return lagrange_basis(nodes, w, t) @ np.asarray(values, dtype=float)


def build_obgim(
    element: Element,
    upper_limits: Sequence[float],
    M: int,
    row_params: Sequence[float] | float,
) -> IntegrationMatrix:
    """Integration matrix with one row per upper limit.

    Entry ``(i, j)`` is the integral over ``[element.left, y_i]`` of the
    ``j``-th Lagrange basis polynomial on row ``i``'s adjoint nodes, evaluated
    with an ``(M + 1)``-point Gauss-Legendre rule (exact for degree ``M``).
    """
    if M < 1:
        raise DomainError("integration matrices need M >= 1")
    y = np.asarray(upper_limits, dtype=float)
    params = np.broadcast_to(np.asarray(row_params, dtype=float), y.shape).copy()
    if np.any(y <= element.left) or np.any(y > element.right):
        raise DomainError("upper limits must lie in (left, right]")
    gl_x, gl_w = np.polynomial.legendre.leggauss(M + 1)

    entries = np.empty((y.size, M + 1))
    nodes = np.empty((y.size, M + 1))
    for alpha in np.unique(params):
        rows = np.flatnonzero(params == alpha)
        z = shifted_gauss_nodes(check_alpha(alpha), M + 1, element)
        w = barycentric_weights(z)
        half = 0.5 * (y[rows] - element.left)
        t = element.left + half[:, None] * (gl_x[None, :] + 1.0)
        basis = lagrange_basis(z, w, t.ravel()).reshape(rows.size, M + 1, M + 1)
        entries[rows] = half[:, None] * np.einsum("q,rqj->rj", gl_w, basis)
        nodes[rows] = z
    return IntegrationMatrix(entries, y, nodes, params, element)


def scale_to_element(reference: IntegrationMatrix, element: Element) -> IntegrationMatrix:
    """Map a matrix built on [-1, 1] onto ``element``: entries scale by half its length."""
    if reference.element != REFERENCE:
        raise DomainError("scale_to_element expects a matrix built on [-1, 1]")
    if element == REFERENCE:
        return reference
    return IntegrationMatrix(
        0.5 * element.length * reference.entries,
        element.from_reference(reference.upper_limits),
        element.from_reference(reference.adjoint_nodes),
        reference.row_params.copy(),
        element,
    )


@dataclass(frozen=True)
class QuadErrorBound:
    m: int
    alpha_star: float
    derivative_bound: float = 1.0
    element: Element = field(default=REFERENCE)
    upper_limit: float = 1.0
    asymptotic: bool = False


def _case_factor(m: int, alpha: float, asymptotic: bool) -> float:
    if alpha >= 0.0:
        return 1.0
    if asymptotic:
        # B_2 (m + 1)^(-alpha) with the unknown B_2 set to 1
        return (m + 1.0) ** (-alpha)
    lg = special.gammaln
    if m % 2 == 1:
        return math.exp(lg(m / 2 + 1) + lg(alpha + 0.5) - lg(m / 2 + alpha + 1)) / math.sqrt(math.pi)
    return (
        2.0
        * math.exp(lg((m + 3) / 2) + lg(alpha + 0.5) - lg((m + 1) / 2 + alpha))
        / (math.sqrt(math.pi) * math.sqrt((m + 1.0) * (m + 2.0 * alpha + 1.0)))
    )


def eval_error_bound(b: QuadErrorBound) -> float:
    """Truncation-error bound of a quadrature row; unknown constants are taken as 1."""
    alpha = check_alpha(b.alpha_star)
    if b.m < 1:
        raise DomainError("bound needs m >= 1")
    if b.derivative_bound < 0:
        raise DomainError("derivative bound must be non-negative")
    if b.derivative_bound == 0.0:
        return 0.0
    m = b.m
    log_core = (
        (-2 * m - 1) * math.log(2.0)
        + m
        + (alpha - m - 1.5) * math.log(m)
        + (m + 1) * math.log(b.element.length)
    )
    width = b.upper_limit - b.element.left
    return b.derivative_bound * math.exp(log_core) * width * _case_factor(m, alpha, b.asymptotic)


def select_row_param(
    mode: str,
    m: int,
    element: Element = REFERENCE,
    y: float = 1.0,
    alpha: float | None = None,
) -> float:
    """Per-row Gegenbauer parameter: the global one, or the grid minimizer of the bound."""
    if m < 1:
        raise DomainError("m must be positive")
    if mode == "fixed":
        if alpha is None:
            raise DomainError("fixed mode needs alpha")
        return check_alpha(alpha)
    if mode != "bound-min":
        raise DomainError(f"unknown row parameter mode {mode!r}")
    bounds = [eval_error_bound(QuadErrorBound(m, a, 1.0, element, y)) for a in ALPHA_GRID]
    return float(ALPHA_GRID[int(np.argmin(bounds))])


def row_params(mode: str, alpha: float, m: int, element: Element, upper_limits) -> np.ndarray:
    y = np.asarray(upper_limits, dtype=float)
    if mode == "fixed":
        return np.full(y.shape, check_alpha(alpha))
    return np.array([select_row_param(mode, m, element, yi) for yi in y])

"""Shifted Gegenbauer polynomials normalized so that ``G_j(1) = 1``.

With this normalization ``alpha = 0`` gives the Chebyshev polynomials of the
first kind and ``alpha = 0.5`` the Legendre polynomials.  Every function here
is pure and accepts scalar or array abscissae.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import DomainError, NumericError

_EDGE_TOL = 1e-13


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not alpha > -0.5:
        raise DomainError(f"Gegenbauer parameter must exceed -1/2, got {alpha}")
    return alpha


@dataclass(frozen=True)
class Element:
    """A mesh interval ``[left, right]`` inside the transformed horizon [-1, 1]."""

    left: float
    right: float

    def __post_init__(self):
        if not self.left < self.right:
            raise DomainError(f"element needs left < right, got [{self.left}, {self.right}]")
        if self.left < -1.0 - _EDGE_TOL or self.right > 1.0 + _EDGE_TOL:
            raise DomainError(f"element [{self.left}, {self.right}] leaves [-1, 1]")

    @property
    def length(self) -> float:
        return self.right - self.left

    def to_reference(self, tau):
        """Affine pullback of ``tau`` onto [-1, 1]."""
        return (2.0 * np.asarray(tau, dtype=float) - self.left - self.right) / self.length

    def from_reference(self, x):
        return 0.5 * (self.length * np.asarray(x, dtype=float) + self.left + self.right)


REFERENCE = Element(-1.0, 1.0)


def gegenbauer_table(alpha: float, degree: int, x) -> np.ndarray:
    """Values ``G_0 .. G_degree`` at ``x``; shape ``x.shape + (degree + 1,)``."""
    alpha = check_alpha(alpha)
    if degree < 0:
        raise DomainError("degree must be non-negative")
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = x
    for j in range(1, degree):
        out[..., j + 1] = (2.0 * (j + alpha) * x * out[..., j] - j * out[..., j - 1]) / (j + 2.0 * alpha)
    # the recurrence drifts by an ulp at the endpoints; pin the normalization
    out[x == 1.0] = 1.0
    out[x == -1.0] = (-1.0) ** np.arange(degree + 1)
    return out


def _value_and_derivative(alpha: float, degree: int, x):
    x = np.asarray(x, dtype=float)
    g_prev, g = np.ones_like(x), x.copy()
    d_prev, d = np.zeros_like(x), np.ones_like(x)
    if degree == 0:
        return g_prev, d_prev
    for j in range(1, degree):
        c = 2.0 * (j + alpha)
        den = j + 2.0 * alpha
        g_next = (c * x * g - j * g_prev) / den
        d_next = (c * (g + x * d) - j * d_prev) / den
        g_prev, g = g, g_next
        d_prev, d = d, d_next
    return g, d


def eval_gegenbauer(alpha: float, degree: int, x):
    """``G_degree^(alpha)(x)`` by the three-term recurrence."""
    alpha = check_alpha(alpha)
    if degree < 0:
        raise DomainError("degree must be non-negative")
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 1.0 + _EDGE_TOL):
        raise DomainError("Gegenbauer polynomials are evaluated on [-1, 1] only")
    val = gegenbauer_table(alpha, degree, xa)[..., degree]
    return float(val) if np.ndim(val) == 0 else val


def _check_inside(element: Element, tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    slack = _EDGE_TOL * max(1.0, element.length)
    if np.any(tau < element.left - slack) or np.any(tau > element.right + slack):
        raise DomainError(f"point outside element [{element.left}, {element.right}]")
    return tau


def _reference_coordinate(element: Element, tau) -> np.ndarray:
    # exact endpoint images keep G(1) = 1 and G(-1) = (-1)^j bit-exact
    x = np.clip(element.to_reference(tau), -1.0, 1.0)
    x = np.where(tau == element.right, 1.0, x)
    return np.where(tau == element.left, -1.0, x)


def eval_shifted(alpha: float, degree: int, element: Element, tau):
    tau = _check_inside(element, tau)
    val = gegenbauer_table(alpha, degree, _reference_coordinate(element, tau))[..., degree]
    return float(val) if np.ndim(val) == 0 else val


def basis_row(alpha: float, L: int, element: Element, tau) -> np.ndarray:
    """Row vector ``[G_0, ..., G_L]`` of the element's shifted basis at ``tau``.

    An array ``tau`` gives one row per point.
    """
    tau = _check_inside(element, tau)
    return gegenbauer_table(alpha, L, _reference_coordinate(element, tau))


def gauss_nodes(alpha: float, m: int) -> np.ndarray:
    """The ``m`` zeros of ``G_m^(alpha)`` in increasing order."""
    alpha = check_alpha(alpha)
    if m < 1:
        raise DomainError("need at least one Gauss node")
    nodes = _newton_nodes(alpha, m)
    if nodes is None:
        nodes = _bracketed_nodes(alpha, m)
    return nodes


def _acceptable(alpha, m, nodes) -> bool:
    if not np.all(np.isfinite(nodes)) or np.any(np.diff(nodes) <= 0.0):
        return False
    if np.any(np.abs(nodes) >= 1.0):
        return False
    if np.max(np.abs(nodes + nodes[::-1])) > 1e-12:
        return False
    # absolute 1e-12, relaxed by |G'| where rounding in x alone exceeds it
    g, d = _value_and_derivative(alpha, m, nodes)
    return bool(np.all(np.abs(g) <= 1e-12 * np.maximum(1.0, 1e-3 * np.abs(d))))


def _symmetrize(x: np.ndarray) -> np.ndarray:
    x = 0.5 * (x - x[::-1])
    if x.size % 2:
        x[x.size // 2] = 0.0
    return x


def _newton_nodes(alpha: float, m: int, max_iter: int = 100):
    i = np.arange(m)
    x = -np.cos((2 * i + 1) * np.pi / (2 * m))
    for _ in range(max_iter):
        g, d = _value_and_derivative(alpha, m, x)
        # deflate the already-separated neighbours (Aberth-style) so that
        # poor starting guesses for large alpha do not collapse onto one root
        diff = x[:, None] - x[None, :]
        np.fill_diagonal(diff, np.inf)
        ratio = g / d
        step = ratio / (1.0 - ratio * np.sum(1.0 / diff, axis=1))
        x = x - step
        if np.max(np.abs(step)) < 1e-15:
            break
    x = np.sort(x)
    # one polishing Newton step on the plain polynomial
    g, d = _value_and_derivative(alpha, m, x)
    x = _symmetrize(x - g / d)
    return x if _acceptable(alpha, m, x) else None


def _bracketed_nodes(alpha: float, m: int) -> np.ndarray:
    # zeros of G_m interlace those of G_{m-1}
    if m == 1:
        return np.array([0.0])
    inner = _bracketed_nodes(alpha, m - 1)
    edges = np.concatenate([[-1.0], inner, [1.0]])

    def g(t):
        return gegenbauer_table(alpha, m, t)[m]

    roots = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        try:
            roots.append(optimize.brentq(g, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500))
        except ValueError as exc:
            raise NumericError(f"Gauss node bracketing failed for alpha={alpha}, m={m}") from exc
    x = _symmetrize(np.array(roots))
    if not _acceptable(alpha, m, x):
        raise NumericError(f"Gauss nodes did not converge for alpha={alpha}, m={m}")
    return x


def shifted_gauss_nodes(alpha: float, m: int, element: Element) -> np.ndarray:
    x = gauss_nodes(alpha, m)
    if element == REFERENCE:
        return x
    return element.from_reference(x)


def augment(nodes: np.ndarray, element: Element) -> np.ndarray:
    """Append the element's right endpoint to a Gauss node set."""
    return np.append(np.asarray(nodes, dtype=float), element.right)


def collocation_nodes(alpha: float, N: int, element: Element) -> np.ndarray:
    """The ``N + 2`` augmented nodes: zeros of the degree ``N + 1`` polynomial plus ``right``."""
    return augment(shifted_gauss_nodes(alpha, N + 1, element), element)


def _gamma_ratio(alpha: float, j: int) -> float:
    # Gamma(2a+1) Gamma(j+a) / (Gamma(a+1) Gamma(j+2a)) without the 0/0 at a = 0
    if j == 0:
        return 2.0
    return float(special.poch(alpha + 1.0, j - 1) / special.poch(2.0 * alpha + 1.0, j - 1))


def leading_coefficient(alpha: float, j: int, element: Element = REFERENCE) -> float:
    """Coefficient of ``tau**j`` in the element's shifted ``G_j``."""
    alpha = check_alpha(alpha)
    if j < 0:
        raise DomainError("degree must be non-negative")
    return 2.0 ** (2 * j - 1) / element.length**j * _gamma_ratio(alpha, j)


def reference_norm(alpha: float, n: int) -> float:
    """``int_{-1}^{1} G_n(x)^2 (1 - x^2)^(alpha - 1/2) dx`` by an (n + 32)-point Gauss-Jacobi rule."""
    alpha = check_alpha(alpha)
    x, w = special.roots_jacobi(n + 32, alpha - 0.5, alpha - 0.5)
    g = gegenbauer_table(alpha, n, x)[:, n]
    return float(np.dot(w, g * g))


def norm_factor(alpha: float, n: int, element: Element = REFERENCE) -> float:
    """Squared weighted norm of the element's shifted ``G_n``."""
    if n < 0:
        raise DomainError("degree must be non-negative")
    return (0.5 * element.length) ** (2.0 * alpha) * reference_norm(alpha, n)


def weighted_inner(alpha: float, m: int, n: int, element: Element = REFERENCE) -> float:
    """Weighted inner product of two shifted polynomials on ``element``."""
    alpha = check_alpha(alpha)
    x, w = special.roots_jacobi(max(m, n) + 32, alpha - 0.5, alpha - 0.5)
    g = gegenbauer_table(alpha, max(m, n), x)
    return (0.5 * element.length) ** (2.0 * alpha) * float(np.dot(w, g[:, m] * g[:, n]))


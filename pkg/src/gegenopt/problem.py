"""Continuous Bolza optimal control problems.

Callbacks are vectorized over sample points.  With ``P`` points,

* ``dynamics(x, u, t)`` takes ``x`` of shape ``(n_x, P)``, ``u`` of shape
  ``(n_u, P)`` and ``t`` of shape ``(P,)`` (original time) and returns
  ``(n_x, P)``;
* ``lagrangian(x, u, t)`` returns ``(P,)``;
* ``path(x, u, t)`` returns ``(n_C, P)``;
* ``terminal_cost(x0, t0, xf, tf)`` returns a float and
  ``boundary(x0, t0, xf, tf)`` an array of length ``n_psi``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CallbackError, ConfigurationError, DomainError

# central-difference steps for first and second pointwise derivatives
_STEP1 = np.finfo(float).eps ** (1 / 3)
_STEP2 = np.finfo(float).eps ** (1 / 4)
# maximum quartering rounds of the first-derivative step
_REFINE = 12


def affine_to_tau(t, t0: float, tf: float):
    """Map original time onto the transformed horizon [-1, 1]."""
    if not tf > t0:
        raise DomainError("final time must exceed initial time")
    return (2.0 * np.asarray(t, dtype=float) - t0 - tf) / (tf - t0)


def tau_to_t(tau, t0: float, tf: float):
    if not tf > t0:
        raise DomainError("final time must exceed initial time")
    return 0.5 * ((tf - t0) * np.asarray(tau, dtype=float) + t0 + tf)


@dataclass
class OCProblem:
    n_x: int
    n_u: int
    t0: float
    tf: float
    dynamics: Callable
    lagrangian: Optional[Callable] = None
    terminal_cost: Optional[Callable] = None
    path: Optional[Callable] = None
    path_lower: np.ndarray = field(default_factory=lambda: np.zeros(0))
    path_upper: np.ndarray = field(default_factory=lambda: np.zeros(0))
    boundary: Optional[Callable] = None
    n_psi: int = 0
    x_lower: Optional[np.ndarray] = None
    x_upper: Optional[np.ndarray] = None
    u_lower: Optional[np.ndarray] = None
    u_upper: Optional[np.ndarray] = None
    continuous_control: bool = False
    name: str = "problem"

    def __post_init__(self):
        if self.n_x < 1 or self.n_u < 1:
            raise ConfigurationError("a problem needs at least one state and one control")
        if not self.tf > self.t0:
            raise ConfigurationError("final time must exceed initial time")
        self.path_lower = np.atleast_1d(np.asarray(self.path_lower, dtype=float))
        self.path_upper = np.atleast_1d(np.asarray(self.path_upper, dtype=float))
        if self.path_lower.shape != self.path_upper.shape:
            raise ConfigurationError("path bounds must have equal length")
        if np.any(self.path_lower > self.path_upper):
            raise ConfigurationError("path bounds must satisfy C_min <= C_max")
        if self.path is None and self.path_lower.size:
            raise ConfigurationError("path bounds given without a path function")
        if self.boundary is None:
            self.n_psi = 0
        self.x_lower, self.x_upper = self._box(self.x_lower, self.x_upper, self.n_x)
        self.u_lower, self.u_upper = self._box(self.u_lower, self.u_upper, self.n_u)

    @staticmethod
    def _box(lo, hi, n):
        lo = np.full(n, -np.inf) if lo is None else np.broadcast_to(np.asarray(lo, dtype=float), (n,)).copy()
        hi = np.full(n, np.inf) if hi is None else np.broadcast_to(np.asarray(hi, dtype=float), (n,)).copy()
        if np.any(lo > hi):
            raise ConfigurationError("box bounds must be ordered")
        return lo, hi

    @property
    def n_C(self) -> int:
        return self.path_lower.size

    @property
    def half_horizon(self) -> float:
        return 0.5 * (self.tf - self.t0)


def call_pointwise(fn: Callable, n_out: int, x, u, t, what: str, context: str = "") -> np.ndarray:
    """Evaluate a vectorized callback and coerce the result to ``(n_out, P)``."""
    try:
        val = np.asarray(fn(x, u, t), dtype=float)
    except Exception as exc:  # user code
        raise CallbackError(f"{what} callback failed{context}: {exc}") from exc
    P = np.shape(t)[-1]
    try:
        return np.broadcast_to(val.reshape(n_out, -1) if val.size == n_out * P else val, (n_out, P))
    except ValueError:
        raise CallbackError(f"{what} callback returned shape {val.shape}, expected ({n_out}, {P})") from None


class PointwiseFunction:
    """A vectorized callback ``g(x, u, t) -> (n_out, P)`` with finite-difference derivatives.

    Derivatives are taken with respect to ``w = (x, u)`` by central differences.
    """

    def __init__(self, fn: Callable, n_x: int, n_u: int, n_out: int, what: str):
        self.fn, self.n_x, self.n_u, self.n_out, self.what = fn, n_x, n_u, n_out, what

    def __call__(self, w, t, context: str = "") -> np.ndarray:
        return call_pointwise(self.fn, self.n_out, w[: self.n_x], w[self.n_x :], t, self.what, context)

    def jacobian(self, w, t) -> np.ndarray:
        """``(n_out, n_w, P)`` partial derivatives."""
        n_w, P = w.shape
        J = np.empty((self.n_out, n_w, P))

        def central(k, h, cols):
            wp, wm = w[:, cols].copy(), w[:, cols].copy()
            wp[k] += h
            wm[k] -= h
            return (self(wp, t[cols]) - self(wm, t[cols])) / (2.0 * h)

        for k in range(n_w):
            h = _STEP1 * (1.0 + np.abs(w[k]))
            cols = np.arange(P)
            d = central(k, h, cols)
            J[:, k, :] = d
            # where the difference quotient is still changing with the step
            # (steep or near-singular callbacks), keep shrinking it locally
            for _ in range(_REFINE):
                h = 0.25 * h
                d_new = central(k, h, cols)
                bad = np.any(np.abs(d_new - d) > 1e-3 * (1.0 + np.abs(d_new)), axis=0)
                J[:, k, cols] = d_new
                if not bad.any():
                    break
                cols, h, d = cols[bad], h[bad], d_new[:, bad]
        return J

    def weighted_hessian(self, w, t, weights) -> np.ndarray:
        """Hessian of ``sum_o weights[o, p] * g_o`` per point, shape ``(P, n_w, n_w)``."""
        n_w, P = w.shape
        weights = np.broadcast_to(weights, (self.n_out, P))

        def s(dw):
            return np.sum(weights * self(w + dw, t), axis=0)

        H = np.empty((P, n_w, n_w))
        h = _STEP2 * (1.0 + np.abs(w))
        base = s(0.0)
        for k in range(n_w):
            ek = np.zeros_like(w)
            ek[k] = h[k]
            H[:, k, k] = (s(ek) - 2.0 * base + s(-ek)) / h[k] ** 2
            for l in range(k):
                el = np.zeros_like(w)
                el[l] = h[l]
                v = (s(ek + el) - s(ek - el) - s(el - ek) + s(-ek - el)) / (4.0 * h[k] * h[l])
                H[:, k, l] = H[:, l, k] = v
        return H


class EndpointFunction:
    """``g(x0, t0, xf, tf)`` with central-difference derivatives in ``(x0, xf)``."""

    def __init__(self, fn: Callable, n_x: int, n_out: int, t0: float, tf: float, what: str):
        self.fn, self.n_x, self.n_out, self.t0, self.tf, self.what = fn, n_x, n_out, t0, tf, what

    def __call__(self, e) -> np.ndarray:
        try:
            val = self.fn(e[: self.n_x], self.t0, e[self.n_x :], self.tf)
        except Exception as exc:
            raise CallbackError(f"{self.what} callback failed: {exc}") from exc
        return np.atleast_1d(np.asarray(val, dtype=float)).reshape(self.n_out)

    def jacobian(self, e) -> np.ndarray:
        J = np.empty((self.n_out, e.size))
        for k in range(e.size):
            h = _STEP1 * (1.0 + abs(e[k]))
            ep, em = e.copy(), e.copy()
            ep[k] += h
            em[k] -= h
            J[:, k] = (self(ep) - self(em)) / (2.0 * h)
        return J

    def weighted_hessian(self, e, weights) -> np.ndarray:
        weights = np.asarray(weights, dtype=float)

        def s(de):
            return float(weights @ self(e + de))

        n = e.size
        H = np.empty((n, n))
        h = _STEP2 * (1.0 + np.abs(e))
        base = s(0.0)
        for k in range(n):
            ek = np.zeros(n)
            ek[k] = h[k]
            H[k, k] = (s(ek) - 2.0 * base + s(-ek)) / h[k] ** 2
            for l in range(k):
                el = np.zeros(n)
                el[l] = h[l]
                H[k, l] = H[l, k] = (s(ek + el) - s(ek - el) - s(el - ek) + s(-ek - el)) / (4.0 * h[k] * h[l])
        return H

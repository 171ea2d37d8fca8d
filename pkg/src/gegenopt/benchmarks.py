"""Registered benchmark problems and their published run settings."""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .problem import OCProblem


def example1() -> OCProblem:
    """``min int_0^1 sin(3 pi t) x dt``, ``x' = -tan(pi u^3 / 8 + t)``, ``u in [0, 1]``, ``x(0) = 1``, ``x(1) = 0``."""
    return OCProblem(
        n_x=1,
        n_u=1,
        t0=0.0,
        tf=1.0,
        dynamics=lambda x, u, t: -np.tan(np.pi / 8.0 * u[0] ** 3 + t)[None],
        lagrangian=lambda x, u, t: np.sin(3.0 * np.pi * t) * x[0],
        boundary=lambda x0, t0, xf, tf: [x0[0] - 1.0, xf[0]],
        n_psi=2,
        u_lower=0.0,
        u_upper=1.0,
        name="example1",
    )


def breakwell() -> OCProblem:
    """Double integrator with ``x1 <= 0.1``; exact optimum ``J = 40/9``."""
    return OCProblem(
        n_x=2,
        n_u=1,
        t0=0.0,
        tf=1.0,
        dynamics=lambda x, u, t: np.stack([x[1], u[0]]),
        lagrangian=lambda x, u, t: 0.5 * u[0] ** 2,
        path=lambda x, u, t: x[:1],
        path_lower=[-np.inf],
        path_upper=[0.1],
        boundary=lambda x0, t0, xf, tf: [x0[0], x0[1] - 1.0, xf[0], xf[1] + 1.0],
        n_psi=4,
        name="breakwell",
    )


def breakwell_control(t):
    """Exact optimal control of :func:`breakwell`."""
    t = np.asarray(t, dtype=float)
    return np.where(t <= 0.3, 200.0 * t / 9.0 - 20.0 / 3.0, np.where(t < 0.7, 0.0, -200.0 * t / 9.0 + 140.0 / 9.0))


def example3() -> OCProblem:
    """Nonsmooth dynamics ``x' = -|x - 0.5| + 2 (u + 1) / (t + 2) - 0.5`` with box bounds; ``J* = -2/3``."""
    return OCProblem(
        n_x=1,
        n_u=1,
        t0=0.0,
        tf=2.0,
        dynamics=lambda x, u, t: (-np.abs(x[0] - 0.5) + 2.0 * (u[0] + 1.0) / (t + 2.0) - 0.5)[None],
        lagrangian=lambda x, u, t: u[0] * (u[0] - t),
        boundary=lambda x0, t0, xf, tf: [x0[0] - 0.1],
        n_psi=1,
        x_lower=0.0,
        x_upper=1.0,
        u_lower=-1.0,
        u_upper=1.0,
        name="example3",
    )


_REGISTRY = {"example1": example1, "breakwell": breakwell, "example3": example3}

# published mesh and refinement settings per benchmark
BENCHMARK_SETTINGS = {
    "example1": dict(
        alpha=0.2, N=14, Lx=8, Lu=8, M=16, Mbar=4, N_bar=4, Lx_bar=4, Lu_bar=4, N_max=20, Lx_max=20, Lu_max=20,
        eps_R=1e-2, eps_coeff=1e-1, rho=3.0, k_max=20, eps_ES=0.1, init=1.0,
    ),
    "breakwell": dict(
        alpha=0.5, N=18, Lx=17, Lu=17, M=16, Mbar=4, N_bar=4, Lx_bar=4, Lu_bar=4, N_max=30, Lx_max=30, Lu_max=30,
        eps_R=1e-2, eps_coeff=1e-3, rho=1.5, k_max=20, eps_ES=0.1, init=0.0,
    ),
    "example3": dict(
        alpha=0.0, N=5, Lx=6, Lu=6, M=16, Mbar=6, N_bar=2, Lx_bar=2, Lu_bar=2, N_max=30, Lx_max=30, Lu_max=30,
        eps_R=1e-3, eps_coeff=1e-4, rho=2.0, k_max=20, eps_ES=0.2, init=0.0,
    ),
}


def registered_names() -> list[str]:
    return sorted(_REGISTRY)


def registry_get(name: str) -> OCProblem:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ConfigurationError(f"unknown problem {name!r}; registered: {', '.join(registered_names())}") from None

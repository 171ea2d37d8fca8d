"""Transcription of an :class:`OCProblem` into a dense NLP.

Each element ``k`` carries state coefficients ``a^(k)`` (``n_x`` blocks of
``L_x + 1``) and control coefficients ``b^(k)``; the flat decision vector
concatenates ``[a^(k); b^(k)]`` over elements.  The dynamics are imposed in
integral form at the ``N + 2`` augmented collocation nodes, with the left
endpoint value taken from the previous element so that state continuity is
built into the defects.

Derivatives are assembled from the structure: everything is linear in the
coefficients except the pointwise callbacks, whose partials are taken by
central differences at the sample points.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError
from .gegenbauer import Element, basis_row, check_alpha, collocation_nodes
from .nlp import NLPProblem
from .problem import EndpointFunction, OCProblem, PointwiseFunction, affine_to_tau, tau_to_t
from .quadrature import IntegrationMatrix, build_obgim, row_params

_TILE_TOL = 1e-12


@dataclass(frozen=True)
class ElementConfig:
    element: Element
    N: int
    Lx: int
    Lu: int
    M: int = 16
    Mbar: int = 4

    def __post_init__(self):
        if min(self.N, self.M, self.Mbar) < 1 or min(self.Lx, self.Lu) < 0:
            raise DomainError("element degrees out of range")


@dataclass(frozen=True)
class Mesh:
    elements: tuple
    alpha: float
    row_mode: str = "fixed"

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        check_alpha(self.alpha)
        if not self.elements:
            raise DomainError("a mesh needs at least one element")
        els = [c.element for c in self.elements]
        if abs(els[0].left + 1.0) > _TILE_TOL or abs(els[-1].right - 1.0) > _TILE_TOL:
            raise DomainError("mesh must start at -1 and end at +1")
        for a, b in zip(els[:-1], els[1:]):
            if a.right != b.left:
                raise DomainError("mesh elements must tile [-1, 1] without gaps")

    @classmethod
    def uniform(cls, K=1, N=10, Lx=10, Lu=10, M=16, Mbar=4, alpha=0.5, row_mode="fixed"):
        return cls.from_interfaces(np.linspace(-1, 1, K + 1)[1:-1], N, Lx, Lu, M, Mbar, alpha, row_mode)

    @classmethod
    def from_interfaces(cls, interfaces, N, Lx, Lu, M=16, Mbar=4, alpha=0.5, row_mode="fixed"):
        pts = [-1.0, *sorted(float(p) for p in interfaces), 1.0]
        cfgs = [ElementConfig(Element(a, b), N, Lx, Lu, M, Mbar) for a, b in zip(pts[:-1], pts[1:])]
        return cls(tuple(cfgs), alpha, row_mode)

    @property
    def K(self) -> int:
        return len(self.elements)

    @property
    def interfaces(self) -> np.ndarray:
        return np.array([c.element.right for c in self.elements[:-1]])

    @property
    def points(self) -> np.ndarray:
        return np.array([-1.0] + [c.element.right for c in self.elements])


def alternating_ones(n: int) -> np.ndarray:
    return (-1.0) ** np.arange(n)


def _expand(Bx: np.ndarray, Bu: np.ndarray, n_x: int, n_u: int) -> np.ndarray:
    """Per-point maps from element coefficients to ``(x, u)``: shape ``(..., n_w, n_coef)``."""
    lead = Bx.shape[:-1]
    nx1, nu1 = Bx.shape[-1], Bu.shape[-1]
    E = np.zeros(lead + (n_x + n_u, n_x * nx1 + n_u * nu1))
    for r in range(n_x):
        E[..., r, r * nx1 : (r + 1) * nx1] = Bx
    off = n_x * nx1
    for s in range(n_u):
        E[..., n_x + s, off + s * nu1 : off + (s + 1) * nu1] = Bu
    return E


def _sandwich(E, Hp):
    """``sum_p E[p]^T Hp[p] E[p]`` for ``E`` of shape ``(P, n_w, n_c)``."""
    HE = np.matmul(Hp, E)
    return E.reshape(-1, E.shape[-1]).T @ HE.reshape(-1, E.shape[-1])


class ElementOps:
    """Precomputed node sets, basis tables and integration matrix of one element."""

    def __init__(self, cfg: ElementConfig, alpha: float, row_mode: str, n_x: int, n_u: int):
        el = cfg.element
        self.cfg = cfg
        self.n_x, self.n_u = n_x, n_u
        self.nodes = collocation_nodes(alpha, cfg.N, el)
        self.P: IntegrationMatrix = build_obgim(el, self.nodes, cfg.M, row_params(row_mode, alpha, cfg.M, el, self.nodes))
        self.Bx_c = basis_row(alpha, cfg.Lx, el, self.nodes)
        self.Bu_c = basis_row(alpha, cfg.Lu, el, self.nodes)
        self.Bx_a = basis_row(alpha, cfg.Lx, el, self.P.adjoint_nodes)
        self.Bu_a = basis_row(alpha, cfg.Lu, el, self.P.adjoint_nodes)
        self.alt_x = alternating_ones(cfg.Lx + 1)
        self.ones_x = np.ones(cfg.Lx + 1)
        self.alt_u = alternating_ones(cfg.Lu + 1)
        self.ones_u = np.ones(cfg.Lu + 1)
        self.nx_coef = n_x * (cfg.Lx + 1)
        self.size = self.nx_coef + n_u * (cfg.Lu + 1)
        self.E_c = _expand(self.Bx_c, self.Bu_c, n_x, n_u)
        self.E_a = _expand(self.Bx_a, self.Bu_a, n_x, n_u)

    def unpack(self, c: np.ndarray):
        A = c[: self.nx_coef].reshape(self.n_x, self.cfg.Lx + 1)
        B = c[self.nx_coef :].reshape(self.n_u, self.cfg.Lu + 1)
        return A, B

    def w_at(self, A, B, Bx, Bu) -> np.ndarray:
        """``(n_x + n_u, ...)`` pointwise states and controls for basis tables ``Bx, Bu``."""
        x = np.tensordot(A, Bx, axes=([1], [-1]))
        u = np.tensordot(B, Bu, axes=([1], [-1]))
        return np.concatenate([x, u], axis=0)


class Transcription:
    """Discrete cost and constraints of ``problem`` on ``mesh``."""

    def __init__(self, problem: OCProblem, mesh: Mesh):
        self.problem, self.mesh = problem, mesh
        p = problem
        self.ops = [ElementOps(c, mesh.alpha, mesh.row_mode, p.n_x, p.n_u) for c in mesh.elements]
        sizes = [o.size for o in self.ops]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.n = int(self.offsets[-1])
        self.h = p.half_horizon
        self.f = PointwiseFunction(p.dynamics, p.n_x, p.n_u, p.n_x, "dynamics")
        self.L = PointwiseFunction(p.lagrangian, p.n_x, p.n_u, 1, "lagrangian") if p.lagrangian else None
        self.C = PointwiseFunction(p.path, p.n_x, p.n_u, p.n_C, "path") if p.path else None
        self.phi = EndpointFunction(p.terminal_cost, p.n_x, 1, p.t0, p.tf, "terminal cost") if p.terminal_cost else None
        self.psi = EndpointFunction(p.boundary, p.n_x, p.n_psi, p.t0, p.tf, "boundary") if p.boundary else None
        self._box_x = np.flatnonzero(np.isfinite(p.x_lower) | np.isfinite(p.x_upper))
        self._box_u = np.flatnonzero(np.isfinite(p.u_lower) | np.isfinite(p.u_upper))
        self.t_c = [tau_to_t(o.nodes, p.t0, p.tf) for o in self.ops]
        self.t_a = [tau_to_t(o.P.adjoint_nodes, p.t0, p.tf) for o in self.ops]
        self._endpoint_map = self._build_endpoint_map()

    # -- layout ---------------------------------------------------------
    def block(self, z, k):
        return z[self.offsets[k] : self.offsets[k + 1]]

    def unpack(self, z):
        z = np.asarray(z, dtype=float)
        if z.size != self.n:
            raise DomainError(f"decision vector has length {z.size}, expected {self.n}")
        return [o.unpack(self.block(z, k)) for k, o in enumerate(self.ops)]

    def pack(self, blocks) -> np.ndarray:
        return np.concatenate([np.concatenate([np.ravel(A), np.ravel(B)]) for A, B in blocks])

    def initial_guess(self, value: float = 0.0) -> np.ndarray:
        return np.full(self.n, float(value))

    def _build_endpoint_map(self) -> np.ndarray:
        """Linear map ``z -> (x(-1), x(+1))``."""
        n_x = self.problem.n_x
        D = np.zeros((2 * n_x, self.n))
        first, last = self.ops[0], self.ops[-1]
        for r in range(n_x):
            l1 = first.cfg.Lx + 1
            D[r, self.offsets[0] + r * l1 : self.offsets[0] + (r + 1) * l1] = first.alt_x
            lK = last.cfg.Lx + 1
            o = self.offsets[-2]
            D[n_x + r, o + r * lK : o + (r + 1) * lK] = last.ones_x
        return D

    def endpoints(self, z):
        e = self._endpoint_map @ z
        n_x = self.problem.n_x
        return e[:n_x], e[n_x:]

    # -- cost -------------------------------------------------------------
    def _lagrangian_points(self, k, A, B):
        o = self.ops[k]
        return o.w_at(A, B, o.Bx_a[-1], o.Bu_a[-1]), self.t_a[k][-1]

    def cost(self, z) -> float:
        total = 0.0
        if self.phi is not None:
            total += float(self.phi(self._endpoint_map @ z)[0])
        if self.L is not None:
            for k, (A, B) in enumerate(self.unpack(z)):
                w, t = self._lagrangian_points(k, A, B)
                vals = self.L(w, t, f" in element {k}")[0]
                total += self.h * float(self.ops[k].P.entries[-1] @ vals)
        return total

    def cost_grad(self, z) -> np.ndarray:
        g = np.zeros(self.n)
        if self.phi is not None:
            e = self._endpoint_map @ z
            g += self._endpoint_map.T @ self.phi.jacobian(e)[0]
        if self.L is not None:
            for k, (A, B) in enumerate(self.unpack(z)):
                o = self.ops[k]
                w, t = self._lagrangian_points(k, A, B)
                dL = self.L.jacobian(w, t)[0]  # (n_w, M + 1)
                g[self.offsets[k] : self.offsets[k + 1]] += self.h * np.einsum(
                    "j,wj,jwc->c", o.P.entries[-1], dL, o.E_a[-1]
                )
        return g

    # -- dynamics ---------------------------------------------------------
    def _left_states(self, blocks):
        """State at each element's left end as seen by the defects."""
        lefts = []
        for k, (A, _) in enumerate(blocks):
            if k == 0:
                lefts.append(A @ self.ops[0].alt_x)
            else:
                lefts.append(blocks[k - 1][0] @ self.ops[k - 1].ones_x)
        return lefts

    def _dynamics_samples(self, k, A, B):
        o = self.ops[k]
        w = o.w_at(A, B, o.Bx_a, o.Bu_a)  # (n_w, N + 2, M + 1)
        return w, self.t_a[k]

    def dynamics_defects(self, z) -> np.ndarray:
        blocks = self.unpack(z)
        lefts = self._left_states(blocks)
        out = []
        for k, (A, B) in enumerate(blocks):
            o = self.ops[k]
            w, t = self._dynamics_samples(k, A, B)
            shape = w.shape[1:]
            F = self.f(w.reshape(w.shape[0], -1), t.ravel(), f" in element {k}").reshape((self.problem.n_x,) + shape)
            integral = np.einsum("ij,rij->ri", o.P.entries, F)
            x_nodes = A @ o.Bx_c.T  # (n_x, N + 2)
            out.append((x_nodes - lefts[k][:, None] - self.h * integral).ravel())
        return np.concatenate(out)

    def dynamics_jacobian(self, z) -> np.ndarray:
        blocks = self.unpack(z)
        n_x = self.problem.n_x
        rows = [n_x * (o.cfg.N + 2) for o in self.ops]
        row_off = np.concatenate([[0], np.cumsum(rows)]).astype(int)
        J = np.zeros((row_off[-1], self.n))
        for k, (A, B) in enumerate(blocks):
            o = self.ops[k]
            n2 = o.cfg.N + 2
            w, t = self._dynamics_samples(k, A, B)
            shape = w.shape[1:]
            dF = self.f.jacobian(w.reshape(w.shape[0], -1), t.ravel()).reshape((n_x, w.shape[0]) + shape)
            G = np.einsum("rwij,ijwc->ric", o.P.entries * dF, o.E_a, optimize=True)  # (n_x, N + 2, size)
            blk = -self.h * G
            lx = o.cfg.Lx + 1
            for r in range(n_x):
                blk[r, :, r * lx : (r + 1) * lx] += o.Bx_c
                if k == 0:
                    blk[r, :, r * lx : (r + 1) * lx] -= o.alt_x[None, :]
            J[row_off[k] : row_off[k + 1], self.offsets[k] : self.offsets[k + 1]] = blk.reshape(n_x * n2, -1)
            if k > 0:
                prev = self.ops[k - 1]
                lp = prev.cfg.Lx + 1
                for r in range(n_x):
                    c0 = self.offsets[k - 1] + r * lp
                    J[row_off[k] + r * n2 : row_off[k] + (r + 1) * n2, c0 : c0 + lp] -= prev.ones_x[None, :]
        return J

    # -- path -------------------------------------------------------------
    def _path_rows_per_element(self):
        return self.problem.n_C + self._box_x.size + self._box_u.size

    def path_values(self, z) -> np.ndarray:
        out = []
        for k, (A, B) in enumerate(self.unpack(z)):
            o = self.ops[k]
            w = o.w_at(A, B, o.Bx_c, o.Bu_c)  # (n_w, N + 2)
            parts = []
            if self.C is not None:
                parts.append(self.C(w, self.t_c[k], f" in element {k}"))
            parts.append(w[self._box_x])
            parts.append(w[self.problem.n_x + self._box_u])
            out.append(np.concatenate(parts, axis=0).ravel())
        return np.concatenate(out) if out else np.zeros(0)

    def path_bounds(self):
        p = self.problem
        lo = np.concatenate([p.path_lower, p.x_lower[self._box_x], p.u_lower[self._box_u]])
        hi = np.concatenate([p.path_upper, p.x_upper[self._box_x], p.u_upper[self._box_u]])
        los = [np.repeat(lo, o.cfg.N + 2) for o in self.ops]
        his = [np.repeat(hi, o.cfg.N + 2) for o in self.ops]
        return np.concatenate(los), np.concatenate(his)

    def path_jacobian(self, z) -> np.ndarray:
        n_rows = self._path_rows_per_element()
        blocks = self.unpack(z)
        J = np.zeros((sum(n_rows * (o.cfg.N + 2) for o in self.ops), self.n))
        r0 = 0
        for k, (A, B) in enumerate(blocks):
            o = self.ops[k]
            n2 = o.cfg.N + 2
            w = o.w_at(A, B, o.Bx_c, o.Bu_c)
            parts = []
            if self.C is not None:
                dC = self.C.jacobian(w, self.t_c[k])  # (n_C, n_w, N + 2)
                parts.append(np.einsum("cwi,iwk->cik", dC, o.E_c, optimize=True))
            sel = np.concatenate([self._box_x, self.problem.n_x + self._box_u]).astype(int)
            parts.append(np.transpose(o.E_c[:, sel, :], (1, 0, 2)))
            blk = np.concatenate(parts, axis=0).reshape(n_rows * n2, o.size)
            J[r0 : r0 + n_rows * n2, self.offsets[k] : self.offsets[k + 1]] = blk
            r0 += n_rows * n2
        return J

    # -- boundary and control continuity -------------------------------
    def boundary_values(self, z) -> np.ndarray:
        if self.psi is None:
            return np.zeros(0)
        return self.psi(self._endpoint_map @ z)

    def boundary_jacobian(self, z) -> np.ndarray:
        if self.psi is None:
            return np.zeros((0, self.n))
        return self.psi.jacobian(self._endpoint_map @ z) @ self._endpoint_map

    def control_continuity_matrix(self) -> np.ndarray:
        n_u = self.problem.n_u
        K = len(self.ops)
        J = np.zeros((n_u * max(K - 1, 0), self.n))
        for k in range(1, K):
            cur, prev = self.ops[k], self.ops[k - 1]
            lc, lp = cur.cfg.Lu + 1, prev.cfg.Lu + 1
            for s in range(n_u):
                row = (k - 1) * n_u + s
                c0 = self.offsets[k] + cur.nx_coef + s * lc
                J[row, c0 : c0 + lc] = cur.alt_u
                p0 = self.offsets[k - 1] + prev.nx_coef + s * lp
                J[row, p0 : p0 + lp] = -prev.ones_u
        return J

    def control_continuity(self, z) -> np.ndarray:
        return self.control_continuity_matrix() @ z

    # -- NLP ----------------------------------------------------------------
    def equality_values(self, z):
        parts = [self.dynamics_defects(z), self.boundary_values(z)]
        if self.problem.continuous_control:
            parts.append(self.control_continuity(z))
        return np.concatenate(parts)

    def equality_jacobian(self, z):
        parts = [self.dynamics_jacobian(z), self.boundary_jacobian(z)]
        if self.problem.continuous_control:
            parts.append(self.control_continuity_matrix())
        return np.vstack(parts)

    def lagrangian_hessian(self, z, y_eq, y_in) -> np.ndarray:
        """Hessian of ``cost - y_eq . equalities - y_in . path``."""
        p = self.problem
        n_x = p.n_x
        H = np.zeros((self.n, self.n))
        blocks = self.unpack(z)
        n_dyn = sum(n_x * (o.cfg.N + 2) for o in self.ops)
        y_dyn = y_eq[:n_dyn]
        y_psi = y_eq[n_dyn : n_dyn + p.n_psi]
        e = self._endpoint_map @ z
        He = np.zeros((e.size, e.size))
        if self.phi is not None:
            He += self.phi.weighted_hessian(e, [1.0])
        if self.psi is not None and p.n_psi:
            He += self.psi.weighted_hessian(e, -y_psi)
        H += self._endpoint_map.T @ He @ self._endpoint_map
        n_rows = self._path_rows_per_element()
        r_dyn = r_path = 0
        for k, (A, B) in enumerate(blocks):
            o = self.ops[k]
            n2 = o.cfg.N + 2
            sl = slice(self.offsets[k], self.offsets[k + 1])
            w, t = self._dynamics_samples(k, A, B)
            n_w = w.shape[0]
            yk = y_dyn[r_dyn : r_dyn + n_x * n2].reshape(n_x, n2)
            r_dyn += n_x * n2
            # -y . (-h P F): weight of f_r at adjoint point (i, j) is h P_ij y_{r,i}
            wts = self.h * o.P.entries[None, :, :] * yk[:, :, None]
            Hp = self.f.weighted_hessian(w.reshape(n_w, -1), t.ravel(), wts.reshape(n_x, -1))
            E = o.E_a.reshape((-1,) + o.E_a.shape[2:])
            if self.L is not None:
                wl, tl = self._lagrangian_points(k, A, B)
                HL = self.L.weighted_hessian(wl, tl, self.h * o.P.entries[-1][None, :])
                Hp.reshape((n2, -1, n_w, n_w))[-1] += HL
            H[sl, sl] += _sandwich(E, Hp)
            if self.C is not None:
                yc = y_in[r_path : r_path + p.n_C * n2].reshape(p.n_C, n2)
                wc = o.w_at(A, B, o.Bx_c, o.Bu_c)
                HC = self.C.weighted_hessian(wc, self.t_c[k], -yc)
                H[sl, sl] += _sandwich(o.E_c, HC)
            r_path += n_rows * n2
        return 0.5 * (H + H.T)

    def linear_rows(self):
        """Box-bound rows (and control continuity) as ``(A, lo, hi)``; these are linear in ``z``."""
        p = self.problem
        rows, los, his = [], [], []
        sel = np.concatenate([self._box_x, p.n_x + self._box_u]).astype(int)
        if sel.size == 0 and not (p.continuous_control and len(self.ops) > 1):
            return None
        lo_w = np.concatenate([p.x_lower[self._box_x], p.u_lower[self._box_u]])
        hi_w = np.concatenate([p.x_upper[self._box_x], p.u_upper[self._box_u]])
        for k, o in enumerate(self.ops):
            if sel.size == 0:
                break
            n2 = o.cfg.N + 2
            blk = np.zeros((sel.size * n2, self.n))
            blk[:, self.offsets[k] : self.offsets[k + 1]] = np.transpose(o.E_c[:, sel, :], (1, 0, 2)).reshape(sel.size * n2, -1)
            rows.append(blk)
            los.append(np.repeat(lo_w, n2))
            his.append(np.repeat(hi_w, n2))
        if p.continuous_control and len(self.ops) > 1:
            Cc = self.control_continuity_matrix()
            rows.append(Cc)
            los.append(np.zeros(Cc.shape[0]))
            his.append(np.zeros(Cc.shape[0]))
        return np.vstack(rows), np.concatenate(los), np.concatenate(his)

    def to_nlp(self) -> NLPProblem:
        lo, hi = self.path_bounds()
        p = self.problem
        return NLPProblem(
            n=self.n,
            objective=self.cost,
            gradient=self.cost_grad,
            eq=self.equality_values,
            eq_jac=self.equality_jacobian,
            ineq=self.path_values,
            ineq_jac=self.path_jacobian,
            ineq_lower=lo,
            ineq_upper=hi,
            hessian=self.lagrangian_hessian,
            linear=self.linear_rows(),
            partition={
                "dynamics": sum(p.n_x * (o.cfg.N + 2) for o in self.ops),
                "boundary": p.n_psi,
                "control_continuity": p.n_u * (len(self.ops) - 1) if p.continuous_control else 0,
                "path": lo.size,
            },
        )


def assemble_nlp(problem: OCProblem, mesh: Mesh) -> NLPProblem:
    return Transcription(problem, mesh).to_nlp()


def assemble_cost(problem: OCProblem, mesh: Mesh, z) -> float:
    return Transcription(problem, mesh).cost(np.asarray(z, dtype=float))


def assemble_dynamics_defects(problem: OCProblem, mesh: Mesh, z) -> np.ndarray:
    return Transcription(problem, mesh).dynamics_defects(np.asarray(z, dtype=float))


def assemble_path_constraints(problem: OCProblem, mesh: Mesh, z):
    """Path and finite box-bound values at every collocation node, with their bounds."""
    T = Transcription(problem, mesh)
    lo, hi = T.path_bounds()
    return T.path_values(np.asarray(z, dtype=float)), lo, hi


def assemble_boundary_constraints(problem: OCProblem, mesh: Mesh, z) -> np.ndarray:
    return Transcription(problem, mesh).boundary_values(np.asarray(z, dtype=float))


def assemble_control_continuity(problem: OCProblem, mesh: Mesh, z) -> np.ndarray:
    """Control jumps at interior interfaces; empty unless the problem declares continuous controls."""
    if not problem.continuous_control:
        return np.zeros(0)
    return Transcription(problem, mesh).control_continuity(np.asarray(z, dtype=float))


@dataclass
class SpectralSolution:
    problem: OCProblem
    mesh: Mesh
    z: np.ndarray
    objective: float
    status: str = "converged"
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self._blocks = Transcription(self.problem, self.mesh).unpack(self.z)

    @property
    def blocks(self):
        return self._blocks

    def interfaces_time(self) -> np.ndarray:
        return tau_to_t(self.mesh.points, self.problem.t0, self.problem.tf)

    def endpoint_states(self):
        """Per element ``(x(left), x(right))`` from the coefficient sums."""
        out = []
        for (A, _), cfg in zip(self._blocks, self.mesh.elements):
            out.append((A @ alternating_ones(cfg.Lx + 1), A.sum(axis=1)))
        return out

    def element_index(self, tau) -> np.ndarray:
        rights = np.array([c.element.right for c in self.mesh.elements])
        idx = np.searchsorted(rights, tau, side="left")
        return np.minimum(idx, len(rights) - 1)

    def sample(self, times):
        """States ``(n_x, P)`` and controls ``(n_u, P)`` at original times."""
        p = self.problem
        t = np.atleast_1d(np.asarray(times, dtype=float))
        span = p.tf - p.t0
        if np.any(t < p.t0 - 1e-12 * span) or np.any(t > p.tf + 1e-12 * span):
            raise DomainError("sample times must lie inside the horizon")
        tau = np.clip(affine_to_tau(t, p.t0, p.tf), -1.0, 1.0)
        idx = self.element_index(tau)
        x = np.empty((p.n_x, t.size))
        u = np.empty((p.n_u, t.size))
        for k in np.unique(idx):
            sel = idx == k
            cfg = self.mesh.elements[k]
            A, B = self._blocks[k]
            el = cfg.element
            tk = np.clip(tau[sel], el.left, el.right)
            x[:, sel] = A @ basis_row(self.mesh.alpha, cfg.Lx, el, tk).T
            u[:, sel] = B @ basis_row(self.mesh.alpha, cfg.Lu, el, tk).T
        return x, u

    def last_coefficients(self):
        """Per element ``(|a_{r, L_x}|, |b_{s, L_u}|)`` arrays."""
        return [(np.abs(A[:, -1]), np.abs(B[:, -1])) for A, B in self._blocks]


def sample_solution(sol: SpectralSolution, times):
    return sol.sample(times)


def refit(sol: SpectralSolution, mesh: Mesh) -> np.ndarray:
    """Least-squares coefficients on ``mesh`` reproducing ``sol``'s trajectories."""
    p = sol.problem
    blocks = []
    for cfg in mesh.elements:
        el = cfg.element
        m = max(cfg.Lx, cfg.Lu, cfg.N) + 8
        cheb = el.from_reference(-np.cos(np.pi * (np.arange(m) + 0.5) / m))
        tau = np.concatenate([[el.left], collocation_nodes(mesh.alpha, cfg.N, el), cheb])
        x, u = sol.sample(tau_to_t(tau, p.t0, p.tf))
        Gx = basis_row(mesh.alpha, cfg.Lx, el, tau)
        Gu = basis_row(mesh.alpha, cfg.Lu, el, tau)
        A = np.linalg.lstsq(Gx, x.T, rcond=None)[0].T
        B = np.linalg.lstsq(Gu, u.T, rcond=None)[0].T
        blocks.append((A, B))
    return Transcription(p, mesh).pack(blocks)


def decision_length(n_x: int, n_u: int, configs: Sequence[ElementConfig]) -> int:
    return sum(n_x * (c.Lx + 1) + n_u * (c.Lu + 1) for c in configs)

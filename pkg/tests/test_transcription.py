import numpy as np
import pytest

from gegenopt.benchmarks import breakwell, breakwell_control, example3
from gegenopt.errors import CallbackError, DomainError
from gegenopt.gegenbauer import Element, basis_row, collocation_nodes
from gegenopt.problem import OCProblem, tau_to_t
from gegenopt.transcription import (
    ElementConfig,
    Mesh,
    SpectralSolution,
    Transcription,
    assemble_boundary_constraints,
    assemble_control_continuity,
    assemble_cost,
    assemble_dynamics_defects,
    assemble_nlp,
    assemble_path_constraints,
    decision_length,
    refit,
    sample_solution,
)


def fit(problem, mesh, x_fn, u_fn):
    """Coefficients reproducing ``x_fn(t)`` / ``u_fn(t)`` by least squares on each element."""
    blocks = []
    for cfg in mesh.elements:
        el = cfg.element
        tau = el.from_reference(-np.cos(np.pi * (np.arange(40) + 0.5) / 40))
        t = tau_to_t(tau, problem.t0, problem.tf)
        X = np.atleast_2d(x_fn(t))
        U = np.atleast_2d(u_fn(t))
        A = np.linalg.lstsq(basis_row(mesh.alpha, cfg.Lx, el, tau), X.T, rcond=None)[0].T
        B = np.linalg.lstsq(basis_row(mesh.alpha, cfg.Lu, el, tau), U.T, rcond=None)[0].T
        blocks.append((A, B))
    return Transcription(problem, mesh).pack(blocks)


def scalar(dyn, **kw):
    return OCProblem(1, 1, kw.pop("t0", 0.0), kw.pop("tf", 1.0), dyn, **kw)


def three_elements(N=4, L=3, alpha=0.5):
    return Mesh.from_interfaces([-0.4, 0.4], N, L, L, 8, 4, alpha)


def test_mesh_tiling():
    m = three_elements()
    assert m.K == 3
    np.testing.assert_allclose(m.points, [-1.0, -0.4, 0.4, 1.0])
    with pytest.raises(DomainError):
        Mesh((ElementConfig(Element(-1.0, 0.0), 4, 3, 3),), 0.5)
    with pytest.raises(DomainError):
        Mesh((ElementConfig(Element(-1.0, 0.0), 4, 3, 3), ElementConfig(Element(0.1, 1.0), 4, 3, 3)), 0.5)
    with pytest.raises(DomainError):
        Mesh.uniform(1, alpha=-0.5)


def test_decision_layout_lengths():
    p = breakwell()
    assert Transcription(p, three_elements(4, 3)).n == 36
    m14 = Mesh.from_interfaces([-0.4, 0.4], 14, 14, 14, 14, 4, 0.5)
    assert Transcription(p, m14).ops[0].size == 45
    assert decision_length(2, 1, m14.elements) == 135


def test_equality_count_single_element():
    p = scalar(lambda x, u, t: u, boundary=lambda x0, t0, xf, tf: [x0[0]], n_psi=1)
    nlp = assemble_nlp(p, Mesh.uniform(1, 5, 4, 4, 8, 4, 0.5))
    assert nlp.partition["dynamics"] == 7
    assert nlp.eq(np.zeros(nlp.n)).size == 8


def test_sample_constant_modes():
    p = breakwell()
    mesh = three_elements()
    T = Transcription(p, mesh)
    blocks = []
    for o in T.ops:
        A = np.zeros((2, o.cfg.Lx + 1))
        A[:, 0] = [0.25, -3.0]
        blocks.append((A, np.zeros((1, o.cfg.Lu + 1))))
    sol = SpectralSolution(p, mesh, T.pack(blocks), 0.0)
    x, u = sample_solution(sol, np.linspace(0, 1, 17))
    np.testing.assert_allclose(x[0], 0.25)
    np.testing.assert_allclose(x[1], -3.0)
    np.testing.assert_allclose(u, 0.0)


def test_sample_matches_naive_summation():
    rng = np.random.default_rng(11)
    p = breakwell()
    mesh = three_elements(5, 6, alpha=1.3)
    T = Transcription(p, mesh)
    z = rng.normal(size=T.n)
    sol = SpectralSolution(p, mesh, z, 0.0)
    t = rng.uniform(0, 1, 30)
    x, u = sol.sample(t)
    from gegenopt.gegenbauer import eval_shifted

    for i, ti in enumerate(t):
        tau = 2 * ti - 1
        k = int(sol.element_index(np.array([tau]))[0])
        cfg = mesh.elements[k]
        A, B = sol.blocks[k]
        naive = sum(A[0, j] * eval_shifted(1.3, j, cfg.element, tau) for j in range(cfg.Lx + 1))
        assert x[0, i] == pytest.approx(naive, abs=1e-13)
    # interface value is the all-ones sum of the left element
    xi, _ = sol.sample([0.3])
    assert xi[0, 0] == pytest.approx(sol.blocks[0][0][0].sum(), abs=1e-14)


def test_sample_outside_horizon():
    p = breakwell()
    mesh = three_elements()
    sol = SpectralSolution(p, mesh, np.zeros(Transcription(p, mesh).n), 0.0)
    with pytest.raises(DomainError):
        sol.sample([1.5])


def test_cost_trivial_cases():
    mesh = three_elements()
    p0 = scalar(lambda x, u, t: 0 * x, t0=1.0, tf=3.5)
    assert assemble_cost(p0, mesh, np.ones(Transcription(p0, mesh).n)) == 0.0
    p1 = scalar(lambda x, u, t: 0 * x, t0=1.0, tf=3.5, lagrangian=lambda x, u, t: np.ones_like(t))
    assert assemble_cost(p1, mesh, np.zeros(Transcription(p1, mesh).n)) == pytest.approx(2.5, abs=1e-13)


def test_breakwell_cost_of_exact_control():
    p = breakwell()
    mesh = Mesh.from_interfaces([-0.4, 0.4], 4, 3, 1, 8, 4, 0.5)
    z = fit(p, mesh, lambda t: np.zeros((2, t.size)), breakwell_control)
    assert assemble_cost(p, mesh, z) == pytest.approx(40 / 9, abs=1e-12)


def test_example3_cost_of_exact_solution():
    p = example3()
    mesh = Mesh.uniform(2, 5, 4, 1, 16, 4, 0.0)
    z = fit(p, mesh, lambda t: np.zeros_like(t), lambda t: t / 2)
    assert assemble_cost(p, mesh, z) == pytest.approx(-2 / 3, abs=1e-10)


def test_defects_zero_dynamics():
    p = scalar(lambda x, u, t: 0 * x)
    mesh = three_elements()
    z = fit(p, mesh, lambda t: 0 * t + 0.7, lambda t: np.sin(t))
    assert np.max(np.abs(assemble_dynamics_defects(p, mesh, z))) <= 1e-14


@pytest.mark.parametrize("alpha", [-0.2, 0.0, 0.5, 2.0])
def test_defects_exact_polynomial_solutions(alpha):
    mesh = Mesh.from_interfaces([-0.3, 0.5], 5, 3, 2, 8, 4, alpha)
    p1 = scalar(lambda x, u, t: np.ones_like(x))
    z = fit(p1, mesh, lambda t: 2.0 + t, lambda t: 0 * t)
    assert np.max(np.abs(assemble_dynamics_defects(p1, mesh, z))) <= 1e-12
    p3 = scalar(lambda x, u, t: (3 * t**2)[None] + 0 * x)
    z = fit(p3, mesh, lambda t: t**3 - 0.5, lambda t: 0 * t)
    assert np.max(np.abs(assemble_dynamics_defects(p3, mesh, z))) <= 1e-10


def test_last_defect_is_full_interval_identity():
    p = scalar(lambda x, u, t: u)
    mesh = Mesh.uniform(1, 4, 3, 3, 8, 4, 0.5)
    T = Transcription(p, mesh)
    z = fit(p, mesh, lambda t: t**2, lambda t: 2 * t + 0.1)
    d = T.dynamics_defects(z)
    # x(1) - x(0) - int_0^1 (2t + 0.1) = 1 - 1.1
    assert d[-1] == pytest.approx(-0.1, abs=1e-13)


def test_state_continuity_is_embedded():
    p = scalar(lambda x, u, t: 0 * x)
    mesh = three_elements()
    T = Transcription(p, mesh)
    blocks = []
    for k, o in enumerate(T.ops):
        A = np.zeros((1, o.cfg.Lx + 1))
        A[0, 0] = float(k)
        blocks.append((A, np.zeros((1, o.cfg.Lu + 1))))
    d = T.dynamics_defects(T.pack(blocks))
    n2 = mesh.elements[0].N + 2
    # element 2 starts 1 above the end of element 1
    np.testing.assert_allclose(d[n2 : 2 * n2], 1.0)


def test_path_constraints():
    p = scalar(lambda x, u, t: u)
    mesh = three_elements()
    vals, lo, hi = assemble_path_constraints(p, mesh, np.zeros(Transcription(p, mesh).n))
    assert vals.size == lo.size == hi.size == 0
    pb = scalar(lambda x, u, t: u, x_lower=0.0, x_upper=1.0)
    z = fit(pb, mesh, lambda t: t, lambda t: 0 * t)
    vals, lo, hi = assemble_path_constraints(pb, mesh, z)
    nodes = np.concatenate([collocation_nodes(0.5, c.N, c.element) for c in mesh.elements])
    np.testing.assert_allclose(vals, (nodes + 1) / 2, atol=1e-13)
    assert np.all(lo == 0.0) and np.all(hi == 1.0)


def test_boundary_constraints():
    p = scalar(lambda x, u, t: u, boundary=lambda x0, t0, xf, tf: [x0[0] - 1.0], n_psi=1)
    mesh = three_elements()
    z = fit(p, mesh, lambda t: 0 * t + 1.0, lambda t: 0 * t)
    assert assemble_boundary_constraints(p, mesh, z) == pytest.approx([0.0], abs=1e-14)
    pn = scalar(lambda x, u, t: u)
    assert assemble_boundary_constraints(pn, mesh, z).size == 0


def test_breakwell_boundary_conditions():
    p = breakwell()
    mesh = three_elements()
    z = fit(p, mesh, lambda t: np.stack([0 * t, 1 - 2 * t]), lambda t: 0 * t)
    np.testing.assert_allclose(assemble_boundary_constraints(p, mesh, z), 0.0, atol=1e-13)


def test_control_continuity():
    pc = scalar(lambda x, u, t: u, continuous_control=True)
    assert assemble_control_continuity(pc, Mesh.uniform(1, 4, 3, 3), np.zeros(8)).size == 0
    mesh = three_elements(4, 3)
    z = fit(pc, mesh, lambda t: 0 * t, lambda t: 0 * t + 0.4)
    np.testing.assert_allclose(assemble_control_continuity(pc, mesh, z), 0.0, atol=1e-14)
    rng = np.random.default_rng(5)
    z = rng.normal(size=Transcription(pc, mesh).n)
    sol = SpectralSolution(pc, mesh, z, 0.0)
    jumps = []
    for k in (1, 2):
        B_prev, B_cur = sol.blocks[k - 1][1], sol.blocks[k][1]
        el_prev, el_cur = mesh.elements[k - 1].element, mesh.elements[k].element
        right = B_prev @ basis_row(0.5, 3, el_prev, el_prev.right)
        left = B_cur @ basis_row(0.5, 3, el_cur, el_cur.left)
        jumps.append(left - right)
    np.testing.assert_allclose(assemble_control_continuity(pc, mesh, z), np.ravel(jumps), atol=1e-13)
    assert assemble_control_continuity(scalar(lambda x, u, t: u), mesh, z).size == 0


def test_analytic_jacobians_match_finite_differences():
    from gegenopt.nlp import fd_gradient, fd_jacobian

    p = breakwell()
    mesh = three_elements(5, 4)
    T = Transcription(p, mesh)
    z = np.random.default_rng(2).normal(size=T.n) * 0.3
    np.testing.assert_allclose(T.cost_grad(z), fd_gradient(T.cost, z), atol=1e-6)
    np.testing.assert_allclose(T.equality_jacobian(z), fd_jacobian(T.equality_values, z), atol=1e-6)
    np.testing.assert_allclose(T.path_jacobian(z), fd_jacobian(T.path_values, z), atol=1e-6)


def test_nonlinear_jacobian_matches_finite_differences():
    from gegenopt.nlp import fd_jacobian

    p = example3()
    mesh = Mesh.uniform(2, 5, 4, 4, 8, 4, 0.0)
    T = Transcription(p, mesh)
    z = np.random.default_rng(4).normal(size=T.n) * 0.2
    np.testing.assert_allclose(T.dynamics_jacobian(z), fd_jacobian(T.dynamics_defects, z), atol=1e-5)


def test_callback_failure_propagates():
    def bad(x, u, t):
        raise ValueError("nope")

    p = scalar(bad)
    mesh = three_elements()
    with pytest.raises(CallbackError, match="nope"):
        assemble_dynamics_defects(p, mesh, np.zeros(Transcription(p, mesh).n))


def test_refit_reproduces_smooth_solution_on_split_mesh():
    p = breakwell()
    coarse = Mesh.uniform(1, 10, 8, 8, 16, 4, 0.5)
    z = fit(p, coarse, lambda t: np.stack([np.sin(t), np.cos(t)]), lambda t: np.exp(-t))
    sol = SpectralSolution(p, coarse, z, 0.0)
    fine = Mesh.from_interfaces([0.1], 10, 8, 8, 16, 4, 0.5)
    sol2 = SpectralSolution(p, fine, refit(sol, fine), 0.0)
    t = np.linspace(0, 1, 41)
    for a, b in zip(sol.sample(t), sol2.sample(t)):
        np.testing.assert_allclose(a, b, atol=1e-9)

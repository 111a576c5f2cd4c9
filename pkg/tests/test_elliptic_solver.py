import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse

from fraclap import (
    DirichletProblem,
    GreenOperator,
    HarmonicStructure,
    InvalidInputError,
    NotContractiveError,
    RadonMeasure,
    StructuralError,
    VertexId,
    assemble_energy,
    certify_local_solvability,
    contraction_factor,
    green_apply,
    green_entry,
    harmonic_extend,
    load_vector,
    normal_derivative,
    solve_dirichlet,
    solve_schrodinger_direct,
    solve_schrodinger_picard,
)
from fraclap.elliptic_solver import (
    _check_interior_connectivity,
    cell_problem,
    picard_iteration_bound,
    solve_schrodinger_batch,
)

from test_fractal_core import interval

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def extend_to(H, g, n):
    u = np.asarray(g, dtype=float)
    for k in range(n):
        u = harmonic_extend(H, u, k)
    return u


@pytest.mark.parametrize("n", [1, 3, 5])
def test_dirichlet_without_source_is_harmonic_extension(H, n):
    g = np.array([0.3, -1.2, 2.0])
    sol = solve_dirichlet(DirichletProblem(H, n, g))
    assert np.allclose(sol.u, extend_to(H, g, n), atol=1e-12)
    assert sol.residual < 1e-12


def test_zero_problem(H):
    sol = solve_schrodinger_direct(DirichletProblem(H, 2, 0.0))
    assert np.all(sol.u == 0)


def test_problem_validation(H):
    with pytest.raises(InvalidInputError):
        DirichletProblem(H, -1, 0.0)
    with pytest.raises(InvalidInputError):
        DirichletProblem(H, 2, [1.0, np.inf, 0.0])
    with pytest.raises(InvalidInputError):
        DirichletProblem(H, 2, 0.0, boundary=[0, 0, 1])
    with pytest.raises(InvalidInputError):
        DirichletProblem(H, 2, 0.0, nu=RadonMeasure(components=(((), -1.0),)))


def test_interval_green_kernel():
    I1 = HarmonicStructure(interval(), [[0, 1], [1, 0]], [0.5, 0.5])
    n = 4
    x = I1.fractal.coordinates(n)[:, 0]
    G = GreenOperator(I1, n).matrix()
    lo, hi = np.minimum.outer(x, x), np.maximum.outer(x, x)
    assert np.allclose(G, lo * (1 - hi), atol=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_green_kernel_properties(H, n):
    G = GreenOperator(H, n)
    Gm = G.matrix()
    assert np.all(Gm >= -1e-15)
    assert np.abs(Gm - Gm.T).max() < 1e-12
    assert np.all(Gm[:3] == 0) and np.all(Gm[:, :3] == 0)
    fr = H.fractal
    x, y = fr.vertex(5), fr.vertex(9)
    assert green_entry(G, x, y) == pytest.approx(Gm[5, 9], rel=1e-12)
    assert green_entry(G, VertexId((), 0), y) == 0.0


def test_green_apply_inverts_laplacian(H):
    n = 4
    G = GreenOperator(H, n)
    sigma = RadonMeasure.self_similar(1.0) + RadonMeasure.atom(H.fractal.vertex(20), -2.0)
    u = green_apply(G, sigma)
    K = assemble_energy(H, n).stiffness
    b = load_vector(H, sigma, n)
    assert np.abs((K @ u - b)[G.interior]).max() < 1e-12
    # u solves Delta u = -sigma with zero boundary values
    direct = solve_dirichlet(DirichletProblem(H, n, 0.0, sigma=sigma.scale(-1))).u
    assert np.allclose(u, direct, atol=1e-12)


def test_contraction_factor_for_mu(H):
    # kappa = max_x int g(x, y) mu(dy); sup of the torsion function
    G = GreenOperator(H, 4)
    k = contraction_factor(G, RadonMeasure.self_similar())
    assert 0.05 < k < 0.08
    assert contraction_factor(G, RadonMeasure.zero()) == 0.0


def test_picard_matches_direct(H):
    nu = RadonMeasure.self_similar(5.0) + RadonMeasure.atom(H.fractal.vertex(4), 0.5)
    P = DirichletProblem(H, 4, [1.0, 1.0, 1.0], nu=nu)
    d = solve_schrodinger_direct(P)
    p = solve_schrodinger_picard(P, tol=1e-12)
    assert p.kappa < 1
    assert np.abs(d.u - p.u).max() < 1e-10
    assert p.n_iter > 1


def test_picard_not_contractive(H):
    nu = RadonMeasure.self_similar(60.0)
    P = DirichletProblem(H, 4, 1.0, nu=nu)
    with pytest.raises(NotContractiveError) as err:
        solve_schrodinger_picard(P)
    assert err.value.kappa >= 1
    # the direct method does not care
    assert solve_schrodinger_direct(P).residual < 1e-9


def test_certify_local_solvability(H):
    nu = RadonMeasure.self_similar(60.0)
    m, kappas = certify_local_solvability(H, nu, 4)
    assert m >= 1
    level_m = {w: k for w, k in kappas.items() if len(w) == m}
    assert len(level_m) == 3 ** m and max(level_m.values()) < 1
    assert certify_local_solvability(H, RadonMeasure.self_similar(1.0), 4)[0] == 0


def test_certification_huge_atom_needs_finest_depth(H):
    # an atom on V_2 sits on cell corners at depth 2, where the local kernels vanish
    fr = H.fractal
    nu = RadonMeasure.atom(fr.vertex(10), 1e9)
    m, kappas = certify_local_solvability(H, nu, 2)
    assert m == 2
    assert max(k for w, k in kappas.items() if len(w) == 1) >= 1


def test_picard_iteration_bound():
    assert picard_iteration_bound(0.5, 1.0, 1e-3) == int(np.ceil(np.log(0.5e-3) / np.log(0.5))) + 1
    assert picard_iteration_bound(0.0, 1.0, 1e-3) == 1


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_monotone_in_potential(H, seed):
    rng = np.random.default_rng(seed)
    fr = H.fractal
    g = rng.uniform(0, 1, size=3)
    nu = RadonMeasure.self_similar(rng.uniform(0, 5))
    extra = RadonMeasure.self_similar(rng.uniform(0, 5), tuple(rng.integers(0, 3, size=2)))
    u = solve_schrodinger_direct(DirichletProblem(H, 4, g, nu=nu)).u
    v = solve_schrodinger_direct(DirichletProblem(H, 4, g, nu=nu + extra)).u
    assert np.all(v <= u + 1e-12)
    assert np.all(v >= -1e-12)


def test_cell_problem_is_solved_by_restriction(H):
    fr = H.fractal
    sigma = RadonMeasure.self_similar(3.0, (1,)) + RadonMeasure.atom(fr.canonicalize((1, 0), 2), -1.0)
    nu = RadonMeasure.self_similar(2.0)
    P = DirichletProblem(H, 4, [0.2, 0.5, -0.3], sigma=sigma, nu=nu)
    u = solve_schrodinger_direct(P).u
    for i in range(3):
        vmap = fr.cell_vertex_map((i,), 3)
        local = solve_schrodinger_direct(cell_problem(P, (i,), u[vmap[:3]])).u
        assert np.allclose(local, u[vmap], atol=1e-12)


def test_batch_solve_matches_single(H):
    nu = RadonMeasure.self_similar(2.0)
    g = np.array([[1.0, 0, 0], [0.3, 0.2, 0.9]])
    U = solve_schrodinger_batch(H, 3, g, nu=nu)
    for row, gi in zip(U, g):
        assert np.allclose(row, solve_schrodinger_direct(DirichletProblem(H, 3, gi, nu=nu)).u)


def test_normal_derivative(H):
    nd = normal_derivative(H, np.full(42, 4.0), VertexId((), 1))
    assert np.all(nd.terms == 0) and nd.limit == 0
    u = extend_to(H, [1.0, 0.0, 0.0], 5)
    nd = normal_derivative(H, u, VertexId((), 0))
    assert np.allclose(nd.terms, 2.0, atol=1e-10)
    assert nd.limit == pytest.approx(2.0, abs=1e-10)
    # Gauss-Green: the fluxes of a harmonic function sum to zero
    total = sum(normal_derivative(H, u, VertexId((), a)).limit for a in range(3))
    assert total == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(InvalidInputError):
        normal_derivative(H, u, H.fractal.vertex(4))


def test_normal_derivative_with_source_converges(H):
    # Delta u = -mu with zero boundary values: outward flux sums to the mass 1
    u = solve_dirichlet(DirichletProblem(H, 6, 0.0, sigma=RadonMeasure.self_similar(-1.0))).u
    limits = [normal_derivative(H, u, VertexId((), a)).limit for a in range(3)]
    assert np.allclose(limits, -1 / 3, atol=1e-6)


def test_disconnected_interior_detected():
    K = sparse.csr_matrix(np.array([[1.0, -1, 0, 0], [-1, 1, 0, 0], [0, 0, 1, -1], [0, 0, -1, 1]]))
    with pytest.raises(StructuralError):
        _check_interior_connectivity(K, np.array([2, 3]), np.array([0]))

import numpy as np
import pytest

from fraclap import InvalidInputError, RadonMeasure, harmonic_extend
from fraclap.blowup import (
    BlowupProblem,
    BlowupRegion,
    assemble_native,
    embed_problem,
    solve_embedded,
    solve_native,
    transfer_solution,
)
from fraclap.energy_form import assemble_energy


def test_region_basics(H):
    region = BlowupRegion.from_digits("12")
    assert region.prefix == (0, 1)
    assert region.word == (1, 0)
    assert region.depth == 2
    assert region.r(H) == pytest.approx(0.36)
    assert region.mu(H) == pytest.approx(1 / 9)
    with pytest.raises(InvalidInputError):
        BlowupRegion(())


@pytest.mark.parametrize("prefix", [(0,), (2, 1), (1, 1, 0)])
def test_native_energy_restricts_to_K(H, prefix):
    """The copy of K inside K_m carries the standard level-n energy."""
    region = BlowupRegion(prefix)
    fr = H.fractal
    n = 2
    K = assemble_native(H, region, n)[0].toarray()
    # vertices of that copy are F_omega(V_n); keep only edges inside it
    vmap = fr.cell_vertex_map(region.word, n)
    sub = K[np.ix_(vmap, vmap)].copy()
    np.fill_diagonal(sub, 0.0)
    sub -= np.diag(sub.sum(axis=1))
    assert np.allclose(sub, assemble_energy(H, n).stiffness.toarray(), atol=1e-12)


def test_harmonic_blowup_solution(H):
    region = BlowupRegion((0, 2))
    g = np.array([1.0, 0.0, 0.0])
    sol = solve_embedded(H, BlowupProblem(region, 3, g))
    u = g
    for k in range(region.depth + 3):
        u = harmonic_extend(H, u, k)
    assert np.allclose(sol.u, u, atol=1e-12)
    assert sol.level == 3


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_embed_matches_native(H, depth):
    rng = np.random.default_rng(depth)
    fr = H.fractal
    for _ in range(5):
        prefix = tuple(int(a) for a in rng.integers(0, 3, size=depth))
        n = 2
        top = n + depth
        sigma = (RadonMeasure.self_similar(rng.uniform(-2, 2), tuple(rng.integers(0, 3, size=depth)))
                 + RadonMeasure.atom(fr.vertex(int(rng.integers(fr.n_vertices(top)))), rng.normal()))
        nu = RadonMeasure.self_similar(rng.uniform(0, 5)) + RadonMeasure.atom(fr.vertex(5), 0.7)
        bp = BlowupProblem(BlowupRegion(prefix), n, rng.normal(size=3), sigma=sigma, nu=nu)
        a = solve_embedded(H, bp)
        b = solve_native(H, bp)
        assert np.abs(a.u - b.u).max() < 1e-10
        assert a.residual < 1e-9


def test_embedded_measures_scale_by_r(H):
    region = BlowupRegion((1,))
    bp = BlowupProblem(region, 2, 0.0, sigma=RadonMeasure.atom(((), 0), 0.6))
    P = embed_problem(H, region, bp)
    assert P.sigma.atoms[0][1] == pytest.approx(1.0)
    assert P.level == 3


def test_transfer_validation(H):
    region = BlowupRegion((0, 0))
    bp = BlowupProblem(region, 1, 0.0)
    sol = solve_embedded(H, bp)
    with pytest.raises(InvalidInputError):
        transfer_solution(H, BlowupRegion((0, 0, 0, 0)), sol)
    with pytest.raises(InvalidInputError):
        embed_problem(H, BlowupRegion((1,)), bp)
    with pytest.raises(InvalidInputError):
        solve_native(H, BlowupProblem(region, 1, 0.0, sigma=RadonMeasure.atom(H.fractal.vertex(100), 1.0)))

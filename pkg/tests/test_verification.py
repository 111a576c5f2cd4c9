import numpy as np
import pytest

from fraclap import DirichletProblem, InvalidInputError, RadonMeasure, Solution, harmonic_extend
from fraclap.verification import (
    CheckReport,
    InstanceFamily,
    Region,
    boundary_energy_bound,
    check_equicontinuity,
    check_hopf,
    check_strong_mp,
    check_weak_mp,
    estimate_harnack_constant,
    make_instance,
    merge_reports,
    sample_solutions,
)


def fake_solution(H, u, n, nu=None):
    return Solution(np.asarray(u, dtype=float), n, 0.0, "direct",
                    problem=DirichletProblem(H, n, u[:3], nu=nu))


def harmonic(H, g, n):
    u = np.asarray(g, dtype=float)
    for k in range(n):
        u = harmonic_extend(H, u, k)
    return u


def test_region(fr):
    E = Region.away_from_boundary(fr, 2)
    assert E.words == ((0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1))
    assert E.avoids_boundary(fr)
    assert not Region(((0,),)).avoids_boundary(fr)
    with pytest.raises(InvalidInputError):
        Region(((0,), (1, 2)))
    with pytest.raises(InvalidInputError):
        Region(())
    closure, bd, interior = Region(((0,),)).vertex_sets(fr, 2)
    assert closure.sum() == 6 and bd.sum() == 3 and interior.sum() == 3


def test_weak_mp_pass_and_fail(H):
    n = 3
    u = harmonic(H, [0.2, -0.5, 1.0], n)
    region = Region(((0,), (1,)))
    assert check_weak_mp(fake_solution(H, u, n), region).passed
    bad = u.copy()
    _, _, interior = region.vertex_sets(H.fractal, n)
    bad[np.flatnonzero(interior)[0]] = 5.0
    report = check_weak_mp(fake_solution(H, bad, n), region)
    assert report.verdict == "fail" and report.margin < 0
    assert "vertex" in report.witness


def test_strong_mp_branches(H):
    n = 3
    region = Region(((0,), (2,)))
    const = check_strong_mp(fake_solution(H, np.full(42, 0.7), n), region)
    assert const.passed and const.details["branch"] == "b"
    u = harmonic(H, [1.0, 0.0, 0.3], n)
    assert check_strong_mp(fake_solution(H, u, n), region).details["branch"] == "a"
    bump = u.copy()
    _, _, interior = region.vertex_sets(H.fractal, n)
    bump[np.flatnonzero(interior)[3]] = 2.0
    report = check_strong_mp(fake_solution(H, bump, n), region)
    assert report.verdict == "fail" and report.details["branch"] == "unexplained"


def test_hopf(H):
    n = 4
    assert check_hopf(fake_solution(H, np.full(123, 1.0), n)).verdict == "inconclusive"
    report = check_hopf(fake_solution(H, harmonic(H, [1.0, 0.0, 0.0], n), n))
    assert report.passed and report.margin == pytest.approx(2.0)
    with pytest.raises(InvalidInputError):
        check_hopf(fake_solution(H, np.full(123, 1.0), n), p=H.fractal.vertex(5))


def test_boundary_energy_bound(H):
    assert boundary_energy_bound(H) == pytest.approx(2.0)


def test_equicontinuity(H):
    n = 4
    sol = fake_solution(H, harmonic(H, [1.0, 0.0, 0.5], n), n)
    report = check_equicontinuity(sol, n_pairs=200, seed=1)
    assert report.passed and report.details["bound_constant"] == pytest.approx(2.0)
    with pytest.raises(InvalidInputError):
        check_equicontinuity(fake_solution(H, harmonic(H, [2.0, 0.0, 0.0], n), n))


def test_sampling_is_deterministic(H):
    fam = InstanceFamily("signed", potential_scale=2.0, source_scale=1.0)
    a = sample_solutions(H, 3, 5, seed=42, family=fam)
    b = sample_solutions(H, 3, 5, seed=42, family=fam)
    for x, y in zip(a, b):
        assert np.array_equal(x.u, y.u)
    # one instance can be rebuilt from its witness seed alone
    problem, region = make_instance(H, 3, fam, a[2].meta["instance_seed"])
    assert np.array_equal(problem.g, a[2].problem.g)
    assert region == a[2].meta["region"]


def test_peaked_family_has_strict_max(H):
    for s in sample_solutions(H, 3, 20, seed=3, family=InstanceFamily("peaked")):
        g = s.problem.g
        assert g[0] > 0 and np.all(g[0] > g[1:])


def test_invalid_family():
    with pytest.raises(InvalidInputError):
        InstanceFamily("sideways")


def test_merge_reports():
    reports = [CheckReport("x", "pass", 0.5), CheckReport("x", "inconclusive", float("nan")),
               CheckReport("x", "pass", 0.1, witness={"i": 2})]
    merged = merge_reports("x", reports)
    assert merged.verdict == "pass" and merged.margin == 0.1 and merged.witness == {"i": 2}
    assert merged.details["verdicts"] == {"pass": 2, "inconclusive": 1}
    failing = merge_reports("x", reports + [CheckReport("x", "fail", -1.0)])
    assert failing.verdict == "fail" and failing.margin == -1.0


def test_harnack_harmonic_constant(H, fr):
    est = estimate_harnack_constant(H, Region.away_from_boundary(fr, 2), RadonMeasure.zero(), 4,
                                    samples=50, seed=0)
    # the worst case is a corner indicator; the ratio is then 4 exactly
    assert est.C_hat == pytest.approx(4.0, rel=1e-10)
    assert est.witness["sample"] < 3


def test_harnack_validation(H, fr):
    with pytest.raises(InvalidInputError):
        estimate_harnack_constant(H, Region(((0,),)), RadonMeasure.zero(), 3)
    with pytest.raises(InvalidInputError):
        estimate_harnack_constant(H, Region.away_from_boundary(fr, 2), RadonMeasure.zero(), 3,
                                  boundary_data=[[0.0, 0.0, 0.0]])


def test_harnack_grows_with_potential(H, fr):
    E = Region.away_from_boundary(fr, 2)
    C = [estimate_harnack_constant(H, E, RadonMeasure.self_similar(c), 4, samples=20).C_hat
         for c in (0.0, 5.0, 50.0)]
    assert C[0] < C[1] < C[2]

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fraclap import (
    DirichletProblem,
    InvalidInputError,
    NotContractiveError,
    RadonMeasure,
    harmonic_extend,
    solve_schrodinger_direct,
)
from fraclap.estimators import HarmonicExtension, SchrodingerSolver


def test_harmonic_extension_matches_repeated_extend(H):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(4, 6))
    est = HarmonicExtension(source_level=1, target_level=3).fit(X)
    U = est.transform(X)
    assert U.shape == (4, 42)
    for x, u in zip(X, U):
        ref = harmonic_extend(H, harmonic_extend(H, x, 1), 2)
        assert np.allclose(u, ref, atol=1e-14)


def test_harmonic_extension_identity_levels():
    X = np.eye(3)
    assert np.array_equal(HarmonicExtension(target_level=0).fit_transform(X), X)


def test_harmonic_extension_validation():
    with pytest.raises(InvalidInputError):
        HarmonicExtension(source_level=2, target_level=1).fit()
    est = HarmonicExtension().fit()
    with pytest.raises(InvalidInputError):
        est.transform(np.ones((2, 4)))
    with pytest.raises(NotFittedError):
        HarmonicExtension().transform(np.ones((1, 3)))


def test_params_and_clone():
    nu = RadonMeasure.self_similar(3.0)
    est = SchrodingerSolver(level=3, potential=nu, method="picard")
    params = est.get_params()
    assert params["level"] == 3 and params["potential"] is nu
    twin = clone(est)
    assert twin.get_params()["method"] == "picard" and not hasattr(twin, "problem_")
    est.set_params(level=2)
    assert est.level == 2


@pytest.mark.parametrize("method", ["direct", "picard"])
def test_solver_matches_single_solves(H, method):
    nu = RadonMeasure.self_similar(4.0) + RadonMeasure.atom(H.fractal.vertex(7), 0.3)
    sigma = RadonMeasure.self_similar(-1.0, (2,))
    X = np.array([[1.0, 0.0, 0.0], [0.2, -0.4, 0.9], [0.0, 0.0, 0.0]])
    est = SchrodingerSolver(level=4, potential=nu, source=sigma, method=method, tol=1e-13).fit(X)
    U = est.predict(X)
    assert U.shape == (3, 123) and est.n_features_in_ == 3
    for g, u in zip(X, U):
        ref = solve_schrodinger_direct(DirichletProblem(H, 4, g, sigma=sigma, nu=nu)).u
        assert np.abs(u - ref).max() < 1e-10
    if method == "picard":
        assert 0 < est.contraction_factor_ < 1 and est.n_iter_ >= 1
    assert np.array_equal(est.transform(X), U)


def test_solver_not_contractive():
    est = SchrodingerSolver(level=3, potential=RadonMeasure.self_similar(60.0), method="picard")
    with pytest.raises(NotContractiveError):
        est.fit()
    # the direct method accepts the same potential
    SchrodingerSolver(level=3, potential=RadonMeasure.self_similar(60.0)).fit()


def test_solver_validation():
    with pytest.raises(InvalidInputError):
        SchrodingerSolver(method="newton").fit()
    with pytest.raises(InvalidInputError):
        SchrodingerSolver(tol=0.0).fit()
    est = SchrodingerSolver(level=2).fit()
    with pytest.raises(InvalidInputError):
        est.predict(np.ones((2, 5)))
    with pytest.raises(ValueError):
        est.predict(np.array([[np.nan, 0.0, 0.0]]))
    with pytest.raises(NotFittedError):
        SchrodingerSolver().predict(np.ones((1, 3)))

"""scikit-learn style wrappers around the harmonic-extension and solver routines.

Rows of ``X`` are boundary data on ``V_0`` (or functions on ``V_n`` for
:class:`HarmonicExtension`); outputs are functions on the vertices of the
target level, one row per sample.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse.linalg import splu
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .energy_form import assemble_energy, harmonic_extend
from .exceptions import InvalidInputError, NotContractiveError
from .io import load_structure
from .radon_measure import RadonMeasure
from .elliptic_solver import DEFAULT_QUADRATURE_DEPTH, DirichletProblem, GreenOperator, contraction_factor

__all__ = ["HarmonicExtension", "SchrodingerSolver"]


class HarmonicExtension(TransformerMixin, BaseEstimator):
    """Harmonic extension from ``V_source_level`` to ``V_target_level``.

    Parameters
    ----------
    structure : str or HarmonicStructure, default="sg3"
    source_level, target_level : int
    """

    def __init__(self, structure="sg3", source_level=0, target_level=1):
        self.structure = structure
        self.source_level = source_level
        self.target_level = target_level

    def fit(self, X=None, y=None):
        if not 0 <= self.source_level <= self.target_level:
            raise InvalidInputError("need 0 <= source_level <= target_level")
        self.harmonic_structure_ = load_structure(self.structure)
        fr = self.harmonic_structure_.fractal
        self.n_features_in_ = fr.n_vertices(self.source_level)
        self.n_outputs_ = fr.n_vertices(self.target_level)
        if X is not None:
            self._validate_X(X)
        return self

    def _validate_X(self, X):
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(
                f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        return X

    def transform(self, X):
        check_is_fitted(self, "harmonic_structure_")
        u = self._validate_X(X)
        for n in range(self.source_level, self.target_level):
            u = harmonic_extend(self.harmonic_structure_, u, n)
        return u


class SchrodingerSolver(TransformerMixin, BaseEstimator):
    """Solve ``Delta u - u nu = sigma`` on ``V_level`` for many boundary data.

    ``fit`` assembles and factorizes the operator once; ``predict`` maps
    rows of boundary values on ``V_0`` to solutions on ``V_level``.

    Parameters
    ----------
    structure : str or HarmonicStructure, default="sg3"
    level : int, default=4
    potential, source : RadonMeasure or None
    method : {"direct", "picard"}
        ``"picard"`` iterates ``u <- h - G(M u)`` and needs ``kappa < 1``.
    tol : float
        Picard stopping tolerance in the sup norm.
    max_iter : int
    quadrature_depth : int
    """

    def __init__(self, structure="sg3", level=4, potential=None, source=None, method="direct",
                 tol=1e-10, max_iter=10_000, quadrature_depth=DEFAULT_QUADRATURE_DEPTH):
        self.structure = structure
        self.level = level
        self.potential = potential
        self.source = source
        self.method = method
        self.tol = tol
        self.max_iter = max_iter
        self.quadrature_depth = quadrature_depth

    def fit(self, X=None, y=None):
        if self.method not in ("direct", "picard"):
            raise InvalidInputError(f"unknown method {self.method!r}")
        if self.tol <= 0 or self.max_iter < 1:
            raise InvalidInputError("tol must be positive and max_iter at least 1")
        H = load_structure(self.structure)
        nu = self.potential if self.potential is not None else RadonMeasure.zero()
        problem = DirichletProblem(H, self.level, 0.0, sigma=self.source, nu=nu,
                                   quadrature_depth=self.quadrature_depth)
        K = assemble_energy(H, self.level).stiffness
        M = problem.mass()
        I, Bd = problem.interior, problem.boundary
        self.harmonic_structure_ = H
        self.problem_ = problem
        self.n_features_in_ = Bd.size
        self.n_outputs_ = problem.n_vertices
        self.mass_matrix_ = M
        self.loads_ = problem.loads()
        self.green_ = GreenOperator(H, self.level)
        self.contraction_factor_ = contraction_factor(self.green_, nu)
        if self.method == "picard" and self.contraction_factor_ >= 1:
            raise NotContractiveError(
                f"potential is too large for the Picard map (kappa={self.contraction_factor_:.6g})",
                self.contraction_factor_)
        A = (K + M).tocsr()
        self._K, self._A = K.tocsr(), A
        self._lu = splu(A[I][:, I].tocsc()) if I.size else None
        self.n_iter_ = None
        return self

    def _validate_X(self, X):
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(
                f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        return X

    def _extend(self, lu, A, b, G):
        I, Bd = self.problem_.interior, self.problem_.boundary
        out = np.zeros((G.shape[0], self.n_outputs_))
        out[:, Bd] = G
        if lu is not None and G.shape[0]:
            rhs = -b[I][:, None] - A[I][:, Bd] @ G.T
            out[:, I] = lu.solve(rhs).T
        return out

    def predict(self, X):
        check_is_fitted(self, "problem_")
        G = self._validate_X(X)
        if self.method == "direct":
            return self._extend(self._lu, self._A, self.loads_, G)
        # potential-free solution, then u <- h - G(M u) with a single factorization
        h = self._extend(self.green_._lu, self._K, self.loads_, G)
        u = h.copy()
        kappa = self.contraction_factor_
        stop = self.tol * (1.0 - kappa)
        for it in range(1, self.max_iter + 1):
            new = h - self.green_.apply_loads((self.mass_matrix_ @ u.T).T)
            step = float(np.max(np.abs(new - u), initial=0.0))
            u = new
            if step <= stop:
                self.n_iter_ = it
                return u
        raise NotContractiveError(f"Picard iteration did not converge in {self.max_iter} steps",
                                  kappa)

    def transform(self, X):
        return self.predict(X)

"""Dirichlet and Schrodinger problems on the level-n graph approximation.

Sign conventions: the stiffness ``K`` is the positive semidefinite graph
Laplacian, so ``Delta u = sigma`` reads ``K u = -b`` at interior vertices
where ``b`` is the load vector of ``sigma``.  The Schrodinger equation
``Delta u - u nu = sigma0`` becomes ``(K + M) u = -b0`` with ``M`` the mass
matrix of ``nu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu

from .energy_form import HarmonicStructure, assemble_energy, bump
from .exceptions import (
    CertificationError,
    InvalidInputError,
    NotContractiveError,
    StructuralError,
)
from .radon_measure import (
    DEFAULT_QUADRATURE_DEPTH,
    RadonMeasure,
    load_vector,
    mass_matrix,
    rescale_to_cell,
    restrict_to_cell,
)

__all__ = [
    "DirichletProblem",
    "GreenOperator",
    "Solution",
    "NormalDerivative",
    "solve_dirichlet",
    "green_apply",
    "green_entry",
    "solve_schrodinger_direct",
    "solve_schrodinger_picard",
    "contraction_factor",
    "certify_local_solvability",
    "cell_problem",
    "normal_derivative",
    "discrete_laplacian_load",
    "discrete_laplacian",
    "residual",
    "solve_schrodinger_batch",
    "picard_iteration_bound",
]

SOLVE_RTOL = 1e-10


@dataclass(frozen=True)
class DirichletProblem:
    """Boundary values ``g`` on ``boundary`` plus source and potential.

    ``boundary`` holds vertex indices of ``V_level``; ``None`` means ``V_0``.
    """

    H: HarmonicStructure
    level: int
    g: np.ndarray
    boundary: np.ndarray = None
    sigma: RadonMeasure = None
    nu: RadonMeasure = None
    quadrature_depth: int = DEFAULT_QUADRATURE_DEPTH

    def __post_init__(self):
        fr = self.H.fractal
        if self.level < 0:
            raise InvalidInputError("level must be non-negative")
        boundary = self.boundary
        if boundary is None:
            boundary = np.arange(fr.boundary_size)
        boundary = np.asarray(boundary, dtype=np.int64)
        if boundary.size == 0:
            raise InvalidInputError("boundary set must be non-empty")
        size = fr.n_vertices(self.level)
        if np.any(boundary < 0) or np.any(boundary >= size) or np.unique(boundary).size != boundary.size:
            raise InvalidInputError("boundary indices must be distinct vertices of V_level")
        g = np.broadcast_to(np.asarray(self.g, dtype=float), boundary.shape).copy()
        if not np.all(np.isfinite(g)):
            raise InvalidInputError("boundary data must be finite")
        if self.nu is not None and (any(m < 0 for _, m in self.nu.atoms)
                                    or any(c < 0 for _, c in self.nu.components)):
            raise InvalidInputError("potential must be non-negative")
        object.__setattr__(self, "boundary", boundary)
        object.__setattr__(self, "g", g)

    @property
    def n_vertices(self):
        return self.H.fractal.n_vertices(self.level)

    @property
    def interior(self):
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary] = False
        return np.flatnonzero(mask)

    def loads(self):
        if self.sigma is None:
            return np.zeros(self.n_vertices)
        return load_vector(self.H, self.sigma, self.level)

    def mass(self):
        if self.nu is None or self.nu.is_zero:
            return sparse.csr_matrix((self.n_vertices, self.n_vertices))
        return mass_matrix(self.H, self.nu, self.level, self.quadrature_depth)


@dataclass
class Solution:
    u: np.ndarray
    level: int
    residual: float
    method: str
    n_iter: int = None
    kappa: float = None
    problem: DirichletProblem = field(default=None, repr=False)
    meta: dict = field(default_factory=dict, repr=False)


def _check_interior_connectivity(K, interior, boundary):
    K_II = K[interior][:, interior]
    n_comp, labels = csgraph.connected_components(K_II, directed=False)
    touches = np.zeros(n_comp, dtype=bool)
    coupling = abs(K[interior][:, boundary]).sum(axis=1).A.ravel() > 0
    touches[labels[coupling]] = True
    if not touches.all():
        raise StructuralError(
            "an interior component has no contact with the boundary; the system is singular")


class GreenOperator:
    """Factorized Dirichlet inverse of the level-``n`` graph Laplacian.

    Kernel entries ``g_n(x, y) = (K_II^{-1})_{xy}``, zero when ``x`` or ``y``
    is a boundary vertex.
    """

    def __init__(self, H: HarmonicStructure, level, boundary=None):
        self.H = H
        self.level = level
        fr = H.fractal
        size = fr.n_vertices(level)
        if boundary is None:
            boundary = np.arange(fr.boundary_size)
        self.boundary = np.asarray(boundary, dtype=np.int64)
        mask = np.ones(size, dtype=bool)
        mask[self.boundary] = False
        self.interior = np.flatnonzero(mask)
        self._is_interior = mask
        self.n_vertices = size
        K = assemble_energy(H, level).stiffness
        self._columns = {}
        if self.interior.size:
            _check_interior_connectivity(K, self.interior, self.boundary)
            self._lu = splu(K[self.interior][:, self.interior].tocsc())
        else:
            self._lu = None

    def apply_loads(self, b):
        """Solve ``K u = b`` on the interior with zero boundary values."""
        b = np.asarray(b, dtype=float)
        out = np.zeros(b.shape)
        if self._lu is not None:
            out[..., self.interior] = self._lu.solve(b[..., self.interior].T).T
        return out

    def apply(self, sigma: RadonMeasure):
        return self.apply_loads(load_vector(self.H, sigma, self.level))

    def column(self, y):
        if y not in self._columns:
            e = np.zeros(self.n_vertices)
            e[y] = 1.0
            self._columns[y] = self.apply_loads(e) if self._is_interior[y] else np.zeros(self.n_vertices)
        return self._columns[y]

    def entry(self, x, y):
        fr = self.H.fractal
        ix = x if isinstance(x, (int, np.integer)) else fr.vertex_index(x)
        iy = y if isinstance(y, (int, np.integer)) else fr.vertex_index(y)
        return float(self.column(int(iy))[int(ix)])

    def matrix(self):
        """Dense kernel matrix on ``V_n``; small levels only."""
        out = np.zeros((self.n_vertices, self.n_vertices))
        if self._lu is not None:
            I = self.interior
            out[np.ix_(I, I)] = self._lu.solve(np.eye(I.size))
        return out


def green_apply(G: GreenOperator, sigma: RadonMeasure):
    return G.apply(sigma)


def green_entry(G: GreenOperator, x, y):
    return G.entry(x, y)


def residual(problem: DirichletProblem, u, M=None):
    """Max-norm interior residual of ``(K + M) u + b``."""
    K = assemble_energy(problem.H, problem.level).stiffness
    M = problem.mass() if M is None else M
    r = (K + M) @ u + problem.loads()
    I = problem.interior
    return float(np.max(np.abs(r[I]))) if I.size else 0.0


def _direct(problem, M):
    K = assemble_energy(problem.H, problem.level).stiffness
    A = (K + M).tocsr()
    I, Bd = problem.interior, problem.boundary
    u = np.zeros(problem.n_vertices)
    u[Bd] = problem.g
    b = problem.loads()
    if I.size:
        _check_interior_connectivity(K, I, Bd)
        rhs = -b[I] - A[I][:, Bd] @ problem.g
        u[I] = splu(A[I][:, I].tocsc()).solve(rhs)
    return u, b


def solve_dirichlet(problem: DirichletProblem) -> Solution:
    """Solve ``Delta u = sigma`` with ``u = g`` on the boundary (potential ignored)."""
    zero = sparse.csr_matrix((problem.n_vertices, problem.n_vertices))
    u, b = _direct(problem, zero)
    res = residual(problem, u, zero)
    _check_residual(res, b)
    return Solution(u, problem.level, res, "direct", problem=problem)


def solve_schrodinger_direct(problem: DirichletProblem) -> Solution:
    """Solve ``Delta u - u nu = sigma0`` through one SPD interior solve."""
    M = problem.mass()
    u, b = _direct(problem, M)
    res = residual(problem, u, M)
    _check_residual(res, b)
    return Solution(u, problem.level, res, "direct", problem=problem)


def _check_residual(res, b):
    bound = SOLVE_RTOL * (1.0 + float(np.max(np.abs(b), initial=0.0)))
    if not res < bound:
        raise StructuralError(f"linear solve residual {res:.3e} above tolerance")


def contraction_factor(G: GreenOperator, nu: RadonMeasure) -> float:
    """``max_x int g_n(x, y) nu(dy)``."""
    if nu is None or nu.is_zero:
        return 0.0
    return max(0.0, float(np.max(G.apply(nu))))


def solve_schrodinger_picard(problem: DirichletProblem, tol=1e-10, max_iter=10_000,
                             green: GreenOperator = None) -> Solution:
    """Fixed-point iteration ``u <- h - G(u nu)``.

    ``h`` solves the problem without potential.  Stops once successive
    iterates differ by at most ``tol * (1 - kappa)`` in the max norm.
    """
    G = green or GreenOperator(problem.H, problem.level, problem.boundary)
    nu = problem.nu if problem.nu is not None else RadonMeasure.zero()
    kappa = contraction_factor(G, nu)
    if kappa >= 1.0:
        raise NotContractiveError(
            f"Picard map is not contractive: kappa = {kappa:.6g} >= 1; "
            "use certify_local_solvability to find a contractive cell depth",
            kappa)
    M = problem.mass()
    h = solve_dirichlet(replace(problem, nu=None)).u
    u = h
    stop = tol * (1.0 - kappa)
    for it in range(1, max_iter + 1):
        u_next = h - G.apply_loads(M @ u)
        step = float(np.max(np.abs(u_next - u)))
        u = u_next
        if step <= stop:
            break
    else:
        raise NotContractiveError(
            f"Picard iteration did not reach tolerance in {max_iter} steps", kappa)
    return Solution(u, problem.level, residual(problem, u, M), "picard",
                    n_iter=it, kappa=kappa, problem=problem)


def picard_iteration_bound(kappa, first_step, tol):
    """Iteration count guaranteed by the contraction estimate."""
    if first_step <= tol * (1.0 - kappa) or kappa == 0.0:
        return 1
    return math.ceil(math.log(tol * (1.0 - kappa) / first_step) / math.log(kappa)) + 1


def cell_problem(problem: DirichletProblem, word, boundary_values) -> DirichletProblem:
    """The restriction of ``problem`` to ``C_word``, pulled back to ``K``.

    The pulled-back potential and source carry the factor ``r_word`` from
    the scaling of the energy on the cell.
    """
    H = problem.H
    word = tuple(word)
    m = len(word)
    if m > problem.level:
        raise InvalidInputError("cell is finer than the problem level")
    r_w = float(np.prod(H.renormalization[list(word)])) if word else 1.0
    nu = sigma = None
    if problem.nu is not None:
        nu = rescale_to_cell(H, restrict_to_cell(H, problem.nu, word), word).scale(r_w)
    if problem.sigma is not None:
        sigma = rescale_to_cell(H, restrict_to_cell(H, problem.sigma, word), word).scale(r_w)
    return DirichletProblem(H, problem.level - m, boundary_values, sigma=sigma, nu=nu,
                            quadrature_depth=problem.quadrature_depth)


def certify_local_solvability(H: HarmonicStructure, nu: RadonMeasure, n: int):
    """Least depth ``m <= n`` at which every cell-local Picard map contracts.

    Returns ``(m, kappas)`` where ``kappas`` maps each visited cell word to
    ``kappa_w = r_w * max int g(x, y) nu_w(dy)`` with ``nu_w`` the pullback
    of ``nu`` restricted to the cell.
    """
    kappas = {}
    greens = {}
    fr = H.fractal
    worst = None
    for m in range(n + 1):
        ok = True
        if m not in greens:
            greens[m] = GreenOperator(H, n - m)
        for c in range(fr.n_cells(m)):
            word = fr.word_of(c, m)
            local = rescale_to_cell(H, restrict_to_cell(H, nu, word), word)
            r_w = float(np.prod(H.renormalization[list(word)])) if word else 1.0
            k = r_w * contraction_factor(greens[m], local)
            kappas[word] = k
            if k >= 1.0:
                ok = False
                worst = (word, k) if worst is None or k > worst[1] else worst
        if ok:
            return m, kappas
    word, k = worst
    raise CertificationError(
        f"no depth up to {n} is contractive; cell {word} has kappa {k:.6g}", word, k)


def discrete_laplacian_load(H, u, n):
    """``-K u``: the load vector of ``Delta u`` seen by the level-``n`` network."""
    return -(assemble_energy(H, n).stiffness @ np.asarray(u, dtype=float))


def discrete_laplacian(H, u, n):
    """Pointwise ``Delta_n u(x) = -(K u)(x) / int psi_x dmu`` on ``V_n``.

    ``psi_x`` is the piecewise harmonic tent at ``x``; away from ``V_0``
    this converges to the density of ``Delta u`` with respect to ``mu``.
    """
    weights = load_vector(H, RadonMeasure.self_similar(), n)
    return discrete_laplacian_load(H, u, n) / weights


@dataclass(frozen=True)
class NormalDerivative:
    terms: np.ndarray
    limit: float
    tail_ratio: float


def normal_derivative(H: HarmonicStructure, u, p, n_max=None) -> NormalDerivative:
    """``E_n(h_p^{(n)}, u)`` for ``n = 0..n_max`` with an Aitken-extrapolated limit."""
    fr = H.fractal
    u = np.asarray(u.u if isinstance(u, Solution) else u, dtype=float)
    if n_max is None:
        n_max = 0
        while fr.n_vertices(n_max) < u.size:
            n_max += 1
    if fr.n_vertices(n_max) > u.size:
        raise InvalidInputError(f"function does not cover V_{n_max}")
    ip = fr.vertex_index(p)
    if ip >= fr.boundary_size:
        raise InvalidInputError("normal derivatives are defined at points of V_0 only")
    terms = np.empty(n_max + 1)
    for n in range(n_max + 1):
        K = assemble_energy(H, n).stiffness
        size = fr.n_vertices(n)
        terms[n] = float((K[[ip]] @ u[:size])[0])
    limit, ratio = float(terms[-1]), float("nan")
    if terms.size >= 3:
        x0, x1, x2 = terms[-3:]
        d1, d2 = x1 - x0, x2 - x1
        scale = max(1.0, abs(x2))
        if abs(d1) > 1e-14 * scale:
            ratio = d2 / d1
        denom = d2 - d1
        if abs(denom) > 1e-14 * scale and abs(d2) > 1e-14 * scale:
            limit = float(x2 - d2 * d2 / denom)
    return NormalDerivative(terms, limit, ratio)


def solve_schrodinger_batch(H: HarmonicStructure, level, boundary_values, nu=None, sigma=None,
                            boundary=None, quadrature_depth=DEFAULT_QUADRATURE_DEPTH):
    """Solve one operator for many boundary data at once.

    ``boundary_values`` has shape ``(n_samples, |boundary|)``; returns an
    array of shape ``(n_samples, |V_level|)``.
    """
    g = np.atleast_2d(np.asarray(boundary_values, dtype=float))
    template = DirichletProblem(H, level, g[0] if len(g) else 0.0, boundary=boundary,
                                sigma=sigma, nu=nu, quadrature_depth=quadrature_depth)
    K = assemble_energy(H, level).stiffness
    A = (K + template.mass()).tocsr()
    I, Bd = template.interior, template.boundary
    if g.shape[1] != Bd.size:
        raise InvalidInputError(f"boundary data needs {Bd.size} columns")
    out = np.zeros((g.shape[0], template.n_vertices))
    out[:, Bd] = g
    if I.size and g.shape[0]:
        _check_interior_connectivity(K, I, Bd)
        b = template.loads()[I]
        rhs = -b[:, None] - A[I][:, Bd] @ g.T
        out[:, I] = splu(A[I][:, I].tocsc()).solve(rhs).T
    return out

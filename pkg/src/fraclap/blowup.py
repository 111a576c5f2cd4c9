"""Bounded pieces ``K_m`` of a fractal blowup, handled as rescaled copies of ``K``.

With a prefix ``alpha_1..alpha_m`` and ``omega = alpha_m..alpha_1`` the map
``phi = F_omega`` sends ``K_m = F_{alpha_1}^{-1}..F_{alpha_m}^{-1}(K)`` onto
``K``.  ``K_m`` is a union of ``N**m`` copies of ``K`` glued like the
level-``m`` cells of ``K``; a point of ``K_m`` is addressed by the ``K``
address of its image under ``phi``.  So a level-``n`` vertex of ``K_m`` is
a vertex of ``V_{n+m}`` and shares its index.

Energy on ``K_m`` is normalized so that it restricts to the standard energy
on ``K`` itself: ``E_{K_m}(u) = r_omega * E(u o phi^{-1})``.  The measure is
normalized the same way, so ``mu_inf(phi^{-1}(C_w)) = mu_w / mu_omega``.
A measure on ``K_m`` uses the ``RadonMeasure`` container with those
conventions: component ``(w, c)`` is ``c * mu_inf`` restricted to
``phi^{-1}(C_w)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .energy_form import HarmonicStructure, assemble_energy
from .exceptions import InvalidInputError
from .radon_measure import RadonMeasure, load_vector, mass_matrix, rescale_to_cell, restrict_to_cell
from .elliptic_solver import DirichletProblem, Solution, solve_schrodinger_direct

__all__ = [
    "BlowupRegion",
    "BlowupProblem",
    "embed_problem",
    "transfer_solution",
    "assemble_native",
    "solve_native",
    "solve_embedded",
]


@dataclass(frozen=True)
class BlowupRegion:
    prefix: tuple

    def __post_init__(self):
        prefix = tuple(int(a) for a in self.prefix)
        if len(prefix) < 1:
            raise InvalidInputError("a blowup region needs a prefix of length at least 1")
        object.__setattr__(self, "prefix", prefix)

    @classmethod
    def from_digits(cls, digits: str):
        from .fractal_core import parse_word
        return cls(parse_word(digits))

    @property
    def depth(self):
        return len(self.prefix)

    @property
    def word(self):
        """``omega``: the reversed prefix, so that ``phi = F_omega``."""
        return tuple(reversed(self.prefix))

    def r(self, H):
        return float(np.prod(H.renormalization[list(self.word)]))

    def mu(self, H):
        return float(np.prod(H.fractal.measure_weights[list(self.word)]))

    def n_vertices(self, H, n):
        return H.fractal.n_vertices(n + self.depth)


@dataclass(frozen=True)
class BlowupProblem:
    """A Dirichlet/Schrodinger problem posed on ``K_m`` at relative level ``n``."""

    region: BlowupRegion
    level: int
    g: np.ndarray
    boundary: np.ndarray = None
    sigma: RadonMeasure = None
    nu: RadonMeasure = None


def _validate(H, problem: BlowupProblem):
    fr = H.fractal
    top = problem.level + problem.region.depth
    for meas in (problem.sigma, problem.nu):
        if meas is None:
            continue
        for w, _ in meas.components:
            if any(not 0 <= a < fr.arity for a in w):
                raise InvalidInputError(f"component word {w} is not an address in K_m")
        for v, _ in meas.atoms:
            if fr.vertex_index(v) >= fr.n_vertices(top):
                raise InvalidInputError(f"atom {v} is not a level-{problem.level} vertex of K_m")


def _to_K(H, region, meas):
    """Measure on ``K_m`` -> the equivalent source on ``K`` (includes ``1/r_omega``)."""
    if meas is None:
        return None
    mu_o, r_o = region.mu(H), region.r(H)
    atoms = tuple((v, m / r_o) for v, m in meas.atoms)
    comps = tuple((w, c / (mu_o * r_o)) for w, c in meas.components)
    return RadonMeasure(atoms, comps, meas.nonnegative)


def embed_problem(H: HarmonicStructure, region: BlowupRegion, problem: BlowupProblem) -> DirichletProblem:
    """The problem on ``K`` whose solution is the ``K_m`` solution composed with ``phi^{-1}``.

    Measures are pushed forward through ``phi`` with their mass preserved
    and then divided by ``r_omega``, which absorbs the energy scale so the
    embedded problem uses the standard energy on ``K``.
    """
    if problem.region != region:
        raise InvalidInputError("problem is posed on a different blowup region")
    _validate(H, problem)
    return DirichletProblem(H, problem.level + region.depth, problem.g, boundary=problem.boundary,
                            sigma=_to_K(H, region, problem.sigma),
                            nu=_to_K(H, region, problem.nu))


def _copy_measure(H, region, meas, tau):
    """Part of a ``K_m`` measure on copy ``tau``, in the copy's own ``K`` coordinates."""
    mu_o = region.mu(H)
    local = restrict_to_cell(H, meas, tau)
    # as a measure on K the component (w, c) has coefficient c / mu_omega
    comps = tuple((w, c / mu_o) for w, c in local.components)
    return rescale_to_cell(H, RadonMeasure(local.atoms, comps, local.nonnegative), tau)


def assemble_native(H: HarmonicStructure, region: BlowupRegion, n: int, sigma=None, nu=None):
    """Stiffness, mass matrix and loads of ``K_m`` assembled copy by copy.

    Each copy ``tau`` contributes its own level-``n`` network scaled by
    ``r_omega / r_tau`` and its own loads; results are scattered into the
    shared vertex numbering.  Atoms shared by several copies are counted
    once.
    """
    fr = H.fractal
    m = region.depth
    size = fr.n_vertices(n + m)
    r_o = region.r(H)
    K_loc = assemble_energy(H, n).stiffness.tocoo()
    Ks, Ms = [], []
    b = np.zeros(size)
    atom_sets = []
    for meas in (sigma, nu):
        atom_sets.append(RadonMeasure(meas.atoms, (), meas.nonnegative) if meas is not None else None)
    for c in range(fr.n_cells(m)):
        tau = fr.word_of(c, m)
        vmap = fr.cell_vertex_map(tau, n)
        P = sparse.csr_matrix((np.ones(vmap.size), (vmap, np.arange(vmap.size))),
                              shape=(size, vmap.size))
        r_tau = float(np.prod(H.renormalization[list(tau)]))
        Ks.append((r_o / r_tau) * (P @ K_loc @ P.T))
        if sigma is not None and sigma.components:
            smooth = RadonMeasure((), sigma.components, sigma.nonnegative)
            b += P @ load_vector(H, _copy_measure(H, region, smooth, tau), n)
        if nu is not None and nu.components:
            smooth = RadonMeasure((), nu.components, True)
            Ms.append(P @ mass_matrix(H, _copy_measure(H, region, smooth, tau), n) @ P.T)
    K = sum(Ks).tocsr()
    M = sum(Ms).tocsr() if Ms else sparse.csr_matrix((size, size))
    # atoms sit at shared vertices; add them once in the common numbering
    if atom_sets[0] is not None:
        b += load_vector(H, atom_sets[0], n + m)
    if atom_sets[1] is not None and atom_sets[1].atoms:
        M = M + mass_matrix(H, atom_sets[1], n + m)
    return K, M, b


def _native_residual(K, M, b, u, interior):
    r = (K + M) @ u + b
    return float(np.max(np.abs(r[interior]))) if interior.size else 0.0


def solve_native(H: HarmonicStructure, problem: BlowupProblem) -> Solution:
    """Solve a ``K_m`` problem directly on its own assembled network."""
    _validate(H, problem)
    region = problem.region
    K, M, b = assemble_native(H, region, problem.level, problem.sigma, problem.nu)
    size = K.shape[0]
    boundary = (np.arange(H.fractal.boundary_size) if problem.boundary is None
                else np.asarray(problem.boundary, dtype=np.int64))
    g = np.broadcast_to(np.asarray(problem.g, dtype=float), boundary.shape)
    mask = np.ones(size, dtype=bool)
    mask[boundary] = False
    I = np.flatnonzero(mask)
    A = (K + M).tocsr()
    u = np.zeros(size)
    u[boundary] = g
    if I.size:
        u[I] = splu(A[I][:, I].tocsc()).solve(-b[I] - A[I][:, boundary] @ g)
    sol = Solution(u, problem.level, _native_residual(K, M, b, u, I), "direct")
    sol.meta["region"] = region
    return sol


def transfer_solution(H: HarmonicStructure, region: BlowupRegion, solution: Solution,
                      problem: BlowupProblem = None) -> Solution:
    """Pull a solution on ``K`` back to ``K_m`` through ``phi``.

    Vertex numbering is shared, so values carry over unchanged and only the
    level is re-expressed relative to ``K_m``.  When ``problem`` is given the
    residual is recomputed on the natively assembled ``K_m`` system.
    """
    n = solution.level - region.depth
    if n < 0:
        raise InvalidInputError("solution is coarser than the blowup depth")
    if problem is not None and problem.level != n:
        raise InvalidInputError("solution level does not match the blowup problem")
    res = solution.residual
    if problem is not None:
        K, M, b = assemble_native(H, region, n, problem.sigma, problem.nu)
        boundary = (np.arange(H.fractal.boundary_size) if problem.boundary is None
                    else np.asarray(problem.boundary, dtype=np.int64))
        mask = np.ones(K.shape[0], dtype=bool)
        mask[boundary] = False
        res = _native_residual(K, M, b, solution.u, np.flatnonzero(mask))
    out = Solution(solution.u.copy(), n, res, solution.method, solution.n_iter, solution.kappa)
    out.meta["region"] = region
    return out


def solve_embedded(H: HarmonicStructure, problem: BlowupProblem) -> Solution:
    """Embed, solve on ``K`` and transfer back."""
    embedded = embed_problem(H, problem.region, problem)
    return transfer_solution(H, problem.region, solve_schrodinger_direct(embedded), problem)

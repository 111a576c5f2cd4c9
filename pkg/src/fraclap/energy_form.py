"""Harmonic structures, graph energies, harmonic extension and resistance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu

from .exceptions import InvalidInputError, InvalidStructureError
from .fractal_core import FractalStructure, sierpinski_gasket

__all__ = [
    "HarmonicStructure",
    "GraphEnergy",
    "sg_harmonic_structure",
    "assemble_energy",
    "energy",
    "harmonic_extend",
    "bump",
    "effective_resistance",
    "resistance_matrix",
    "harmonic_integration_weights",
    "product_moments",
]

R_BOUNDS = (1e-6, 1.0 - 1e-6)


@dataclass(frozen=True)
class GraphEnergy:
    """Level-``n`` conductance network.

    ``stiffness`` is the weighted graph Laplacian ``K`` with
    ``E_n(u, v) = u @ K @ v``; off-diagonal entries are ``-c_pq``.
    """

    level: int
    stiffness: sparse.csr_matrix

    @property
    def n_vertices(self):
        return self.stiffness.shape[0]

    def conductance(self, p, q):
        return -self.stiffness[p, q]


class HarmonicStructure:
    """Boundary conductances ``c0`` plus renormalization factors ``r``.

    The pair is validated as a genuine harmonic structure: the trace of the
    level-1 energy on ``V_0`` must reproduce ``E_0``.
    """

    def __init__(self, fractal: FractalStructure, conductances, renormalization):
        self.fractal = fractal
        B, N = fractal.boundary_size, fractal.arity
        c0 = np.array(conductances, dtype=float)
        r = np.array(renormalization, dtype=float)
        if c0.shape != (B, B):
            raise InvalidStructureError(f"conductances must be a {B}x{B} matrix")
        if not np.allclose(c0, c0.T, rtol=0, atol=1e-14):
            raise InvalidStructureError("conductance matrix must be symmetric")
        if np.any(np.diag(c0) != 0):
            raise InvalidStructureError("conductance matrix must have zero diagonal")
        if np.any(c0 < 0):
            raise InvalidStructureError("conductances must be non-negative")
        n_comp, _ = csgraph.connected_components(sparse.csr_matrix(c0 > 0), directed=False)
        if n_comp != 1:
            raise InvalidStructureError("boundary form is reducible (disconnected conductance graph)")
        if r.shape != (N,):
            raise InvalidStructureError("need one renormalization factor per map")
        if np.any(r < R_BOUNDS[0]) or np.any(r > R_BOUNDS[1]):
            raise InvalidStructureError(f"renormalization factors must lie in {list(R_BOUNDS)}")
        self.conductances = c0
        self.renormalization = r
        self._energies = {}
        self._cell_r = [np.ones(1)]
        self.extension_matrices = self._extension_matrices()

    @property
    def boundary_laplacian(self):
        c0 = self.conductances
        return np.diag(c0.sum(axis=1)) - c0

    def cell_renormalization(self, n):
        """``r_w`` for every level-``n`` cell."""
        while len(self._cell_r) <= n:
            self._cell_r.append(np.outer(self._cell_r[-1], self.renormalization).reshape(-1))
        return self._cell_r[n]

    def _extension_matrices(self):
        fr = self.fractal
        B = fr.boundary_size
        K = assemble_energy(self, 1).stiffness.toarray()
        interior = np.arange(B, K.shape[0])
        ext = np.vstack([np.eye(B),
                         -np.linalg.solve(K[np.ix_(interior, interior)], K[interior, :B])])
        trace = K[:B, :B] + K[:B, interior] @ ext[B:]
        scale = np.max(np.abs(self.boundary_laplacian))
        if np.max(np.abs(trace - self.boundary_laplacian)) > 1e-10 * scale:
            raise InvalidStructureError(
                "renormalization factors do not give a harmonic structure: the level-1 "
                "energy does not restrict to E_0 under harmonic extension")
        cells = fr.cell_vertices(1)
        return np.stack([ext[cells[i]] for i in range(fr.arity)])

    def __repr__(self):
        return f"HarmonicStructure({self.fractal!r}, r={self.renormalization.tolist()})"


def sg_harmonic_structure(fractal=None):
    """Standard harmonic structure on the gasket: unit conductances, ``r_i = 3/5``."""
    fractal = fractal or sierpinski_gasket()
    return HarmonicStructure(fractal, np.ones((3, 3)) - np.eye(3), np.full(3, 0.6))


def assemble_energy(H: HarmonicStructure, n: int) -> GraphEnergy:
    if n in H._energies:
        return H._energies[n]
    fr = H.fractal
    cells = fr.cell_vertices(n)
    inv_r = 1.0 / H.cell_renormalization(n)
    rows, cols, vals = [], [], []
    B = fr.boundary_size
    for a in range(B):
        for b in range(a + 1, B):
            c = H.conductances[a, b]
            if c == 0:
                continue
            rows.append(cells[:, a])
            cols.append(cells[:, b])
            vals.append(c * inv_r)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    size = fr.n_vertices(n)
    C = sparse.coo_matrix((np.concatenate([vals, vals]),
                           (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
                          shape=(size, size)).tocsr()
    K = (sparse.diags(np.asarray(C.sum(axis=1)).ravel()) - C).tocsr()
    K.sum_duplicates()
    G = GraphEnergy(n, K)
    H._energies[n] = G
    return G


def _check_level(Gn, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (Gn.n_vertices,):
        raise InvalidInputError(
            f"function has {u.shape[0] if u.ndim else 0} values, level {Gn.level} "
            f"needs {Gn.n_vertices}")
    return u


def energy(Gn: GraphEnergy, u, v=None):
    """Bilinear graph energy ``E_n(u, v)``; ``E_n(u, u)`` when ``v`` is omitted."""
    u = _check_level(Gn, u)
    v = u if v is None else _check_level(Gn, v)
    return float(u @ (Gn.stiffness @ v))


def harmonic_extend(H: HarmonicStructure, u, n=None):
    """Extend values on ``V_n`` to ``V_{n+1}`` harmonically.

    Works cell by cell with the level-1 extension matrices.  ``u`` may also
    be a 2-D array of shape ``(n_samples, |V_n|)``.
    """
    fr = H.fractal
    u = np.asarray(u, dtype=float)
    if n is None:
        n = _level_of_size(fr, u.shape[-1])
    if u.shape[-1] != fr.n_vertices(n):
        raise InvalidInputError(f"function does not live on V_{n}")
    parent = fr.cell_vertices(n)
    child = fr.cell_vertices(n + 1)
    n_old, n_new = fr.n_vertices(n), fr.n_vertices(n + 1)
    out = np.empty(u.shape[:-1] + (n_new,))
    out[..., :n_old] = u
    N = fr.arity
    A = H.extension_matrices
    for i in range(N):
        kids = child[i::N]
        local = u[..., parent]            # (..., cells, B)
        vals = local @ A[i].T             # (..., cells, B): values at F_w F_i(q_a)
        out[..., kids] = vals
    return out


def _level_of_size(fr, size):
    n = 0
    while fr.n_vertices(n) < size:
        n += 1
    if fr.n_vertices(n) != size:
        raise InvalidInputError(f"no level has exactly {size} vertices")
    return n


def bump(H: HarmonicStructure, p, n, m):
    """Piecewise harmonic ``h_p^{(n)}`` sampled on ``V_m``."""
    fr = H.fractal
    if m < n:
        raise InvalidInputError("target level must not be coarser than n")
    idx = fr.vertex_index(p)
    if idx >= fr.n_vertices(n):
        raise InvalidInputError(f"{p} is not a vertex of V_{n}")
    u = np.zeros(fr.n_vertices(n))
    u[idx] = 1.0
    for k in range(n, m):
        u = harmonic_extend(H, u, k)
    return u


def effective_resistance(H: HarmonicStructure, p, q, n):
    """``R(p, q)`` via the two-point Dirichlet problem on the level-``n`` network."""
    fr = H.fractal
    ip, iq = fr.vertex_index(p), fr.vertex_index(q)
    size = fr.n_vertices(n)
    if ip >= size or iq >= size:
        raise InvalidInputError(f"both points must lie in V_{n}")
    if ip == iq:
        return 0.0
    K = assemble_energy(H, n).stiffness
    mask = np.ones(size, dtype=bool)
    mask[[ip, iq]] = False
    interior = np.flatnonzero(mask)
    v = np.zeros(size)
    v[ip] = 1.0
    if interior.size:
        K_II = K[interior][:, interior].tocsc()
        v[interior] = splu(K_II).solve(-np.asarray(K[interior][:, ip].todense()).ravel())
    return 1.0 / float(v @ (K @ v))


def resistance_matrix(H: HarmonicStructure, n):
    """Dense matrix of all pairwise resistances on ``V_n``.

    Uses the Laplacian grounded at vertex 0; intended for ``|V_n|`` up to a
    few thousand.
    """
    K = assemble_energy(H, n).stiffness.toarray()
    size = K.shape[0]
    Ginv = np.zeros((size, size))
    Ginv[1:, 1:] = np.linalg.inv(K[1:, 1:])
    d = np.diag(Ginv)
    R = d[:, None] + d[None, :] - 2.0 * Ginv
    np.fill_diagonal(R, 0.0)
    return R


def harmonic_integration_weights(H: HarmonicStructure, weights=None):
    """Weights ``w`` with ``int_K h dmu = sum_a w_a h(q_a)`` for harmonic ``h``.

    ``w`` is the normalized fixed point of ``w = sum_i mu_i A_i^T w``.
    """
    mu = H.fractal.measure_weights if weights is None else np.asarray(weights, dtype=float)
    A = H.extension_matrices
    B = A.shape[1]
    S = np.einsum("i,iab->ba", mu, A)
    system = np.vstack([S - np.eye(B), np.ones((1, B))])
    rhs = np.zeros(B + 1)
    rhs[-1] = 1.0
    return _unique_fixed_point(system, rhs, "integration weights")


def product_moments(H: HarmonicStructure, weights=None):
    """Matrix ``G_ab = int_K h_a h_b dmu`` for the harmonic basis ``h_a``.

    Solves ``G = sum_i mu_i A_i^T G A_i`` subject to ``G 1 = w``; exact,
    no quadrature involved.
    """
    mu = H.fractal.measure_weights if weights is None else np.asarray(weights, dtype=float)
    A = H.extension_matrices
    B = A.shape[1]
    w = harmonic_integration_weights(H, mu)
    S = sum(m * np.kron(Ai.T, Ai.T) for m, Ai in zip(mu, A))
    rows_sum = np.kron(np.eye(B), np.ones((1, B)))
    system = np.vstack([S - np.eye(B * B), rows_sum])
    rhs = np.concatenate([np.zeros(B * B), w])
    G = _unique_fixed_point(system, rhs, "product moments").reshape(B, B)
    return 0.5 * (G + G.T)


def _unique_fixed_point(system, rhs, what):
    sol, _, rank, sv = np.linalg.lstsq(system, rhs, rcond=None)
    if rank < system.shape[1] or sv[-1] < 1e-10 * sv[0]:
        raise InvalidStructureError(f"{what}: fixed-point system is singular")
    if np.max(np.abs(system @ sol - rhs)) > 1e-10:
        raise InvalidStructureError(f"{what}: fixed-point system is inconsistent")
    return sol

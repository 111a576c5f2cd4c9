"""Finite signed Radon measures: atoms plus cell-restricted self-similar parts.

A component ``(w, c)`` denotes ``c * mu|_{C_w}``, of total mass ``c * mu_w``.
Atoms sit at vertices of ``V_*``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .energy_form import HarmonicStructure, harmonic_integration_weights, product_moments
from .exceptions import InvalidInputError, ResolutionError
from .fractal_core import FractalStructure, VertexId

__all__ = [
    "RadonMeasure",
    "total_mass",
    "load_vector",
    "mass_matrix",
    "restrict_to_cell",
    "rescale_to_cell",
    "pushforward",
    "snap_atom",
]

DEFAULT_QUADRATURE_DEPTH = 4


@dataclass(frozen=True)
class RadonMeasure:
    atoms: tuple = ()
    components: tuple = ()
    nonnegative: bool = False

    def __post_init__(self):
        atoms = tuple((VertexId(tuple(int(x) for x in v[0]), int(v[1])), float(m))
                      for v, m in self.atoms)
        comps = tuple((tuple(int(x) for x in w), float(c)) for w, c in self.components)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "components", comps)
        if self.nonnegative:
            if any(m < 0 for _, m in atoms) or any(c < 0 for _, c in comps):
                raise InvalidInputError("measure flagged non-negative has a negative part")
        for _, m in atoms + comps:
            if not np.isfinite(m):
                raise InvalidInputError("measure masses must be finite")

    @classmethod
    def zero(cls):
        return cls(nonnegative=True)

    @classmethod
    def self_similar(cls, coefficient=1.0, word=()):
        return cls(components=((tuple(word), coefficient),), nonnegative=coefficient >= 0)

    @classmethod
    def atom(cls, vertex, mass):
        return cls(atoms=((tuple(vertex), mass),), nonnegative=mass >= 0)

    @property
    def is_zero(self):
        return all(m == 0 for _, m in self.atoms) and all(c == 0 for _, c in self.components)

    def __add__(self, other):
        return RadonMeasure(self.atoms + other.atoms, self.components + other.components,
                            self.nonnegative and other.nonnegative)

    def scale(self, t):
        t = float(t)
        return RadonMeasure(tuple((v, t * m) for v, m in self.atoms),
                            tuple((w, t * c) for w, c in self.components),
                            self.nonnegative and t >= 0)

    __mul__ = scale
    __rmul__ = scale

    def canonical(self, fractal):
        """Same measure with atom addresses canonicalized."""
        atoms = tuple((fractal.canonicalize(*v), m) for v, m in self.atoms)
        return RadonMeasure(atoms, self.components, self.nonnegative)


def _fractal(obj):
    return obj.fractal if isinstance(obj, HarmonicStructure) else obj


def total_mass(structure, sigma: RadonMeasure):
    fr = _fractal(structure)
    mass = sum(m for _, m in sigma.atoms)
    for word, c in sigma.components:
        mass += c * float(np.prod(fr.measure_weights[list(word)])) if word else c
    return mass


def _path_matrix(H, word):
    """``P`` with ``(values on C_word corners) = P @ (values on C_word[:0] corners)``.

    Composes extension matrices along ``word``; identity for the empty word.
    """
    P = np.eye(H.fractal.boundary_size)
    for letter in word:
        P = H.extension_matrices[letter] @ P
    return P


def _atom_indices(fr, sigma, n):
    idx, mass = [], []
    for v, m in sigma.atoms:
        i = fr.vertex_index(v)
        if i >= fr.n_vertices(n):
            level = fr.vertex_level(v)
            raise ResolutionError(
                f"atom at {fr.vertex(i)} first appears at level {level}; "
                f"raise the level to at least {level}")
        idx.append(i)
        mass.append(m)
    return np.asarray(idx, dtype=np.int64), np.asarray(mass)


def load_vector(H: HarmonicStructure, sigma: RadonMeasure, n: int):
    """``int h_p^{(n)} dsigma`` for every ``p`` in ``V_n`` (exact)."""
    fr = H.fractal
    out = np.zeros(fr.n_vertices(n))
    idx, mass = _atom_indices(fr, sigma, n)
    np.add.at(out, idx, mass)
    if not sigma.components:
        return out
    w = harmonic_integration_weights(H)
    cells = fr.cell_vertices(n)
    mu_cells = fr.cell_measures(n)
    for word, c in sigma.components:
        if c == 0:
            continue
        if len(word) <= n:
            start, stop = fr.cell_range(word, n)
            contrib = c * mu_cells[start:stop, None] * w[None, :]
            np.add.at(out, cells[start:stop], contrib)
        else:
            parent = fr.cell_index(word[:n])
            mu_w = float(np.prod(fr.measure_weights[list(word)]))
            P = _path_matrix(H, word[n:])
            np.add.at(out, cells[parent], c * mu_w * (w @ P))
    return out


def _local_product_matrix(H, depth, rule):
    if rule == "exact":
        return product_moments(H)
    if rule != "interpolant":
        raise InvalidInputError(f"unknown product rule {rule!r}")
    # int over a cell of h_a h_b, approximated by interpolating the product
    # on the cell's depth-d subcells
    mu = H.fractal.measure_weights
    A = H.extension_matrices
    L = np.diag(harmonic_integration_weights(H))
    for _ in range(depth):
        L = sum(m * Ai.T @ L @ Ai for m, Ai in zip(mu, A))
    return L


def mass_matrix(H: HarmonicStructure, nu: RadonMeasure, n: int,
                quadrature_depth=DEFAULT_QUADRATURE_DEPTH, product_rule="exact"):
    """Sparse ``M_pq = int h_p^{(n)} h_q^{(n)} dnu``.

    Self-similar parts refine ``quadrature_depth`` levels below ``n``.  With
    ``product_rule="exact"`` each subcell uses the exact product moments,
    so the result does not depend on the depth; ``"interpolant"`` integrates
    the harmonic interpolant of the product instead.
    """
    fr = H.fractal
    if any(m < 0 for _, m in nu.atoms) or any(c < 0 for _, c in nu.components):
        raise InvalidInputError("potential measures must be non-negative")
    size = fr.n_vertices(n)
    B = fr.boundary_size
    rows, cols, vals = [], [], []
    idx, mass = _atom_indices(fr, nu, n)
    rows.append(idx)
    cols.append(idx)
    vals.append(mass)
    if nu.components:
        L = _local_product_matrix(H, quadrature_depth, product_rule)
        cells = fr.cell_vertices(n)
        mu_cells = fr.cell_measures(n)
        ai, bi = np.meshgrid(np.arange(B), np.arange(B), indexing="ij")
        for word, c in nu.components:
            if c == 0:
                continue
            if len(word) <= n:
                start, stop = fr.cell_range(word, n)
                blk = cells[start:stop]
                rows.append(blk[:, ai].reshape(-1))
                cols.append(blk[:, bi].reshape(-1))
                vals.append((c * mu_cells[start:stop, None, None] * L[None]).reshape(-1))
            else:
                blk = cells[fr.cell_index(word[:n])]
                mu_w = float(np.prod(fr.measure_weights[list(word)]))
                P = _path_matrix(H, word[n:])
                rows.append(blk[ai].reshape(-1))
                cols.append(blk[bi].reshape(-1))
                vals.append((c * mu_w * P.T @ L @ P).reshape(-1))
    M = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(size, size)).tocsr()
    M.sum_duplicates()
    return M


def _locate_in_cell(fr: FractalStructure, vertex, word):
    """Address of ``vertex`` relative to ``C_word`` or ``None`` if outside."""
    idx = fr.vertex_index(vertex)
    m = max(fr.vertex_level(vertex), len(word))
    start, stop = fr.cell_range(word, m)
    block = fr.cell_vertices(m)[start:stop]
    hits = np.argwhere(block == idx)
    if hits.size == 0:
        return None
    sub, label = hits[0]
    full = fr.word_of(start + sub, m)
    return full[len(word):], int(label)


def _is_prefix(a, b):
    return len(a) <= len(b) and tuple(b[:len(a)]) == tuple(a)


def restrict_to_cell(structure, sigma: RadonMeasure, word):
    """``sigma`` restricted to the closed cell ``C_word``."""
    fr = _fractal(structure)
    word = tuple(word)
    atoms = tuple((v, m) for v, m in sigma.atoms if _locate_in_cell(fr, v, word) is not None)
    comps = []
    for w, c in sigma.components:
        if _is_prefix(word, w):
            comps.append((w, c))
        elif _is_prefix(w, word):
            comps.append((word, c))
    return RadonMeasure(atoms, tuple(comps), sigma.nonnegative)


def rescale_to_cell(structure, sigma: RadonMeasure, word):
    """Pull a measure supported on ``C_word`` back to ``K`` through ``F_word``.

    Mass is preserved: ``c * mu|_{C_{word tau}}`` becomes
    ``c * mu_word * mu|_{C_tau}``.
    """
    fr = _fractal(structure)
    word = tuple(word)
    mu_w = float(np.prod(fr.measure_weights[list(word)])) if word else 1.0
    atoms = []
    for v, m in sigma.atoms:
        loc = _locate_in_cell(fr, v, word)
        if loc is None:
            raise InvalidInputError(f"atom at {v} lies outside the cell {word}")
        atoms.append((fr.canonicalize(*loc), m))
    comps = []
    for w, c in sigma.components:
        if not _is_prefix(word, w):
            if c == 0:
                continue
            raise InvalidInputError(f"component on cell {w} is not supported in cell {word}")
        comps.append((w[len(word):], c * mu_w))
    return RadonMeasure(tuple(atoms), tuple(comps), sigma.nonnegative)


def pushforward(structure, sigma: RadonMeasure, word):
    """Image of a measure on ``K`` under ``F_word``; inverse of ``rescale_to_cell``."""
    fr = _fractal(structure)
    word = tuple(word)
    mu_w = float(np.prod(fr.measure_weights[list(word)])) if word else 1.0
    atoms = tuple((fr.canonicalize(word + tuple(v.word), v.label), m) for v, m in sigma.atoms)
    comps = tuple((word + tuple(w), c / mu_w) for w, c in sigma.components)
    return RadonMeasure(atoms, comps, sigma.nonnegative)


def snap_atom(structure, word, label=None):
    """Address for an atom given as a cell word; off-vertex points snap to a corner."""
    fr = _fractal(structure)
    if label is None:
        warnings.warn(f"atom inside cell {word} snapped to the cell's corner q_0 image",
                      stacklevel=2)
        label = 0
    return fr.canonicalize(tuple(word), label)

"""Combinatorial model of post-critically finite self-similar sets.

Words are tuples of 0-based map indices; ``(0, 2)`` denotes ``F_0 o F_2``
and the cell ``C_(0,2) = F_0(F_2(K))``.  Cells of one level are numbered
by reading their word in base ``arity``, so the cells sharing a prefix form
a contiguous block.

Vertices are canonical ``(word, label)`` pairs.  ``V_n`` is ordered by
``(level of first appearance, word, label)``, which makes the ordering of
``V_n`` a prefix of the ordering of ``V_{n+1}``: an array of values on
``V_n`` is literally the head of an array of values on ``V_{n+1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .exceptions import InvalidInputError, InvalidStructureError, UnsupportedOperationError

__all__ = [
    "VertexId",
    "Embedding",
    "FractalStructure",
    "sierpinski_gasket",
    "parse_word",
    "format_word",
]


class VertexId(NamedTuple):
    """Canonical representative of a point of ``V_*``."""

    word: tuple
    label: int

    @property
    def level(self):
        return len(self.word)

    def __str__(self):
        if not self.word:
            return f"q{self.label}"
        return f"w{format_word(self.word)}:{self.label}"


def parse_word(text: str) -> tuple:
    """Parse a 1-based digit string (``"123"``) into a 0-based word."""
    text = text.strip()
    if not text:
        return ()
    if not text.isdigit() or "0" in text:
        raise InvalidInputError(f"invalid word {text!r}: expected digits 1..9")
    return tuple(int(ch) - 1 for ch in text)


def format_word(word: Sequence[int]) -> str:
    return "".join(str(i + 1) for i in word)


@dataclass(frozen=True)
class Embedding:
    """Planar similitudes ``F_i(x) = p_i + s_i (x - p_i)``; display only."""

    v0_coords: np.ndarray
    fixed_points: np.ndarray
    ratios: np.ndarray

    def apply(self, i, x):
        return self.fixed_points[i] + self.ratios[i] * (x - self.fixed_points[i])


class _Level:
    __slots__ = ("cells", "n_vertices", "scale", "offset")

    def __init__(self, cells, n_vertices, scale=None, offset=None):
        self.cells = cells
        self.n_vertices = n_vertices
        self.scale = scale
        self.offset = offset


class FractalStructure:
    """A p.c.f. self-similar set given by gluing rules between level-1 cells.

    Parameters
    ----------
    arity : int
        Number of maps ``N`` of the iterated function system.
    boundary_size : int
        Number of boundary points ``|V_0|``.
    gluings : sequence of (i, a, j, b)
        Identifications ``F_i(q_a) = F_j(q_b)`` with ``i != j``.
    measure_weights : sequence of float
        Weights of the self-similar measure; positive, summing to 1.
    boundary_fixed_maps : sequence of int, optional
        ``boundary_fixed_maps[a]`` is a map whose fixed point is ``q_a``.
        Defaults to ``a -> a``, which requires ``boundary_size <= arity``.
    embedding : Embedding, optional
        Planar coordinates, used only for output.
    """

    def __init__(self, arity, boundary_size, gluings, measure_weights,
                 boundary_fixed_maps=None, embedding=None, name=None):
        self.arity = int(arity)
        self.boundary_size = int(boundary_size)
        self.name = name
        if self.arity < 2:
            raise InvalidStructureError("arity must be at least 2")
        if self.boundary_size < 2:
            raise InvalidStructureError("boundary_size must be at least 2")

        rules = set()
        for rule in gluings:
            if len(rule) != 4:
                raise InvalidStructureError(f"gluing rule {rule!r} must have 4 entries")
            i, a, j, b = (int(x) for x in rule)
            if not (0 <= i < self.arity and 0 <= j < self.arity):
                raise InvalidStructureError(f"gluing rule {rule!r}: map index out of range")
            if not (0 <= a < self.boundary_size and 0 <= b < self.boundary_size):
                raise InvalidStructureError(f"gluing rule {rule!r}: label out of range")
            if i == j:
                raise InvalidStructureError(
                    f"gluing rule {rule!r} identifies two labels within one map")
            rules.add(((i, a), (j, b)) if (i, a) < (j, b) else ((j, b), (i, a)))
        self.gluings = tuple((i, a, j, b) for (i, a), (j, b) in sorted(rules))

        weights = np.asarray(measure_weights, dtype=float)
        if weights.shape != (self.arity,):
            raise InvalidStructureError("need one measure weight per map")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-14:
            raise InvalidStructureError("measure weights must be positive and sum to 1")
        self.measure_weights = weights

        if boundary_fixed_maps is None:
            if self.boundary_size > self.arity:
                raise InvalidStructureError(
                    "boundary_fixed_maps is required when boundary_size > arity")
            boundary_fixed_maps = range(self.boundary_size)
        fixed = np.asarray(list(boundary_fixed_maps), dtype=np.int64)
        if fixed.shape != (self.boundary_size,) or np.any(fixed < 0) or np.any(fixed >= self.arity):
            raise InvalidStructureError("boundary_fixed_maps must give one map index per label")
        self.boundary_fixed_maps = fixed

        self.embedding = embedding
        self._levels = [_Level(np.arange(self.boundary_size, dtype=np.int64)[None, :],
                               self.boundary_size)]
        self._v_level = [np.zeros(self.boundary_size, dtype=np.int64)]
        self._v_cell = [np.zeros(self.boundary_size, dtype=np.int64)]
        self._v_label = [np.arange(self.boundary_size, dtype=np.int64)]
        self._adjacency = {}
        if embedding is not None:
            self._levels[0].scale = np.ones(1)
            self._levels[0].offset = np.zeros((1, 2))

        self._build(2)
        if not self.is_connected(1):
            raise InvalidStructureError("the level-1 vertex graph is disconnected")
        if embedding is not None:
            self._check_embedding()

    # ------------------------------------------------------------------ build
    def _build(self, n):
        while len(self._levels) <= n:
            self._refine()

    def _refine(self):
        N, B = self.arity, self.boundary_size
        prev = self._levels[-1]
        n_cells = prev.cells.shape[0]
        n_old = prev.n_vertices
        n_raw = n_cells * N * B

        def raw(child, label):
            return child * B + label

        parents = np.arange(n_cells, dtype=np.int64)
        src, dst = [], []
        # (w k_a, a) is the old point (w, a) since q_a is fixed by F_{k_a}
        for a in range(B):
            src.append(raw(parents * N + self.boundary_fixed_maps[a], a))
            dst.append(n_raw + prev.cells[:, a])
        for i, a, j, b in self.gluings:
            src.append(raw(parents * N + i, a))
            dst.append(raw(parents * N + j, b))
        src = np.concatenate(src)
        dst = np.concatenate(dst)
        n_nodes = n_raw + n_old
        graph = sparse.coo_matrix((np.ones(src.size), (src, dst)), shape=(n_nodes, n_nodes))
        n_comp, comp = csgraph.connected_components(graph, directed=False)

        old_comp = comp[n_raw:]
        if np.unique(old_comp).size != n_old:
            raise InvalidStructureError(
                "gluing rules identify distinct vertices of a coarser level; "
                "deeper post-critical identifications are not supported")
        comp_vertex = np.full(n_comp, -1, dtype=np.int64)
        comp_vertex[old_comp] = np.arange(n_old)

        raw_comp = comp[:n_raw]
        # first raw index of each component, in raw (= lexicographic) order
        first_raw = np.full(n_comp, n_raw, dtype=np.int64)
        np.minimum.at(first_raw, raw_comp, np.arange(n_raw))
        new_comps = np.flatnonzero(comp_vertex < 0)
        new_comps = new_comps[np.argsort(first_raw[new_comps])]
        comp_vertex[new_comps] = n_old + np.arange(new_comps.size)

        cells = comp_vertex[raw_comp].reshape(n_cells * N, B)
        reps = first_raw[new_comps]
        level = len(self._levels)
        self._v_level.append(np.full(reps.size, level, dtype=np.int64))
        self._v_cell.append(reps // B)
        self._v_label.append(reps % B)
        new_level = _Level(cells, n_old + reps.size)

        if self.embedding is not None:
            emb = self.embedding
            s, b = prev.scale, prev.offset
            s_new = (s[:, None] * emb.ratios[None, :]).reshape(-1)
            shift = (1.0 - emb.ratios)[:, None] * emb.fixed_points
            b_new = (b[:, None, :] + s[:, None, None] * shift[None, :, :]).reshape(-1, 2)
            new_level.scale = s_new
            new_level.offset = b_new
        self._levels.append(new_level)

    def _check_embedding(self):
        emb = self.embedding
        for i, a, j, b in self.gluings:
            xa = emb.apply(i, emb.v0_coords[a])
            xb = emb.apply(j, emb.v0_coords[b])
            if np.max(np.abs(xa - xb)) > 1e-12:
                raise InvalidStructureError(
                    f"embedding does not respect gluing F_{i}(q_{a}) = F_{j}(q_{b})")
        for a, k in enumerate(self.boundary_fixed_maps):
            if np.max(np.abs(emb.apply(k, emb.v0_coords[a]) - emb.v0_coords[a])) > 1e-12:
                raise InvalidStructureError(f"q_{a} is not fixed by map {k} in the embedding")

    def _level(self, n):
        if n < 0:
            raise InvalidInputError("level must be non-negative")
        self._build(n)
        return self._levels[n]

    # ------------------------------------------------------------- accessors
    def n_vertices(self, n):
        return self._level(n).n_vertices

    def n_cells(self, n):
        return self.arity ** n

    def cell_vertices(self, n):
        """Vertex indices of every level-``n`` cell, shape ``(N**n, |V_0|)``."""
        return self._level(n).cells

    def cell_index(self, word):
        idx = 0
        for letter in word:
            if not 0 <= letter < self.arity:
                raise InvalidInputError(f"letter {letter} out of range in word {word!r}")
            idx = idx * self.arity + int(letter)
        return idx

    def word_of(self, index, n):
        word = []
        for _ in range(n):
            index, letter = divmod(int(index), self.arity)
            word.append(letter)
        return tuple(reversed(word))

    def cell_range(self, word, n):
        """Indices ``[start, stop)`` of the level-``n`` cells inside ``C_word``."""
        k = len(word)
        if n < k:
            raise InvalidInputError("level is coarser than the word")
        span = self.arity ** (n - k)
        start = self.cell_index(word) * span
        return start, start + span

    def cell_measures(self, n):
        """``mu_w`` for every level-``n`` cell."""
        out = np.ones(1)
        for _ in range(n):
            out = np.outer(out, self.measure_weights).reshape(-1)
        return out

    def _check_label(self, label):
        if not 0 <= int(label) < self.boundary_size:
            raise InvalidInputError(
                f"label {label} out of range for boundary size {self.boundary_size}")

    def vertex_index(self, v):
        """Stable index of a vertex (any representative pair is accepted)."""
        word, label = v
        word = tuple(word)
        self._check_label(label)
        cells = self.cell_vertices(len(word))
        return int(cells[self.cell_index(word), label])

    def vertex(self, index):
        """The canonical ``VertexId`` with the given stable index."""
        index = int(index)
        for lv, cl, lb in zip(self._v_level, self._v_cell, self._v_label):
            if index < lv.size:
                level = int(lv[index])
                return VertexId(self.word_of(cl[index], level), int(lb[index]))
            index -= lv.size
        raise InvalidInputError("vertex index beyond the levels built so far")

    def canonicalize(self, word, label):
        return self.vertex(self.vertex_index((word, label)))

    def vertex_level(self, v):
        return self.vertex(self.vertex_index(v)).level

    def enumerate_vertices(self, n):
        return [self.vertex(i) for i in range(self.n_vertices(n))]

    def cell_boundary(self, word):
        word = tuple(word)
        cells = self.cell_vertices(len(word))
        return [self.vertex(i) for i in cells[self.cell_index(word)]]

    def adjacency(self, n):
        """Boolean sparse matrix: vertices sharing a level-``n`` cell."""
        if n not in self._adjacency:
            cells = self.cell_vertices(n)
            n_cells, B = cells.shape
            inc = sparse.csr_matrix(
                (np.ones(cells.size), (cells.reshape(-1), np.repeat(np.arange(n_cells), B))),
                shape=(self.n_vertices(n), n_cells))
            adj = (inc @ inc.T).tocsr()
            adj.setdiag(0)
            adj.eliminate_zeros()
            adj.data[:] = 1.0
            self._adjacency[n] = adj
        return self._adjacency[n]

    def neighbors(self, p, n):
        idx = self.vertex_index(p)
        if idx >= self.n_vertices(n):
            raise InvalidInputError(f"{p} is not a vertex of V_{n}")
        adj = self.adjacency(n)
        cols = adj.indices[adj.indptr[idx]:adj.indptr[idx + 1]]
        return {self.vertex(j) for j in cols}

    def is_connected(self, n):
        n_comp, _ = csgraph.connected_components(self.adjacency(n), directed=False)
        return n_comp == 1

    def cell_vertex_map(self, word, n):
        """Indices in ``V_{n+|word|}`` of the points ``F_word(V_n)``.

        Entry ``j`` is the image of the ``j``-th vertex of ``V_n``.
        """
        word = tuple(word)
        m = len(word)
        src = self.cell_vertices(n)
        start, stop = self.cell_range(word, n + m)
        dst = self.cell_vertices(n + m)[start:stop]
        out = np.empty(self.n_vertices(n), dtype=np.int64)
        out[src.reshape(-1)] = dst.reshape(-1)
        return out

    def vertex_coordinates(self, p):
        if self.embedding is None:
            raise UnsupportedOperationError("structure has no planar embedding")
        word, label = p
        word = tuple(word)
        self._check_label(label)
        lvl = self._level(len(word))
        c = self.cell_index(word)
        return lvl.offset[c] + lvl.scale[c] * self.embedding.v0_coords[label]

    def coordinates(self, n):
        """Planar coordinates of all of ``V_n``, shape ``(|V_n|, 2)``."""
        if self.embedding is None:
            raise UnsupportedOperationError("structure has no planar embedding")
        out = np.empty((self.n_vertices(n), 2))
        for k in range(n + 1):
            lvl = self._levels[k]
            cells = lvl.cells
            pts = (lvl.offset[:, None, :]
                   + lvl.scale[:, None, None] * self.embedding.v0_coords[None, :, :])
            out[cells.reshape(-1)] = pts.reshape(-1, 2)
        return out

    def __repr__(self):
        label = self.name or "custom"
        return (f"FractalStructure({label!r}, arity={self.arity}, "
                f"boundary_size={self.boundary_size})")


def sierpinski_gasket():
    """The standard Sierpinski gasket ``sg3`` with unit-triangle corners."""
    gluings = [(i, j, j, i) for i in range(3) for j in range(i + 1, 3)]
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])
    embedding = Embedding(corners, corners.copy(), np.full(3, 0.5))
    return FractalStructure(3, 3, gluings, np.full(3, 1.0 / 3.0),
                            embedding=embedding, name="sg3")

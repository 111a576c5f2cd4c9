"""Randomized, reportable checks of maximum principles and Harnack bounds.

Every check runs on a finite-level solution and returns a ``CheckReport``.
Instances are generated from integer seeds so that any failure can be
reproduced from the witness alone.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse import csgraph

from .energy_form import HarmonicStructure, resistance_matrix
from .exceptions import InvalidInputError, PositivityError
from .radon_measure import RadonMeasure, total_mass
from .elliptic_solver import (
    DirichletProblem,
    Solution,
    normal_derivative,
    solve_schrodinger_batch,
    solve_schrodinger_direct,
)

__all__ = [
    "Region",
    "CheckReport",
    "InstanceFamily",
    "make_instance",
    "sample_solutions",
    "check_weak_mp",
    "check_strong_mp",
    "check_hopf",
    "check_equicontinuity",
    "estimate_harnack_constant",
    "HarnackEstimate",
    "boundary_energy_bound",
    "merge_reports",
]

WEAK_RTOL = 1e-10
STRICT_RTOL = 1e-9
HOPF_GAP = 1e-9
EQUI_ATOL = 1e-9


@dataclass(frozen=True)
class Region:
    """Union of the open level-``k`` cells listed in ``words``."""

    words: tuple

    def __post_init__(self):
        words = tuple(sorted({tuple(int(a) for a in w) for w in self.words}))
        if not words:
            raise InvalidInputError("region must contain at least one cell")
        if len({len(w) for w in words}) != 1:
            raise InvalidInputError("region cells must share one level")
        object.__setattr__(self, "words", words)

    @property
    def level(self):
        return len(self.words[0])

    def cell_mask(self, fractal, n):
        """Which level-``n`` cells lie inside the region."""
        k = self.level
        if n < k:
            raise InvalidInputError(f"region of level {k} cannot be resolved at level {n}")
        inside = np.zeros(fractal.n_cells(k), dtype=bool)
        inside[[fractal.cell_index(w) for w in self.words]] = True
        return np.repeat(inside, fractal.arity ** (n - k))

    def vertex_sets(self, fractal, n):
        """Boolean masks ``(closure, boundary, interior)`` over ``V_n``."""
        cells = fractal.cell_vertices(n)
        inside = self.cell_mask(fractal, n)
        size = fractal.n_vertices(n)
        closure = np.zeros(size, dtype=bool)
        closure[cells[inside].reshape(-1)] = True
        outside = np.zeros(size, dtype=bool)
        outside[cells[~inside].reshape(-1)] = True
        boundary = closure & outside
        boundary[: fractal.boundary_size] |= closure[: fractal.boundary_size]
        return closure, boundary, closure & ~boundary

    def avoids_boundary(self, fractal):
        cells = fractal.cell_vertices(self.level)
        used = cells[[fractal.cell_index(w) for w in self.words]]
        return not np.any(used < fractal.boundary_size)

    @classmethod
    def away_from_boundary(cls, fractal, k):
        """All level-``k`` cells whose closures miss ``V_0``."""
        cells = fractal.cell_vertices(k)
        keep = np.flatnonzero(~np.any(cells < fractal.boundary_size, axis=1))
        return cls(tuple(fractal.word_of(c, k) for c in keep))


@dataclass
class CheckReport:
    name: str
    verdict: str
    margin: float
    count: int = 1
    witness: dict = None
    tolerances: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.verdict == "pass"

    def to_dict(self):
        return asdict(self)


def merge_reports(name, reports):
    """Combine per-instance reports: worst margin wins, failures dominate."""
    reports = list(reports)
    if not reports:
        return CheckReport(name, "pass", float("inf"), count=0)
    failures = [r for r in reports if r.verdict == "fail"]
    conclusive = [r for r in reports if r.verdict != "inconclusive"]
    pool = failures or conclusive or reports
    worst = min(pool, key=lambda r: r.margin)
    if failures:
        verdict = "fail"
    elif conclusive:
        verdict = "pass"
    else:
        verdict = "inconclusive"
    counts = {}
    for r in reports:
        counts[r.verdict] = counts.get(r.verdict, 0) + 1
    branches = {}
    for r in reports:
        b = r.details.get("branch")
        if b is not None:
            branches[b] = branches.get(b, 0) + 1
    details = {"verdicts": counts}
    if branches:
        details["branches"] = branches
    inconclusive = [r.witness for r in reports if r.verdict == "inconclusive"]
    if inconclusive:
        details["inconclusive"] = inconclusive
    return CheckReport(name, verdict, worst.margin, count=len(reports), witness=worst.witness,
                       tolerances=worst.tolerances, details=details)


# ---------------------------------------------------------------- sampling

@dataclass(frozen=True)
class InstanceFamily:
    """Recipe for random instances.

    ``boundary`` is one of ``signed`` (uniform on [-1, 1]), ``nonnegative``
    (uniform on [0, 1]) or ``peaked`` (strict positive maximum at ``q_0``).
    Potentials and sources are random atoms on ``V_measure_level`` plus
    random self-similar parts on cells of level at most ``measure_level``.
    """

    boundary: str = "signed"
    potential_scale: float = 2.0
    source_scale: float = 0.0
    max_atoms: int = 3
    max_components: int = 3
    measure_level: int = 2
    region_level: int = 2

    def __post_init__(self):
        if self.boundary not in ("signed", "nonnegative", "peaked"):
            raise InvalidInputError(f"unknown boundary family {self.boundary!r}")


def _random_measure(rng, fractal, family, scale):
    if scale <= 0:
        return RadonMeasure.zero()
    k = family.measure_level
    atoms = []
    for _ in range(rng.integers(0, family.max_atoms + 1)):
        v = fractal.vertex(rng.integers(fractal.n_vertices(k)))
        atoms.append((v, rng.uniform(0, scale)))
    comps = []
    for _ in range(rng.integers(0, family.max_components + 1)):
        length = int(rng.integers(0, k + 1))
        word = tuple(int(a) for a in rng.integers(0, fractal.arity, size=length))
        comps.append((word, rng.uniform(0, scale)))
    return RadonMeasure(tuple(atoms), tuple(comps), nonnegative=True)


def _random_boundary(rng, B, kind):
    if kind == "signed":
        return rng.uniform(-1.0, 1.0, size=B)
    if kind == "nonnegative":
        return rng.uniform(0.0, 1.0, size=B)
    top = rng.uniform(0.2, 1.0)
    g = rng.uniform(-1.0, top - 0.1, size=B)
    g[0] = top
    return g


def _random_region(rng, fractal, k):
    n_cells = fractal.n_cells(k)
    chosen = np.flatnonzero(rng.random(n_cells) < 0.5)
    if chosen.size == 0:
        chosen = rng.integers(n_cells, size=1)
    return Region(tuple(fractal.word_of(c, k) for c in chosen))


def make_instance(H: HarmonicStructure, n, family: InstanceFamily, seed):
    """Rebuild the instance with the given seed: ``(problem, region)``."""
    rng = np.random.default_rng(seed)
    fr = H.fractal
    nu = _random_measure(rng, fr, family, family.potential_scale)
    sigma = _random_measure(rng, fr, family, family.source_scale)
    g = _random_boundary(rng, fr.boundary_size, family.boundary)
    region = _random_region(rng, fr, min(family.region_level, n))
    problem = DirichletProblem(H, n, g, sigma=None if sigma.is_zero else sigma,
                               nu=None if nu.is_zero else nu)
    return problem, region


def instance_seeds(seed, count):
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def sample_solutions(H: HarmonicStructure, n, count, seed, family=InstanceFamily()):
    """Solve ``count`` random instances with the direct method.

    Each instance solves ``Delta u - u nu = sigma0`` with ``nu, sigma0 >= 0``,
    so ``Lu`` is a non-negative measure.  Deterministic under ``seed``.
    """
    out = []
    for i, s in enumerate(instance_seeds(seed, count)):
        problem, region = make_instance(H, n, family, s)
        sol = solve_schrodinger_direct(problem)
        sol.meta.update(seed=seed, index=i, instance_seed=s, region=region, family=family)
        out.append(sol)
    return out


def _witness(solution, **extra):
    meta = solution.meta
    out = {k: meta[k] for k in ("seed", "index", "instance_seed") if k in meta}
    out.update(extra)
    return out


# ------------------------------------------------------------------ checks

def check_weak_mp(solution: Solution, region: Region) -> CheckReport:
    """``max_E u <= max_{boundary of E} u^+`` up to ``1e-10 * max|u|``."""
    fr = solution.problem.H.fractal
    u = solution.u
    _, bd, interior = region.vertex_sets(fr, solution.level)
    scale = max(float(np.max(np.abs(u))), 1e-300)
    tol = WEAK_RTOL * scale
    rhs = max(float(np.max(u[bd])), 0.0) if bd.any() else 0.0
    if not interior.any():
        return CheckReport("weak-mp", "pass", float("inf"), tolerances={"abs": tol},
                           details={"branch": "empty-interior"})
    idx = np.flatnonzero(interior)
    j = idx[np.argmax(u[idx])]
    margin = rhs - float(u[j])
    verdict = "pass" if margin >= -tol else "fail"
    return CheckReport("weak-mp", verdict, margin, tolerances={"abs": tol},
                       witness=_witness(solution, vertex=str(fr.vertex(j)), value=float(u[j]),
                                        boundary_max_plus=rhs))


def check_strong_mp(solution: Solution, region: Region) -> CheckReport:
    """Positive interior maxima only on components where ``u`` is constant.

    Branches: ``a`` boundary strictly beats the interior, ``b`` the
    maximizing component is constant, ``nonpositive`` the interior maximum
    is not positive so the statement makes no claim.
    """
    fr = solution.problem.H.fractal
    u = solution.u
    n = solution.level
    _, bd, interior = region.vertex_sets(fr, n)
    scale = max(float(np.max(np.abs(u))), 1e-300)
    tol = STRICT_RTOL * scale
    tols = {"strict": tol}
    if not interior.any():
        return CheckReport("strong-mp", "pass", float("inf"), tolerances=tols,
                           details={"branch": "empty-interior"})
    idx = np.flatnonzero(interior)
    j = idx[np.argmax(u[idx])]
    top = float(u[j])
    bd_max = float(np.max(u[bd])) if bd.any() else -np.inf
    deficit = bd_max - top
    wit = _witness(solution, vertex=str(fr.vertex(j)), value=top, boundary_max=bd_max)
    if deficit >= tol:
        return CheckReport("strong-mp", "pass", deficit, tolerances=tols, witness=wit,
                           details={"branch": "a"})
    adj = fr.adjacency(n)[idx][:, idx]
    _, labels = csgraph.connected_components(adj, directed=False)
    comp = idx[labels == labels[np.searchsorted(idx, j)]]
    spread = float(np.max(u[comp]) - np.min(u[comp]))
    if spread <= tol:
        return CheckReport("strong-mp", "pass", tol - spread, tolerances=tols, witness=wit,
                           details={"branch": "b"})
    if top <= 0:
        # no claim is made about non-positive maxima; keep the deficit for the record
        return CheckReport("strong-mp", "pass", float("inf"), tolerances=tols, witness=wit,
                           details={"branch": "nonpositive", "deficit": deficit})
    return CheckReport("strong-mp", "fail", deficit, tolerances=tols, witness=wit,
                       details={"branch": "unexplained", "component_spread": spread})


def check_hopf(solution: Solution, p=((), 0)) -> CheckReport:
    """Positive normal derivative at a strict positive maximum on ``V_0``."""
    H = solution.problem.H
    fr = H.fractal
    ip = fr.vertex_index(p)
    if ip >= fr.boundary_size:
        raise InvalidInputError("Hopf check needs a point of V_0")
    u = solution.u
    others = np.delete(u, ip)
    tols = {"hypothesis_gap": HOPF_GAP}
    if not (u[ip] > 0 and np.all(u[ip] > others + HOPF_GAP)):
        return CheckReport("hopf", "inconclusive", float("nan"), tolerances=tols,
                           witness=_witness(solution, reason="no strict positive maximum at p"))
    nd = normal_derivative(H, u, p, solution.level)
    positive_tail = bool(nd.terms[-1] > 0)
    verdict = "pass" if nd.limit > 0 and positive_tail else "fail"
    return CheckReport("hopf", verdict, float(nd.limit), tolerances=tols,
                       witness=_witness(solution, terms=nd.terms.tolist(), limit=nd.limit),
                       details={"tail_ratio": nd.tail_ratio})


def boundary_energy_bound(H: HarmonicStructure):
    """``max E_0(g, g)`` over boundary data with values in ``[0, 1]``."""
    L = H.boundary_laplacian
    B = L.shape[0]
    best = 0.0
    for bits in itertools.product((0.0, 1.0), repeat=B):
        g = np.array(bits)
        best = max(best, float(g @ L @ g))
    return best


_RESISTANCE = {}


def _resistances(H, n):
    key = (id(H), n)
    if key not in _RESISTANCE:
        _RESISTANCE[key] = resistance_matrix(H, n)
    return _RESISTANCE[key]


def check_equicontinuity(solution: Solution, nu: RadonMeasure = None, n_pairs=500, seed=0,
                         resistances=None) -> CheckReport:
    """``|u(x) - u(y)|^2 <= (nu(K) + E0max) R(x, y)`` on random vertex pairs.

    ``E0max`` is the largest boundary energy of data in ``[0, 1]``; it is 2
    on the gasket.
    """
    H = solution.problem.H
    fr = H.fractal
    u = solution.u
    if np.min(u) < -1e-12 or np.max(u) > 1 + 1e-12:
        raise InvalidInputError("equicontinuity check needs 0 <= u <= 1")
    nu = solution.problem.nu if nu is None else nu
    mass = total_mass(fr, nu) if nu is not None else 0.0
    bound = mass + boundary_energy_bound(H)
    R = _resistances(H, solution.level) if resistances is None else resistances
    rng = np.random.default_rng(seed)
    size = u.size
    x = rng.integers(size, size=n_pairs)
    y = (x + rng.integers(1, size, size=n_pairs)) % size
    slack = bound * R[x, y] + EQUI_ATOL - (u[x] - u[y]) ** 2
    k = int(np.argmin(slack))
    verdict = "pass" if slack[k] >= 0 else "fail"
    return CheckReport("equicontinuity", verdict, float(slack[k]), count=1,
                       tolerances={"abs": EQUI_ATOL},
                       witness=_witness(solution, x=str(fr.vertex(x[k])), y=str(fr.vertex(y[k])),
                                        pair_seed=seed),
                       details={"bound_constant": bound})


@dataclass
class HarnackEstimate:
    C_hat: float
    ratios: np.ndarray
    min_values: np.ndarray
    witness: dict
    level: int

    def summary(self):
        q = np.quantile(self.ratios, [0.0, 0.5, 0.9, 1.0])
        return {"C_hat": self.C_hat, "level": self.level, "samples": int(self.ratios.size),
                "ratio_min": float(q[0]), "ratio_median": float(q[1]),
                "ratio_q90": float(q[2]), "ratio_max": float(q[3]),
                "min_value_over_samples": float(np.min(self.min_values))}


def harnack_boundary_samples(B, samples, seed):
    """Corner indicators, the constant, then uniform random data in ``[0, 1]``."""
    rng = np.random.default_rng(seed)
    fixed = np.vstack([np.eye(B), np.ones((1, B))])
    extra = max(samples - fixed.shape[0], 0)
    data = np.vstack([fixed, rng.uniform(0.0, 1.0, size=(extra, B))])
    return data[: max(samples, fixed.shape[0])]


def estimate_harnack_constant(H: HarmonicStructure, region: Region, nu: RadonMeasure, n,
                              samples=200, seed=0, boundary_data=None) -> HarnackEstimate:
    """Largest ``max_E u / min_E u`` over non-negative solutions of ``Lu = 0``."""
    fr = H.fractal
    if not region.avoids_boundary(fr):
        raise InvalidInputError("Harnack region must stay away from V_0")
    if boundary_data is None:
        boundary_data = harnack_boundary_samples(fr.boundary_size, samples, seed)
    g = np.atleast_2d(np.asarray(boundary_data, dtype=float))
    if np.any(g < 0) or np.any(g.max(axis=1) <= 0):
        raise InvalidInputError("Harnack samples need non-negative, nonzero boundary data")
    U = solve_schrodinger_batch(H, n, g, nu=None if nu is None or nu.is_zero else nu)
    closure, _, _ = region.vertex_sets(fr, n)
    vals = U[:, closure]
    lo = vals.min(axis=1)
    hi = vals.max(axis=1)
    bad = np.flatnonzero(lo <= 0)
    if bad.size:
        i = int(bad[0])
        raise PositivityError(
            f"sample {i} has min_E u = {lo[i]:.3e} <= 0",
            {"sample": i, "boundary": g[i].tolist(), "seed": seed, "level": n})
    ratios = hi / lo
    k = int(np.argmax(ratios))
    witness = {"sample": k, "boundary": g[k].tolist(), "seed": seed, "level": n}
    return HarnackEstimate(float(ratios[k]), ratios, lo, witness, n)

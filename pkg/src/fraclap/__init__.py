"""Energies, Laplacians and Schrodinger problems on post-critically finite fractals."""

__version__ = "0.1.0"

from .blowup import BlowupProblem, BlowupRegion, embed_problem, solve_embedded, solve_native, transfer_solution
from .energy_form import (
    GraphEnergy,
    HarmonicStructure,
    assemble_energy,
    bump,
    effective_resistance,
    energy,
    harmonic_extend,
    harmonic_integration_weights,
    product_moments,
    resistance_matrix,
    sg_harmonic_structure,
)
from .exceptions import (
    CertificationError,
    FraclapError,
    InvalidInputError,
    InvalidStructureError,
    NotContractiveError,
    PositivityError,
    ResolutionError,
    StructuralError,
    UnsupportedOperationError,
)
from .fractal_core import Embedding, FractalStructure, VertexId, sierpinski_gasket
from .radon_measure import RadonMeasure, load_vector, mass_matrix, rescale_to_cell, restrict_to_cell, total_mass
from .elliptic_solver import (
    DirichletProblem,
    GreenOperator,
    Solution,
    certify_local_solvability,
    contraction_factor,
    green_apply,
    green_entry,
    normal_derivative,
    solve_dirichlet,
    solve_schrodinger_direct,
    solve_schrodinger_picard,
)

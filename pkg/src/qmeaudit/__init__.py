"""Weak-coupling master equations for boundary-driven spin chains.

Builds Redfield, local Lindblad, eigenbasis Lindblad and universal Lindblad
generators for small XXZ chains coupled to bosonic baths, and audits their
steady states for population/coherence accuracy, thermalization, local
conservation and complete positivity.
"""

__version__ = "0.1.0"

from .baths import BathSpec, PvQuadrature, SpectralFunction, occupation, pv_halfline, redfield_C, redfield_D, ule_f, ule_g
from .diagnostics import (
    AuditReport,
    audit,
    bond_current,
    boundary_current,
    conservation_audit,
    current_report,
    generator_compare_on_diagonals,
    scaling_slope,
    thermalization_check,
)
from .generators import (
    GeneratorParts,
    LindbladForm,
    build,
    build_eigenbasis_lindblad,
    build_local_lindblad,
    build_redfield,
    build_redfield_hermitian,
    build_ule,
    extract_kossakowski,
)
from .operators import (
    Superoperator,
    build_xxz,
    eigendecompose,
    gibbs_state,
    sandwich_superop,
    trace_distance,
    unvectorize,
    vectorize,
)
from .steady import evolve, perturbative_ness, positivity_probe, solve_ness

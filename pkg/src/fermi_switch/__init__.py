"""Two qubits on a 1D field: exact dynamics, light-cone checks and symbolic commutators."""

__version__ = "0.1.0"

from .errors import (ArgumentError, ConfigError, ConvergenceError, FermiSwitchError,
                     InvariantViolation, ResourceLimitError)
from .model import (FieldGrid, FockBasis, QubitParams, SparseHamiltonian, assemble_hamiltonian,
                    build_basis, build_grid, initial_state, product_state, switch_state)
from .evolve import PropagatorConfig, dense_oracle, evolve
from .observables import (ProbabilityTrace, excitation_probability, field_expectation_profile,
                          two_atom_correlator)
from .theory import (PerturbativePrediction, TheoryParams, cross_term_root_state_factor,
                     leading_order_probabilities, retarded_field_coefficient)

__all__ = [
    "__version__",
    "FermiSwitchError", "ArgumentError", "ResourceLimitError", "ConvergenceError",
    "ConfigError", "InvariantViolation",
    "QubitParams", "FieldGrid", "FockBasis", "SparseHamiltonian", "build_grid", "build_basis",
    "assemble_hamiltonian", "switch_state", "product_state", "initial_state",
    "PropagatorConfig", "evolve", "dense_oracle",
    "ProbabilityTrace", "excitation_probability", "two_atom_correlator",
    "field_expectation_profile",
    "TheoryParams", "PerturbativePrediction", "retarded_field_coefficient",
    "leading_order_probabilities", "cross_term_root_state_factor",
]

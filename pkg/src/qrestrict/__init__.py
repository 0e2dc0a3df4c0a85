"""Classical restrictions of quantum spin states: Gibbsianness diagnostics,
free-fermion large deviations, polymer expansions and finitely correlated states."""

from .errors import (
    CapabilityError,
    DomainError,
    NumericalFailure,
    QRestrictError,
    SingularConditioningError,
    SingularEventError,
)
from .gibbs import (
    ClassicalDistribution,
    QuantumState,
    classical_restriction,
    gibbs_state,
    ground_state,
    magnetization_distribution,
)
from .spin_algebra import (
    Interaction,
    Lattice,
    ObservableSpectrum,
    build_hamiltonian,
    embed_operator,
    spectral_projections,
    transverse_ising,
)

__all__ = [
    "CapabilityError",
    "ClassicalDistribution",
    "DomainError",
    "Interaction",
    "Lattice",
    "NumericalFailure",
    "ObservableSpectrum",
    "QRestrictError",
    "QuantumState",
    "SingularConditioningError",
    "SingularEventError",
    "build_hamiltonian",
    "classical_restriction",
    "embed_operator",
    "gibbs_state",
    "ground_state",
    "magnetization_distribution",
    "spectral_projections",
    "transverse_ising",
]
__version__ = "0.1.0"

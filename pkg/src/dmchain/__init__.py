"""Disordered spin-1/2 chains with chiral couplings: spectra, entanglement, quenches."""

__version__ = "0.1.0"

from .model import (
    CouplingParams,
    DisorderField,
    SectorBasis,
    SectorState,
    SparseHermitianOperator,
    build_hamiltonian,
    sample_disorder,
    sector_basis,
)

__all__ = [
    "CouplingParams",
    "DisorderField",
    "SectorBasis",
    "SectorState",
    "SparseHermitianOperator",
    "build_hamiltonian",
    "sample_disorder",
    "sector_basis",
    "__version__",
]

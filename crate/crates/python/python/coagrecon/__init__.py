from ._coagrecon import (
    Basis,
    BoundaryData,
    Reconstruction,
    carleman_min_ratio,
    generate_data,
    phi_of_n,
    reconstruct,
)

__all__ = [
    "Basis",
    "BoundaryData",
    "Reconstruction",
    "carleman_min_ratio",
    "generate_data",
    "phi_of_n",
    "reconstruct",
]

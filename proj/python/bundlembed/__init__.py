"""Bundle optimization for multi-aspect embeddings."""

from ._bundlembed import (
    Bundle,
    OptimConfig,
    OptimResult,
    Tuple,
    Weights,
    affiliation_uncertainty,
    bundles_from_triplets,
    generalization_error,
    generate,
    ndcg,
    optimize,
    read_bundles,
    read_tables,
    sample_triplets,
    simulate,
    total_tuples,
    write_bundles,
    write_tables,
)

__all__ = [
    "Bundle",
    "OptimConfig",
    "OptimResult",
    "Tuple",
    "Weights",
    "affiliation_uncertainty",
    "bundles_from_triplets",
    "generalization_error",
    "generate",
    "ndcg",
    "optimize",
    "read_bundles",
    "read_tables",
    "sample_triplets",
    "simulate",
    "total_tuples",
    "write_bundles",
    "write_tables",
]

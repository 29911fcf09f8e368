"""Confounding-robust ICA (coroICA) and second-order blind source separation."""

from coroica.covstats import (
    GroupedPartition,
    MatrixSet,
    build_block_covariances,
    build_matrix_set,
    empirical_autocov,
)
from coroica.jointdiag import Diagonalizer, DiagonalizerOptions, offdiag_loss, uwedge
from coroica.metrics import (
    MdScore,
    activation_map,
    cis_matrix,
    md_index,
    md_index_bruteforce,
    mcis,
)
from coroica.separation import (
    SeparationConfig,
    SeparationModel,
    choiica_fit,
    coroica_fit,
    random_unmixing,
    sobi_fit,
    transform,
)

__version__ = "0.1.0"

__all__ = [
    "GroupedPartition",
    "MatrixSet",
    "build_block_covariances",
    "build_matrix_set",
    "empirical_autocov",
    "Diagonalizer",
    "DiagonalizerOptions",
    "offdiag_loss",
    "uwedge",
    "MdScore",
    "activation_map",
    "cis_matrix",
    "md_index",
    "md_index_bruteforce",
    "mcis",
    "SeparationConfig",
    "SeparationModel",
    "choiica_fit",
    "coroica_fit",
    "random_unmixing",
    "sobi_fit",
    "transform",
]

"""Polynomial density, cyclic vectors and multiplicity for discrete planar measures."""

import os as _os

__version__ = "0.1.0"

# CYCLAB_THREADS caps BLAS threads; it must be applied before numpy loads.
_threads = _os.environ.get("CYCLAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .errors import (  # noqa: E402
    BindingError,
    BoundViolation,
    ConfigError,
    CyclabError,
    DecompositionError,
    DomainError,
    ZeroWeightError,
)
from .measure import (  # noqa: E402
    SUP,
    DiscreteMeasure,
    SampledFunction,
    bounded_transform,
    inverse_transform,
    lp_distance,
    pushforward,
    reweight_measure,
)
from .polyapprox import (  # noqa: E402
    Polynomial,
    best_approx_l2,
    best_approx_lp,
    best_approx_sup,
    build_ortho_basis,
    density_profile,
)
from .generators import generate_measure  # noqa: E402

__all__ = [
    "SUP", "BindingError", "BoundViolation", "ConfigError", "CyclabError",
    "DecompositionError", "DomainError", "DiscreteMeasure", "Polynomial",
    "SampledFunction", "ZeroWeightError", "best_approx_l2", "best_approx_lp",
    "best_approx_sup", "bounded_transform", "build_ortho_basis", "density_profile",
    "generate_measure", "inverse_transform", "lp_distance", "pushforward",
    "reweight_measure",
]

"""Random wave sources with spatially varying strength: sampling, far fields and strength recovery."""
__version__ = "0.1.0"

from .waves_core import WaveKind, ElasticSpeeds  # noqa: E402
from .gmig_field import (  # noqa: E402
    Grid,
    FieldRealization,
    ScalarStrengthPair,
    MatrixStrengthPair,
    validate_strengths,
    sample_scalar_gmig,
    sample_vector_gmig,
)
from .forward_ops import DirectionSet, FarFieldSource, farfield, nearfield  # noqa: E402
from .band_estimators import EstimatorConfig, band_average, band_average_set, ensemble_limit  # noqa: E402
from .symbol_recovery import normalize, invert_polar_fourier, recovery_error  # noqa: E402

__all__ = [
    "WaveKind", "ElasticSpeeds", "Grid", "FieldRealization", "ScalarStrengthPair", "MatrixStrengthPair",
    "validate_strengths", "sample_scalar_gmig", "sample_vector_gmig", "DirectionSet", "FarFieldSource",
    "farfield", "nearfield", "EstimatorConfig", "band_average", "band_average_set", "ensemble_limit",
    "normalize", "invert_polar_fourier", "recovery_error",
]

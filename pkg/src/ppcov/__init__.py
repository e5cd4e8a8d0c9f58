"""ppcov: does a spatial covariate explain the intensity of a point pattern?

Kernel estimation of the relative density of event locations with and
without covariate information, an integrated-squared-difference test with
smooth-bootstrap calibration, a normal approximation diagnostic, and a Monte
Carlo rejection-proportion harness for synthetic alternatives.
"""

from .errors import InputDataError, NumericalError, PpcovError
from .geometry import (
    CovariateGrid,
    EvaluationMesh,
    GridGeometry,
    ObservationWindow,
    PointPattern,
    SpatialCovariateDistribution,
    build_spatial_distribution,
    covariate_at,
    quadrature,
    resample_to_mesh,
    window_area,
)
from .kernels import (
    BandwidthMatrix,
    Kernel1D,
    Kernel2D,
    kernel1d,
    kernel2d,
    select_bandwidth_matrix,
    select_scalar_bandwidth,
)
from .estimators import (
    IntensitySurface,
    RelativeDensitySurface,
    covariate_density,
    covariate_relative_density,
    edge_correction,
    edge_correction_surface,
    intensity_at,
    intensity_surface,
    spatial_relative_density,
)
from .goftest import (
    AsymptoticApprox,
    GofTestResult,
    bootstrap_test,
    l2_statistic,
    normal_approximation,
    pilot_intensity,
    statistic_by_expansion,
)
from .simulate import (
    PerturbationBand,
    PowerStudyResult,
    SyntheticModel,
    band_profile,
    covariate_intensity,
    linear_covariate_mesh,
    linear_null_intensity,
    perturbed_intensity,
    power_study,
    sample_nhpp,
)
from .streams import replicate_stream

__version__ = "0.1.0"

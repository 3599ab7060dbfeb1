"""Phase-space simulation and validation of Gaussian boson sampling with
threshold detectors."""

from .counts import (PatternSet, Provenance, bin_patterns, generate_fakes, ingest_patterns,
                     permutation_test, write_patterns)
from .errors import (ConfigError, DataError, GbsError, MatrixFormatError, MatrixValidationError,
                     NumericalValidityError, ParameterError, PatternFormatError,
                     UnsupportedOrderError)
from .inputs import (AmplitudeEnsemble, Family, InputModel, QuadratureVariances,
                     derive_photon_params, photon_params, sample_input_ensemble,
                     sigma_variances)
from .network import (TransmissionMatrix, apply_network, load_matrix, permute_outputs,
                      save_matrix)
from .observables import (BinningSpec, Estimate, GcpEstimate, bin_count, click_probabilities,
                          cumulants_low_order, gcp, intensity_correlation, marginal_moment,
                          permutation_count)
from .oracle import (OutputCovariance, exact_click_prob_single_mode, exact_gcp,
                     exact_identity_correlation, exact_pattern_probability, output_covariance)
from .simulate import Simulation
from .statistics import (BinnedCounts, ComparisonReport, FitGrid, FitResult, chi_square,
                         fit_decoherence, normalized_difference, z_statistic)

__all__ = [name for name in dir() if not name.startswith("_")]

"""Asymptotic normality and long-run covariance of pooled FCN outputs.

Submodules
----------
linproc   linear time-series processes (AR(1), MA(1), explicit coefficients)
fcn       fixed-parameter fully convolutional networks, GAP and weighted pooling
asymcov   closed-form long-run covariances for one-layer ReLU networks
lrcov     Bartlett kernel estimation of long-run covariances
mc        Monte Carlo checks of the Gaussian limit
train     numpy training of FCN classifiers with (penalized) weighted pooling
cli       command-line front end
"""
__version__ = "0.1.0"

from .exceptions import (DegenerateError, DivergenceError, DomainError, FormatError,  # noqa: F401
                         GapCltError, ResourceError, StructureError, TruncationWarning)
from .linproc import (InnovationSpec, LinearProcessSpec, autocov, make_ar1,  # noqa: F401
                      make_linear, make_ma1, simulate)
from .fcn import (BatchNorm, ConvLayer, FcnSkeleton, FcnSpec, Head, PoolingWeights,  # noqa: F401
                  forward, gap, he_init, receptive_field, residual_blocks, wgap,
                  window_apply)
from .asymcov import (corr_gap_onelayer, limit_constants, phi, relu_gauss_cov,  # noqa: F401
                      sigma_from_lag_series, sigma_gap_onelayer)
from .lrcov import KernelSpec, default_bandwidth, lr_cov_estimate  # noqa: F401
from .mc import ExperimentConfig, reorder_neurons, run_clt_experiment  # noqa: F401

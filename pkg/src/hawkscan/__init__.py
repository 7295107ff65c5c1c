"""hawkscan: streaming change-point detection for multivariate Hawkes processes.

Simulation by thinning, an exact recursive CUSUM detector with a
memory-truncated variant, score/GLR/Shewhart baselines, branching-EM
estimation, and a Monte Carlo ARL/EDD calibration harness.
"""

from .backend import backend_name
from .bench import (
    BenchResult,
    BenchSpec,
    DetectorSpec,
    RepRecord,
    arl_mc,
    calibrate_threshold,
    edd_mc,
)
from .cusum import (
    CusumConfig,
    CusumDetector,
    DetectionOutcome,
    cusum_run,
    cusum_truncated_run,
    llr_at,
    llr_step,
)
from .detectors import (
    WindowConfig,
    glr_run,
    glr_window,
    score_run,
    score_vector,
    shewhart_run,
)
from .estimation import (
    EmConfig,
    EmFit,
    em_fit,
    em_mle,
    fisher_info_mc,
    fit_joint,
    regularized_inverse,
)
from .experiments import EXPERIMENTS, d8_models, reproduce
from .io import parse_events, parse_model, write_events, write_model
from .models import (
    ChangeSpec,
    EventStream,
    HawkesModel,
    KernelSpec,
    compensator,
    conditional_intensity,
    kl_mean_field,
    log_likelihood,
    mean_field_intensity,
    spectral_radius,
    validate_model,
)
from .simulate import SimConfig, empirical_rate, rng_stream, simulate, simulate_with_change

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "backend_name",
    "KernelSpec",
    "HawkesModel",
    "EventStream",
    "ChangeSpec",
    "spectral_radius",
    "conditional_intensity",
    "compensator",
    "log_likelihood",
    "mean_field_intensity",
    "kl_mean_field",
    "validate_model",
    "SimConfig",
    "simulate",
    "simulate_with_change",
    "empirical_rate",
    "rng_stream",
    "CusumConfig",
    "CusumDetector",
    "DetectionOutcome",
    "cusum_run",
    "cusum_truncated_run",
    "llr_at",
    "llr_step",
    "WindowConfig",
    "score_vector",
    "score_run",
    "glr_window",
    "glr_run",
    "shewhart_run",
    "EmConfig",
    "EmFit",
    "em_fit",
    "em_mle",
    "fit_joint",
    "fisher_info_mc",
    "regularized_inverse",
    "DetectorSpec",
    "BenchSpec",
    "BenchResult",
    "RepRecord",
    "arl_mc",
    "edd_mc",
    "calibrate_threshold",
    "parse_events",
    "write_events",
    "parse_model",
    "write_model",
    "EXPERIMENTS",
    "d8_models",
    "reproduce",
]

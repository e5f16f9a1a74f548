"""Gyrocompassing toolkit: synthetic gyro data, diffusion denoising,
recurrent heading regression, and evaluation harnesses."""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    DatasetSplit,
    NoiseModel,
    SynthesisConfig,
    TimeSequence,
    add_sensor_noise,
    augment_by_heading_rotation,
    downsample,
    flatten,
    generate_clean_sequence,
    generate_synthetic_dataset,
    load_dataset,
    save_dataset,
    unflatten,
)
from .diffusion import (  # noqa: F401
    DenoiserNetwork,
    DiffusionTrainConfig,
    NoiseSchedule,
    build_schedule,
    denoise,
    embed_tstep,
    forward_noise,
    forward_noise_markov,
    predict_noise,
    svd_filter,
    svd_mse_loss,
    train_denoiser,
)
from .geo import (  # noqa: F401
    EARTH_RATE,
    WGS84,
    AngularRate,
    EarthModel,
    EulerAngles,
    GeoPosition,
    body_to_nav_matrix,
    classical_gyrocompass,
    earth_rate_in_body,
    ecef_to_nav_matrix,
    heading_from_rates,
    heading_from_rates_leveled,
    max_horizontal_signal,
    wrap_heading,
)
from .heading import (  # noqa: F401
    HeadingNetwork,
    HeadingPrediction,
    HeadingTrainConfig,
    crmse,
    lr_at_epoch,
    predict_heading,
    train_heading,
)
from .pipeline import (  # noqa: F401
    EvalReport,
    EvalRow,
    NormStats,
    PipelineConfig,
    denormalize,
    end_to_end_heading,
    normalize,
    run_method_comparison,
    run_normalization_ablation,
    run_tback_sweep,
)

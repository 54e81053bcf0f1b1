"""Flow-matching receiver for joint channel estimation and data detection.

The channel prior is a velocity field (an analytic Gaussian one or a trained
network), the data prior is the exact velocity of a finite constellation,
and a predictor-corrector sampler conditions both on the received grid.
"""

from .baselines import (LmmseContext, equalize_data, lmmse_equalize, lmmse_estimate, ls_estimate,
                        run_cfm_teq)
from .channel import (ChannelDataset, ChannelProfile, ChannelStats, default_profile, generate_channel,
                      make_dataset, oracle_covariance, read_dataset, sample_covariance, write_dataset)
from .errors import (ConfigurationError, CorruptFileError, HeaderMismatchError, MissingArtifactError,
                     NonPSDError, SamplerDivergedError, TrainingDivergedError)
from .harness import ExperimentConfig, MetricRecord, ThroughputParams, load_config, nmse, run_sweep, throughput
from .model import (Constellation, FrameConfig, PilotConfig, apply_channel_and_noise, build_constellation,
                    compose_transmit, generate_pilots, modulate_bits)
from .prior import (ConstellationPrior, GaussianPrior, TrainConfig, VelocityNet, constellation_posterior_mean,
                    load_weights, save_weights, train_velocity_net)
from .sampler import SamplerConfig, run_cfm_rx
from .schedule import OT, Schedule

__version__ = "0.1.0"

__all__ = [
    "ChannelDataset", "ChannelProfile", "ChannelStats", "ConfigurationError", "Constellation",
    "ConstellationPrior", "CorruptFileError", "ExperimentConfig", "FrameConfig", "GaussianPrior",
    "HeaderMismatchError", "LmmseContext", "MetricRecord", "MissingArtifactError", "NonPSDError", "OT",
    "PilotConfig", "SamplerConfig", "SamplerDivergedError", "Schedule", "ThroughputParams", "TrainConfig",
    "TrainingDivergedError", "VelocityNet", "apply_channel_and_noise", "build_constellation",
    "compose_transmit", "constellation_posterior_mean", "default_profile", "equalize_data",
    "generate_channel", "generate_pilots", "lmmse_equalize", "lmmse_estimate", "load_config",
    "load_weights", "ls_estimate", "make_dataset", "modulate_bits", "nmse", "oracle_covariance",
    "read_dataset", "run_cfm_rx", "run_cfm_teq", "run_sweep", "sample_covariance", "save_weights",
    "throughput", "train_velocity_net", "write_dataset",
]

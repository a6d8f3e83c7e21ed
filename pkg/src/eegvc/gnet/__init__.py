from .loss import composite_loss, freq_mse, time_mse
from .model import GNetArch, build_gnet, gnet_backward, gnet_forward, layer_params, param_count
from .train import GNetConfig, TrainingError, TrainingReport, generate, train

__all__ = [
    "GNetArch", "GNetConfig", "TrainingError", "TrainingReport", "build_gnet", "composite_loss",
    "freq_mse", "generate", "gnet_backward", "gnet_forward", "layer_params", "param_count",
    "time_mse", "train",
]

"""mixcast: patched MLP-mixer forecasting models with gated attention,
online reconciliation heads, masked pretraining, and a compute profiler."""

from ._fast import HAVE_COMPILED
from .autodiff import Parameter, Tensor, backward, no_grad
from .config import ModelConfig, RunConfig, TrainPlan, VariantSpec, parse_variant
from .model import ForecastModel, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "HAVE_COMPILED",
    "Parameter",
    "Tensor",
    "backward",
    "no_grad",
    "ModelConfig",
    "RunConfig",
    "TrainPlan",
    "VariantSpec",
    "parse_variant",
    "ForecastModel",
    "load_checkpoint",
    "save_checkpoint",
    "__version__",
]

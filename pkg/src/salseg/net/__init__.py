from .loss import LossTerms, cross_entropy_loss, loss_terms, total_loss
from .model import (
    ForwardOutputs, LayerSpec, Variant, VariantConfig, default_backbone, default_branch,
    downsample_labels, forward, init_params, make_config, param_shapes,
)
from .ops import BACKEND, ShapeError
from .train import (
    GradCheckResult, TrainingError, backward, gradcheck, loss_and_grads, numerical_grads, train,
)

"""1-bit two-layer network training with a full-precision twin.

Subpackages: binq (bit-level quantization), net (forward passes), train
(twin GD loop and diagnostics), kernel (empirical tangent kernel), data
(targets and datasets), theory (bound calculators), cli (experiment harness).
"""

from __future__ import annotations

__version__ = "0.1.0"

from .binq import BinaryVector, QuantScale, QuantizedVector, binary_dot, dequantize_dot, quant_error_vector, quantize
from .data import Dataset, DatasetMeta, TargetFunction, eval_target, gamma_fn, generate_dataset, lambert_w, load_dataset, persist_dataset, split, target_function
from .kernel import GramMatrix, KernelReport, gram_drift, gram_flipped, gram_matrix, min_max_eigenvalues, pattern_flip_counts
from .net import ActivationPattern, NetworkState, activation_pattern, batch_forward, forward_1bit, forward_fp, forward_ste, init_network
from .theory import HyperparamRecommendation, TheoryParams, bound_D, predicted_loss_curve, recommend_hyperparams, scaling_law_prediction
from .train import Diagnostics, Hyperparams, TrainTrajectory, flip_partition_from_patterns, fp_gradient, loss, loss_decomposition, ste_gradient, train_twin, weight_drift

__all__ = [
    "__version__",
    "BinaryVector", "QuantScale", "QuantizedVector", "quantize", "binary_dot",
    "dequantize_dot", "quant_error_vector",
    "NetworkState", "ActivationPattern", "init_network", "forward_1bit",
    "forward_fp", "forward_ste", "batch_forward", "activation_pattern",
    "Hyperparams", "Diagnostics", "TrainTrajectory", "loss", "ste_gradient",
    "fp_gradient", "train_twin", "loss_decomposition", "weight_drift",
    "flip_partition_from_patterns",
    "GramMatrix", "KernelReport", "gram_matrix", "gram_flipped",
    "min_max_eigenvalues", "gram_drift", "pattern_flip_counts",
    "Dataset", "DatasetMeta", "TargetFunction", "target_function",
    "eval_target", "lambert_w", "gamma_fn", "generate_dataset", "split",
    "persist_dataset", "load_dataset",
    "TheoryParams", "HyperparamRecommendation", "bound_D",
    "predicted_loss_curve", "recommend_hyperparams", "scaling_law_prediction",
]

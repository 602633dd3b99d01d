"""Parameter-efficient fine-tuning harness: low-rank adapters on frozen q/v projections."""

from .config import (
    REFERENCE_ADAPTER_CONFIG,
    REFERENCE_SHAPE,
    AdapterConfig,
    AdapterConfigError,
    ModelShape,
    QuantizationSpec,
    count_trainable_params,
)
from .lora import (
    AdapterTargetError,
    CheckpointMismatchError,
    LowRankAdapter,
    adapter_parameters,
    adapter_state_dict,
    attach_adapters,
    base_weight_digest,
    merge_adapters,
    trainable_param_count,
    verify_attachment,
)
from .tiny_model import CharTokenizer, TinyCodeLM
from .training import TrainHyperparams, TrainingError, TrainRunLog, load_checkpoint_model, merge_or_load, train

__all__ = [
    "AdapterConfig",
    "AdapterConfigError",
    "AdapterTargetError",
    "CharTokenizer",
    "CheckpointMismatchError",
    "LowRankAdapter",
    "ModelShape",
    "QuantizationSpec",
    "REFERENCE_ADAPTER_CONFIG",
    "REFERENCE_SHAPE",
    "TinyCodeLM",
    "TrainHyperparams",
    "TrainRunLog",
    "TrainingError",
    "adapter_parameters",
    "adapter_state_dict",
    "attach_adapters",
    "base_weight_digest",
    "count_trainable_params",
    "load_checkpoint_model",
    "merge_adapters",
    "merge_or_load",
    "train",
    "trainable_param_count",
    "verify_attachment",
]

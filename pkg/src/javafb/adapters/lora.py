"""Low-rank adapter attachment: W becomes W + (scale/rank) * B @ A.

B starts at zero, so an adapted model is functionally identical to its base
until training moves the adapter weights. Base parameters are flagged
non-trainable at attach time and digested so freezes can be verified.
"""

from __future__ import annotations

import hashlib

import torch
import torch.nn as nn

from .config import TARGET_ATTR_NAMES, AdapterConfig, ModelShape, count_trainable_params


class AdapterTargetError(ValueError):
    pass


class CheckpointMismatchError(ValueError):
    pass


class LowRankAdapter(nn.Module):
    """Wraps a frozen linear projection with a trainable rank-r update."""

    def __init__(self, base: nn.Linear, rank: int, scaling_factor: float, dropout: float):
        super().__init__()
        self.base = base
        self.rank = rank
        self.scale = scaling_factor / rank
        self.lora_a = nn.Parameter(torch.empty(rank, base.in_features))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))
        nn.init.kaiming_uniform_(self.lora_a, a=5**0.5)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        update = self.dropout(x) @ self.lora_a.T @ self.lora_b.T
        return self.base(x) + self.scale * update

    def delta_weight(self) -> torch.Tensor:
        return self.scale * (self.lora_b @ self.lora_a)


def _iter_layers(model: nn.Module):
    layers = getattr(model, "layers", None)
    if layers is None:
        raise AdapterTargetError("model exposes no .layers sequence")
    return enumerate(layers)


def attach_adapters(model: nn.Module, config: AdapterConfig) -> nn.Module:
    """Wrap every targeted projection in-place and freeze the base weights."""
    for name, param in model.named_parameters():
        param.requires_grad_(False)
    for i, layer in _iter_layers(model):
        for target in sorted(config.target_projections):
            attr = TARGET_ATTR_NAMES[target]
            proj = getattr(layer, attr, None)
            if proj is None:
                raise AdapterTargetError(f"layer {i} has no {attr} projection")
            if isinstance(proj, LowRankAdapter):
                raise AdapterTargetError(f"layer {i} {attr} already adapted")
            setattr(layer, attr, LowRankAdapter(proj, config.rank, config.scaling_factor, config.dropout))
    return model


def adapter_parameters(model: nn.Module) -> list[nn.Parameter]:
    return [p for name, p in model.named_parameters() if "lora_" in name]


def adapter_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    return {name: tensor for name, tensor in model.state_dict().items() if "lora_" in name}


def trainable_param_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def base_weight_digest(model: nn.Module) -> str:
    """Content hash over every non-adapter tensor, stable under adapter training."""
    digest = hashlib.sha256()
    state = model.state_dict()
    for name in sorted(state):
        if "lora_" in name:
            continue
        digest.update(name.encode("utf-8"))
        digest.update(state[name].detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def adapter_weight_digests(model: nn.Module) -> dict[str, str]:
    return {
        name: hashlib.sha256(tensor.detach().cpu().contiguous().numpy().tobytes()).hexdigest()
        for name, tensor in adapter_state_dict(model).items()
    }


def model_shape_of(model: nn.Module) -> ModelShape:
    if hasattr(model, "shape"):
        return model.shape()
    layers = list(getattr(model, "layers"))
    hidden = layers[0].q_proj.in_features if not isinstance(layers[0].q_proj, LowRankAdapter) else layers[0].q_proj.base.in_features
    return ModelShape(
        num_layers=len(layers),
        hidden_dim=hidden,
        total_base_params=sum(p.numel() for p in model.parameters()),
        context_length=getattr(model, "context_length", 1),
    )


def verify_attachment(model: nn.Module, config: AdapterConfig) -> int:
    """Check the live trainable count against the closed-form accounting."""
    shape = model_shape_of(model)
    expected = count_trainable_params(
        ModelShape(
            num_layers=shape.num_layers,
            hidden_dim=shape.hidden_dim,
            total_base_params=shape.total_base_params,
            context_length=shape.context_length,
        ),
        config,
    )
    actual = trainable_param_count(model)
    if actual != expected:
        raise AdapterTargetError(f"trainable parameter mismatch: counted {actual}, closed form {expected}")
    return actual


def merge_adapters(model: nn.Module) -> nn.Module:
    """Fold every adapter update into its base weight and drop the wrappers."""
    for _, layer in _iter_layers(model):
        for attr in TARGET_ATTR_NAMES.values():
            proj = getattr(layer, attr, None)
            if isinstance(proj, LowRankAdapter):
                with torch.no_grad():
                    proj.base.weight += proj.delta_weight()
                setattr(layer, attr, proj.base)
    return model

"""Adapter-only training loop with freeze verification and checkpointing.

Only the low-rank adapter weights ever receive gradients; the base weights
are digested before and after so a silent unfreeze is impossible to miss.
Epochs, batch size, and learning rate are module defaults chosen for the
desk-scale model, not reproduction targets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F

from .config import AdapterConfig, load_adapter_manifest, save_adapter_manifest
from .lora import (
    CheckpointMismatchError,
    adapter_parameters,
    adapter_state_dict,
    attach_adapters,
    base_weight_digest,
    model_shape_of,
    verify_attachment,
)
from .tiny_model import PAD, CharTokenizer, TinyCodeLM

ADAPTER_WEIGHTS_FILE = "adapter_weights.pt"
MANIFEST_FILE = "adapter_manifest.json"
RUN_LOG_FILE = "train_run_log.json"
TOKENIZER_FILE = "tokenizer.json"


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainHyperparams:
    epochs: int = 8
    batch_size: int = 10
    learning_rate: float = 0.05
    seed: int = 0
    max_steps: int | None = None
    mask_prompt: bool = True
    cosine_decay: bool = True

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "max_steps": self.max_steps,
            "mask_prompt": self.mask_prompt,
            "cosine_decay": self.cosine_decay,
        }


@dataclass
class TrainRunLog:
    run_id: str
    fold_index: int
    loss_trace: list[tuple[int, float]] = field(default_factory=list)
    adapter_checkpoint: str = ""
    frozen_base_digest_pre: str = ""
    frozen_base_digest_post: str = ""

    @property
    def base_frozen(self) -> bool:
        return self.frozen_base_digest_pre == self.frozen_base_digest_post

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "fold_index": self.fold_index,
            "loss_trace": self.loss_trace,
            "adapter_checkpoint": self.adapter_checkpoint,
            "frozen_base_digest_pre": self.frozen_base_digest_pre,
            "frozen_base_digest_post": self.frozen_base_digest_post,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def _encode_batch(
    records, tokenizer: CharTokenizer, context_length: int, mask_prompt: bool
) -> list[tuple[torch.Tensor, torch.Tensor]]:
    """Encode prompt+response; targets outside the response are PAD-masked."""
    out = []
    for record in records:
        prompt_ids = tokenizer.encode(record.prompt + "\n", add_bos=True)
        response_ids = tokenizer.encode(record.response, add_eos=True)
        ids = (prompt_ids + response_ids)[:context_length]
        seq = torch.tensor(ids, dtype=torch.long)
        targets = seq.clone()
        if mask_prompt:
            targets[: min(len(prompt_ids), len(ids))] = PAD
        out.append((seq, targets))
    return out


def _pad_stack(pairs: list[tuple[torch.Tensor, torch.Tensor]]) -> tuple[torch.Tensor, torch.Tensor]:
    width = max(len(seq) for seq, _ in pairs)
    ids = torch.full((len(pairs), width), PAD, dtype=torch.long)
    targets = torch.full((len(pairs), width), PAD, dtype=torch.long)
    for i, (seq, tgt) in enumerate(pairs):
        ids[i, : len(seq)] = seq
        targets[i, : len(tgt)] = tgt
    return ids, targets


def _step_loss(model, ids: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    logits = model(ids[:, :-1])
    expected = targets[:, 1:]
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), expected.reshape(-1), ignore_index=PAD)


def train(
    model,
    tokenizer: CharTokenizer,
    records,
    hyperparams: TrainHyperparams,
    checkpoint_dir: str | Path,
    run_id: str = "run",
    fold_index: int = 0,
    config: AdapterConfig | None = None,
) -> TrainRunLog:
    """Train the attached adapters on instruct records; base stays frozen.

    The model must already carry adapters (attach_adapters). The loss trace is
    recorded every step; a non-finite loss aborts with the trace in the error.
    """
    records = list(records)
    if not records:
        raise TrainingError("training set is empty")
    params = adapter_parameters(model)
    if not params:
        raise TrainingError("model has no adapter parameters; call attach_adapters first")

    torch.manual_seed(hyperparams.seed)
    digest_pre = base_weight_digest(model)
    sequences = _encode_batch(records, tokenizer, model.context_length, hyperparams.mask_prompt)
    optimizer = torch.optim.AdamW(params, lr=hyperparams.learning_rate)
    steps_per_epoch = math.ceil(len(sequences) / hyperparams.batch_size)
    total_steps = hyperparams.epochs * steps_per_epoch
    if hyperparams.max_steps is not None:
        total_steps = min(total_steps, hyperparams.max_steps)
    scheduler = None
    if hyperparams.cosine_decay and total_steps > 1:
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
            optimizer, T_max=total_steps, eta_min=hyperparams.learning_rate / 20
        )

    run_log = TrainRunLog(run_id=run_id, fold_index=fold_index, frozen_base_digest_pre=digest_pre)
    model.train()
    step = 0
    done = False
    for _ in range(hyperparams.epochs):
        for start in range(0, len(sequences), hyperparams.batch_size):
            ids, targets = _pad_stack(sequences[start : start + hyperparams.batch_size])
            loss = _step_loss(model, ids, targets)
            if not math.isfinite(loss.item()):
                raise TrainingError(f"non-finite loss at step {step}; trace so far: {run_log.loss_trace}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            if scheduler is not None:
                scheduler.step()
            run_log.loss_trace.append((step, float(loss.item())))
            step += 1
            if hyperparams.max_steps is not None and step >= hyperparams.max_steps:
                done = True
                break
        if done:
            break
    model.eval()

    run_log.frozen_base_digest_post = base_weight_digest(model)
    if not run_log.base_frozen:
        raise TrainingError("base weights changed during adapter training")

    checkpoint_dir = Path(checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    torch.save(adapter_state_dict(model), checkpoint_dir / ADAPTER_WEIGHTS_FILE)
    if config is not None:
        save_adapter_manifest(
            checkpoint_dir / MANIFEST_FILE,
            config,
            model_shape_of(model),
            hyperparams.seed,
            extra={"model": model.config_dict() if hasattr(model, "config_dict") else {}, "run_id": run_id},
        )
    if hasattr(tokenizer, "save"):
        tokenizer.save(checkpoint_dir / TOKENIZER_FILE)
    run_log.adapter_checkpoint = str(checkpoint_dir / ADAPTER_WEIGHTS_FILE)
    run_log.save(checkpoint_dir / RUN_LOG_FILE)
    return run_log


def merge_or_load(checkpoint_dir: str | Path, base_model, merge: bool = False):
    """Attach the checkpointed adapters to a base model and load their weights.

    The checkpoint manifest must agree with the base model's shape; a mismatch
    is refused with both shapes in the message. With merge=True the update is
    folded into the base weights and the wrappers removed.
    """
    checkpoint_dir = Path(checkpoint_dir)
    manifest = load_adapter_manifest(checkpoint_dir / MANIFEST_FILE)
    config = AdapterConfig.from_dict(manifest["adapter"])
    saved_shape = manifest["model_shape"]
    live_shape = model_shape_of(base_model).to_dict()
    for key in ("num_layers", "hidden_dim"):
        if saved_shape[key] != live_shape[key]:
            raise CheckpointMismatchError(
                f"checkpoint shape {saved_shape} does not match model shape {live_shape}"
            )
    attach_adapters(base_model, config)
    state = torch.load(checkpoint_dir / ADAPTER_WEIGHTS_FILE, weights_only=True)
    expected_keys = set(adapter_state_dict(base_model))
    if set(state) != expected_keys:
        raise CheckpointMismatchError(
            f"adapter weights do not fit model: checkpoint keys {sorted(set(state) - expected_keys)} "
            f"unexpected, {sorted(expected_keys - set(state))} missing"
        )
    base_model.load_state_dict(state, strict=False)
    verify_attachment(base_model, config)
    base_model.eval()
    if merge:
        from .lora import merge_adapters

        return merge_adapters(base_model)
    return base_model


def load_checkpoint_model(checkpoint_dir: str | Path):
    """Rebuild the desk-scale model plus tokenizer from a checkpoint directory."""
    checkpoint_dir = Path(checkpoint_dir)
    manifest = load_adapter_manifest(checkpoint_dir / MANIFEST_FILE)
    model_cfg = manifest.get("model") or {}
    if not model_cfg:
        raise CheckpointMismatchError("checkpoint manifest lacks a model config")
    base = TinyCodeLM.from_config_dict(model_cfg)
    tokenizer = CharTokenizer.load(checkpoint_dir / TOKENIZER_FILE)
    model = merge_or_load(checkpoint_dir, base)
    return model, tokenizer

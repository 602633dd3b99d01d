import os
import time

import numpy as np
import pytest
import torch
import torch.nn as nn

from javafb.adapters import (
    REFERENCE_ADAPTER_CONFIG,
    REFERENCE_SHAPE,
    AdapterConfig,
    AdapterConfigError,
    AdapterTargetError,
    CharTokenizer,
    CheckpointMismatchError,
    LowRankAdapter,
    ModelShape,
    QuantizationSpec,
    TinyCodeLM,
    TrainHyperparams,
    TrainingError,
    adapter_parameters,
    adapter_state_dict,
    attach_adapters,
    base_weight_digest,
    count_trainable_params,
    merge_adapters,
    merge_or_load,
    train,
    trainable_param_count,
    verify_attachment,
)
from javafb.adapters.lora import adapter_weight_digests
from javafb.corpus import to_training_record
from javafb.smoke import smoke_triplets

OVERFIT_CONFIG = AdapterConfig(rank=16, scaling_factor=64, dropout=0.0)
OVERFIT_HP = TrainHyperparams(epochs=50, batch_size=10, learning_rate=0.05, seed=0, max_steps=50)


def _smoke_records():
    return [to_training_record(t) for t in smoke_triplets()]


def _tokenizer(records):
    return CharTokenizer.from_texts(r.prompt + "\n" + r.response for r in records)


def _tiny_model(tokenizer, seed=0, hidden_dim=8, num_layers=2):
    torch.manual_seed(seed)
    return TinyCodeLM(vocab_size=tokenizer.vocab_size, hidden_dim=hidden_dim, num_layers=num_layers, context_length=512)


class TestCountTrainableParams:
    def test_reference_figures(self):
        count = count_trainable_params(REFERENCE_SHAPE, REFERENCE_ADAPTER_CONFIG)
        assert count == 5_242_880
        assert REFERENCE_SHAPE.total_base_params == 6_743_789_568

    def test_runtime_under_a_millisecond(self):
        start = time.perf_counter()
        for _ in range(1000):
            count_trainable_params(REFERENCE_SHAPE, REFERENCE_ADAPTER_CONFIG)
        per_call = (time.perf_counter() - start) / 1000
        assert per_call < 1e-3

    def test_single_target_halves(self):
        config = AdapterConfig(rank=10, target_projections=frozenset({"query"}))
        assert count_trainable_params(REFERENCE_SHAPE, config) == 2_621_440

    def test_rank_zero_rejected(self):
        with pytest.raises(AdapterConfigError):
            AdapterConfig(rank=0)

    def test_small_shape_against_enumerated_tensors(self):
        # Oracle: enumerate the tensors a real 2-layer width-8 attach creates.
        records = _smoke_records()
        tok = _tokenizer(records)
        model = _tiny_model(tok)
        config = AdapterConfig(rank=2, scaling_factor=16, dropout=0.0)
        attach_adapters(model, config)
        enumerated = sum(t.numel() for t in adapter_state_dict(model).values())
        assert enumerated == 128
        assert count_trainable_params(ModelShape(2, 8, 1, 1), config) == 128

    def test_linearity_properties(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            layers = int(rng.integers(1, 12))
            dim = int(rng.integers(1, 64))
            rank = int(rng.integers(1, 16))
            shape = ModelShape(layers, dim, 1, 1)
            both = AdapterConfig(rank=rank)
            one = AdapterConfig(rank=rank, target_projections=frozenset({"value"}))
            assert count_trainable_params(shape, both) == 2 * count_trainable_params(shape, one)
            doubled_rank = AdapterConfig(rank=2 * rank)
            assert count_trainable_params(shape, doubled_rank) == 2 * count_trainable_params(shape, both)
            doubled_layers = ModelShape(2 * layers, dim, 1, 1)
            assert count_trainable_params(doubled_layers, both) == 2 * count_trainable_params(shape, both)

    def test_config_validation(self):
        with pytest.raises(AdapterConfigError):
            AdapterConfig(scaling_factor=0)
        with pytest.raises(AdapterConfigError):
            AdapterConfig(dropout=1.0)
        with pytest.raises(AdapterConfigError):
            AdapterConfig(target_projections=frozenset())
        with pytest.raises(AdapterConfigError):
            AdapterConfig(target_projections=frozenset({"key"}))


class TestAttachAdapters:
    def test_identity_at_step_zero_on_100_random_inputs(self):
        records = _smoke_records()
        tok = _tokenizer(records)
        model = _tiny_model(tok)
        model.eval()
        rng = torch.Generator().manual_seed(123)
        inputs = [torch.randint(0, tok.vocab_size, (1, 24), generator=rng) for _ in range(100)]
        with torch.no_grad():
            before = [model(x).clone() for x in inputs]
        attach_adapters(model, AdapterConfig(rank=10, scaling_factor=16, dropout=0.08))
        model.eval()
        with torch.no_grad():
            after = [model(x) for x in inputs]
        worst = max((a - b).abs().max().item() for a, b in zip(before, after))
        assert worst < 1e-6

    def test_eight_adapter_tensors_created(self):
        records = _smoke_records()
        tok = _tokenizer(records)
        model = _tiny_model(tok)
        attach_adapters(model, AdapterConfig(rank=2))
        assert len(adapter_state_dict(model)) == 8  # 2 layers x {q,v} x {A,B}

    def test_trainable_count_matches_closed_form(self):
        records = _smoke_records()
        tok = _tokenizer(records)
        model = _tiny_model(tok)
        config = AdapterConfig(rank=4, dropout=0.0)
        attach_adapters(model, config)
        assert verify_attachment(model, config) == trainable_param_count(model)
        assert trainable_param_count(model) == count_trainable_params(ModelShape(2, 8, 1, 1), config)

    def test_reference_ratio(self):
        trainable = count_trainable_params(REFERENCE_SHAPE, REFERENCE_ADAPTER_CONFIG)
        ratio_pct = 100.0 * trainable / REFERENCE_SHAPE.total_base_params
        assert ratio_pct == pytest.approx(0.078, abs=0.001)

    def test_missing_projection_rejected_naming_layer(self):
        class Headless(nn.Module):
            def __init__(self):
                super().__init__()
                block = nn.Module()
                block.q_proj = nn.Linear(8, 8)
                self.layers = nn.ModuleList([block])

        with pytest.raises(AdapterTargetError, match="layer 0 has no v_proj"):
            attach_adapters(Headless(), AdapterConfig(rank=2))

    def test_double_attach_rejected(self):
        records = _smoke_records()
        tok = _tokenizer(records)
        model = _tiny_model(tok)
        attach_adapters(model, AdapterConfig(rank=2))
        with pytest.raises(AdapterTargetError, match="already adapted"):
            attach_adapters(model, AdapterConfig(rank=2))


class TestTrain:
    def test_overfit_run_halves_loss_with_frozen_base(self, tmp_path):
        records = _smoke_records()
        assert len(records) == 10
        tok = _tokenizer(records)
        model = _tiny_model(tok, seed=0)
        attach_adapters(model, OVERFIT_CONFIG)
        before_adapters = adapter_weight_digests(model)
        started = time.monotonic()
        log = train(model, tok, records, OVERFIT_HP, tmp_path / "ckpt", config=OVERFIT_CONFIG)
        elapsed = time.monotonic() - started
        assert elapsed < 120
        assert len(log.loss_trace) == 50
        initial = log.loss_trace[0][1]
        final = log.loss_trace[-1][1]
        assert final < 0.5 * initial
        assert log.frozen_base_digest_pre == log.frozen_base_digest_post
        after_adapters = adapter_weight_digests(model)
        assert any(before_adapters[k] != after_adapters[k] for k in before_adapters)

    def test_same_seed_identical_traces(self, tmp_path):
        records = _smoke_records()
        tok = _tokenizer(records)
        traces = []
        for run in range(2):
            model = _tiny_model(tok, seed=7)
            attach_adapters(model, OVERFIT_CONFIG)
            hp = TrainHyperparams(epochs=3, batch_size=5, learning_rate=0.05, seed=11)
            log = train(model, tok, records, hp, tmp_path / f"run{run}")
            traces.append(log.loss_trace)
        assert traces[0] == traces[1]

    def test_empty_training_set_rejected(self, tmp_path):
        records = _smoke_records()
        tok = _tokenizer(records)
        model = _tiny_model(tok)
        attach_adapters(model, OVERFIT_CONFIG)
        with pytest.raises(TrainingError, match="empty"):
            train(model, tok, [], OVERFIT_HP, tmp_path / "ckpt")

    def test_unattached_model_rejected(self, tmp_path):
        records = _smoke_records()
        tok = _tokenizer(records)
        model = _tiny_model(tok)
        with pytest.raises(TrainingError, match="attach_adapters"):
            train(model, tok, records, OVERFIT_HP, tmp_path / "ckpt")

    def test_non_finite_loss_aborts(self, tmp_path):
        records = _smoke_records()
        tok = _tokenizer(records)
        model = _tiny_model(tok)
        attach_adapters(model, AdapterConfig(rank=2, dropout=0.0))
        with torch.no_grad():
            adapter_parameters(model)[0].fill_(float("inf"))
            for layer in model.layers:
                layer.q_proj.lora_b.fill_(1.0)
        with pytest.raises(TrainingError, match="non-finite"):
            train(model, tok, records, OVERFIT_HP, tmp_path / "ckpt")

    def test_effective_update_rank_bounded(self, tmp_path):
        records = _smoke_records()
        tok = _tokenizer(records)
        model = _tiny_model(tok)
        config = AdapterConfig(rank=2, scaling_factor=16, dropout=0.0)
        attach_adapters(model, config)
        hp = TrainHyperparams(epochs=10, batch_size=10, learning_rate=0.05, seed=0)
        train(model, tok, records, hp, tmp_path / "ckpt", config=config)
        for layer in model.layers:
            for attr in ("q_proj", "v_proj"):
                delta = getattr(layer, attr).delta_weight().detach().numpy()
                singular_values = np.linalg.svd(delta, compute_uv=False)
                assert np.sum(singular_values > 1e-6) <= config.rank


class TestMergeOrLoad:
    def _train_checkpoint(self, tmp_path, seed=0):
        records = _smoke_records()
        tok = _tokenizer(records)
        model = _tiny_model(tok, seed=seed)
        attach_adapters(model, OVERFIT_CONFIG)
        hp = TrainHyperparams(epochs=5, batch_size=10, learning_rate=0.05, seed=seed)
        train(model, tok, records, hp, tmp_path / "ckpt", config=OVERFIT_CONFIG)
        return records, tok, model

    def test_loaded_outputs_match_trained_bitwise(self, tmp_path):
        records, tok, trained = self._train_checkpoint(tmp_path, seed=0)
        fresh = _tiny_model(tok, seed=0)
        loaded = merge_or_load(tmp_path / "ckpt", fresh)
        x = torch.randint(0, tok.vocab_size, (2, 32), generator=torch.Generator().manual_seed(5))
        trained.eval()
        with torch.no_grad():
            assert torch.equal(trained(x), loaded(x))

    def test_merge_folds_update_into_base(self, tmp_path):
        records, tok, trained = self._train_checkpoint(tmp_path, seed=1)
        fresh = _tiny_model(tok, seed=1)
        merged = merge_or_load(tmp_path / "ckpt", fresh, merge=True)
        assert not adapter_state_dict(merged)
        x = torch.randint(0, tok.vocab_size, (2, 32), generator=torch.Generator().manual_seed(6))
        trained.eval()
        with torch.no_grad():
            assert torch.allclose(trained(x), merged(x), atol=1e-4)

    def test_untrained_checkpoint_equals_base(self, tmp_path):
        records = _smoke_records()
        tok = _tokenizer(records)
        model = _tiny_model(tok, seed=3)
        attach_adapters(model, OVERFIT_CONFIG)
        hp = TrainHyperparams(epochs=0, batch_size=10, learning_rate=0.05, seed=3)
        train(model, tok, records, hp, tmp_path / "ckpt", config=OVERFIT_CONFIG)
        base = _tiny_model(tok, seed=3)
        x = torch.randint(0, tok.vocab_size, (1, 20), generator=torch.Generator().manual_seed(8))
        base.eval()
        with torch.no_grad():
            base_out = base(x).clone()
            loaded = merge_or_load(tmp_path / "ckpt", base)
            assert torch.equal(loaded(x), base_out)

    def test_shape_mismatch_reports_both_shapes(self, tmp_path):
        records, tok, _ = self._train_checkpoint(tmp_path, seed=0)
        torch.manual_seed(0)
        wider = TinyCodeLM(vocab_size=tok.vocab_size, hidden_dim=16, num_layers=2, context_length=512)
        with pytest.raises(CheckpointMismatchError) as err:
            merge_or_load(tmp_path / "ckpt", wider)
        assert "8" in str(err.value) and "16" in str(err.value)

    def test_missing_projection_model_rejected(self, tmp_path):
        records, tok, _ = self._train_checkpoint(tmp_path, seed=0)

        class NoValue(nn.Module):
            def __init__(self):
                super().__init__()
                block = nn.Module()
                block.q_proj = nn.Linear(8, 8)
                self.layers = nn.ModuleList([block, block])
                self.context_length = 512

            def shape(self):
                return ModelShape(2, 8, 1, 512)

        with pytest.raises(AdapterTargetError, match="v_proj"):
            merge_or_load(tmp_path / "ckpt", NoValue())


class TestQuantizationSpec:
    def test_reference_loader_kwargs(self):
        spec = QuantizationSpec()
        assert spec.loader_kwargs() == {
            "load_in_4bit": True,
            "bnb_4bit_quant_type": "nf4",
            "bnb_4bit_use_double_quant": True,
        }

    @pytest.mark.skipif(
        not os.environ.get("JAVAFB_QUANTIZED_IT"),
        reason="opt-in integration test; set JAVAFB_QUANTIZED_IT=1 with bitsandbytes installed",
    )
    def test_quantized_base_loading(self):
        bitsandbytes = pytest.importorskip("bitsandbytes")  # noqa: F841
        from transformers import AutoModelForCausalLM, BitsAndBytesConfig

        spec = QuantizationSpec()
        kwargs = spec.loader_kwargs()
        quant_config = BitsAndBytesConfig(**kwargs)
        model = AutoModelForCausalLM.from_pretrained(
            os.environ.get("JAVAFB_BASE_MODEL", "codellama/CodeLlama-7b-Instruct-hf"),
            quantization_config=quant_config,
        )
        assert model is not None

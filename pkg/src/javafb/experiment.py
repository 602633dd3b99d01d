"""End-to-end experiment orchestration: split, train, generate, evaluate, summarize.

A run lives in one directory tree keyed by run id. Every stage records its
status and artifacts in the run manifest before the next stage starts, so a
killed run resumes from the first incomplete stage, and a failed stage leaves
everything downstream marked skipped rather than half-done.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import torch

from . import corpus as corpus_mod
from . import generation as gen_mod
from .adapters import AdapterConfig, CharTokenizer, TinyCodeLM, TrainHyperparams, attach_adapters, merge_or_load, train
from .backends import StubBackend, TinyModelBackend
from .datagen import FeedbackTriplet, read_triplets
from .embeddings import make_embedder
from .metrics import MetricReport, evaluate_run
from .reporting import render_metric_table
from .smoke import smoke_triplets
from .taxonomy import category_of, load_reference_taxonomy, load_taxonomy

log = logging.getLogger(__name__)

STAGE_PLAN = "plan"
STAGE_SUMMARIZE = "summarize"


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    run_id: str = "run"
    runs_dir: str = "runs"
    corpus_path: str | None = None  # None -> built-in smoke corpus
    taxonomy_path: str | None = None  # None -> shipped reference taxonomy
    seed: int = 42
    folds: int = 2
    strategies: list[str] = field(default_factory=lambda: ["baseline", "fine_tuned"])
    stratify_by_category: bool = False
    model: dict = field(
        default_factory=lambda: {
            "kind": "tiny",
            "hidden_dim": 8,
            "num_layers": 2,
            "context_length": 1024,
            "head_scale": 8.0,
        }
    )
    adapter: dict = field(default_factory=lambda: {"rank": 16, "scaling_factor": 64, "dropout": 0.0})
    training: dict = field(default_factory=lambda: {"epochs": 50, "batch_size": 10, "learning_rate": 0.05})
    generation: dict = field(default_factory=lambda: {"temperature": 0.7, "top_p": 0.7, "max_tokens": 64})
    embedder: str = "hash"
    few_shot_seed_offset: int = 1000

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "runs_dir": self.runs_dir,
            "corpus_path": self.corpus_path,
            "taxonomy_path": self.taxonomy_path,
            "seed": self.seed,
            "folds": self.folds,
            "strategies": self.strategies,
            "stratify_by_category": self.stratify_by_category,
            "model": self.model,
            "adapter": self.adapter,
            "training": self.training,
            "generation": self.generation,
            "embedder": self.embedder,
            "few_shot_seed_offset": self.few_shot_seed_offset,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        base = cls()
        kwargs = {}
        for key in base.to_dict():
            if key in d:
                kwargs[key] = d[key]
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path, env: dict | None = None) -> "ExperimentConfig":
        import os

        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        config = cls.from_dict(doc)
        env = env if env is not None else dict(os.environ)
        if env.get("JAVAFB_TAXONOMY"):
            config.taxonomy_path = env["JAVAFB_TAXONOMY"]
        if env.get("JAVAFB_RUNS_DIR"):
            config.runs_dir = env["JAVAFB_RUNS_DIR"]
        return config

    @property
    def run_dir(self) -> Path:
        return Path(self.runs_dir) / self.run_id


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


class RunManifest:
    """Stage ledger for one run; persisted after every state change."""

    def __init__(self, path: Path, run_id: str, config: dict, seed: int):
        self.path = path
        self.run_id = run_id
        self.config = config
        self.seed = seed
        self.stages: dict[str, dict] = {}

    def to_dict(self) -> dict:
        return {"run_id": self.run_id, "seed": self.seed, "config": self.config, "stages": self.stages}

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        manifest = cls(Path(path), doc["run_id"], doc.get("config", {}), doc.get("seed", 0))
        manifest.stages = doc.get("stages", {})
        return manifest

    def mark(self, stage: str, status: str, artifacts: list[str] | None = None, error: str | None = None) -> None:
        entry = self.stages.setdefault(stage, {"status": "pending", "artifacts": []})
        entry["status"] = status
        if status == "running":
            entry["started_at"] = _now()
        if status in ("completed", "failed"):
            entry["finished_at"] = _now()
        if artifacts is not None:
            entry["artifacts"] = [str(a) for a in artifacts]
        if error is not None:
            entry["error"] = error
        self.save()

    def is_completed(self, stage: str) -> bool:
        entry = self.stages.get(stage)
        if not entry or entry.get("status") != "completed":
            return False
        return all(Path(a).exists() for a in entry.get("artifacts", []))

    def artifacts(self, stage: str) -> list[str]:
        return self.stages.get(stage, {}).get("artifacts", [])

    def artifact_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for name, entry in self.stages.items():
            kind = name.split(":")[-1]
            counts[kind] = counts.get(kind, 0) + len(entry.get("artifacts", []))
        return counts


def _load_corpus(config: ExperimentConfig) -> list[FeedbackTriplet]:
    if config.corpus_path is None:
        return smoke_triplets()
    return read_triplets(config.corpus_path)


def _load_taxonomy(config: ExperimentConfig):
    if config.taxonomy_path is None:
        return load_reference_taxonomy()
    return load_taxonomy(config.taxonomy_path)


class _TinyModelFactory:
    """Builds the desk-scale base model with a corpus-wide tokenizer.

    The tokenizer covers every training record and every evaluation prompt so
    encoding is total; the base init is pinned to the run seed so baseline and
    fine-tuned share one base.
    """

    def __init__(self, config: ExperimentConfig, triplets: list[FeedbackTriplet]):
        self.config = config
        texts = []
        for triplet in triplets:
            record = corpus_mod.to_training_record(triplet)
            texts.append(record.prompt + "\n" + record.response)
            texts.append(gen_mod.build_eval_prompt(triplet.code, gen_mod.Strategy.BASELINE))
        self.tokenizer = CharTokenizer.from_texts(texts)

    def base_model(self) -> TinyCodeLM:
        spec = self.config.model
        torch.manual_seed(self.config.seed)
        return TinyCodeLM(
            vocab_size=self.tokenizer.vocab_size,
            hidden_dim=spec.get("hidden_dim", 8),
            num_layers=spec.get("num_layers", 2),
            context_length=spec.get("context_length", 1024),
            head_scale=spec.get("head_scale", 8.0),
        )

    def backend_for(self, strategy: gen_mod.Strategy, checkpoint_dir: Path | None):
        if strategy is gen_mod.Strategy.FINE_TUNED:
            if checkpoint_dir is None:
                raise ExperimentError("fine_tuned strategy needs a checkpoint")
            model = merge_or_load(checkpoint_dir, self.base_model())
        else:
            model = self.base_model()
            model.eval()
        return TinyModelBackend(model, self.tokenizer)


class _StubModelFactory:
    def __init__(self, config: ExperimentConfig, triplets: list[FeedbackTriplet]):
        self.config = config

    def backend_for(self, strategy: gen_mod.Strategy, checkpoint_dir: Path | None):
        def reply(prompt: str, params: gen_mod.GenerationParams) -> str:
            digest = gen_mod.prompt_digest(prompt)[:8]
            return f"KM: stub mistake for {digest}. KH: stub hint for {digest}."

        return StubBackend(reply=reply)


def _model_factory(config: ExperimentConfig, triplets: list[FeedbackTriplet]):
    kind = config.model.get("kind", "tiny")
    if kind == "tiny":
        return _TinyModelFactory(config, triplets)
    if kind == "stub":
        return _StubModelFactory(config, triplets)
    raise ExperimentError(f"unknown model kind {kind!r}")


def run_experiment(config: ExperimentConfig, dry_run: bool = False, resume: bool = True) -> RunManifest:
    """Execute (or plan, or resume) the full pipeline for every fold and strategy.

    Re-running with the same run id is idempotent: completed stages (whose
    artifacts still exist) are not re-executed unless resume is disabled.
    """
    run_dir = config.run_dir
    manifest_path = run_dir / "manifest.json"
    if resume and manifest_path.exists():
        manifest = RunManifest.load(manifest_path)
    else:
        manifest = RunManifest(manifest_path, config.run_id, config.to_dict(), config.seed)

    triplets = _load_corpus(config)
    taxonomy = _load_taxonomy(config)
    strategies = [gen_mod.Strategy(s) for s in config.strategies]
    train_fine_tuned = gen_mod.Strategy.FINE_TUNED in strategies

    bug_ids = sorted({t.bug_id for t in triplets}, key=lambda b: (len(b), b))
    unknown = [b for b in bug_ids if b not in taxonomy]
    if unknown:
        raise ExperimentError(f"corpus bugs missing from taxonomy: {unknown}")

    stages: list[tuple[str, Callable[[], list[Path]]]] = []

    categories = category_of(taxonomy, bug_ids) if config.stratify_by_category else None
    plans = corpus_mod.make_folds(bug_ids, k=config.folds, seed=config.seed, categories=categories)

    def do_plan() -> list[Path]:
        path = run_dir / "fold_plans.json"
        corpus_mod.write_fold_plans(path, plans, k=config.folds)
        return [path]

    stages.append((STAGE_PLAN, do_plan))

    factory = _model_factory(config, triplets)

    def make_split_stage(fold_index: int):
        def do_split() -> list[Path]:
            fold_dir = run_dir / f"fold{fold_index}"
            train_records, test_triplets = corpus_mod.materialize_split(plans[fold_index], triplets)
            train_path = fold_dir / "train_records.jsonl"
            test_path = fold_dir / "test_triplets.jsonl"
            corpus_mod.write_training_records(train_path, train_records)
            from .datagen import write_triplets

            write_triplets(test_path, test_triplets)
            return [train_path, test_path]

        return do_split

    def make_train_stage(fold_index: int):
        def do_train() -> list[Path]:
            fold_dir = run_dir / f"fold{fold_index}"
            records = corpus_mod.read_training_records(fold_dir / "train_records.jsonl")
            adapter = AdapterConfig(
                rank=config.adapter.get("rank", 16),
                scaling_factor=config.adapter.get("scaling_factor", 64),
                dropout=config.adapter.get("dropout", 0.0),
            )
            hyper = TrainHyperparams(seed=config.seed, **config.training)
            model = factory.base_model()
            attach_adapters(model, adapter)
            checkpoint = fold_dir / "checkpoint"
            train(
                model,
                factory.tokenizer,
                records,
                hyper,
                checkpoint,
                run_id=config.run_id,
                fold_index=fold_index,
                config=adapter,
            )
            return [checkpoint / "adapter_weights.pt", checkpoint / "adapter_manifest.json"]

        return do_train

    def make_generate_stage(fold_index: int, strategy: gen_mod.Strategy):
        def do_generate() -> list[Path]:
            fold_dir = run_dir / f"fold{fold_index}"
            test_triplets = read_triplets(fold_dir / "test_triplets.jsonl")
            checkpoint = fold_dir / "checkpoint" if train_fine_tuned else None
            backend = factory.backend_for(strategy, checkpoint)
            params = gen_mod.GenerationParams(seed=config.seed, **config.generation)
            example_bank = None
            if strategy is gen_mod.Strategy.FEW_SHOT:
                train_side = [t for t in triplets if t.bug_id in plans[fold_index].train_bug_ids]
                example_bank = gen_mod.select_few_shot_examples(
                    train_side, seed=config.seed + config.few_shot_seed_offset + fold_index
                )
            out_path = fold_dir / f"{strategy.value}_responses.jsonl"
            run_log = gen_mod.RunLog(fold_dir / f"{strategy.value}_run_log.jsonl")
            out_path.parent.mkdir(parents=True, exist_ok=True)
            with open(out_path, "w", encoding="utf-8") as fh:
                for triplet in test_triplets:
                    prompt = gen_mod.build_eval_prompt(triplet.code, strategy, example_bank)
                    raw = gen_mod.generate_feedback(
                        backend,
                        prompt,
                        params,
                        run_log=run_log,
                        context={
                            "fold": fold_index,
                            "strategy": strategy.value,
                            "bug_id": triplet.bug_id,
                            "triplet_id": triplet.triplet_id,
                        },
                    )
                    response = gen_mod.parse_feedback(raw, strategy=strategy, triplet_id=triplet.triplet_id)
                    fh.write(json.dumps(response.to_dict()) + "\n")
            return [out_path, run_log.path]

        return do_generate

    def make_evaluate_stage(fold_index: int, strategy: gen_mod.Strategy):
        def do_evaluate() -> list[Path]:
            fold_dir = run_dir / f"fold{fold_index}"
            test_triplets = read_triplets(fold_dir / "test_triplets.jsonl")
            responses = []
            with open(fold_dir / f"{strategy.value}_responses.jsonl", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        responses.append(gen_mod.FeedbackResponse.from_dict(json.loads(line)))
            provider = make_embedder(config.embedder)
            report = evaluate_run(responses, test_triplets, provider)
            report_path = fold_dir / f"{strategy.value}_metric_report.json"
            report.save(report_path)
            return [report_path]

        return do_evaluate

    for fold_index in range(config.folds):
        stages.append((f"fold{fold_index}:split", make_split_stage(fold_index)))
        if train_fine_tuned:
            stages.append((f"fold{fold_index}:train", make_train_stage(fold_index)))
        for strategy in strategies:
            stages.append((f"fold{fold_index}:{strategy.value}:generate", make_generate_stage(fold_index, strategy)))
            stages.append((f"fold{fold_index}:{strategy.value}:evaluate", make_evaluate_stage(fold_index, strategy)))

    def do_summarize() -> list[Path]:
        merged: dict[str, MetricReport] = {}
        for strategy in strategies:
            combined = MetricReport(strategy=strategy.value)
            for fold_index in range(config.folds):
                report = MetricReport.load(run_dir / f"fold{fold_index}" / f"{strategy.value}_metric_report.json")
                combined.samples.extend(report.samples)
            merged[strategy.value] = combined
        table = render_metric_table(merged.values())
        written = table.save(run_dir / "metric_table")
        summary_path = run_dir / "summary.json"
        summary = {
            "run_id": config.run_id,
            "folds": config.folds,
            "strategies": [s.value for s in strategies],
            "samples_per_strategy": {name: len(report.samples) for name, report in merged.items()},
            "aggregates": {name: report.aggregates for name, report in merged.items()},
        }
        summary_path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        return [*written, summary_path]

    stages.append((STAGE_SUMMARIZE, do_summarize))

    if dry_run:
        for name, _ in stages:
            if not manifest.is_completed(name):
                manifest.mark(name, "planned")
        manifest.save()
        return manifest

    failed = False
    for name, runner in stages:
        if failed:
            manifest.mark(name, "skipped")
            continue
        if resume and manifest.is_completed(name):
            log.info("stage %s already completed; skipping", name)
            continue
        manifest.mark(name, "running")
        try:
            artifacts = runner()
        except Exception as exc:  # noqa: BLE001 - recorded, downstream skipped
            log.exception("stage %s failed", name)
            manifest.mark(name, "failed", error=f"{type(exc).__name__}: {exc}")
            failed = True
            continue
        manifest.mark(name, "completed", artifacts=[str(a) for a in artifacts])
    return manifest

import json

import pytest

from javafb.experiment import ExperimentConfig, RunManifest, run_experiment
from javafb.metrics import MetricReport


def smoke_config(tmp_path, run_id="smoke", **overrides) -> ExperimentConfig:
    config = ExperimentConfig(run_id=run_id, runs_dir=str(tmp_path / "runs"))
    for key, value in overrides.items():
        setattr(config, key, value)
    return config


class TestDryRun:
    def test_plans_stages_without_artifacts(self, tmp_path):
        config = smoke_config(tmp_path)
        manifest = run_experiment(config, dry_run=True)
        assert all(entry["status"] == "planned" for entry in manifest.stages.values())
        run_dir = config.run_dir
        assert (run_dir / "manifest.json").exists()
        assert not (run_dir / "fold0").exists()

    def test_expected_stage_names(self, tmp_path):
        config = smoke_config(tmp_path)
        manifest = run_experiment(config, dry_run=True)
        names = list(manifest.stages)
        assert names[0] == "plan"
        assert names[-1] == "summarize"
        assert "fold0:split" in names
        assert "fold0:train" in names
        assert "fold1:fine_tuned:generate" in names
        assert "fold1:baseline:evaluate" in names


@pytest.fixture(scope="module")
def completed(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("exp")
    config = smoke_config(tmp_path)
    manifest = run_experiment(config)
    return config, manifest


class TestSmokeRun:
    def test_all_stages_complete(self, completed):
        _, manifest = completed
        statuses = {name: entry["status"] for name, entry in manifest.stages.items()}
        assert set(statuses.values()) == {"completed"}, statuses

    def test_artifact_counts_hand_countable(self, completed):
        config, manifest = completed
        run_dir = config.run_dir
        # 2 folds x (train_records + test_triplets)
        assert len(list(run_dir.glob("fold*/train_records.jsonl"))) == 2
        assert len(list(run_dir.glob("fold*/test_triplets.jsonl"))) == 2
        # 1 checkpoint per fold (fine_tuned in strategies)
        assert len(list(run_dir.glob("fold*/checkpoint/adapter_weights.pt"))) == 2
        # 2 folds x 2 strategies responses + run logs + reports
        assert len(list(run_dir.glob("fold*/*_responses.jsonl"))) == 4
        assert len(list(run_dir.glob("fold*/*_run_log.jsonl"))) == 4
        assert len(list(run_dir.glob("fold*/*_metric_report.json"))) == 4
        assert (run_dir / "fold_plans.json").exists()
        assert (run_dir / "summary.json").exists()
        assert (run_dir / "metric_table.json").exists()

    def test_split_counts_match_smoke_corpus(self, completed):
        config, _ = completed
        fold0 = config.run_dir / "fold0"
        train_lines = [l for l in (fold0 / "train_records.jsonl").read_text().splitlines() if l]
        test_lines = [l for l in (fold0 / "test_triplets.jsonl").read_text().splitlines() if l]
        # 2 bugs split 1/1 across k=2 folds, 5 triplets each
        assert len(train_lines) == 5
        assert len(test_lines) == 5

    def test_responses_align_with_test_triplets(self, completed):
        config, _ = completed
        fold0 = config.run_dir / "fold0"
        responses = [json.loads(l) for l in (fold0 / "baseline_responses.jsonl").read_text().splitlines() if l]
        tests = [json.loads(l) for l in (fold0 / "test_triplets.jsonl").read_text().splitlines() if l]
        assert {r["triplet_id"] for r in responses} == {t["triplet_id"] for t in tests}

    def test_summary_sample_counts(self, completed):
        config, _ = completed
        summary = json.loads((config.run_dir / "summary.json").read_text())
        assert summary["samples_per_strategy"] == {"baseline": 10, "fine_tuned": 10}

    def test_run_log_echoes_params(self, completed):
        config, _ = completed
        fold0 = config.run_dir / "fold0"
        records = [json.loads(l) for l in (fold0 / "baseline_run_log.jsonl").read_text().splitlines() if l]
        assert all(r["params"]["temperature"] == 0.7 for r in records)
        assert all(r["params"]["max_tokens"] == 64 for r in records)

    def test_resume_skips_completed_stages(self, completed):
        config, first = completed
        before = json.loads((config.run_dir / "manifest.json").read_text())
        again = run_experiment(config, resume=True)
        after = json.loads((config.run_dir / "manifest.json").read_text())
        for name in before["stages"]:
            assert before["stages"][name].get("finished_at") == after["stages"][name].get("finished_at")

    def test_fold_plans_deterministic_for_same_seed(self, completed, tmp_path):
        config, _ = completed
        other = smoke_config(tmp_path, run_id="smoke2")
        run_experiment(other, dry_run=False)
        plans_a = json.loads((config.run_dir / "fold_plans.json").read_text())
        plans_b = json.loads((other.run_dir / "fold_plans.json").read_text())
        assert plans_a["folds"] == plans_b["folds"]


class TestStubModel:
    def test_stub_backend_round_trips_parseable_feedback(self, tmp_path):
        config = smoke_config(tmp_path, run_id="stub-run", model={"kind": "stub"}, strategies=["baseline"])
        manifest = run_experiment(config)
        assert all(e["status"] == "completed" for e in manifest.stages.values())
        report = MetricReport.load(config.run_dir / "fold0" / "baseline_metric_report.json")
        assert all(s.km.bertscore_f1 > 0 for s in report.samples)


class TestFailureHandling:
    def test_failed_stage_recorded_downstream_skipped(self, tmp_path):
        config = smoke_config(tmp_path, run_id="bad", embedder="no-such-embedder")
        manifest = run_experiment(config)
        statuses = {name: entry["status"] for name, entry in manifest.stages.items()}
        failed = [n for n, s in statuses.items() if s == "failed"]
        assert failed == ["fold0:baseline:evaluate"]
        assert statuses["summarize"] == "skipped"
        assert "no-such-embedder" in manifest.stages[failed[0]]["error"]

    def test_resume_after_failure_retries_failed_stage(self, tmp_path):
        config = smoke_config(tmp_path, run_id="recover", embedder="no-such-embedder")
        run_experiment(config)
        config.embedder = "hash"
        manifest = run_experiment(config, resume=True)
        assert all(e["status"] == "completed" for e in manifest.stages.values())


class TestConfigFile:
    def test_from_file_with_env_overrides(self, tmp_path, taxonomy_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"run_id": "cfg", "folds": 2, "strategies": ["baseline"]}))
        config = ExperimentConfig.from_file(path, env={"JAVAFB_RUNS_DIR": str(tmp_path / "rr")})
        assert config.run_id == "cfg"
        assert config.runs_dir == str(tmp_path / "rr")
        assert config.strategies == ["baseline"]

    def test_manifest_round_trip(self, tmp_path):
        manifest = RunManifest(tmp_path / "m.json", "rid", {"a": 1}, seed=3)
        manifest.mark("plan", "completed", artifacts=[])
        loaded = RunManifest.load(tmp_path / "m.json")
        assert loaded.run_id == "rid"
        assert loaded.is_completed("plan")

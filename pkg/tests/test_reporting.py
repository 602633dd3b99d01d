import json
import random
from pathlib import Path

import pytest

from javafb.metrics import MetricReport, SampleScore, SegmentScore
from javafb.reporting import (
    BoxStats,
    FeedbackCondition,
    LikertRecord,
    RatingFactor,
    RenderError,
    boxstats_document,
    five_number_summary,
    likert_boxstats,
    load_likert_fixture,
    load_metric_fixture,
    load_rubric_fixture,
    render_metric_table,
    render_rubric_chart,
)
from javafb.rubric import RubricSummary
from oracles import median_oracle


class TestRenderRubricChart:
    def test_paper_rows_reproduced(self):
        doc = render_rubric_chart(load_rubric_fixture())
        by_label = {entry["label"]: entry["values"] for entry in doc.data["series"]}
        assert by_label["Baseline"] == [20.0, 26.0, 83.0, 54.0]
        assert by_label["PE-FewShot"] == [54.0, 46.0, 60.0, 86.0]
        assert by_label["PEFT"] == [61.0, 60.0, 47.0, 95.0]
        assert doc.data["lower_is_better"] == ["Misleading Suggestions"]
        assert "Misleading Suggestions (lower is better)" in doc.table

    def test_single_summary_is_one_group(self):
        summary = RubricSummary(strategy="baseline", n=4, pct_kma=25.0, pct_khh=50.0, pct_ms=75.0, pct_pa=100.0)
        doc = render_rubric_chart([summary])
        assert len(doc.data["series"]) == 1

    def test_order_canonicalized(self):
        rows = load_rubric_fixture()
        shuffled = [rows[2], rows[0], rows[1]]
        assert render_rubric_chart(shuffled).table == render_rubric_chart(rows).table

    def test_byte_deterministic(self):
        rows = load_rubric_fixture()
        assert render_rubric_chart(rows).table == render_rubric_chart(rows).table
        assert render_rubric_chart(rows).data == render_rubric_chart(rows).data

    def test_empty_rejected(self):
        with pytest.raises(RenderError):
            render_rubric_chart([])

    def test_save_writes_data_and_table(self, tmp_path):
        doc = render_rubric_chart(load_rubric_fixture())
        written = doc.save(tmp_path / "rubric", image=True)
        assert (tmp_path / "rubric.json").exists()
        assert (tmp_path / "rubric.txt").exists()
        assert (tmp_path / "rubric.png").exists()
        assert len(written) == 3
        reread = json.loads((tmp_path / "rubric.json").read_text())
        assert reread == doc.data


class TestRenderMetricTable:
    def test_paper_fixture_rows(self):
        reports, notes = load_metric_fixture()
        doc = render_metric_table(reports)
        rows = {entry["label"]: [round(v, 5) for v in entry["values"]] for entry in doc.data["series"]}
        assert rows["Baseline"] == [0.023, 0.22, 0.87, 0.03, 0.19, 0.86]
        assert rows["PE-FewShot"] == [0.02, 0.22, 0.87, 0.03, 0.23, 0.87]
        assert rows["PEFT"] == [0.04716, 0.2924, 0.89192, 0.05632, 0.30934, 0.8893]
        assert notes and notes[0]["narrative_value"] == 0.84
        assert notes[0]["status"] == "unresolved"

    def test_one_strategy_one_row(self):
        reports, _ = load_metric_fixture()
        doc = render_metric_table(reports[:1])
        assert len(doc.data["series"]) == 1

    def test_out_of_range_refused(self):
        sample = SampleScore(
            triplet_id="x",
            km=SegmentScore(bleu=1.2, rouge_l_precision=0.5, rouge_l_recall=0.5, rouge_l_f=0.5, bertscore_f1=0.5),
            kh=SegmentScore(bleu=0.2, rouge_l_precision=0.5, rouge_l_recall=0.5, rouge_l_f=0.5, bertscore_f1=0.5),
        )
        report = MetricReport(strategy="baseline", samples=[sample])
        with pytest.raises(RenderError, match="outside"):
            render_metric_table([report])


class TestFiveNumberSummary:
    def test_single_value(self):
        stats = five_number_summary([4])
        assert stats == BoxStats(4.0, 4.0, 4.0, 4.0, 4.0, 1)

    def test_constant_cell(self):
        stats = five_number_summary([5, 5, 5, 5])
        assert (stats.minimum, stats.q1, stats.median, stats.q3, stats.maximum) == (5, 5.0, 5.0, 5.0, 5)

    def test_ordering_invariant_and_monotone(self):
        rng = random.Random(17)
        for _ in range(200):
            values = [rng.randint(1, 5) for _ in range(rng.randint(1, 40))]
            shuffled = values[:]
            rng.shuffle(shuffled)
            stats = five_number_summary(values)
            assert stats == five_number_summary(shuffled)
            assert stats.minimum <= stats.q1 <= stats.median <= stats.q3 <= stats.maximum
            assert stats.median == median_oracle(values)

    def test_median_exclusive_quartiles(self):
        # odd n: overall median (5th value) joins neither half
        stats = five_number_summary([1, 2, 3, 4, 5, 6, 7, 8, 9])
        assert stats.median == 5
        assert stats.q1 == 2.5
        assert stats.q3 == 7.5


class TestLikertBoxstats:
    def test_fixture_medians_match_sort_oracle(self):
        records = load_likert_fixture()
        stats = likert_boxstats(records)
        fixture_path = Path(__file__).parent.parent / "src" / "javafb" / "data" / "fixtures" / "figure_likert_scores.json"
        fixture = json.loads(fixture_path.read_text(encoding="utf-8"))
        for (ftype, factor), box in stats.items():
            raw = fixture[factor][ftype]
            assert box.median == median_oracle(raw)
            assert box.n == len(raw)

    def test_compiler_error_usefulness_median_one(self):
        stats = likert_boxstats(load_likert_fixture())
        cell = stats[("E", "usefulness")]
        assert cell.n == 27
        assert cell.median == 1.0

    def test_model_conditions_rated_four_plus(self):
        stats = likert_boxstats(load_likert_fixture())
        for ftype in ("C", "F"):
            for factor in ("usefulness", "clarity", "structure"):
                assert stats[(ftype, factor)].median >= 4.0

    def test_empty_rejected(self):
        with pytest.raises(RenderError):
            likert_boxstats([])

    def test_score_validation(self):
        with pytest.raises(ValueError):
            LikertRecord("p1", FeedbackCondition.COMPILER_ERROR, RatingFactor.CLARITY, 6)

    def test_absent_cells_not_reported(self):
        records = [LikertRecord("p1", FeedbackCondition.FINE_TUNED, RatingFactor.CLARITY, 4)]
        stats = likert_boxstats(records)
        assert list(stats) == [("F", "clarity")]

    def test_document_rendering(self):
        doc = boxstats_document(likert_boxstats(load_likert_fixture()))
        assert "median" in doc.table
        assert len(doc.data["cells"]) == 9

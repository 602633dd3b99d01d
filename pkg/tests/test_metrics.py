import random

import pytest

from javafb.embeddings import FixedEmbedder, HashEmbedder, OrthogonalEmbedder
from javafb.generation import FeedbackResponse, ParseStatus, Strategy
from javafb.metrics import (
    MetricsError,
    bertscore_f1,
    bleu,
    evaluate_run,
    rouge_l,
    score_segment,
    tokenize,
)
from oracles import bertscore_oracle, bleu_oracle, rouge_l_oracle

VOCAB = ["the", "cat", "sat", "on", "mat", "a", "dog", "ran", "fast", "slow", "tree", "under"]


class TestTokenize:
    def test_lowercases_and_splits_on_punctuation(self):
        assert tokenize("Uses = not ==. Fix it!") == ["uses", "not", "fix", "it"]

    def test_backtick_spans_survive_whole(self):
        assert tokenize("Cast `v` to `Car` now") == ["cast", "v", "to", "car", "now"]
        assert tokenize("call `startEngine()` here") == ["call", "startengine()", "here"]

    def test_empty(self):
        assert tokenize("") == []


class TestBleu:
    def test_identity_scores_one(self):
        text = "the cat sat on the mat"
        assert bleu(text, text) == pytest.approx(1.0, abs=1e-12)

    def test_empty_candidate_scores_zero(self):
        assert bleu("", "the cat") == 0.0

    def test_frozen_oracle_value(self):
        # bleu_oracle("the cat sat on mat", "the cat sat on the mat") computed once and frozen
        assert bleu("the cat sat on mat", "the cat sat on the mat") == pytest.approx(
            0.6511126026643229, abs=1e-9
        )

    def test_matches_oracle_on_200_random_pairs(self):
        rng = random.Random(4217)
        for _ in range(200):
            cand = [rng.choice(VOCAB) for _ in range(rng.randint(1, 12))]
            ref = [rng.choice(VOCAB) for _ in range(rng.randint(1, 12))]
            expected = bleu_oracle(cand, ref)
            got = bleu(" ".join(cand), " ".join(ref))
            assert got == pytest.approx(expected, abs=1e-9)
            assert 0.0 <= got <= 1.0


class TestRougeL:
    def test_identity(self):
        score = rouge_l("a b c d", "a b c d")
        assert (score.precision, score.recall, score.f) == (1.0, 1.0, 1.0)

    def test_spec_example(self):
        score = rouge_l("the sat", "the cat sat")
        assert score.precision == pytest.approx(1.0)
        assert score.recall == pytest.approx(2 / 3)
        assert score.f == pytest.approx(0.8)

    def test_disjoint_vocabularies(self):
        score = rouge_l("dog ran", "cat sat")
        assert (score.precision, score.recall, score.f) == (0.0, 0.0, 0.0)

    def test_empty_either_side(self):
        assert rouge_l("", "abc").f == 0.0
        assert rouge_l("abc", "").f == 0.0

    def test_matches_oracle_on_200_random_pairs(self):
        rng = random.Random(90210)
        for _ in range(200):
            cand = [rng.choice(VOCAB) for _ in range(rng.randint(1, 15))]
            ref = [rng.choice(VOCAB) for _ in range(rng.randint(1, 15))]
            expected = rouge_l_oracle(cand, ref)
            got = rouge_l(" ".join(cand), " ".join(ref))
            assert got.precision == pytest.approx(expected[0], abs=1e-9)
            assert got.recall == pytest.approx(expected[1], abs=1e-9)
            assert got.f == pytest.approx(expected[2], abs=1e-9)

    def test_precision_recall_swap_on_argument_swap(self):
        rng = random.Random(7)
        for _ in range(50):
            a = " ".join(rng.choice(VOCAB) for _ in range(rng.randint(1, 10)))
            b = " ".join(rng.choice(VOCAB) for _ in range(rng.randint(1, 10)))
            fwd = rouge_l(a, b)
            rev = rouge_l(b, a)
            assert fwd.precision == pytest.approx(rev.recall)
            assert fwd.recall == pytest.approx(rev.precision)

    def test_f_is_harmonic_mean_of_own_p_and_r(self):
        rng = random.Random(13)
        for _ in range(100):
            a = " ".join(rng.choice(VOCAB) for _ in range(rng.randint(1, 10)))
            b = " ".join(rng.choice(VOCAB) for _ in range(rng.randint(1, 10)))
            s = rouge_l(a, b)
            expected = 0.0 if s.precision + s.recall == 0 else 2 * s.precision * s.recall / (s.precision + s.recall)
            assert s.f == pytest.approx(expected, abs=1e-12)


class TestBertScore:
    def test_identity_is_one_under_stub(self):
        text = "cast the value to the right type"
        assert bertscore_f1(text, text, HashEmbedder()) == pytest.approx(1.0, abs=1e-6)
        assert bertscore_f1(text, text, OrthogonalEmbedder()) == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_stub_scores_unrelated_texts_zero(self):
        assert bertscore_f1("dog ran fast", "cat sat slow", OrthogonalEmbedder()) == 0.0

    def test_three_token_fixed_vectors_match_exhaustive_oracle(self):
        table = {
            "aa": [1.0, 0.0, 0.2],
            "bb": [0.3, 0.9, 0.0],
            "cc": [0.0, 0.4, 1.0],
            "dd": [0.7, 0.7, 0.1],
            "ee": [0.1, 0.2, 0.9],
            "ff": [0.9, 0.1, 0.3],
        }
        provider = FixedEmbedder(table)
        cand, ref = "aa bb cc", "dd ee ff"
        expected = bertscore_oracle(
            [table[t] for t in cand.split()], [table[t] for t in ref.split()]
        )
        assert bertscore_f1(cand, ref, provider) == pytest.approx(expected, abs=1e-9)

    def test_empty_side_scores_zero(self):
        provider = HashEmbedder()
        assert bertscore_f1("", "abc", provider) == 0.0
        assert bertscore_f1("abc", "", provider) == 0.0


def _response(triplet_id, km, kh, strategy=Strategy.FINE_TUNED):
    status = ParseStatus.FULL if km and kh else (
        ParseStatus.PARTIAL_KM_ONLY if km else (ParseStatus.PARTIAL_KH_ONLY if kh else ParseStatus.UNPARSED)
    )
    return FeedbackResponse(raw=f"KM: {km} KH: {kh}", km_text=km, kh_text=kh, parse_status=status,
                            strategy=strategy, triplet_id=triplet_id)


class _Truth:
    def __init__(self, triplet_id, km, kh):
        self.triplet_id = triplet_id
        self.km = km
        self.kh = kh


class TestEvaluateRun:
    def test_identity_corpus_scores_one(self):
        provider = HashEmbedder()
        truths = [
            _Truth("t1", "the loop drops the final element entirely", "walk the indexes by hand once more"),
            _Truth("t2", "the comparison uses assignment instead of equality", "swap in the equality operator and retest"),
        ]
        responses = [_response(t.triplet_id, t.km, t.kh) for t in truths]
        report = evaluate_run(responses, truths, provider)
        for segment in ("km", "kh"):
            agg = report.aggregates[segment]
            assert agg["bleu"] == pytest.approx(1.0, abs=1e-9)
            assert agg["rouge_l_f"] == pytest.approx(1.0, abs=1e-9)
            assert agg["bertscore_f1"] == pytest.approx(1.0, abs=1e-6)

    def test_unparsed_segments_score_zero(self):
        provider = HashEmbedder()
        truths = [_Truth("t1", "mistake text", "hint text")]
        responses = [_response("t1", "", "")]
        report = evaluate_run(responses, truths, provider)
        assert report.samples[0].km == report.samples[0].kh
        assert report.samples[0].km.bleu == 0.0
        assert report.samples[0].km.bertscore_f1 == 0.0

    def test_single_sample_aggregates_equal_sample(self):
        provider = HashEmbedder()
        truths = [_Truth("t1", "off by one in the loop bound", "check the boundary condition")]
        responses = [_response("t1", "loop bound looks off by one", "verify the boundary")]
        report = evaluate_run(responses, truths, provider)
        sample = report.samples[0]
        assert report.aggregates["km"]["bleu"] == pytest.approx(sample.km.bleu)
        assert report.aggregates["kh"]["rouge_l_f"] == pytest.approx(sample.kh.rouge_l_f)

    def test_misaligned_ids_rejected(self):
        provider = HashEmbedder()
        truths = [_Truth("t1", "a", "b"), _Truth("t2", "c", "d")]
        responses = [_response("t1", "a", "b"), _response("t3", "c", "d")]
        with pytest.raises(MetricsError) as err:
            evaluate_run(responses, truths, provider)
        assert "t3" in str(err.value) and "t2" in str(err.value)

    def test_aggregates_invariant_under_permutation(self):
        provider = HashEmbedder()
        truths = [_Truth(f"t{i}", f"mistake number {i} in the code", f"hint number {i} for the fix") for i in range(6)]
        responses = [_response(t.triplet_id, "some mistake text here", "some hint text here") for t in truths]
        fwd = evaluate_run(responses, truths, provider).aggregates
        rev = evaluate_run(list(reversed(responses)), truths, provider).aggregates
        assert fwd == rev


class TestScoreSegment:
    def test_blank_candidate_is_zero(self):
        assert score_segment("   ", "reference", HashEmbedder()).bleu == 0.0

from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ragweld.errors import EmptyGolds
from ragweld.evaluation import (
    evaluate_run,
    exact_match,
    normalize_answer,
    rouge_l,
    token_f1,
)
from ragweld.pipelines import Question


class TestNormalize:
    def test_lowercase_punctuation_articles_whitespace(self):
        assert normalize_answer("The  Eiffel Tower!") == "eiffel tower"
        assert normalize_answer("An apple a day.") == "apple day"
        assert normalize_answer("THE THEATER") == "theater"

    def test_articles_only_removed_as_whole_words(self):
        # "a" inside "metal" must survive; standalone "a" must not
        assert normalize_answer("a metal plate") == "metal plate"

    def test_punctuation_becomes_nothing_not_space(self):
        assert normalize_answer("it's") == "its"

    def test_empty(self):
        assert normalize_answer("") == ""
        assert normalize_answer("the a an") == ""


# The ten hand-scored cases. Every value was computed on paper from the
# definitions before any of this code existed; do not regenerate them.
SHEET = [
    ("paris france", ["paris"], 0, Fraction(2, 3), Fraction(2, 3)),
    ("The Eiffel Tower!", ["eiffel tower"], 1, Fraction(1), Fraction(1)),
    ("blue whale", ["the blue whale"], 1, Fraction(1), Fraction(1)),
    ("red", ["blue"], 0, Fraction(0), Fraction(0)),
    ("", ["anything"], 0, Fraction(0), Fraction(0)),
    ("w x y z", ["w y z"], 0, Fraction(6, 7), Fraction(6, 7)),
    ("z y w", ["w y z"], 0, Fraction(1), Fraction(1, 3)),
    ("george washington", ["abraham lincoln", "washington"], 0, Fraction(2, 3), Fraction(2, 3)),
    ("The answer is 42.", ["42"], 0, Fraction(1, 2), Fraction(1, 2)),
    (
        "cats chase mice at night",
        ["cats chase small mice during night"],
        0,
        Fraction(8, 11),
        Fraction(8, 11),
    ),
]


class TestSheet:
    @pytest.mark.parametrize("pred,golds,em,f1,rl", SHEET)
    def test_hand_scored_cases(self, pred, golds, em, f1, rl):
        assert exact_match(pred, golds) == em
        assert token_f1(pred, golds) == pytest.approx(float(f1), abs=1e-9)
        best_rl = max(rouge_l(pred, g) for g in golds)
        assert best_rl == pytest.approx(float(rl), abs=1e-9)

    def test_sheet_means(self):
        questions = [
            Question(q_id=f"q{i:02d}", text=f"question {i}", gold_answers=tuple(golds))
            for i, (_, golds, _, _, _) in enumerate(SHEET, start=1)
        ]
        outputs = {f"q{i:02d}": pred for i, (pred, _, _, _, _) in enumerate(SHEET, start=1)}
        report = evaluate_run(outputs, questions, "sheet")
        assert report.n == 10
        assert report.em == pytest.approx(0.2, abs=1e-9)
        assert report.f1 == pytest.approx(float(Fraction(593, 924)), abs=1e-9)
        assert report.rouge_l == pytest.approx(float(Fraction(2657, 4620)), abs=1e-9)


class TestEdgeCases:
    def test_empty_golds_rejected(self):
        with pytest.raises(EmptyGolds):
            exact_match("x", [])
        with pytest.raises(EmptyGolds):
            token_f1("x", [])

    def test_f1_both_sides_empty_is_one(self):
        assert token_f1("the a", ["an the"]) == 1.0

    def test_f1_one_side_empty_is_zero(self):
        assert token_f1("the", ["word"]) == 0.0
        assert token_f1("word", ["the"]) == 0.0

    def test_rouge_empty_either_side_is_zero(self):
        assert rouge_l("", "word") == 0.0
        assert rouge_l("word", "") == 0.0
        assert rouge_l("", "") == 0.0

    def test_rouge_subsequence_not_substring(self):
        # non-contiguous common subsequence: "q c e" inside "q b c d e"
        assert rouge_l("q c e", "q b c d e") == pytest.approx(0.75)

    def test_em_uses_normalization(self):
        assert exact_match("The    Answer", ["answer"]) == 1

    def test_multiple_golds_take_best(self):
        golds = ["completely different", "exact words here"]
        assert token_f1("exact words here", golds) == 1.0
        assert exact_match("exact words here", golds) == 1


class TestEvaluateRun:
    def make_questions(self):
        return [
            Question(q_id="q1", text="one", gold_answers=("alpha",)),
            Question(q_id="q2", text="two", gold_answers=("bravo",)),
        ]

    def test_missing_predictions_score_zero_and_flagged(self):
        report = evaluate_run({"q1": "alpha"}, self.make_questions())
        assert report.per_question["q2"].missing is True
        assert report.per_question["q2"].f1 == 0.0
        assert report.em == 0.5

    def test_extra_predictions_ignored(self):
        report = evaluate_run(
            {"q1": "alpha", "q2": "bravo", "q9": "stray"}, self.make_questions()
        )
        assert report.n == 2
        assert report.em == 1.0

    def test_to_dict_sorted_and_complete(self):
        report = evaluate_run({"q2": "bravo", "q1": "alpha"}, self.make_questions(), "name")
        d = report.to_dict()
        assert d["dataset"] == "name"
        assert list(d["per_question"]) == ["q1", "q2"]
        assert set(d) == {"dataset", "n", "em", "f1", "rouge_l", "per_question"}


class TestMetricProperties:
    texts = st.lists(
        st.sampled_from(["alpha", "bravo", "the", "a", "42", "night"]), max_size=8
    ).map(" ".join)

    @given(texts, texts)
    def test_f1_symmetric_in_token_bags(self, a, b):
        assert token_f1(a, [b]) == pytest.approx(token_f1(b, [a]))

    @given(texts)
    def test_identity_scores_perfectly(self, text):
        assert token_f1(text, [text]) == 1.0
        assert exact_match(text, [text]) == 1
        if normalize_answer(text):
            assert rouge_l(text, text) == 1.0

    @given(texts, texts)
    def test_scores_bounded(self, a, b):
        assert 0.0 <= token_f1(a, [b]) <= 1.0
        assert 0.0 <= rouge_l(a, b) <= 1.0

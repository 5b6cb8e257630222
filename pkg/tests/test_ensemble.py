from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ragweld.ensemble import (
    GENERATION,
    SELECTION,
    EnsembleOutput,
    Ranking,
    assemble_ensemble_prompt,
    assemble_rerank_fusion_prompt,
    assemble_selection_prompt,
    ensemble_generate,
    ensemble_rerank,
    ensemble_select,
    parse_answer,
    postcheck_ranking,
    rerank_documents,
)
from ragweld.errors import (
    BackendError,
    EmptyOutput,
    EmptyTraces,
    IndexOutOfRange,
    UnparsableSelection,
)
from ragweld.pipelines import EvidenceDoc, Question, SystemTrace

GOLDENS = Path(__file__).parent / "data" / "goldens"


def doc(doc_id, title, text, score=1.0, rank=1):
    return EvidenceDoc(
        doc_id=doc_id, title=title, text=text, score=score, rank=rank, retriever_id="bm25"
    )


def trace(system_id, answer, documents=()):
    return SystemTrace(
        system_id=system_id,
        pipeline_type="standard",
        q_id="g1",
        answer=answer,
        documents=tuple(documents),
    )


def golden_traces():
    long_text = (
        "The survey of European cities collects population, climate and transport "
        "figures for every capital. "
    ) * 6
    return [
        trace(
            "standard",
            "Paris",
            (
                doc("d-geo-1", "Geography of France",
                    "Paris has been the capital of France since 987.", 2.4, 1),
                doc("d-geo-2", "Capitals",
                    "Berlin is the capital of Germany; Madrid of Spain.", 1.1, 2),
            ),
        ),
        trace("branching", "paris france", (doc("d-long", "City survey", long_text, 0.9, 1),)),
        trace("agentic", "Berlin"),
    ]


QUESTION = Question(q_id="g1", text="What is the capital of France?", gold_answers=("Paris",))


class TestParseAnswer:
    def test_boxed_inside_answer_tags(self):
        assert parse_answer("<think>r</think><answer>\\boxed{x} </answer>") == ("r", "x")

    def test_boxed_anywhere(self):
        assert parse_answer("no tags \\boxed{y} trailing") == ("", "y")

    def test_answer_tag_without_boxed(self):
        assert parse_answer("<answer>plain words</answer>") == ("", "plain words")

    def test_last_non_empty_line(self):
        assert parse_answer("line1\nline2\n   \n") == ("", "line2")

    def test_empty_boxed_candidate_skipped(self):
        # the empty box is skipped; the raw answer-tag text is the next candidate
        assert parse_answer("<answer>\\boxed{} </answer>")[1] == "\\boxed{}"

    def test_nested_braces_balanced(self):
        assert parse_answer("\\boxed{f(x) = {a: 1}} end")[1] == "f(x) = {a: 1}"

    def test_unbalanced_box_takes_rest(self):
        assert parse_answer("\\boxed{open")[1] == "open"

    def test_first_boxed_wins(self):
        assert parse_answer("a \\boxed{one} b \\boxed{two}")[1] == "one"
        assert parse_answer("<answer>\\boxed{first}</answer> and \\boxed{second}")[1] == "first"

    def test_innermost_think_content(self):
        reasoning, answer = parse_answer(
            "<think>outer<think>inner</think></think><answer>\\boxed{z}</answer>"
        )
        assert reasoning == "inner"
        assert answer == "z"

    def test_unclosed_answer_tag_falls_through(self):
        assert parse_answer("<answer>unclosed \\boxed{q}")[1] == "q"

    def test_whitespace_only_rejected(self):
        with pytest.raises(EmptyOutput):
            parse_answer("   \n\t ")

    def test_think_only_output_returns_raw_line(self):
        reasoning, answer = parse_answer("<think>only thoughts</think>")
        assert reasoning == "only thoughts"
        assert answer == "<think>only thoughts</think>"


class TestPrompts:
    def test_generation_golden_bytes(self):
        rendered = assemble_ensemble_prompt(QUESTION, golden_traces())
        assert rendered == (GOLDENS / "generation_prompt.txt").read_text(encoding="utf-8")

    def test_selection_golden_bytes(self):
        rendered = assemble_selection_prompt(QUESTION, golden_traces())
        assert rendered == (GOLDENS / "selection_prompt.txt").read_text(encoding="utf-8")

    def test_header_count_is_literal_even_for_one_trace(self):
        rendered = assemble_ensemble_prompt(QUESTION, [trace("solo", "Paris")])
        assert "from 1 systems' information:" in rendered

    def test_no_documents_renders_none_marker(self):
        rendered = assemble_ensemble_prompt(QUESTION, [trace("solo", "Paris")])
        assert "Documents:\n(none)" in rendered

    def test_empty_traces_rejected(self):
        with pytest.raises(EmptyTraces):
            assemble_ensemble_prompt(QUESTION, [])
        with pytest.raises(EmptyTraces):
            assemble_selection_prompt(QUESTION, [])

    def test_truncation_budget(self):
        long_doc = doc("d", "T", "x" * 600)
        rendered = assemble_ensemble_prompt(QUESTION, [trace("s", "a", (long_doc,))])
        assert "x" * 500 + "…" in rendered
        assert "x" * 501 not in rendered

    def test_short_text_not_truncated(self):
        rendered = assemble_ensemble_prompt(
            QUESTION, [trace("s", "a", (doc("d", "T", "x" * 500),))]
        )
        assert "…" not in rendered


class ScriptedBackend:
    """Minimal chat backend: pops canned responses in order."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.prompts = []
        self.backend_id = "scripted"

    def chat(self, req):
        self.prompts.append(req.messages[-1].content)
        result = self.responses.pop(0)
        if isinstance(result, Exception):
            raise result

        class _R:
            text = result
            token_logprobs = None
            backend_id = "scripted"

        return _R()


class TestGenerate:
    def test_success(self):
        backend = ScriptedBackend(["<think>ok</think><answer>\\boxed{Paris} </answer>"])
        out = ensemble_generate(QUESTION, golden_traces(), backend)
        assert out.mode == GENERATION
        assert out.final_answer == "Paris"
        assert out.reasoning == "ok"
        assert out.failed is False
        assert out.selected_index is None

    def test_backend_error_becomes_failed_output(self):
        backend = ScriptedBackend([BackendError(503, "down")])
        out = ensemble_generate(QUESTION, golden_traces(), backend)
        assert out.failed is True
        assert out.final_answer == ""
        assert "503" in out.error

    def test_blank_output_becomes_failed_output(self):
        out = ensemble_generate(QUESTION, golden_traces(), ScriptedBackend([" \n "]))
        assert out.failed is True

    def test_round_trip_dict(self):
        backend = ScriptedBackend(["<answer>\\boxed{Paris} </answer>"])
        out = ensemble_generate(QUESTION, golden_traces(), backend)
        assert EnsembleOutput.from_dict(out.to_dict()) == out


class TestSelect:
    def test_selects_and_copies_answer_verbatim(self):
        backend = ScriptedBackend(["<answer>\\boxed{2}</answer>"])
        out = ensemble_select(QUESTION, golden_traces(), backend)
        assert out.mode == SELECTION
        assert out.selected_index == 2
        assert out.final_answer == "paris france"

    def test_non_integer_selection(self):
        backend = ScriptedBackend(["<answer>\\boxed{Paris}</answer>"])
        with pytest.raises(UnparsableSelection):
            ensemble_select(QUESTION, golden_traces(), backend)

    @pytest.mark.parametrize("index", ["0", "4", "-1"])
    def test_out_of_range_selection(self, index):
        backend = ScriptedBackend([f"<answer>\\boxed{{{index}}}</answer>"])
        with pytest.raises(IndexOutOfRange):
            ensemble_select(QUESTION, golden_traces(), backend)

    def test_backend_error_becomes_failed_output(self):
        backend = ScriptedBackend([BackendError(500, "boom")])
        out = ensemble_select(QUESTION, golden_traces(), backend)
        assert out.failed is True and out.final_answer == ""


class TestPostcheck:
    def test_worked_example(self):
        assert postcheck_ranking([3, 3, 12, 1], 10) == Ranking(
            doc_ids=(3, 1, 2, 4, 5, 6, 7, 8, 9, 10), pool_size=10
        )

    def test_identity_preserved(self):
        assert postcheck_ranking([2, 1, 3], 3).doc_ids == (2, 1, 3)

    @given(
        st.lists(st.integers(min_value=-5, max_value=25), max_size=30),
        st.integers(min_value=1, max_value=20),
    )
    def test_always_a_permutation(self, raw, pool_size):
        repaired = postcheck_ranking(raw, pool_size)
        assert sorted(repaired.doc_ids) == list(range(1, pool_size + 1))

    @given(
        st.lists(st.integers(min_value=-5, max_value=25), max_size=30),
        st.integers(min_value=1, max_value=20),
    )
    def test_idempotent(self, raw, pool_size):
        once = postcheck_ranking(raw, pool_size)
        twice = postcheck_ranking(list(once.doc_ids), pool_size)
        assert once == twice

    @given(st.integers(min_value=1, max_value=20))
    def test_survivors_keep_first_position_order(self, pool_size):
        raw = [pool_size, 1, pool_size]
        repaired = postcheck_ranking(raw, pool_size)
        survivors = [d for d in repaired.doc_ids if d in {1, pool_size}]
        if pool_size > 1:
            assert survivors[0] == pool_size


class TestRerank:
    def pool(self):
        return [
            doc("p1", "Geography of France", "Paris has been the capital of France since 987.", 2.4, 1),
            doc("p2", "Capitals", "Berlin is the capital of Germany; Madrid of Spain.", 1.1, 2),
            doc("p3", "Rivers", "The Seine crosses Paris on its way to the Channel.", 0.8, 3),
            doc("p4", "Cuisine", "French cuisine ranges from bistro fare to haute cuisine.", 0.2, 4),
        ]

    def test_rerank_documents_parses_order(self):
        backend = ScriptedBackend(["<answer>\\boxed{3, 1, 2, 4}</answer>"])
        ranking = rerank_documents(QUESTION, self.pool(), backend)
        assert ranking.doc_ids == (3, 1, 2, 4)
        assert ranking.pool_size == 4

    def test_rerank_prompt_numbers_documents(self):
        backend = ScriptedBackend(["<answer>\\boxed{1, 2, 3, 4}</answer>"])
        rerank_documents(QUESTION, self.pool(), backend)
        prompt = backend.prompts[0]
        assert "Document 1: Geography of France:" in prompt
        assert "Document 4: Cuisine:" in prompt

    def test_fusion_golden_bytes(self):
        rendered = assemble_rerank_fusion_prompt(
            QUESTION,
            [Ranking((1, 3, 2, 4), 4), Ranking((3, 1, 4, 2), 4)],
            self.pool(),
            top_k=3,
        )
        assert rendered == (GOLDENS / "rerank_fusion_prompt.txt").read_text(encoding="utf-8")

    def test_fusion_contains_no_answers(self):
        rendered = assemble_rerank_fusion_prompt(
            QUESTION, [Ranking((1, 2, 3, 4), 4)], self.pool(), top_k=2
        )
        assert "Answer:" not in rendered

    def test_pool_size_mismatch_rejected(self):
        with pytest.raises(ValueError):
            assemble_rerank_fusion_prompt(
                QUESTION, [Ranking((1, 2), 2)], self.pool(), top_k=2
            )

    def test_ensemble_rerank_repairs_malformed_rankings(self):
        backend = ScriptedBackend(["<answer>\\boxed{Paris} </answer>"])
        out = ensemble_rerank(
            QUESTION,
            [Ranking((3, 3, 12, 1), 4)],
            self.pool(),
            backend,
            top_k=2,
        )
        assert out.final_answer == "Paris"
        prompt = backend.prompts[0]
        # repaired ranking is (3, 1, 2, 4); its top-2 slice is docs 3 and 1
        assert "Rivers" in prompt and "Geography of France" in prompt
        assert "Cuisine" not in prompt

import json
import math

import httpx
import pytest

from conftest import E2E, OKHTTP_SHA, check_golden, make_commit, make_sentences
from rationale_forge import pipeline
from rationale_forge.config import RunConfig
from rationale_forge.errors import InputContractError, NoRationaleInput, UnparseableOutput
from rationale_forge.extractor import PromptStrategy, load_exemplars
from rationale_forge.gateway import Embedder, Gateway, ModelSpec
from rationale_forge.generator import (
    build_generation_prompt,
    consistency,
    cosine,
    generate,
    parse_summary_output,
    report_violations,
)
from rationale_forge.model import ArtifactKind, LabeledSentence, RationaleComponent

G, N, A = RationaleComponent.GOAL, RationaleComponent.NEED, RationaleComponent.ALTERNATIVES
MODEL = ModelSpec("openai", "o4-mini")
DIFF = "diff --git a/A.java b/A.java\n--- a/A.java\n+++ b/A.java\n@@ -1,1 +1,1 @@\n-old\n+new\n"


def _labeled(*pairs):
    sents = make_sentences(*(t for t, _ in pairs), kind=ArtifactKind.COMMIT_MESSAGE, locator="commit-message")
    return [LabeledSentence(s, frozenset(labels)) for s, (_, labels) in zip(sents, pairs)]


def _input():
    commit = make_commit("Drop ALPN support", sha_seed="gen", diff=DIFF)
    labeled = _labeled(("Drop ALPN support.", {G}), ("ALPN crashes on old JVMs.", {N}), ("Unrelated.", set()))
    return commit, labeled


def _scripted(tmp_path, *answers):
    """Record-mode gateway whose fake provider returns the answers in order."""
    queue = list(answers)
    calls = []

    def handler(request):
        calls.append(json.loads(request.content))
        return httpx.Response(200, json={"choices": [{"message": {"content": queue.pop(0)}}]})

    gw = Gateway(tmp_path, "record", http=httpx.Client(transport=httpx.MockTransport(handler)), api_key="k",
                 sleep=lambda s: None)
    return gw, calls


def _answer(data):
    return "```json\n" + json.dumps(data) + "\n```"


def test_few_shot_prompt_golden():
    commit, labeled = _input()
    system, user = build_generation_prompt(commit, labeled, PromptStrategy.CG_FS, load_exemplars())
    for ex in load_exemplars():
        for text in ex.reference_summaries.values():
            assert text in user
    check_golden("cg_fs_two_exemplars.txt", f"[system]\n{system}\n\n[user]\n{user}")


def test_only_goal_input_asks_only_for_goal():
    commit = make_commit("Drop ALPN support", sha_seed="g", diff=DIFF)
    labeled = _labeled(("Drop ALPN support.", {G}), ("Other.", set()))
    _, user = build_generation_prompt(commit, labeled, PromptStrategy.CG_ZS)
    assert "Write a summary only for these components: Goal." in user
    assert '"Need"' not in user and '"Alternatives"' not in user
    assert "Other." not in user


def test_generation_preconditions():
    commit, labeled = _input()
    with pytest.raises(NoRationaleInput):
        build_generation_prompt(commit, _labeled(("x", set())), PromptStrategy.CG_ZS)
    with pytest.raises(InputContractError):
        build_generation_prompt(commit, labeled, PromptStrategy.CI_ZS)
    with pytest.raises(InputContractError):
        build_generation_prompt(commit, labeled, PromptStrategy.CG_FS, load_exemplars()[:1])
    with pytest.raises(InputContractError):
        build_generation_prompt(commit, labeled, PromptStrategy.CG_ZS, load_exemplars())


def test_parse_summary_output():
    assert parse_summary_output('text {"Goal": {"summary": "x"}} more') == {"Goal": {"summary": "x"}}
    assert parse_summary_output(_answer({"Need": "y"})) == {"Need": "y"}
    with pytest.raises(UnparseableOutput):
        parse_summary_output("no json here")


def test_hallucinated_component_is_dropped(tmp_path):
    commit = make_commit("Drop ALPN support", sha_seed="g", diff=DIFF)
    labeled = _labeled(("Drop ALPN support.", {G}))
    gw, calls = _scripted(tmp_path, _answer({
        "Goal": {"summary": "Remove ALPN.", "sources": ["a0s0"]},
        "Need": {"summary": "Invented.", "sources": ["a0s0"]},
    }))
    report = generate(commit, labeled, PromptStrategy.CG_ZS, gw, MODEL)
    assert list(report.summaries) == [G]
    assert report.summaries[G].supporting == ("a0s0",)
    assert any("Need" in w for w in report.warnings)
    assert report_violations(report, labeled) == []
    assert len(calls) == 1


def test_invalid_citation_triggers_repair(tmp_path):
    commit, labeled = _input()
    first = _answer({"Goal": {"summary": "Remove ALPN.", "sources": ["a0s1"]},
                     "Need": {"summary": "Crashes.", "sources": ["a0s1"]}})
    second = _answer({"Goal": {"summary": "Remove ALPN.", "sources": ["a0s0"]},
                      "Need": {"summary": "Crashes.", "sources": ["a0s1"]}})
    gw, calls = _scripted(tmp_path, first, second)
    report = generate(commit, labeled, PromptStrategy.CG_ZS, gw, MODEL)
    assert len(calls) == 2
    assert "## Problems with the previous answer" in calls[1]["messages"][-1]["content"]
    assert report.summaries[G].supporting == ("a0s0",)
    assert report_violations(report, labeled) == []


def test_missing_summary_falls_back_to_labeled_text(tmp_path):
    commit, labeled = _input()
    only_goal = _answer({"Goal": {"summary": "Remove ALPN.", "sources": ["a0s0"]}})
    gw, calls = _scripted(tmp_path, only_goal, "still nothing useful")
    report = generate(commit, labeled, PromptStrategy.CG_ZS, gw, MODEL)
    assert len(calls) == 2
    assert report.summaries[N].text == "ALPN crashes on old JVMs."
    assert report.summaries[N].supporting == ("a0s1",)
    assert any("fell back" in w for w in report.warnings)
    assert report_violations(report, labeled) == []


def test_unparseable_twice_raises(tmp_path):
    commit, labeled = _input()
    gw, _ = _scripted(tmp_path, "no json", "still no json")
    with pytest.raises(UnparseableOutput):
        generate(commit, labeled, PromptStrategy.CG_ZS, gw, MODEL)


def _okhttp(run_index=0):
    cfg = RunConfig(cache_dir=E2E / "cache", mode="replay")
    labels = json.loads((E2E / "golden" / OKHTTP_SHA[:7] / "labels.json").read_text())
    commit, labeled = pipeline.read_labels(labels)
    report = generate(commit, labeled, cfg.cg_strategy, Gateway(cfg.cache_dir, "replay"), cfg.model,
                      pipeline._exemplars(cfg, cfg.cg_strategy is PromptStrategy.CG_FS), cfg.token_budget, run_index)
    return report, labeled


def test_okhttp_report_covers_all_components_and_is_stable():
    report, labeled = _okhttp()
    assert set(report.summaries) == {G, N, A}
    assert report_violations(report, labeled) == []
    assert _okhttp()[0].dumps() == report.dumps()
    md = report.to_markdown()
    assert all(f"## {c.value}" in md for c in (G, N, A))


# consistency ---------------------------------------------------------------------------


class _DictEmbedder:
    def __init__(self, vectors):
        self.vectors = vectors

    def embed(self, text):
        return self.vectors[text]


def test_identical_reports_are_fully_consistent(tmp_path):
    report, _ = _okhttp()
    emb = _DictEmbedder({s.text: [1.0, 2.0, 3.0] for s in report.summaries.values()})
    result = consistency([report, report], emb)
    assert result.pairwise_cosine == pytest.approx([1.0, 1.0, 1.0])
    assert result.median == pytest.approx(1.0)


def test_disjoint_components_give_no_statistics(tmp_path):
    commit, labeled = _input()
    gw, _ = _scripted(tmp_path, _answer({"Goal": {"summary": "g", "sources": ["a0s0"]}}),
                      _answer({"Need": {"summary": "n", "sources": ["a0s1"]}}))
    goal_only = generate(commit, labeled[:1], PromptStrategy.CG_ZS, gw, MODEL)
    need_only = generate(commit, labeled[1:2], PromptStrategy.CG_ZS, gw, MODEL)
    result = consistency([goal_only, need_only], _DictEmbedder({}))
    assert result.per_component == {}
    assert (result.median, result.min, result.max) == (None, None, None)
    with pytest.raises(InputContractError):
        consistency([goal_only], _DictEmbedder({}))


def _recorded_vectors():
    out = {}
    for path in (E2E / "cache" / "embed").glob("*.rec"):
        entry = json.loads(path.read_text())
        out[entry["text"]] = entry["vector"]
    return out


def test_okhttp_consistency_matches_hand_dot_products():
    first, _ = _okhttp(0)
    second, _ = _okhttp(1)
    result = consistency([first, second], Embedder(E2E / "cache", "replay"))
    vectors = _recorded_vectors()
    for comp, (value,) in result.per_component.items():
        u, v = vectors[first.summaries[comp].text], vectors[second.summaries[comp].text]
        dot = sum(x * y for x, y in zip(u, v))
        hand = dot / (math.sqrt(sum(x * x for x in u)) * math.sqrt(sum(y * y for y in v)))
        assert value == pytest.approx(hand, abs=0.02)
    assert set(result.per_component) == {G, N, A}


def test_cosine_rejects_zero_vector():
    assert cosine([1, 0], [0, 1]) == 0.0
    with pytest.raises(ValueError):
        cosine([0, 0], [1, 1])

from itertools import permutations

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import E2E, OKHTTP_SHA, check_golden, make_commit, make_sentences
from oracles import vote as oracle_vote
from rationale_forge.errors import InputContractError, MissingExplanations, PromptTooLarge
from rationale_forge.extractor import (
    ExemplarCommit,
    PromptStrategy,
    RunSet,
    VotingPolicy,
    build_identification_prompt,
    classify,
    default_rules,
    load_exemplars,
    majority_vote,
    vote,
)
from rationale_forge import pipeline
from rationale_forge.config import RunConfig
from rationale_forge.gateway import Gateway, ModelSpec
from rationale_forge.model import ArtifactKind, RationaleComponent
from rationale_forge.retriever import ArtifactGraph

G, N, A = RationaleComponent.GOAL, RationaleComponent.NEED, RationaleComponent.ALTERNATIVES
MODEL = ModelSpec("openai", "o4-mini")
DIFF = "diff --git a/A.java b/A.java\n--- a/A.java\n+++ b/A.java\n@@ -1,1 +1,1 @@\n-old\n+new\n"


def _minimal():
    commit = make_commit("Drop ALPN support", sha_seed="min", diff=DIFF)
    return commit, make_sentences("Drop ALPN support", kind=ArtifactKind.COMMIT_MESSAGE, locator="commit-message")


def test_zero_shot_prompt_golden():
    commit, sentences = _minimal()
    system, user = build_identification_prompt(commit, sentences, PromptStrategy.CI_ZS)
    check_golden("ci_zs_minimal.txt", f"[system]\n{system}\n\n[user]\n{user}")


def test_reasoning_prompt_golden_includes_both_explanation_sets():
    commit, sentences = _minimal()
    exemplars = load_exemplars()
    system, user = build_identification_prompt(commit, sentences, PromptStrategy.CI_RFS, exemplars, default_rules())
    for ex in exemplars:
        for text in ex.explanations.values():
            assert text in user
    check_golden("ci_rfs_two_exemplars.txt", f"[system]\n{system}\n\n[user]\n{user}")


def test_strategies_produce_different_prompts():
    commit, sentences = _minimal()
    exemplars = load_exemplars()
    zs = build_identification_prompt(commit, sentences, PromptStrategy.CI_ZS)[1]
    fs = build_identification_prompt(commit, sentences, PromptStrategy.CI_FS, exemplars)[1]
    rfs = build_identification_prompt(commit, sentences, PromptStrategy.CI_RFS, exemplars, default_rules())[1]
    assert len({zs, fs, rfs}) == 3
    assert "## Decision rules" in rfs and "## Decision rules" not in fs
    assert "## Examples" in fs and "## Examples" not in zs


def test_prompt_preconditions():
    commit, sentences = _minimal()
    exemplars = load_exemplars()
    with pytest.raises(InputContractError):
        build_identification_prompt(commit, sentences, PromptStrategy.CI_ZS, exemplars)
    with pytest.raises(InputContractError):
        build_identification_prompt(commit, sentences, PromptStrategy.CI_FS, exemplars[:1])
    with pytest.raises(InputContractError):
        build_identification_prompt(commit, sentences, PromptStrategy.CG_ZS)
    stripped = ExemplarCommit.from_dict({**exemplars[0].to_dict(), "explanations": {}})
    with pytest.raises(MissingExplanations):
        build_identification_prompt(commit, sentences, PromptStrategy.CI_RFS, [stripped, exemplars[1]], default_rules())
    with pytest.raises(PromptTooLarge):
        build_identification_prompt(commit, sentences, PromptStrategy.CI_ZS, budget=100)


def test_bundled_exemplars():
    exemplars = load_exemplars()
    assert len(exemplars) == 2
    assert all(not ex.missing_explanations() for ex in exemplars)
    assert all(ex.reference_summaries for ex in exemplars)


# voting ------------------------------------------------------------------------------


def test_vote_examples():
    assert vote([{G}, {G}, {G}], 2) == {G}
    assert vote([{G}, {G, N}, {N}], 2) == {G, N}
    assert vote([set(), {A}, {N}], 2) == set()


_LABELS = st.frozensets(st.sampled_from([G, N, A]))


@given(st.lists(_LABELS, min_size=3, max_size=3), st.integers(1, 3))
def test_vote_matches_oracle_and_is_order_free(runs, threshold):
    expected = oracle_vote([set(r) for r in runs], threshold)
    for perm in permutations(runs):
        assert vote(list(perm), threshold) == expected


def test_voting_policy_validation():
    with pytest.raises(ValueError):
        VotingPolicy(runs=3, threshold=4)
    with pytest.raises(ValueError):
        VotingPolicy(runs=3, threshold=0)


def test_majority_vote_rejects_wrong_run_count():
    sents = make_sentences("x")
    runs = RunSet("c", PromptStrategy.CI_ZS, {"a0s0": sents[0]}, ({"a0s0": frozenset()},))
    with pytest.raises(ValueError):
        majority_vote(runs, VotingPolicy())


def test_identical_recorded_outputs_give_identical_maps(tmp_path):
    commit, sentences = _minimal()
    handler = lambda r: httpx.Response(200, json={"choices": [{"message": {"content": "a0s0: [Goal]"}}]})  # noqa: E731
    gw = Gateway(tmp_path, "record", http=httpx.Client(transport=httpx.MockTransport(handler)), api_key="k")
    classify(commit, sentences, PromptStrategy.CI_ZS, VotingPolicy(), gw, MODEL)
    runs = classify(commit, sentences, PromptStrategy.CI_ZS, VotingPolicy(), Gateway(tmp_path, "replay"), MODEL,
                    parallelism=3)
    assert runs.per_run == ({"a0s0": frozenset({G})},) * 3
    assert [ls.labels for ls in majority_vote(runs)] == [frozenset({G})]


def test_empty_input_needs_no_model_call(tmp_path):
    runs = classify(make_commit(), [], PromptStrategy.CI_ZS, VotingPolicy(), Gateway(tmp_path, "replay"), MODEL)
    assert majority_vote(runs) == []


def _okhttp_runs():
    cfg = RunConfig(cache_dir=E2E / "cache", mode="replay")
    graph = ArtifactGraph.loads((E2E / "golden" / OKHTTP_SHA[:7] / "graph.json").read_text())
    sents = pipeline.graph_sentences(graph, cfg.segmenter)
    return classify(graph.commit, sents, cfg.ci_strategy, cfg.voting, Gateway(cfg.cache_dir, "replay"), cfg.model,
                    load_exemplars(), default_rules())


def test_okhttp_goal_sentence_is_goal_in_every_run():
    runs = _okhttp_runs()
    (sid,) = [i for i, s in runs.sentences.items() if s.text == "Dropping ALPN support."]
    assert all(G in run[sid] for run in runs.per_run)


def test_okhttp_alternatives_sentence_in_issue_666():
    voted = majority_vote(_okhttp_runs())
    alts = [ls.sentence for ls in voted if A in ls.labels]
    assert any(s.artifact.locator == "666" and "global lock" in s.text for s in alts)

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import E2E, FIXTURES, OKHTTP_SHA, PLAIN_SHA, WIDGETS_SHA, make_commit
from rationale_forge.model import ArtifactKind, ArtifactRef
from rationale_forge.platform import PlatformClient
from rationale_forge.retriever import (
    ArtifactGraph,
    build_graph,
    clean_markdown,
    extract_artifact_refs,
    fetch_code_review,
    resolve_commit_artifacts,
)

LINKS = [json.loads(line) for line in (FIXTURES / "link_corpus.jsonl").read_text().splitlines()]


def _replay(slug: str) -> PlatformClient:
    return PlatformClient(slug, mode="replay", cache_dir=E2E / "cache")


class FakePlatform:
    def __init__(self, repo_slug="acme/app", issues=None, comments=None, reviews=None, search=None):
        self.repo_slug = repo_slug
        self.issues = issues or {}
        self.comments = comments or {}
        self.reviews = reviews or {}
        self.search = search or {}
        self.calls = []

    def get_issue(self, number):
        self.calls.append(number)
        return self.issues.get(number)

    def get_issue_comments(self, number):
        return self.comments.get(number, [])

    def get_review_comments(self, number):
        return self.reviews.get(number, [])

    def search_mentions(self, text):
        return self.search.get(text, [])

    def get_file(self, path, ref):
        return None


def _issue(n, body, pr=False):
    data = {"number": n, "title": f"Issue {n}", "body": body, "user": {"login": "u"},
            "created_at": "2020-01-01T00:00:00Z", "html_url": f"https://github.com/acme/app/issues/{n}"}
    if pr:
        data["pull_request"] = {}
    return data


def test_link_corpus_has_50_messages():
    assert len(LINKS) == 50


@pytest.mark.parametrize("row", LINKS, ids=[f"m{i:02d}" for i in range(len(LINKS))])
def test_link_corpus_exact_match(row):
    got = [f"{c.repo_slug}#{c.number}" for c in extract_artifact_refs(row["message"], row["repo_slug"])]
    assert got == row["expected"]


def test_okhttp_example_refs():
    assert [c.number for c in extract_artifact_refs("Fixes #666 and see #647", "square/okhttp")] == [666, 647]
    assert extract_artifact_refs("", "square/okhttp") == []
    assert extract_artifact_refs("version 1.2.3 released", "square/okhttp") == []


@given(st.text(max_size=200))
def test_raw_tokens_are_substrings(text):
    for cand in extract_artifact_refs(text, "acme/app"):
        assert cand.raw_token in text
        assert cand.number >= 1


def test_clean_markdown_drops_fences_and_diff_quotes():
    text = "Before.\n```\ncode // #5\n```\n> @@ -1 +1 @@\n> +x\n\n> a real quote\nAfter."
    assert clean_markdown(text) == "Before.\n\n> a real quote\nAfter."


def test_no_links_gives_commit_message_only():
    graph = resolve_commit_artifacts(make_commit("Tidy up logging"), FakePlatform())
    assert [a.ref.kind for a in graph.artifacts] == [ArtifactKind.COMMIT_MESSAGE]
    assert graph.edges == ()
    assert graph.check() == []


def test_depth_is_capped_at_two_hops():
    platform = FakePlatform(issues={1: _issue(1, "see #2"), 2: _issue(2, "see #3"), 3: _issue(3, "end")})
    graph = resolve_commit_artifacts(make_commit("Fixes #1"), platform)
    assert sorted(a.ref.locator for a in graph.artifacts if a.ref.kind is ArtifactKind.ISSUE) == ["1", "2"]
    assert 3 not in platform.calls
    assert graph.check() == []


def test_search_hit_must_mention_the_hash():
    commit = make_commit("Refactor", sha_seed="s")
    hit = _issue(7, f"Fixed in {commit.sha[:9]}.")
    noise = _issue(8, "Unrelated discussion.")
    platform = FakePlatform(issues={7: hit, 8: noise}, search={commit.sha[:7]: [hit, noise]})
    graph = resolve_commit_artifacts(commit, platform)
    assert [a.ref.locator for a in graph.artifacts if a.ref.kind is ArtifactKind.ISSUE] == ["7"]
    (edge,) = graph.edges
    assert edge.source.locator == "7" and edge.target.kind is ArtifactKind.COMMIT_MESSAGE


def test_pr_without_review_threads_has_no_code_review():
    ref = ArtifactRef(ArtifactKind.PULL_REQUEST, "4")
    assert fetch_code_review(ref, FakePlatform()) is None


def test_okhttp_replay_resolves_666_and_647():
    commit = _replay("square/okhttp").get_commit(OKHTTP_SHA)
    graph = resolve_commit_artifacts(commit, _replay("square/okhttp"))
    issues = {a.ref.locator for a in graph.artifacts if a.ref.kind is ArtifactKind.ISSUE}
    assert issues == {"666", "647"}
    assert graph.check() == []


def test_widgets_replay_reaches_pr_in_two_hops():
    platform = _replay("example-org/widgets")
    graph = resolve_commit_artifacts(platform.get_commit(WIDGETS_SHA), platform)
    assert {a.ref.key for a in graph.artifacts} == {
        (ArtifactKind.COMMIT_MESSAGE, "commit-message"),
        (ArtifactKind.ISSUE, "12"),
        (ArtifactKind.PULL_REQUEST, "34"),
        (ArtifactKind.CODE_REVIEW, "34"),
    }
    review = graph.artifact(ArtifactKind.CODE_REVIEW, "34")
    assert [b.timestamp for b in review.body_blocks] == sorted(b.timestamp for b in review.body_blocks)
    assert len(review.body_blocks) == 4
    assert review.body_blocks[0].text == "Should the cache size be configurable?"
    assert not any("@@" in b.text or "cache.put" in b.text for b in review.body_blocks)


def test_plain_replay_has_no_links():
    platform = _replay("example-org/plain")
    graph = build_graph(platform.get_commit(PLAIN_SHA), platform)
    assert [a.ref.kind for a in graph.artifacts] == [ArtifactKind.COMMIT_MESSAGE, ArtifactKind.CLASS_JAVADOC]
    assert graph.edges == ()


def test_graph_serialization_round_trips_and_is_deterministic():
    platform = _replay("square/okhttp")
    g1 = build_graph(platform.get_commit(OKHTTP_SHA), platform, parallelism=4)
    g2 = build_graph(platform.get_commit(OKHTTP_SHA), platform, parallelism=1)
    assert g1.dumps() == g2.dumps()
    assert ArtifactGraph.loads(g1.dumps()) == g1


def test_check_reports_broken_invariants():
    graph = resolve_commit_artifacts(make_commit("x"), FakePlatform())
    broken = ArtifactGraph(graph.commit, graph.artifacts + graph.artifacts)
    assert any("duplicate" in p for p in broken.check())

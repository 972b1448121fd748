import pytest

from conftest import make_commit, make_sentences
from rationale_forge.model import (
    ArtifactKind,
    ArtifactRef,
    ChangedFile,
    Commit,
    LabeledSentence,
    RationaleComponent,
    Sentence,
    extraction_targets,
    group_by_artifact,
    sentence_ids,
)


def test_extraction_targets_are_the_three_components():
    targets = extraction_targets()
    assert targets == [RationaleComponent.GOAL, RationaleComponent.NEED, RationaleComponent.ALTERNATIVES]
    assert RationaleComponent.SELECTED_ALTERNATIVE not in targets
    assert len(targets) == 3


def test_commit_rejects_bad_sha_and_slug():
    with pytest.raises(ValueError):
        Commit("acme/app", "abc", "m")
    with pytest.raises(ValueError):
        Commit("no-slash", "a" * 40, "m")


def test_commit_round_trip_and_java_paths():
    c = make_commit(files=[ChangedFile("A.java", "java", 3, 1), ChangedFile("README.md", "markdown", 1, 0)])
    assert Commit.from_dict(c.to_dict()) == c
    assert c.java_paths() == ["A.java"]
    assert c.loc_changed == 5
    assert c.short_sha == c.sha[:7]


def test_sentence_must_be_trimmed_and_non_empty():
    ref = ArtifactRef(ArtifactKind.ISSUE, "1")
    with pytest.raises(ValueError):
        Sentence(ref, 0, "")
    with pytest.raises(ValueError):
        Sentence(ref, 0, " padded ")
    with pytest.raises(ValueError):
        Sentence(ref, -1, "x")


def test_labeled_sentence_round_trip_sorts_labels():
    s = make_sentences("Dropping ALPN support.")[0]
    ls = LabeledSentence(s, {RationaleComponent.NEED, RationaleComponent.GOAL})
    assert ls.to_dict()["labels"] == ["Goal", "Need"]
    assert LabeledSentence.from_dict(ls.to_dict()) == ls


def test_sentence_ids_follow_first_seen_artifact_order():
    a = make_sentences("one", "two", locator="5")
    b = make_sentences("three", locator="2")
    ids = sentence_ids([b[0], a[1], a[0]])
    assert list(ids) == ["a0s0", "a1s0", "a1s1"]
    assert ids["a1s1"].text == "two"
    assert [ref.locator for ref, _ in group_by_artifact(a + b)] == ["5", "2"]


def test_artifact_ref_sorts_numeric_locators_numerically():
    refs = [ArtifactRef(ArtifactKind.ISSUE, n) for n in ("100", "9", "12")]
    assert [r.locator for r in sorted(refs, key=ArtifactRef.sort_key)] == ["9", "12", "100"]
    commit_ref = ArtifactRef(ArtifactKind.COMMIT_MESSAGE, "commit-message")
    assert sorted(refs + [commit_ref], key=ArtifactRef.sort_key)[0] == commit_ref

import hashlib
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import E2E, make_artifact, make_sentences
from rationale_forge.dataset import (
    GroundTruthRecord,
    RemovalReason,
    Split,
    filter_commits,
    load_corpus,
    save_corpus,
    stratified_sample,
    validate_record,
)
from rationale_forge.errors import InsufficientCandidates, SchemaViolation
from rationale_forge.model import ArtifactKind, ChangedFile, Commit, LabeledSentence, RationaleComponent

G, N, A = RationaleComponent.GOAL, RationaleComponent.NEED, RationaleComponent.ALTERNATIVES


def _commit(i, slug="acme/app", files=1, loc=10, ext=".java"):
    sha = hashlib.sha1(f"{slug}-{i}".encode()).hexdigest()
    changed = [ChangedFile(f"F{j}{ext}", "", loc // files, 0) for j in range(files)]
    return Commit(slug, sha, f"commit {i}", "", changed)


def _record(i, labels=({G},), summaries=None, split=Split.EVAL):
    commit = _commit(i)
    art = make_artifact(ArtifactKind.ISSUE, "1", *(f"Sentence {i}.{j}." for j in range(len(labels))))
    sents = make_sentences(*(b.text for b in art.body_blocks))
    labeled = tuple(LabeledSentence(s, frozenset(ls)) for s, ls in zip(sents, labels))
    if summaries is None:
        summaries = {c: f"{c.value} of {i}." for ls in labels for c in ls}
    return GroundTruthRecord(commit, (art,), labeled, summaries, split)


# filters ---------------------------------------------------------------------------------


def test_non_java_commit_is_removed():
    result = filter_commits([_commit(0, ext=".md"), _commit(1)])
    assert result.count(RemovalReason.NO_JAVA_FILE) == 1
    assert [c.message for c in result.kept] == ["commit 1"]


def test_500_file_commit_is_a_file_count_outlier():
    pool = [_commit(i, files=1 + i % 4, loc=20 + i) for i in range(20)] + [_commit(99, files=500, loc=500)]
    result = filter_commits(pool)
    removed = [(c.message, r) for c, r in result.removed]
    assert ("commit 99", RemovalReason.FILE_COUNT_OUTLIER) in removed
    assert result.file_stats.upper_fence < 500
    assert len(result.kept) == 20


def test_non_atomic_flag():
    c = _commit(3)
    result = filter_commits([c, _commit(4)], non_atomic=[c.sha])
    assert result.count(RemovalReason.NON_ATOMIC) == 1


def test_empty_population():
    result = filter_commits([])
    assert result.kept == [] and result.file_stats is None


# sampling --------------------------------------------------------------------------------


POOL = [_commit(i, slug=s) for s in ("a/one", "b/two") for i in range(10)]


def test_stratified_sample_is_deterministic():
    first = stratified_sample(POOL, {"a/one": 3, "b/two": 2}, seed=7)
    assert first == stratified_sample(list(reversed(POOL)), {"b/two": 2, "a/one": 3}, seed=7)
    assert [c.repo_slug for c in first] == ["a/one"] * 3 + ["b/two"] * 2


def test_zero_quota_and_oversized_quota():
    assert stratified_sample(POOL, {"a/one": 0}, seed=1) == []
    with pytest.raises(InsufficientCandidates):
        stratified_sample(POOL, {"a/one": 11}, seed=1)
    with pytest.raises(ValueError):
        stratified_sample(POOL, {"a/one": -1}, seed=1)


@given(st.integers(0, 10), st.integers(0, 10), st.integers(0, 2**32))
def test_sample_quotas_are_exact(qa, qb, seed):
    out = stratified_sample(POOL, {"a/one": qa, "b/two": qb}, seed)
    assert sum(c.repo_slug == "a/one" for c in out) == qa
    assert sum(c.repo_slug == "b/two" for c in out) == qb
    assert len({c.sha for c in out}) == qa + qb


# corpus ----------------------------------------------------------------------------------


def test_round_trip(tmp_path):
    records = [_record(0, labels=({G}, {N, A}, set())), _record(1, split=Split.DEV)]
    save_corpus(records, tmp_path)
    assert load_corpus(tmp_path) == records


def test_empty_corpus_round_trips(tmp_path):
    save_corpus([], tmp_path)
    assert load_corpus(tmp_path) == []


def test_summary_for_unlabeled_component_is_rejected(tmp_path):
    bad = _record(0, labels=({G},), summaries={G: "g", N: "invented"})
    with pytest.raises(SchemaViolation) as err:
        save_corpus([bad], tmp_path)
    assert "Need" in str(err.value)


def test_schema_errors_name_the_record():
    data = _record(0).to_dict()
    data["commit"]["sha"] = "nothex"
    with pytest.raises(SchemaViolation):
        validate_record(data, 4)
    with pytest.raises(SchemaViolation):
        validate_record({**_record(0).to_dict(), "extra": 1})


def test_split_is_fixed_once_persisted(tmp_path):
    save_corpus([_record(0)], tmp_path)
    with pytest.raises(SchemaViolation):
        save_corpus([_record(0, split=Split.DEV)], tmp_path)


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_63_record_corpus_is_byte_stable(tmp_path):
    labels = [({G}, {N}), ({A},), ({G, N}, set()), (set(),)]
    records = [_record(i, labels=labels[i % 4], split=Split.DEV if i < 3 else Split.EVAL) for i in range(63)]
    save_corpus(records, tmp_path / "one")
    loaded = load_corpus(tmp_path / "one")
    assert loaded == records
    save_corpus(loaded, tmp_path / "two")
    assert _tree(tmp_path / "one") == _tree(tmp_path / "two")
    assert len(json.loads((tmp_path / "one" / "index.json").read_text())["records"]) == 63


def test_bundled_e2e_corpus_loads():
    records = load_corpus(E2E / "corpus")
    assert len(records) == 3
    assert all(r.split is Split.EVAL for r in records)


@settings(max_examples=50)
@given(st.lists(st.frozensets(st.sampled_from([G, N, A])), min_size=1, max_size=5))
def test_to_dict_round_trip_property(labels):
    rec = _record(5, labels=tuple(labels))
    assert GroundTruthRecord.from_dict(rec.to_dict()) == rec

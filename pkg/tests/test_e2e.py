"""Full CLI pipeline over the recorded fixture cache, with no network access."""

import json

import pytest

from conftest import E2E, E2E_COMMITS, PLAIN_SHA
from rationale_forge import cli, pipeline
from rationale_forge.extractor import PromptStrategy
from rationale_forge.gateway import ModelSpec
from rationale_forge.generator import ComponentSummary, RationaleReport, report_violations
from rationale_forge.model import RationaleComponent, Sentence
from rationale_forge.retriever import ArtifactGraph

CACHE = str((E2E / "cache").resolve())
CORPUS = str((E2E / "corpus").resolve())
GOLDEN = E2E / "golden"


def _run_pipeline(workdir, monkeypatch):
    monkeypatch.chdir(workdir)
    common = ["--mode", "replay", "--cache-dir", CACHE]
    labels = []
    for slug, sha in E2E_COMMITS:
        d = sha[:7]
        assert cli.main(["link", slug, sha, *common, "-o", f"{d}/graph.json"]) == 0
        assert cli.main(["extract", f"{d}/graph.json", *common, "-o", f"{d}/labels.json"]) == 0
        labels.append(f"{d}/labels.json")
        if sha != PLAIN_SHA:
            assert cli.main(["generate", f"{d}/labels.json", *common, "-o", f"{d}/report.json",
                             "--markdown", f"{d}/report.md"]) == 0
    assert cli.main(["evaluate", *labels, "--corpus", CORPUS, "-o", "metrics.json"]) == 0


def _load_report(data, commit):
    return RationaleReport(
        commit=commit,
        summaries={RationaleComponent(k): ComponentSummary(v["text"], tuple(v["supporting"]))
                   for k, v in data["summaries"].items()},
        strategy=PromptStrategy(data["strategy"]),
        model=ModelSpec.from_dict(data["model"]),
        citations={sid: Sentence.from_dict(v) for sid, v in data["citations"].items()},
    )


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    mp = pytest.MonkeyPatch()
    trees = []
    try:
        for name in ("first", "second"):
            work = tmp_path_factory.mktemp(name)
            _run_pipeline(work, mp)
            trees.append(_tree(work))
    finally:
        mp.undo()
    return trees


def test_two_runs_are_byte_identical(two_runs):
    first, second = two_runs
    assert first == second


def test_outputs_match_reviewed_golden(two_runs):
    assert two_runs[0] == _tree(GOLDEN)


def test_report_invariants(two_runs):
    files = two_runs[0]
    for _, sha in E2E_COMMITS:
        d = sha[:7]
        graph = ArtifactGraph.loads(files[f"{d}/graph.json"].decode())
        assert graph.check() == []
        labels = json.loads(files[f"{d}/labels.json"])
        assert labels["format"] == pipeline.LABELS_FORMAT
        assert len(labels["per_run"]) == labels["voting"]["runs"] == 3
        if sha == PLAIN_SHA:
            assert not any(s["labels"] for s in labels["labeled_sentences"])
            assert f"{d}/report.json" not in files
            continue
        commit, labeled = pipeline.read_labels(labels)
        report = _load_report(json.loads(files[f"{d}/report.json"]), commit)
        assert report.commit_sha == sha
        assert report_violations(report, labeled) == []
        md = files[f"{d}/report.md"].decode()
        for sid in report.citations:
            assert f"[^{sid}]:" in md


def test_pooled_metrics(two_runs):
    overall = json.loads(two_runs[0]["metrics.json"])["pooled"]["overall"]
    assert (overall["tp"], overall["fp"], overall["fn"]) == (20, 2, 1)
    assert overall["f2"] == pytest.approx(5 * 20 / (5 * 20 + 4 * 1 + 2))

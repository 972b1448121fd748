"""Stage functions shared by the CLI and the end-to-end tests.

Every stage reads and writes plain JSON so any step can be re-run or inspected.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Sequence

from .config import RunConfig
from .errors import IdMismatch
from .evalkit import classification_report, merge_reports
from .extractor import ExemplarCommit, PromptStrategy, classify, default_rules, load_exemplars, majority_vote
from .gateway import Gateway
from .generator import RationaleReport, generate
from .model import Commit, LabeledSentence, Sentence
from .platform import PlatformClient
from .retriever import ArtifactGraph, build_graph
from .segmenter import SegmenterConfig, segment

LABELS_FORMAT = "rationale-forge/labels-v1"


def digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dumps(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def link(repo_slug: str, sha: str, cfg: RunConfig, platform: PlatformClient | None = None) -> ArtifactGraph:
    platform = platform or PlatformClient(repo_slug, mode=cfg.http_mode, cache_dir=cfg.cache_dir)
    commit = platform.get_commit(sha)
    return build_graph(commit, platform, cfg.parallelism)


def graph_sentences(graph: ArtifactGraph, seg: SegmenterConfig) -> list[Sentence]:
    out: list[Sentence] = []
    for art in graph.artifacts:
        out.extend(segment(art, seg))
    return out


def _exemplars(cfg: RunConfig, needed: bool) -> list[ExemplarCommit]:
    return load_exemplars(cfg.exemplars) if needed else []


def extract(graph: ArtifactGraph, cfg: RunConfig, gateway: Gateway) -> dict[str, Any]:
    """Labels document for one graph: per-run labels plus voted sentences."""
    sentences = graph_sentences(graph, cfg.segmenter)
    strategy = cfg.ci_strategy
    runs = classify(
        graph.commit, sentences, strategy, cfg.voting, gateway, cfg.model,
        exemplars=_exemplars(cfg, strategy.uses_exemplars),
        rules=default_rules() if strategy is PromptStrategy.CI_RFS else (),
        budget=cfg.token_budget,
        parallelism=min(cfg.parallelism, cfg.voting.runs),
    )
    voted = majority_vote(runs, cfg.voting)
    return {
        "format": LABELS_FORMAT,
        "commit": graph.commit.to_dict(),
        "strategy": strategy.value,
        "model": cfg.model.to_dict(),
        "voting": {"runs": cfg.voting.runs, "threshold": cfg.voting.threshold},
        "per_run": runs.to_dict()["per_run"],
        "notes": list(runs.notes),
        "labeled_sentences": [ls.to_dict() for ls in voted],
    }


def read_labels(data: dict[str, Any]) -> tuple[Commit, list[LabeledSentence]]:
    return Commit.from_dict(data["commit"]), [LabeledSentence.from_dict(d) for d in data["labeled_sentences"]]


def generate_report(labels: dict[str, Any], cfg: RunConfig, gateway: Gateway) -> RationaleReport:
    commit, labeled = read_labels(labels)
    strategy = cfg.cg_strategy
    return generate(
        commit, labeled, strategy, gateway, cfg.model,
        exemplars=_exemplars(cfg, strategy.uses_exemplars),
        budget=cfg.token_budget,
    )


def evaluate_predictions(
    predictions: Sequence[dict[str, Any]], gold: dict[str, Sequence[LabeledSentence]]
) -> dict[str, Any]:
    """Per-commit and pooled classification metrics."""
    per_commit = {}
    for doc in predictions:
        commit, labeled = read_labels(doc)
        if commit.sha not in gold:
            raise IdMismatch(f"no ground truth for commit {commit.sha}")
        per_commit[commit.sha] = classification_report(labeled, gold[commit.sha])
    pooled = merge_reports(per_commit.values())
    return {
        "per_commit": {sha: r.to_dict() for sha, r in sorted(per_commit.items())},
        "pooled": pooled.to_dict(),
    }


def gateway_for(cfg: RunConfig) -> Gateway:
    return Gateway(cfg.cache_dir, cfg.mode)


"""Sentence-level rationale identification: prompt assembly, repeated runs
and per-component majority voting."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import InputContractError, MissingExplanations, PromptTooLarge
from .gateway import OUTPUT_FORMAT_VERSION, CompletionRequest, Gateway, LabelParse, ModelSpec, parse_labeled_output
from .model import (
    Commit,
    LabeledSentence,
    RationaleComponent,
    Sentence,
    extraction_targets,
    group_by_artifact,
    sentence_ids,
    sort_components,
)

logger = logging.getLogger(__name__)

DEFAULT_PROMPT_BUDGET = 100_000  # characters, system + user


class PromptStrategy(str, Enum):
    CI_ZS = "ci-zs"
    CI_FS = "ci-fs"
    CI_RFS = "ci-rfs"
    CG_ZS = "cg-zs"
    CG_FS = "cg-fs"

    @property
    def is_identification(self) -> bool:
        return self.value.startswith("ci-")

    @property
    def uses_exemplars(self) -> bool:
        return self in (PromptStrategy.CI_FS, PromptStrategy.CI_RFS, PromptStrategy.CG_FS)


# bundled assets ------------------------------------------------------------------


def asset_text(name: str) -> str:
    return resources.files("rationale_forge").joinpath("assets").joinpath(name).read_text(encoding="utf-8")


def component_definitions() -> str:
    return asset_text("definitions.txt").strip()


def default_rules() -> list[str]:
    lines = asset_text("ci_rules.txt").splitlines()
    return [ln[2:].strip() for ln in lines if ln.startswith("- ")]


@dataclass(frozen=True)
class ExemplarCommit:
    commit: Commit
    sentences: tuple[LabeledSentence, ...]
    explanations: Mapping[str, str] = field(default_factory=dict)
    reference_summaries: Mapping[RationaleComponent, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sentences", tuple(self.sentences))

    def ids(self) -> dict[str, LabeledSentence]:
        by_key = {ls.sentence.key: ls for ls in self.sentences}
        return {sid: by_key[s.key] for sid, s in sentence_ids(ls.sentence for ls in self.sentences).items()}

    def missing_explanations(self) -> list[str]:
        return [sid for sid, ls in self.ids().items() if ls.labels and not self.explanations.get(sid, "").strip()]

    def to_dict(self) -> dict[str, Any]:
        return {
            "commit": self.commit.to_dict(),
            "sentences": [ls.to_dict() for ls in self.sentences],
            "explanations": dict(sorted(self.explanations.items())),
            "reference_summaries": {c.value: t for c, t in self.reference_summaries.items()},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExemplarCommit:
        return cls(
            commit=Commit.from_dict(data["commit"]),
            sentences=tuple(LabeledSentence.from_dict(s) for s in data["sentences"]),
            explanations=dict(data.get("explanations", {})),
            reference_summaries={RationaleComponent(k): v for k, v in data.get("reference_summaries", {}).items()},
        )


def load_exemplars(directory: str | Path | None = None) -> list[ExemplarCommit]:
    """Exemplar pack: every ``*.json`` in ``directory`` (bundled pack by default), sorted by name."""
    if directory is None:
        root = resources.files("rationale_forge").joinpath("assets").joinpath("exemplars")
        files = sorted((p for p in root.iterdir() if p.name.endswith(".json")), key=lambda p: p.name)
        return [ExemplarCommit.from_dict(json.loads(p.read_text(encoding="utf-8"))) for p in files]
    return [ExemplarCommit.from_dict(json.loads(p.read_text(encoding="utf-8"))) for p in sorted(Path(directory).glob("*.json"))]


# prompt assembly -------------------------------------------------------------------


def _labels_text(labels: Iterable[RationaleComponent]) -> str:
    return "[" + ", ".join(c.value for c in sort_components(labels)) + "]"


def render_sentences(sentences: Sequence[Sentence], labels: Mapping[tuple, frozenset] | None = None) -> str:
    """Sentences grouped by artifact with ``a<i>s<j>`` ids, optionally with their labels."""
    lines = []
    for ai, (ref, items) in enumerate(group_by_artifact(sentences)):
        lines.append(f"### a{ai} {ref.kind.value} {ref.locator}")
        for s in items:
            suffix = f" {_labels_text(labels[s.key])}" if labels is not None else ""
            lines.append(f"a{ai}s{s.ordinal}: {s.text}{suffix}")
        lines.append("")
    return "\n".join(lines).rstrip()


def render_diff(diff: str) -> str:
    return f"```diff\n{diff.rstrip()}\n```"


_CI_SYSTEM = (
    "You annotate software development artifacts with code change rationale components. "
    f"Answer only in the requested output format ({OUTPUT_FORMAT_VERSION})."
)

_CI_TASK = (
    "## Task\n"
    "A commit and the sentences of its linked artifacts (commit message, issues, pull requests, "
    "code reviews, Javadocs, inline comments) are given below. For every sentence, decide which of "
    "the rationale components Goal, Need and Alternatives it expresses. A sentence may express "
    "several components or none."
)

_CI_OUTPUT = (
    "## Output format\n"
    "Return one fenced block with exactly one line per sentence id, in input order:\n"
    "```\n"
    "<sentence id> -> [<comma-separated components, or nothing>]\n"
    "```\n"
    "Use only the labels Goal, Need, Alternatives. Example lines: `a0s0 -> [Goal]`, `a1s2 -> []`."
)


def render_exemplars(exemplars: Sequence[ExemplarCommit], with_explanations: bool, with_summaries: bool) -> str:
    parts = ["## Examples"]
    for n, ex in enumerate(exemplars, 1):
        ids = ex.ids()
        sents = [ls.sentence for ls in ex.sentences]
        parts.append(f"### Example {n}: {ex.commit.repo_slug}@{ex.commit.short_sha}")
        parts.append("Commit diff:\n" + render_diff(ex.commit.diff))
        if with_summaries:
            labels = {ls.sentence.key: ls.labels for ls in ex.sentences}
            parts.append("Labeled sentences:\n" + render_sentences(sents, labels))
            summaries = "\n".join(
                f"{c.value}: {ex.reference_summaries[c]}"
                for c in sort_components(ex.reference_summaries)
            )
            parts.append("Reference summaries:\n" + summaries)
            continue
        parts.append("Sentences:\n" + render_sentences(sents))
        parts.append("Labels:\n" + "\n".join(f"{sid} -> {_labels_text(ls.labels)}" for sid, ls in ids.items()))
        if with_explanations:
            expl = [f"{sid}: {ex.explanations[sid].strip()}" for sid in ids if ex.explanations.get(sid, "").strip()]
            parts.append("Explanations:\n" + "\n".join(expl))
    return "\n\n".join(parts)


def check_budget(system_text: str, user_text: str, budget: int) -> None:
    size = len(system_text) + len(user_text)
    if size > budget:
        raise PromptTooLarge(f"prompt is {size} characters, budget is {budget}")


def build_identification_prompt(
    commit: Commit,
    sentences: Sequence[Sentence],
    strategy: PromptStrategy,
    exemplars: Sequence[ExemplarCommit] = (),
    rules: Sequence[str] = (),
    budget: int = DEFAULT_PROMPT_BUDGET,
) -> tuple[str, str]:
    strategy = PromptStrategy(strategy)
    if not strategy.is_identification:
        raise InputContractError(f"{strategy.value} is a generation strategy")
    if strategy is PromptStrategy.CI_ZS and exemplars:
        raise InputContractError("zero-shot prompts take no exemplars")
    if strategy.uses_exemplars and len(exemplars) != 2:
        raise InputContractError(f"{strategy.value} needs exactly 2 exemplars, got {len(exemplars)}")
    if strategy is PromptStrategy.CI_RFS:
        for ex in exemplars:
            missing = ex.missing_explanations()
            if missing:
                raise MissingExplanations(f"exemplar {ex.commit.short_sha} lacks explanations for {missing}")
        if not rules:
            raise InputContractError("ci-rfs needs at least one decision rule")

    sections = [_CI_TASK, "## Component definitions\n" + component_definitions()]
    if strategy.uses_exemplars:
        sections.append(render_exemplars(exemplars, strategy is PromptStrategy.CI_RFS, False))
    if strategy is PromptStrategy.CI_RFS:
        sections.append("## Decision rules\n" + "\n".join(f"- {r}" for r in rules))
    sections.append(f"## Commit diff\nCommit {commit.repo_slug}@{commit.sha}\n" + render_diff(commit.diff))
    sections.append("## Sentences\n" + render_sentences(sentences))
    sections.append(_CI_OUTPUT)
    user = "\n\n".join(sections) + "\n"
    check_budget(_CI_SYSTEM, user, budget)
    return _CI_SYSTEM, user


# runs and voting ---------------------------------------------------------------------


@dataclass(frozen=True)
class VotingPolicy:
    runs: int = 3
    threshold: int = 2

    def __post_init__(self) -> None:
        if not 1 <= self.threshold <= self.runs:
            raise ValueError(f"need 1 <= threshold <= runs, got {self.threshold}/{self.runs}")


@dataclass(frozen=True)
class RunSet:
    commit: str
    strategy: PromptStrategy
    sentences: dict[str, Sentence]
    per_run: tuple[dict[str, frozenset[RationaleComponent]], ...]
    notes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        ids = set(self.sentences)
        for i, run in enumerate(self.per_run):
            if set(run) != ids:
                raise ValueError(f"run {i} covers different sentence ids")

    def to_dict(self) -> dict[str, Any]:
        return {
            "commit": self.commit,
            "strategy": self.strategy.value,
            "sentences": {sid: s.to_dict() for sid, s in self.sentences.items()},
            "per_run": [{sid: [c.value for c in sort_components(v)] for sid, v in run.items()} for run in self.per_run],
            "notes": list(self.notes),
        }


def vote(label_sets: Sequence[Iterable[RationaleComponent]], threshold: int) -> frozenset[RationaleComponent]:
    """Components present in at least ``threshold`` of the runs."""
    counts: dict[RationaleComponent, int] = {}
    for labels in label_sets:
        for c in labels if isinstance(labels, (set, frozenset)) else set(labels):
            counts[c] = counts.get(c, 0) + 1
    return frozenset(c for c, n in counts.items() if n >= threshold)


def majority_vote(runs: RunSet, policy: VotingPolicy = VotingPolicy()) -> list[LabeledSentence]:
    if len(runs.per_run) != policy.runs:
        raise ValueError(f"run set has {len(runs.per_run)} runs, policy expects {policy.runs}")
    return [
        LabeledSentence(s, vote([run[sid] for run in runs.per_run], policy.threshold))
        for sid, s in runs.sentences.items()
    ]


def classify(
    commit: Commit,
    sentences: Sequence[Sentence],
    strategy: PromptStrategy,
    policy: VotingPolicy,
    gateway: Gateway,
    model: ModelSpec,
    exemplars: Sequence[ExemplarCommit] = (),
    rules: Sequence[str] = (),
    budget: int = DEFAULT_PROMPT_BUDGET,
    parallelism: int = 1,
) -> RunSet:
    """Run the identification prompt ``policy.runs`` times and parse every answer."""
    strategy = PromptStrategy(strategy)
    ids = sentence_ids(sentences)
    if not ids:
        return RunSet(commit.sha, strategy, {}, tuple({} for _ in range(policy.runs)))
    system, user = build_identification_prompt(commit, sentences, strategy, exemplars, rules, budget)
    targets = frozenset(extraction_targets())
    expected = list(ids)

    def one(run_index: int) -> LabelParse:
        req = CompletionRequest(model, system, user, run_index)
        return parse_labeled_output(gateway.complete(req).raw_text, expected)

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            parses = list(pool.map(one, range(policy.runs)))
    else:
        parses = [one(i) for i in range(policy.runs)]

    notes = []
    per_run = []
    for i, p in enumerate(parses):
        notes.extend(f"run {i}: {n}" for n in p.notes)
        per_run.append({sid: labels & targets for sid, labels in p.labels.items()})
    for n in notes:
        logger.info("%s: %s", commit.short_sha, n)
    return RunSet(commit.sha, strategy, ids, tuple(per_run), tuple(notes))

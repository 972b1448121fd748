"""Per-component rationale summaries from voted sentences, with citations."""

from __future__ import annotations

import itertools
import json
import logging
import re
import statistics
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import InputContractError, NoRationaleInput, UnparseableOutput
from .extractor import (
    DEFAULT_PROMPT_BUDGET,
    ExemplarCommit,
    PromptStrategy,
    render_exemplars,
    check_budget,
    component_definitions,
    render_diff,
)
from .gateway import CompletionRequest, Embedder, Gateway, ModelSpec
from .model import (
    Commit,
    LabeledSentence,
    RationaleComponent,
    Sentence,
    extraction_targets,
    sentence_ids,
    sort_components,
)

logger = logging.getLogger(__name__)

MAX_SUMMARY_SENTENCES = 3

_CG_SYSTEM = (
    "You write short, factual rationale summaries for code changes from labeled artifact sentences. "
    "Answer only with the requested JSON object."
)

_CG_TASK = (
    "## Task\n"
    "The sentences below were taken from the artifacts linked to a commit and labeled with the "
    "rationale components they express. Summarize the rationale of the commit per component, using only "
    "information from the labeled sentences and the diff."
)


@dataclass(frozen=True)
class ComponentSummary:
    text: str
    supporting: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"text": self.text, "supporting": list(self.supporting)}


@dataclass(frozen=True)
class RationaleReport:
    commit: Commit
    summaries: dict[RationaleComponent, ComponentSummary]
    strategy: PromptStrategy
    model: ModelSpec
    citations: dict[str, Sentence] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    @property
    def commit_sha(self) -> str:
        return self.commit.sha

    def to_dict(self) -> dict[str, Any]:
        return {
            "commit_sha": self.commit.sha,
            "repo_slug": self.commit.repo_slug,
            "strategy": self.strategy.value,
            "model": self.model.to_dict(),
            "summaries": {c.value: self.summaries[c].to_dict() for c in sort_components(self.summaries)},
            "citations": {sid: s.to_dict() for sid, s in sorted(self.citations.items())},
            "warnings": list(self.warnings),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def to_markdown(self) -> str:
        lines = [f"# Rationale for {self.commit.repo_slug}@{self.commit.short_sha}", ""]
        cited: list[str] = []
        for comp in sort_components(self.summaries):
            s = self.summaries[comp]
            refs = "".join(f"[^{sid}]" for sid in s.supporting)
            lines += [f"## {comp.value}", "", f"{s.text}{refs}", ""]
            cited += [sid for sid in s.supporting if sid not in cited]
        for sid in cited:
            sent = self.citations[sid]
            where = f"{sent.artifact.kind.value} {sent.artifact.locator}"
            url = f" <{sent.artifact.url}>" if sent.artifact.url else ""
            lines.append(f'[^{sid}]: {where}: "{sent.text}"{url}')
        return "\n".join(lines).rstrip() + "\n"


def report_violations(report: RationaleReport, labeled: Sequence[LabeledSentence]) -> list[str]:
    """Component-key and supporting-id soundness against the generator input."""
    ids = sentence_ids(ls.sentence for ls in labeled)
    labels = {ls.sentence.key: ls.labels for ls in labeled}
    present = {c for ls in labeled for c in ls.labels} & set(extraction_targets())
    problems = []
    if set(report.summaries) != present:
        problems.append(f"components {sorted(c.value for c in report.summaries)} != input {sorted(c.value for c in present)}")
    for comp, s in report.summaries.items():
        for sid in s.supporting:
            if sid not in ids or comp not in labels[ids[sid].key]:
                problems.append(f"{comp.value} cites {sid}, which is not labeled {comp.value}")
    return problems


# prompt -------------------------------------------------------------------------------


def _output_instructions(components: Sequence[RationaleComponent]) -> str:
    names = ", ".join(c.value for c in components)
    skeleton = {c.value: {"summary": "...", "sources": ["<sentence id>"]} for c in components}
    return (
        "## Output format\n"
        f"Write a summary only for these components: {names}. Each summary has at most "
        f"{MAX_SUMMARY_SENTENCES} sentences. List in \"sources\" the ids of the labeled sentences that "
        "support it; cite only sentences carrying that component's label. Return one fenced JSON block:\n"
        "```json\n" + json.dumps(skeleton, indent=2) + "\n```"
    )


def build_generation_prompt(
    commit: Commit,
    labeled: Sequence[LabeledSentence],
    strategy: PromptStrategy,
    exemplars: Sequence[ExemplarCommit] = (),
    budget: int = DEFAULT_PROMPT_BUDGET,
) -> tuple[str, str]:
    strategy = PromptStrategy(strategy)
    if strategy not in (PromptStrategy.CG_ZS, PromptStrategy.CG_FS):
        raise InputContractError(f"{strategy.value} is not a generation strategy")
    if strategy is PromptStrategy.CG_ZS and exemplars:
        raise InputContractError("zero-shot prompts take no exemplars")
    if strategy is PromptStrategy.CG_FS:
        if len(exemplars) != 2:
            raise InputContractError(f"cg-fs needs exactly 2 exemplars, got {len(exemplars)}")
        for ex in exemplars:
            if not ex.reference_summaries:
                raise InputContractError(f"exemplar {ex.commit.short_sha} has no reference summaries")
    components = _input_components(labeled)
    if not components:
        raise NoRationaleInput("no sentence carries a Goal, Need or Alternatives label")

    # ids are assigned over the full input so they match the extraction stage
    ids = sentence_ids(ls.sentence for ls in labeled)
    labels = {ls.sentence.key: ls.labels for ls in labeled}
    rendered = _render_labeled([(sid, s) for sid, s in ids.items() if labels[s.key] & set(components)], labels)

    sections = [_CG_TASK, "## Component definitions\n" + component_definitions()]
    if strategy is PromptStrategy.CG_FS:
        sections.append(render_exemplars(exemplars, False, True))
    sections.append(f"## Commit diff\nCommit {commit.repo_slug}@{commit.sha}\n" + render_diff(commit.diff))
    sections.append("## Labeled sentences\n" + rendered)
    sections.append(_output_instructions(components))
    user = "\n\n".join(sections) + "\n"
    check_budget(_CG_SYSTEM, user, budget)
    return _CG_SYSTEM, user


def _render_labeled(items: list[tuple[str, Sentence]], labels: Mapping[tuple, frozenset]) -> str:
    out: list[str] = []
    current = None
    for sid, s in items:
        art = sid.split("s")[0]
        if art != current:
            if out:
                out.append("")
            out.append(f"### {art} {s.artifact.kind.value} {s.artifact.locator}")
            current = art
        names = ", ".join(c.value for c in sort_components(labels[s.key] & set(extraction_targets())))
        out.append(f"{sid}: {s.text} [{names}]")
    return "\n".join(out)


def _input_components(labeled: Sequence[LabeledSentence]) -> list[RationaleComponent]:
    present = {c for ls in labeled for c in ls.labels}
    return [c for c in extraction_targets() if c in present]


# output handling ---------------------------------------------------------------------


_JSON_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def parse_summary_output(raw: str) -> dict[str, Any]:
    """The JSON object in the first fenced block, or the outermost braces."""
    candidates = [m.group(1) for m in _JSON_FENCE.finditer(raw)]
    if "{" in raw and "}" in raw:
        candidates.append(raw[raw.index("{") : raw.rindex("}") + 1])
    for c in candidates:
        try:
            data = json.loads(c)
        except json.JSONDecodeError:
            continue
        if isinstance(data, dict):
            return data
    raise UnparseableOutput("no JSON object found in generation output")


def _component_from_key(key: str) -> RationaleComponent | None:
    norm = re.sub(r"[^a-z]", "", key.lower())
    for c in RationaleComponent:
        if re.sub(r"[^a-z]", "", c.value.lower()) == norm:
            return c
    return None


def _filter(
    data: dict[str, Any], components: Sequence[RationaleComponent], valid: Mapping[RationaleComponent, set[str]]
) -> tuple[dict[RationaleComponent, ComponentSummary], list[str], list[str]]:
    """Keep requested components and valid citations; return (summaries, warnings, problems)."""
    kept: dict[RationaleComponent, ComponentSummary] = {}
    warnings: list[str] = []
    problems: list[str] = []
    for key, value in data.items():
        comp = _component_from_key(str(key))
        if comp not in components:
            warnings.append(f"dropped {key!r}: no input sentence carries that label")
            continue
        if isinstance(value, str):
            value = {"summary": value}
        text = str((value or {}).get("summary", "")).strip() if isinstance(value, dict) else ""
        if not text:
            continue
        sources = value.get("sources") or []
        if not isinstance(sources, list):
            sources = [sources]
        supporting = []
        for sid in map(str, sources):
            if sid in valid[comp] and sid not in supporting:
                supporting.append(sid)
            else:
                warnings.append(f"{comp.value}: dropped invalid citation {sid!r}")
        kept[comp] = ComponentSummary(text, tuple(supporting))
    for comp in components:
        if comp not in kept:
            problems.append(f"the {comp.value} summary is missing")
        elif not kept[comp].supporting:
            problems.append(f"the {comp.value} summary cites no valid sentence id")
    return kept, warnings, problems


def _repair_prompt(user: str, raw: str, problems: Sequence[str]) -> str:
    return (
        user
        + "\n## Previous answer\n"
        + raw.strip()
        + "\n\n## Problems with the previous answer\n"
        + "\n".join(f"- {p}" for p in problems)
        + "\n\nReturn the corrected JSON block only.\n"
    )


def generate(
    commit: Commit,
    labeled: Sequence[LabeledSentence],
    strategy: PromptStrategy,
    gateway: Gateway,
    model: ModelSpec,
    exemplars: Sequence[ExemplarCommit] = (),
    budget: int = DEFAULT_PROMPT_BUDGET,
    run_index: int = 0,
) -> RationaleReport:
    strategy = PromptStrategy(strategy)
    system, user = build_generation_prompt(commit, labeled, strategy, exemplars, budget)
    components = _input_components(labeled)
    ids = sentence_ids(ls.sentence for ls in labeled)
    labels = {ls.sentence.key: ls.labels for ls in labeled}
    valid = {c: {sid for sid, s in ids.items() if c in labels[s.key]} for c in components}

    raw = gateway.complete(CompletionRequest(model, system, user, run_index)).raw_text
    warnings: list[str] = []
    try:
        summaries, w, problems = _filter(parse_summary_output(raw), components, valid)
    except UnparseableOutput:
        summaries, w, problems = {}, [], ["the answer did not contain a parseable JSON object"]
        parse_failed = True
    else:
        parse_failed = False
    warnings += w

    if problems:
        repair_user = _repair_prompt(user, raw, problems)
        raw2 = gateway.complete(CompletionRequest(model, system, repair_user, run_index)).raw_text
        try:
            data2 = parse_summary_output(raw2)
        except UnparseableOutput:
            if parse_failed:
                raise
            warnings.append("repair answer unparseable; kept the first answer")
        else:
            repaired, w2, _ = _filter(data2, components, valid)
            warnings += [f"after repair: {x}" for x in w2]
            for comp in components:
                old = summaries.get(comp)
                new = repaired.get(comp)
                if new is not None and (old is None or (not old.supporting and new.supporting)):
                    summaries[comp] = new

    for comp in components:
        if comp not in summaries:
            sids = sorted(valid[comp], key=list(ids).index)
            text = " ".join(ids[sid].text for sid in sids)
            summaries[comp] = ComponentSummary(text, tuple(sids))
            warnings.append(f"{comp.value}: model gave no summary; fell back to the labeled sentences")
        elif not summaries[comp].supporting:
            warnings.append(f"{comp.value}: summary kept without supporting ids")
    for w in warnings:
        logger.warning("%s: %s", commit.short_sha, w)
    cited = {sid for s in summaries.values() for sid in s.supporting}
    return RationaleReport(
        commit=commit,
        summaries={c: summaries[c] for c in components},
        strategy=strategy,
        model=model,
        citations={sid: ids[sid] for sid in sorted(cited)},
        warnings=tuple(warnings),
    )


# cross-run consistency ----------------------------------------------------------------


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    a, b = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine of a zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class ConsistencyReport:
    per_component: dict[RationaleComponent, tuple[float, ...]]
    median: float | None
    min: float | None
    max: float | None

    @property
    def pairwise_cosine(self) -> list[float]:
        return [v for c in sort_components(self.per_component) for v in self.per_component[c]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_component": {c.value: list(v) for c, v in self.per_component.items()},
            "median": self.median, "min": self.min, "max": self.max,
        }


def consistency(reports: Sequence[RationaleReport], embedder: Embedder) -> ConsistencyReport:
    """Pairwise cosine similarity of each component's summary across runs."""
    if len(reports) < 2:
        raise InputContractError("consistency needs at least two reports")
    shas = {r.commit.sha for r in reports}
    if len(shas) != 1 or len({r.strategy for r in reports}) != 1:
        raise InputContractError("reports must share commit and strategy")
    per: dict[RationaleComponent, tuple[float, ...]] = {}
    for comp in extraction_targets():
        values = []
        for a, b in itertools.combinations(reports, 2):
            if comp in a.summaries and comp in b.summaries:
                values.append(cosine(embedder.embed(a.summaries[comp].text), embedder.embed(b.summaries[comp].text)))
        if values:
            per[comp] = tuple(values)
    flat = [v for vs in per.values() for v in vs]
    if not flat:
        return ConsistencyReport(per, None, None, None)
    return ConsistencyReport(per, statistics.median(flat), min(flat), max(flat))

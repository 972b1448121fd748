"""Ground-truth corpus: schema, persistence, commit-population filters and sampling."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import jsonschema

from .errors import InsufficientCandidates, SchemaViolation
from .evalkit import SizeFilterStats, iqr_fences
from .model import Artifact, Commit, LabeledSentence, RationaleComponent, sort_components

logger = logging.getLogger(__name__)


class Split(str, Enum):
    DEV = "dev"
    EVAL = "eval"


@dataclass(frozen=True)
class GroundTruthRecord:
    commit: Commit
    artifacts: tuple[Artifact, ...]
    labeled_sentences: tuple[LabeledSentence, ...]
    reference_summaries: Mapping[RationaleComponent, str] = field(default_factory=dict)
    split: Split = Split.EVAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "artifacts", tuple(self.artifacts))
        object.__setattr__(self, "labeled_sentences", tuple(self.labeled_sentences))
        object.__setattr__(self, "split", Split(self.split))

    def labeled_components(self) -> set[RationaleComponent]:
        return {c for ls in self.labeled_sentences for c in ls.labels}

    def to_dict(self) -> dict[str, Any]:
        return {
            "commit": self.commit.to_dict(),
            "artifacts": [a.to_dict() for a in self.artifacts],
            "labeled_sentences": [ls.to_dict() for ls in self.labeled_sentences],
            "reference_summaries": {c.value: self.reference_summaries[c] for c in sort_components(self.reference_summaries)},
            "split": self.split.value,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> GroundTruthRecord:
        return cls(
            commit=Commit.from_dict(data["commit"]),
            artifacts=tuple(Artifact.from_dict(a) for a in data["artifacts"]),
            labeled_sentences=tuple(LabeledSentence.from_dict(s) for s in data["labeled_sentences"]),
            reference_summaries={RationaleComponent(k): v for k, v in data["reference_summaries"].items()},
            split=Split(data["split"]),
        )


_COMPONENTS = [c.value for c in RationaleComponent]
_REF = {
    "type": "object",
    "required": ["kind", "locator"],
    "properties": {"kind": {"type": "string"}, "locator": {"type": "string"}, "url": {"type": "string"}},
}
RECORD_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["commit", "artifacts", "labeled_sentences", "reference_summaries", "split"],
    "additionalProperties": False,
    "properties": {
        "commit": {
            "type": "object",
            "required": ["repo_slug", "sha"],
            "properties": {
                "repo_slug": {"type": "string", "pattern": r"^[\w.-]+/[\w.-]+$"},
                "sha": {"type": "string", "pattern": "^[0-9a-f]{40}$"},
                "message": {"type": "string"},
                "diff": {"type": "string"},
                "changed_files": {"type": "array"},
            },
        },
        "artifacts": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["ref", "body_blocks"],
                "properties": {"ref": _REF, "title": {"type": "string"}, "body_blocks": {"type": "array"}},
            },
        },
        "labeled_sentences": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["sentence", "labels"],
                "properties": {
                    "sentence": {
                        "type": "object",
                        "required": ["artifact", "ordinal", "text"],
                        "properties": {
                            "artifact": _REF,
                            "ordinal": {"type": "integer", "minimum": 0},
                            "text": {"type": "string", "minLength": 1},
                        },
                    },
                    "labels": {"type": "array", "items": {"enum": _COMPONENTS}, "uniqueItems": True},
                },
            },
        },
        "reference_summaries": {
            "type": "object",
            "propertyNames": {"enum": _COMPONENTS},
            "additionalProperties": {"type": "string"},
        },
        "split": {"enum": [s.value for s in Split]},
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(RECORD_SCHEMA)


def validate_record(data: Any, index: int | None = None) -> GroundTruthRecord:
    """Schema check plus the summary/label invariant; errors carry a field path."""
    errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path)
        raise SchemaViolation(err.message, index, path)
    try:
        record = GroundTruthRecord.from_dict(data)
    except (ValueError, KeyError) as exc:
        raise SchemaViolation(str(exc), index, "") from exc
    labeled = record.labeled_components()
    for comp in sort_components(record.reference_summaries):
        if comp not in labeled:
            raise SchemaViolation(
                f"summary for {comp.value}, which no labeled sentence carries", index, f"reference_summaries/{comp.value}"
            )
    return record


def _dumps(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def record_path(root: Path, commit: Commit) -> Path:
    return root / commit.repo_slug / commit.sha / "record.json"


def save_corpus(records: Sequence[GroundTruthRecord], path: str | Path) -> None:
    """Write one ``record.json`` per commit plus ``index.json``; a persisted split never changes."""
    root = Path(path)
    index = []
    for i, rec in enumerate(records):
        data = rec.to_dict()
        validate_record(data, i)
        target = record_path(root, rec.commit)
        if target.exists():
            old = json.loads(target.read_text(encoding="utf-8")).get("split")
            if old != rec.split.value:
                raise SchemaViolation(f"split of {rec.commit.short_sha} is fixed as {old!r}", i, "split")
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(_dumps(data), encoding="utf-8")
        index.append({
            "repo_slug": rec.commit.repo_slug,
            "sha": rec.commit.sha,
            "split": rec.split.value,
            "path": target.relative_to(root).as_posix(),
        })
    root.mkdir(parents=True, exist_ok=True)
    (root / "index.json").write_text(_dumps({"records": index}), encoding="utf-8")


def load_corpus(path: str | Path) -> list[GroundTruthRecord]:
    root = Path(path)
    index_file = root / "index.json"
    if not index_file.exists():
        raise SchemaViolation(f"{index_file} not found", None, "index.json")
    entries = json.loads(index_file.read_text(encoding="utf-8")).get("records", [])
    out = []
    for i, entry in enumerate(entries):
        data = json.loads((root / entry["path"]).read_text(encoding="utf-8"))
        rec = validate_record(data, i)
        if rec.split.value != entry.get("split"):
            raise SchemaViolation("split disagrees with index.json", i, "split")
        out.append(rec)
    return out


# population filters -----------------------------------------------------------------


class RemovalReason(str, Enum):
    NO_JAVA_FILE = "NoJavaFile"
    NON_ATOMIC = "NonAtomic"
    FILE_COUNT_OUTLIER = "FileCountOutlier"
    LOC_OUTLIER = "LocOutlier"


@dataclass(frozen=True)
class FilterResult:
    kept: list[Commit]
    removed: list[tuple[Commit, RemovalReason]]
    file_stats: SizeFilterStats | None = None
    loc_stats: SizeFilterStats | None = None

    def count(self, reason: RemovalReason) -> int:
        return sum(r is reason for _, r in self.removed)


def filter_commits(commits: Iterable[Commit], k: float = 1.5, non_atomic: Iterable[str] = ()) -> FilterResult:
    """Language, atomicity, file-count IQR, then LOC IQR; fences are recomputed after each step.

    ``non_atomic`` holds the shas judged non-atomic by a human reviewer.
    """
    flagged = set(non_atomic)
    pool = list(commits)
    removed: list[tuple[Commit, RemovalReason]] = []

    def split(pred, reason: RemovalReason) -> None:
        nonlocal pool
        keep = []
        for c in pool:
            if pred(c):
                removed.append((c, reason))
            else:
                keep.append(c)
        pool = keep

    split(lambda c: not c.java_paths(), RemovalReason.NO_JAVA_FILE)
    split(lambda c: c.sha in flagged, RemovalReason.NON_ATOMIC)
    file_stats = loc_stats = None
    if pool:
        file_stats = iqr_fences([len(c.changed_files) for c in pool], k)
        split(lambda c: file_stats.is_outlier(len(c.changed_files)), RemovalReason.FILE_COUNT_OUTLIER)
    if pool:
        loc_stats = iqr_fences([c.loc_changed for c in pool], k)
        split(lambda c: loc_stats.is_outlier(c.loc_changed), RemovalReason.LOC_OUTLIER)
    return FilterResult(pool, removed, file_stats, loc_stats)


def stratified_sample(commits: Iterable[Commit], per_project: Mapping[str, int], seed: int) -> list[Commit]:
    """Exactly ``per_project[p]`` commits from each project, reproducible for a fixed seed."""
    pools: dict[str, list[Commit]] = {}
    for c in commits:
        pools.setdefault(c.repo_slug, []).append(c)
    rng = random.Random(seed)
    out: list[Commit] = []
    for project in sorted(per_project):
        quota = per_project[project]
        if quota < 0:
            raise ValueError(f"negative quota for {project}")
        pool = sorted(pools.get(project, []), key=lambda c: c.sha)
        if quota > len(pool):
            raise InsufficientCandidates(f"{project}: quota {quota} exceeds {len(pool)} candidates")
        out.extend(sorted(rng.sample(pool, quota), key=lambda c: c.sha))
    return out

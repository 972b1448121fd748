"""Shared domain types: commits, artifacts, sentences and rationale labels.

All types are frozen dataclasses. Each carries ``to_dict``/``from_dict`` for
the canonical JSON record format used by graph, label and corpus files.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

SHA_RE = re.compile(r"^[0-9a-f]{40}$")
SLUG_RE = re.compile(r"^[\w.-]+/[\w.-]+$")


class RationaleComponent(str, Enum):
    GOAL = "Goal"
    NEED = "Need"
    ALTERNATIVES = "Alternatives"
    SELECTED_ALTERNATIVE = "SelectedAlternative"
    VALIDATION = "Validation"
    SIDE_EFFECTS = "SideEffects"
    MATURITY_STAGE = "MaturityStage"

    @property
    def is_target(self) -> bool:
        return self in _TARGETS


_TARGETS = (
    RationaleComponent.GOAL,
    RationaleComponent.NEED,
    RationaleComponent.ALTERNATIVES,
)
_COMPONENT_ORDER = {c: i for i, c in enumerate(RationaleComponent)}


def extraction_targets() -> list[RationaleComponent]:
    """The components the extractor and generator work on, in fixed order."""
    return list(_TARGETS)


def sort_components(components: Iterable[RationaleComponent]) -> list[RationaleComponent]:
    return sorted(components, key=_COMPONENT_ORDER.__getitem__)


class ArtifactKind(str, Enum):
    COMMIT_MESSAGE = "CommitMessage"
    ISSUE = "Issue"
    PULL_REQUEST = "PullRequest"
    CODE_REVIEW = "CodeReview"
    CLASS_JAVADOC = "ClassJavadoc"
    METHOD_JAVADOC = "MethodJavadoc"
    INLINE_COMMENT = "InlineComment"


_KIND_ORDER = {k: i for i, k in enumerate(ArtifactKind)}


class Relevance(str, Enum):
    UNKNOWN = "Unknown"
    RELEVANT = "Relevant"
    IRRELEVANT = "Irrelevant"


COMMIT_MESSAGE_LOCATOR = "commit-message"


@dataclass(frozen=True)
class ChangedFile:
    path: str
    language: str = ""
    added: int = 0
    removed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"path": self.path, "language": self.language, "added": self.added, "removed": self.removed}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ChangedFile:
        return cls(
            path=data["path"],
            language=data.get("language", ""),
            added=int(data.get("added", 0)),
            removed=int(data.get("removed", 0)),
        )


def language_for(path: str) -> str:
    ext = path.rsplit(".", 1)[-1].lower() if "." in path else ""
    return {"java": "java", "kt": "kotlin", "md": "markdown", "xml": "xml", "gradle": "gradle"}.get(ext, ext)


@dataclass(frozen=True)
class Commit:
    repo_slug: str
    sha: str
    message: str
    diff: str = ""
    changed_files: tuple[ChangedFile, ...] = ()

    def __post_init__(self) -> None:
        if not SHA_RE.match(self.sha):
            raise ValueError(f"commit sha must be 40 lowercase hex chars: {self.sha!r}")
        if not SLUG_RE.match(self.repo_slug):
            raise ValueError(f"repo slug must look like owner/name: {self.repo_slug!r}")
        object.__setattr__(self, "changed_files", tuple(self.changed_files))

    @property
    def short_sha(self) -> str:
        return self.sha[:7]

    @property
    def url(self) -> str:
        return f"https://github.com/{self.repo_slug}/commit/{self.sha}"

    @property
    def loc_changed(self) -> int:
        return sum(f.added + f.removed for f in self.changed_files)

    def java_paths(self) -> list[str]:
        return [f.path for f in self.changed_files if f.path.endswith(".java")]

    def to_dict(self) -> dict[str, Any]:
        return {
            "repo_slug": self.repo_slug,
            "sha": self.sha,
            "message": self.message,
            "diff": self.diff,
            "changed_files": [f.to_dict() for f in self.changed_files],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Commit:
        return cls(
            repo_slug=data["repo_slug"],
            sha=data["sha"],
            message=data.get("message", ""),
            diff=data.get("diff", ""),
            changed_files=tuple(ChangedFile.from_dict(f) for f in data.get("changed_files", [])),
        )


@dataclass(frozen=True)
class ArtifactRef:
    kind: ArtifactKind
    locator: str
    url: str = ""

    @property
    def key(self) -> tuple[ArtifactKind, str]:
        return (self.kind, self.locator)

    def sort_key(self) -> tuple[int, int, str]:
        # numeric locators sort numerically, paths lexically
        num = int(self.locator) if self.locator.isdigit() else -1
        return (_KIND_ORDER[self.kind], num, self.locator)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "locator": self.locator, "url": self.url}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ArtifactRef:
        return cls(kind=ArtifactKind(data["kind"]), locator=str(data["locator"]), url=data.get("url", ""))

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.locator}"


@dataclass(frozen=True)
class BodyBlock:
    author: str
    timestamp: str
    text: str

    def to_dict(self) -> dict[str, Any]:
        return {"author": self.author, "timestamp": self.timestamp, "text": self.text}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> BodyBlock:
        return cls(author=data.get("author", ""), timestamp=data.get("timestamp", ""), text=data["text"])


@dataclass(frozen=True)
class Artifact:
    ref: ArtifactRef
    title: str = ""
    body_blocks: tuple[BodyBlock, ...] = ()
    relevance: Relevance = Relevance.UNKNOWN

    def __post_init__(self) -> None:
        object.__setattr__(self, "body_blocks", tuple(self.body_blocks))

    def texts(self) -> list[str]:
        """Title (when present) followed by every block text."""
        out = [self.title] if self.title else []
        out.extend(b.text for b in self.body_blocks)
        return out

    def stored_text(self) -> str:
        return "\n\n".join(self.texts())

    def to_dict(self) -> dict[str, Any]:
        return {
            "ref": self.ref.to_dict(),
            "title": self.title,
            "body_blocks": [b.to_dict() for b in self.body_blocks],
            "relevance": self.relevance.value,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Artifact:
        return cls(
            ref=ArtifactRef.from_dict(data["ref"]),
            title=data.get("title", ""),
            body_blocks=tuple(BodyBlock.from_dict(b) for b in data.get("body_blocks", [])),
            relevance=Relevance(data.get("relevance", Relevance.UNKNOWN.value)),
        )


@dataclass(frozen=True)
class Sentence:
    artifact: ArtifactRef
    ordinal: int
    text: str

    def __post_init__(self) -> None:
        if self.ordinal < 0:
            raise ValueError("ordinal must be >= 0")
        if not self.text or self.text != self.text.strip():
            raise ValueError(f"sentence text must be non-empty and trimmed: {self.text!r}")

    @property
    def key(self) -> tuple[ArtifactKind, str, int]:
        return (self.artifact.kind, self.artifact.locator, self.ordinal)

    def to_dict(self) -> dict[str, Any]:
        return {"artifact": self.artifact.to_dict(), "ordinal": self.ordinal, "text": self.text}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Sentence:
        return cls(artifact=ArtifactRef.from_dict(data["artifact"]), ordinal=int(data["ordinal"]), text=data["text"])


@dataclass(frozen=True)
class LabeledSentence:
    sentence: Sentence
    labels: frozenset[RationaleComponent] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", frozenset(self.labels))

    def to_dict(self) -> dict[str, Any]:
        return {
            "sentence": self.sentence.to_dict(),
            "labels": [c.value for c in sort_components(self.labels)],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> LabeledSentence:
        return cls(
            sentence=Sentence.from_dict(data["sentence"]),
            labels=frozenset(RationaleComponent(v) for v in data.get("labels", [])),
        )


def group_by_artifact(sentences: Iterable[Sentence]) -> list[tuple[ArtifactRef, list[Sentence]]]:
    """Group sentences by artifact, keeping first-seen artifact order and ordinal order within."""
    groups: dict[tuple[ArtifactKind, str], tuple[ArtifactRef, list[Sentence]]] = {}
    for s in sentences:
        groups.setdefault(s.artifact.key, (s.artifact, []))[1].append(s)
    return [(ref, sorted(items, key=lambda s: s.ordinal)) for ref, items in groups.values()]


def sentence_ids(sentences: Iterable[Sentence]) -> dict[str, Sentence]:
    """Stable ids ``a<artifact-index>s<ordinal>`` in grouped order."""
    out: dict[str, Sentence] = {}
    for ai, (_, items) in enumerate(group_by_artifact(sentences)):
        for s in items:
            out[f"a{ai}s{s.ordinal}"] = s
    return out

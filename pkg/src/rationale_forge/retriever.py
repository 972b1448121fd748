"""Commit artifact resolution.

Three linking steps, capped at two hops from the commit:

1. issue/PR references in the commit message,
2. issues/PRs whose text mentions the commit hash (platform search),
3. references found inside the artifacts collected by steps 1-2.

Pull requests additionally contribute their review-thread comments as one
CodeReview artifact.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Iterable, Protocol

from .comments import comment_artifacts
from .model import (
    COMMIT_MESSAGE_LOCATOR,
    Artifact,
    ArtifactKind,
    ArtifactRef,
    BodyBlock,
    Commit,
)

logger = logging.getLogger(__name__)

MAX_DEPTH = 2

_REF_PATTERN = re.compile(
    r"https?://github\.com/(?P<u_owner>[\w.-]+)/(?P<u_repo>[\w.-]+)/(?P<u_type>issues|pull)/(?P<u_num>\d+)\b"
    r"|(?<![\w/.-])(?P<s_owner>[A-Za-z0-9][\w.-]*)/(?P<s_repo>[\w.-]+)#(?P<s_num>\d+)\b"
    r"|(?<![\w/])(?P<p_type>issues|pull)/(?P<p_num>\d+)\b"
    r"|(?<![\w&#/])#(?P<h_num>\d+)\b"
    r"|\b(?i:GH)-(?P<g_num>\d+)\b"
)
_HASH_TOKEN = re.compile(r"(?<![0-9A-Za-z])[0-9a-f]{7,40}(?![0-9A-Za-z])")
_FENCE = re.compile(r"^ {0,3}(`{3,}|~{3,})")


class Platform(Protocol):
    repo_slug: str

    def get_issue(self, number: int) -> dict | None: ...
    def get_issue_comments(self, number: int) -> list[dict]: ...
    def get_review_comments(self, number: int) -> list[dict]: ...
    def search_mentions(self, text: str) -> list[dict]: ...
    def get_file(self, path: str, ref: str) -> str | None: ...


@dataclass(frozen=True)
class LinkCandidate:
    raw_token: str
    number: int
    repo_slug: str
    kind_hint: ArtifactKind | None = None
    source: ArtifactRef | None = None
    resolved: ArtifactRef | None = None

    @property
    def is_local(self) -> bool:
        return self.resolved is not None or self.kind_hint is not None or self.repo_slug != ""


@dataclass(frozen=True)
class GraphEdge:
    source: ArtifactRef
    target: ArtifactRef
    evidence: str

    def sort_key(self) -> tuple:
        return (self.source.sort_key(), self.target.sort_key(), self.evidence)

    def to_dict(self) -> dict[str, Any]:
        return {"from": self.source.to_dict(), "to": self.target.to_dict(), "evidence": self.evidence}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> GraphEdge:
        return cls(ArtifactRef.from_dict(data["from"]), ArtifactRef.from_dict(data["to"]), data["evidence"])


@dataclass(frozen=True)
class ArtifactGraph:
    commit: Commit
    artifacts: tuple[Artifact, ...]
    edges: tuple[GraphEdge, ...] = ()

    def __post_init__(self) -> None:
        arts = tuple(sorted(self.artifacts, key=lambda a: a.ref.sort_key()))
        edges = tuple(sorted(set(self.edges), key=GraphEdge.sort_key))
        object.__setattr__(self, "artifacts", arts)
        object.__setattr__(self, "edges", edges)

    def artifact(self, kind: ArtifactKind, locator: str) -> Artifact | None:
        for a in self.artifacts:
            if a.ref.key == (kind, locator):
                return a
        return None

    def refs(self) -> list[ArtifactRef]:
        return [a.ref for a in self.artifacts]

    def check(self) -> list[str]:
        """Invariant violations, empty when the graph is well formed."""
        problems = []
        keys = [a.ref.key for a in self.artifacts]
        if sum(k[0] is ArtifactKind.COMMIT_MESSAGE for k in keys) != 1:
            problems.append("graph must hold exactly one commit-message artifact")
        if len(set(keys)) != len(keys):
            problems.append("duplicate (kind, locator) pairs")
        present = set(keys)
        by_key = {a.ref.key: a for a in self.artifacts}
        for e in self.edges:
            if e.source.key not in present or e.target.key not in present:
                problems.append(f"dangling edge {e.source} -> {e.target}")
            elif e.evidence not in by_key[e.source.key].stored_text():
                problems.append(f"evidence {e.evidence!r} not found in {e.source}")
        return problems

    def to_dict(self) -> dict[str, Any]:
        return {
            "commit": self.commit.to_dict(),
            "artifacts": [a.to_dict() for a in self.artifacts],
            "edges": [e.to_dict() for e in self.edges],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ArtifactGraph:
        return cls(
            commit=Commit.from_dict(data["commit"]),
            artifacts=tuple(Artifact.from_dict(a) for a in data["artifacts"]),
            edges=tuple(GraphEdge.from_dict(e) for e in data.get("edges", [])),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def loads(cls, text: str) -> ArtifactGraph:
        return cls.from_dict(json.loads(text))


# text handling ----------------------------------------------------------------


def _is_diff_quote(lines: list[str]) -> bool:
    content = [re.sub(r"^\s*>\s?", "", ln) for ln in lines]
    content = [c for c in content if c.strip()]
    if not content:
        return False
    if any(c.startswith(("@@", "diff --git")) for c in content):
        return True
    return all(c[:1] in "+-" for c in content)


def clean_markdown(text: str) -> str:
    """Drop fenced code blocks and block-quoted diff hunks; keep everything else."""
    lines = (text or "").replace("\r\n", "\n").replace("\r", "\n").split("\n")
    out: list[str] = []
    fence: str | None = None
    quote: list[str] = []

    def flush_quote() -> None:
        if quote and not _is_diff_quote(quote):
            out.extend(quote)
        quote.clear()

    for line in lines:
        if fence is not None:
            m = _FENCE.match(line)
            if m and m.group(1)[0] == fence[0] and len(m.group(1)) >= len(fence) and not line.strip()[len(m.group(1)):].strip():
                fence = None
            continue
        m = _FENCE.match(line)
        if m:
            flush_quote()
            fence = m.group(1)
            continue
        if line.lstrip().startswith(">"):
            quote.append(line)
            continue
        flush_quote()
        out.append(line)
    flush_quote()
    return re.sub(r"\n{3,}", "\n\n", "\n".join(out)).strip()


def extract_artifact_refs(text: str, repo_slug: str, source: ArtifactRef | None = None) -> list[LinkCandidate]:
    """Issue/PR references in order of first occurrence, one per (repo, number)."""
    seen: set[tuple[str, int]] = set()
    out: list[LinkCandidate] = []
    for m in _REF_PATTERN.finditer(text or ""):
        g = m.groupdict()
        kind_hint = None
        if g["u_num"]:
            repo, num = f"{g['u_owner']}/{g['u_repo']}", g["u_num"]
            kind_hint = ArtifactKind.PULL_REQUEST if g["u_type"] == "pull" else ArtifactKind.ISSUE
        elif g["s_num"]:
            repo, num = f"{g['s_owner']}/{g['s_repo']}", g["s_num"]
        elif g["p_num"]:
            repo, num = repo_slug, g["p_num"]
            kind_hint = ArtifactKind.PULL_REQUEST if g["p_type"] == "pull" else ArtifactKind.ISSUE
        else:
            repo, num = repo_slug, g["h_num"] or g["g_num"]
        number = int(num)
        if number < 1:
            continue
        key = (repo.lower(), number)
        if key in seen:
            continue
        seen.add(key)
        out.append(LinkCandidate(m.group(), number, repo, kind_hint, source))
    return out


def _evidence(text: str, token: str, width: int = 60) -> str:
    """A verbatim window of ``text`` around the first occurrence of ``token`` on its line."""
    i = text.find(token)
    if i < 0:
        return token
    line_start = text.rfind("\n", 0, i) + 1
    line_end = text.find("\n", i)
    line_end = len(text) if line_end < 0 else line_end
    lo = max(line_start, i - width)
    hi = min(line_end, i + len(token) + width)
    return text[lo:hi].strip()


def _hash_mention(text: str, sha: str) -> str | None:
    for m in _HASH_TOKEN.finditer(text):
        if sha.startswith(m.group()):
            return m.group()
    return None


# artifact construction --------------------------------------------------------


def _user(obj: dict) -> str:
    return ((obj or {}).get("user") or {}).get("login", "")


def issue_artifact(issue: dict, comments: Iterable[dict], repo_slug: str) -> Artifact:
    number = int(issue["number"])
    is_pr = "pull_request" in issue
    kind = ArtifactKind.PULL_REQUEST if is_pr else ArtifactKind.ISSUE
    url = issue.get("html_url") or f"https://github.com/{repo_slug}/{'pull' if is_pr else 'issues'}/{number}"
    blocks = []
    body = clean_markdown(issue.get("body") or "")
    if body:
        blocks.append(BodyBlock(_user(issue), issue.get("created_at", ""), body))
    ordered = sorted(comments, key=lambda c: (c.get("created_at", ""), c.get("id", 0)))
    for c in ordered:
        text = clean_markdown(c.get("body") or "")
        if text:
            blocks.append(BodyBlock(_user(c), c.get("created_at", ""), text))
    return Artifact(ref=ArtifactRef(kind, str(number), url), title=(issue.get("title") or "").strip(), body_blocks=tuple(blocks))


def fetch_code_review(pr_ref: ArtifactRef, platform: Platform) -> Artifact | None:
    """All review-thread comments of a PR as one CodeReview artifact, oldest first."""
    if pr_ref.kind is not ArtifactKind.PULL_REQUEST:
        raise ValueError("code reviews belong to pull requests")
    comments = platform.get_review_comments(int(pr_ref.locator))
    if not comments:
        return None
    ordered = sorted(comments, key=lambda c: (c.get("created_at", ""), c.get("id", 0)))
    blocks = []
    for c in ordered:
        text = clean_markdown(c.get("body") or "")
        if text:
            blocks.append(BodyBlock(_user(c), c.get("created_at", ""), text))
    url = f"{pr_ref.url}/files" if pr_ref.url else ""
    return Artifact(ref=ArtifactRef(ArtifactKind.CODE_REVIEW, pr_ref.locator, url), body_blocks=tuple(blocks))


def commit_message_artifact(commit: Commit) -> Artifact:
    ref = ArtifactRef(ArtifactKind.COMMIT_MESSAGE, COMMIT_MESSAGE_LOCATOR, commit.url)
    text = commit.message.strip()
    return Artifact(ref=ref, body_blocks=(BodyBlock("", "", text),) if text else ())


# resolution ---------------------------------------------------------------------


def _fetch_number(number: int, platform: Platform) -> list[Artifact]:
    issue = platform.get_issue(number)
    if issue is None:
        logger.info("reference #%d does not resolve", number)
        return []
    art = issue_artifact(issue, platform.get_issue_comments(number), platform.repo_slug)
    out = [art]
    if art.ref.kind is ArtifactKind.PULL_REQUEST:
        review = fetch_code_review(art.ref, platform)
        if review is not None:
            out.append(review)
    return out


def _fetch_all(numbers: list[int], platform: Platform, parallelism: int) -> dict[int, list[Artifact]]:
    if parallelism <= 1 or len(numbers) <= 1:
        return {n: _fetch_number(n, platform) for n in numbers}
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        results = list(pool.map(lambda n: _fetch_number(n, platform), numbers))
    return dict(zip(numbers, results))


def _local_refs(artifact: Artifact, repo_slug: str) -> list[tuple[LinkCandidate, str]]:
    """Local-repository candidates with their evidence snippets."""
    out = []
    for text in artifact.texts():
        for cand in extract_artifact_refs(text, repo_slug, artifact.ref):
            if cand.repo_slug.lower() == repo_slug.lower():
                out.append((cand, _evidence(text, cand.raw_token)))
    return out


def resolve_commit_artifacts(commit: Commit, platform: Platform, parallelism: int = 4) -> ArtifactGraph:
    repo = commit.repo_slug
    cm = commit_message_artifact(commit)
    nodes: dict[tuple, Artifact] = {cm.ref.key: cm}
    by_number: dict[int, ArtifactRef] = {}
    edges: set[GraphEdge] = set()
    pending_links: list[tuple[ArtifactRef, int, str]] = []

    # step (i): references in the commit message
    frontier: list[int] = []
    for cand, evidence in _local_refs(cm, repo):
        pending_links.append((cm.ref, cand.number, evidence))
        if cand.number not in frontier:
            frontier.append(cand.number)

    # step (ii): artifacts mentioning the commit hash
    mentioned: list[int] = []
    for query in dict.fromkeys((commit.sha, commit.short_sha)):
        for item in platform.search_mentions(query):
            n = int(item["number"])
            if n not in mentioned:
                mentioned.append(n)

    fetched = _fetch_all(sorted(set(frontier) | set(mentioned)), platform, parallelism)
    level1: list[Artifact] = []
    for n in sorted(fetched):
        arts = fetched[n]
        if not arts:
            continue
        main = arts[0]
        if n in mentioned and n not in frontier:
            token = _hash_mention(main.stored_text(), commit.sha)
            if token is None:
                logger.info("search hit #%d does not mention %s in its text; skipped", n, commit.short_sha)
                continue
            text = next(t for t in main.texts() if token in t)
            edges.add(GraphEdge(main.ref, cm.ref, _evidence(text, token)))
        by_number[n] = main.ref
        for a in arts:
            nodes[a.ref.key] = a
            level1.append(a)

    # step (iii): references inside the first-hop artifacts (second hop)
    second: list[int] = []
    for art in level1:
        for cand, evidence in _local_refs(art, repo):
            if art.ref.kind in (ArtifactKind.ISSUE, ArtifactKind.PULL_REQUEST) and cand.number == int(art.ref.locator):
                continue
            pending_links.append((art.ref, cand.number, evidence))
            if cand.number not in by_number and cand.number not in second:
                second.append(cand.number)
    for n, arts in sorted(_fetch_all(sorted(second), platform, parallelism).items()):
        if not arts:
            continue
        by_number[n] = arts[0].ref
        for a in arts:
            nodes[a.ref.key] = a

    for src, number, evidence in pending_links:
        target = by_number.get(number)
        if target is not None and target.key != src.key:
            edges.add(GraphEdge(src, target, evidence))

    return ArtifactGraph(commit=commit, artifacts=tuple(nodes.values()), edges=tuple(edges))


def build_graph(commit: Commit, platform: Platform, parallelism: int = 4) -> ArtifactGraph:
    """Linked issues/PRs/reviews plus Javadoc and inline-comment artifacts."""
    graph = resolve_commit_artifacts(commit, platform, parallelism)
    sources = {path: platform.get_file(path, commit.sha) for path in commit.java_paths()}
    extra = comment_artifacts(commit, sources)
    return ArtifactGraph(commit=commit, artifacts=graph.artifacts + tuple(extra), edges=graph.edges)

"""Lexical extraction of Javadocs and inline comments from Java sources.

The scanner never parses Java; it tokenizes strings, char literals, text
blocks and comments, masks them out, and then recovers type/method
structure from brace nesting in the masked text. Broken files degrade to
fewer spans rather than errors.
"""

from __future__ import annotations

import bisect
import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .errors import MissingSource
from .model import Artifact, ArtifactKind, ArtifactRef, BodyBlock, Commit


class CommentLevel(str, Enum):
    CLASS = "Class"
    METHOD = "Method"
    INLINE = "Inline"


@dataclass(frozen=True)
class JavaCommentSpan:
    file_path: str
    byte_range: tuple[int, int]
    level: CommentLevel
    attached_symbol: str
    text: str
    line: int = 0

    def __post_init__(self) -> None:
        start, end = self.byte_range
        if not 0 <= start < end:
            raise ValueError(f"invalid span {self.byte_range}")


@dataclass(frozen=True)
class RawComment:
    start: int
    end: int
    kind: str  # "line" | "block" | "javadoc"


_LEXER = re.compile(
    r'(?P<textblock>"""(?:\\(?:.|\Z)|[^\\])*?(?:"""|\Z))'
    r'|(?P<string>"(?:\\(?:.|\Z)|[^"\\\n])*(?:"|(?=\n)|\Z))'
    r"|(?P<char>'(?:\\(?:.|\Z)|[^'\\\n])*(?:'|(?=\n)|\Z))"
    r"|(?P<block>/\*.*?(?:\*/|\Z))"
    r"|(?P<line>//[^\n]*)",
    re.DOTALL,
)


def scan(source: str) -> tuple[list[RawComment], str]:
    """All comments in ``source`` plus a masked copy of it.

    The masked copy blanks comment text and literal contents with spaces
    (newlines kept), so offsets and line numbers carry over unchanged.
    """
    comments: list[RawComment] = []
    masked = list(source)
    for m in _LEXER.finditer(source):
        kind = m.lastgroup
        start, end = m.span()
        if kind in ("block", "line"):
            text = m.group()
            if kind == "block" and text.startswith("/**") and not text.startswith("/**/"):
                kind = "javadoc"
            comments.append(RawComment(start, end, kind))
            lo, hi = start, end
        else:
            # keep the quote characters so code structure stays visible
            lo, hi = start + 1, end - 1
        for i in range(lo, hi):
            if masked[i] != "\n":
                masked[i] = " "
    return comments, "".join(masked)


def clean_comment_text(raw: str) -> str:
    if raw.startswith("//"):
        return raw[2:].strip()
    body = raw[3:] if raw.startswith("/**") else raw[2:]
    if body.endswith("*/"):
        body = body[:-2]
    lines = []
    for line in body.split("\n"):
        stripped = line.strip()
        if stripped.startswith("*"):
            stripped = re.sub(r"^\*+ ?", "", stripped)
        lines.append(stripped.rstrip())
    return "\n".join(lines).strip()


# structure recovery ---------------------------------------------------------

_TYPE_DECL = re.compile(
    r"^(?:(?:public|protected|private|static|abstract|final|sealed|non-sealed|strictfp)\s+)*"
    r"(?:class|interface|enum|record|@interface)\s+(?P<name>[A-Za-z_$][\w$]*)"
)
_TYPE_KEYWORD = re.compile(r"(?:^|[^\w$.])(?:class|interface|enum|record)\s+[A-Za-z_$]|@interface\b")
_METHOD_DECL = re.compile(r"^(?P<pre>[^()=]*?)\b(?P<name>[A-Za-z_$][\w$]*)\s*\((?P<rest>.*)$", re.DOTALL)
_ANNOTATION = re.compile(r"@(?!interface\b)[A-Za-z_$][\w$.]*\s*(?:\((?:[^()]|\([^()]*\))*\))?\s*")
_NOT_METHOD_NAMES = frozenset(
    {"if", "for", "while", "switch", "catch", "synchronized", "try", "return", "new", "throw", "else", "do"}
)
_PACKAGE = re.compile(r"^\s*package\s+[\w.]+\s*;", re.MULTILINE)

_TYPE, _METHOD, _BODY, _OTHER = "type", "method", "body", "other"


@dataclass(frozen=True)
class Block:
    kind: str
    name: str
    decl_start: int
    open: int
    close: int


def _strip_annotations(text: str) -> str:
    prev = None
    text = text.strip()
    while prev != text:
        prev = text
        m = _ANNOTATION.match(text)
        if m:
            text = text[m.end():].strip()
    return text


def _looks_like_signature(h: str) -> bool:
    if "=" in h.split("(", 1)[0]:
        return False
    if h.endswith(")") or re.search(r"\)\s*throws\s+[\w$.,<>\s]+$", h):
        return True
    # annotation type element with a default value
    return re.search(r"\)\s*default\b", h) is not None


def _method_name(decl: str) -> str | None:
    m = _METHOD_DECL.match(decl)
    if not m:
        return None
    pre, name = m.group("pre"), m.group("name")
    if name in _NOT_METHOD_NAMES or re.search(r"\b(?:new|return|throw)\b", pre):
        return None
    return name


def _classify_header(header: str, parent: str | None) -> tuple[str, str]:
    h = " ".join(_strip_annotations(header).split())
    if parent in (_METHOD, _BODY):
        return _BODY, ""
    if parent is None or parent == _TYPE:
        m = _TYPE_DECL.match(h)
        if m:
            return _TYPE, m.group("name")
    if parent == _TYPE:
        if h in ("", "static"):
            return _METHOD, "<init>" if not h else "<clinit>"
        if _looks_like_signature(h):
            name = _method_name(h)
            if name:
                return _METHOD, name
        if _TYPE_KEYWORD.search(h) or "new " in h or re.fullmatch(r"[A-Za-z_$][\w$]*(?:\s*\(.*\))?", h):
            # anonymous class bodies and enum constant bodies hold members
            return _TYPE, ""
    return _OTHER, ""


def structure(masked: str) -> list[Block]:
    blocks: list[Block] = []
    stack: list[tuple[str, str, int, int]] = []
    header_start = 0
    depth = 0
    for i, ch in enumerate(masked):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(depth - 1, 0)
        elif depth:
            continue
        elif ch == "{":
            header = masked[header_start:i]
            parent = stack[-1][0] if stack else None
            kind, name = _classify_header(header, parent)
            lead = len(header) - len(header.lstrip())
            stack.append((kind, name, header_start + lead, i))
            header_start = i + 1
        elif ch == "}":
            if stack:
                kind, name, decl, opened = stack.pop()
                blocks.append(Block(kind, name, decl, opened, i))
            header_start = i + 1
        elif ch == ";":
            header_start = i + 1
    # unterminated blocks close at end of file
    while stack:
        kind, name, decl, opened = stack.pop()
        blocks.append(Block(kind, name, decl, opened, len(masked) - 1))
    return blocks


class _Lines:
    def __init__(self, text: str) -> None:
        self._starts = [0] + [i + 1 for i, c in enumerate(text) if c == "\n"]

    def line(self, pos: int) -> int:
        return bisect.bisect_right(self._starts, pos)


def _attachment(comment: RawComment, comments: Sequence[RawComment], masked: str) -> tuple[CommentLevel, str] | None:
    pos = comment.end
    n = len(masked)
    while True:
        while pos < n and masked[pos].isspace():
            pos += 1
        m = _ANNOTATION.match(masked, pos)
        if not m:
            break
        pos = m.end()
    # any other comment between the Javadoc and the declaration breaks attachment
    if any(comment.end <= c.start < pos for c in comments):
        return None
    stripped = masked[pos:]
    m = re.search(r"[{;=]", stripped)
    decl = " ".join(stripped[: m.start() if m else len(stripped)].split())
    terminator = m.group() if m else ""
    t = _TYPE_DECL.match(decl)
    if t:
        return CommentLevel.CLASS, t.group("name")
    if terminator in ("{", ";") and _looks_like_signature(decl):
        name = _method_name(decl)
        if name:
            return CommentLevel.METHOD, name
    return None


def extract_comments(
    java_source: str,
    changed_line_ranges: Sequence[tuple[int, int]],
    file_path: str = "",
) -> list[JavaCommentSpan]:
    """Javadocs attached to types/methods, and inline comments in changed methods.

    Line ranges are 1-based and inclusive, on the post-change file.
    """
    try:
        comments, masked = scan(java_source)
        blocks = structure(masked)
    except (RecursionError, re.error):
        return []
    lines = _Lines(java_source)

    pkg = _PACKAGE.search(masked)
    if pkg:
        header_limit = pkg.start() + (len(pkg.group()) - len(pkg.group().lstrip()))
    else:
        first_code = re.search(r"\S", masked)
        header_limit = first_code.start() if first_code else len(masked)

    methods = [b for b in blocks if b.kind == _METHOD]

    def enclosing_method(pos: int) -> Block | None:
        best = None
        for b in methods:
            if b.open < pos < b.close and (best is None or b.open < best.open):
                best = b
        return best

    def touched(b: Block) -> bool:
        lo, hi = lines.line(b.decl_start), lines.line(b.close)
        return any(s <= hi and lo <= e for s, e in changed_line_ranges)

    spans: list[JavaCommentSpan] = []
    for c in comments:
        if c.start < header_limit and (pkg or c.kind != "javadoc"):
            continue
        raw = java_source[c.start:c.end]
        owner = enclosing_method(c.start)
        level: CommentLevel | None = None
        symbol = ""
        if owner is not None:
            if touched(owner):
                level = CommentLevel.INLINE
        elif c.kind == "javadoc":
            attached = _attachment(c, comments, masked)
            if attached:
                level, symbol = attached
        if level is None:
            continue
        spans.append(
            JavaCommentSpan(
                file_path=file_path,
                byte_range=(c.start, c.end),
                level=level,
                attached_symbol=symbol,
                text=clean_comment_text(raw),
                line=lines.line(c.start),
            )
        )
    return spans


# diff handling and artifact aggregation -----------------------------------

_HUNK = re.compile(r"^@@ -\d+(?:,\d+)? \+(\d+)(?:,(\d+))? @@")


def changed_lines(diff: str) -> dict[str, list[tuple[int, int]]]:
    """Post-image changed line ranges per file path from a unified diff.

    Added lines count as changed; a deletion marks the post-image line at
    which it happened.
    """
    touched: dict[str, set[int]] = {}
    path = None
    new_line = 0
    for line in diff.splitlines():
        if line.startswith("+++ "):
            target = line[4:].strip()
            path = None if target == "/dev/null" else re.sub(r"^b/", "", target)
            if path is not None:
                touched.setdefault(path, set())
            continue
        if line.startswith("--- ") or line.startswith("diff --git"):
            continue
        m = _HUNK.match(line)
        if m:
            new_line = int(m.group(1))
            continue
        if path is None:
            continue
        if line.startswith("+"):
            touched[path].add(new_line)
            new_line += 1
        elif line.startswith("-"):
            touched[path].add(max(new_line, 1))
        elif line.startswith("\\"):
            continue
        else:
            new_line += 1
    return {p: _to_ranges(sorted(ls)) for p, ls in touched.items()}


def _to_ranges(nums: list[int]) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = []
    for n in nums:
        if out and n <= out[-1][1] + 1:
            out[-1] = (out[-1][0], max(out[-1][1], n))
        else:
            out.append((n, n))
    return out


_LEVEL_KIND = {
    CommentLevel.CLASS: ArtifactKind.CLASS_JAVADOC,
    CommentLevel.METHOD: ArtifactKind.METHOD_JAVADOC,
    CommentLevel.INLINE: ArtifactKind.INLINE_COMMENT,
}


def _merge_line_runs(spans: list[JavaCommentSpan], source: str) -> list[str]:
    """Texts of inline spans, with runs of adjacent ``//`` comments joined."""
    texts: list[str] = []
    prev: JavaCommentSpan | None = None
    for s in spans:
        is_line = source.startswith("//", s.byte_range[0])
        if (
            prev is not None
            and is_line
            and source.startswith("//", prev.byte_range[0])
            and not source[prev.byte_range[1]:s.byte_range[0]].strip()
            and s.line == prev.line + 1
        ):
            texts[-1] = f"{texts[-1]}\n{s.text}".strip()
        else:
            texts.append(s.text)
        prev = s
    return [t for t in texts if t]


def comment_artifacts(commit: Commit, sources: Mapping[str, str | None]) -> list[Artifact]:
    """At most one ClassJavadoc, MethodJavadoc and InlineComment artifact per changed Java file.

    A ``None`` source marks a file deleted by the commit.
    """
    ranges = changed_lines(commit.diff)
    artifacts: list[Artifact] = []
    for path in commit.java_paths():
        if path not in sources:
            raise MissingSource(f"no source provided for changed file {path}")
        source = sources[path]
        if source is None:
            continue
        spans = extract_comments(source, ranges.get(path, []), file_path=path)
        for level in CommentLevel:
            chosen = [s for s in spans if s.level is level]
            if level is CommentLevel.INLINE:
                texts = _merge_line_runs(chosen, source)
            else:
                texts = [s.text for s in chosen if s.text]
            if not texts:
                continue
            url = f"https://github.com/{commit.repo_slug}/blob/{commit.sha}/{path}"
            ref = ArtifactRef(kind=_LEVEL_KIND[level], locator=path, url=url)
            artifacts.append(Artifact(ref=ref, body_blocks=tuple(BodyBlock("", "", t) for t in texts)))
    return artifacts

"""Rule-based sentence segmentation for artifact text.

Text is first cut into Markdown units (paragraphs, list items, headings),
then each unit is split after ``.``, ``!`` or ``?`` runs that are followed by
whitespace, unless the token before the period is a known abbreviation.
Nothing but whitespace is ever dropped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .model import Artifact, Sentence

DEFAULT_ABBREVIATIONS = frozenset(
    {
        "e.g.", "i.e.", "etc.", "vs.", "Dr.", "Fig.", "No.",
        "cf.", "al.", "approx.", "Mr.", "Mrs.", "Ms.", "Jr.", "Sr.", "Inc.",
    }
)

_HEADING = re.compile(r"^\s{0,3}#{1,6}\s")
_BULLET = re.compile(r"^\s*(?:[-*+]|\d{1,3}[.)])\s+")
_TERMINATOR = re.compile(r"[.!?]+[\"'”’)\]]*(?=\s|$)")
_WS = re.compile(r"\s+")


@dataclass(frozen=True)
class SegmenterConfig:
    abbreviation_list: frozenset[str] = field(default_factory=lambda: DEFAULT_ABBREVIATIONS)
    min_sentence_chars: int = 2
    treat_newline_as_boundary: bool = True

    def __post_init__(self) -> None:
        bad = [a for a in self.abbreviation_list if not a.endswith(".")]
        if bad:
            raise ValueError(f"abbreviations must end with a period: {bad}")
        object.__setattr__(self, "abbreviation_list", frozenset(self.abbreviation_list))

    @classmethod
    def from_mapping(cls, data: dict) -> SegmenterConfig:
        """Build from a ``[segmenter]`` config table."""
        kwargs = {}
        if "abbreviations" in data:
            kwargs["abbreviation_list"] = frozenset(data["abbreviations"])
        if "min_sentence_chars" in data:
            kwargs["min_sentence_chars"] = int(data["min_sentence_chars"])
        if "treat_newline_as_boundary" in data:
            kwargs["treat_newline_as_boundary"] = bool(data["treat_newline_as_boundary"])
        return cls(**kwargs)


def markdown_units(text: str, newline_boundaries: bool = True) -> list[str]:
    """Paragraphs, list items and headings, each as a single string."""
    units: list[str] = []
    buf: list[str] = []

    def flush() -> None:
        if buf:
            units.append(" ".join(buf))
            buf.clear()

    for line in text.replace("\r\n", "\n").replace("\r", "\n").split("\n"):
        if not line.strip():
            flush()
            continue
        if newline_boundaries and _HEADING.match(line):
            flush()
            units.append(line)
            continue
        if newline_boundaries and _BULLET.match(line):
            flush()
        buf.append(line)
    flush()
    return units


def _is_abbreviation(token: str, abbreviations: frozenset[str]) -> bool:
    token = token.lstrip("([{\"'")
    return token in abbreviations or any(token == a.capitalize() for a in abbreviations if a[0].islower())


def split_unit(unit: str, abbreviations: frozenset[str]) -> list[str]:
    out: list[str] = []
    start = 0
    marker = _BULLET.match(unit)
    skip_until = marker.end() if marker else 0
    for m in _TERMINATOR.finditer(unit):
        if m.end() <= skip_until:
            continue
        if m.group().rstrip("\"'”’)]") == ".":
            token = unit[: m.start() + 1].split()[-1]
            if _is_abbreviation(token, abbreviations):
                continue
        piece = unit[start:m.end()]
        if piece.strip():
            out.append(piece)
        start = m.end()
    if unit[start:].strip():
        out.append(unit[start:])
    return out


def split_text(text: str, cfg: SegmenterConfig | None = None) -> list[str]:
    cfg = cfg or SegmenterConfig()
    sentences: list[str] = []
    for unit in markdown_units(text, cfg.treat_newline_as_boundary):
        for piece in split_unit(unit, cfg.abbreviation_list):
            norm = _WS.sub(" ", piece).strip()
            if norm:
                sentences.append(norm)
    return sentences


def _merge_short(parts: list[str], min_chars: int) -> list[str]:
    out: list[str] = []
    pending = ""
    for p in parts:
        if pending:
            p = f"{pending} {p}"
            pending = ""
        if len(p) < min_chars:
            if out:
                out[-1] = f"{out[-1]} {p}"
            else:
                pending = p
            continue
        out.append(p)
    if pending:
        out.append(pending)
    return out


def segment(artifact: Artifact, cfg: SegmenterConfig | None = None) -> list[Sentence]:
    """Sentences of the artifact's title and body blocks, ordinals 0..n-1."""
    cfg = cfg or SegmenterConfig()
    parts: list[str] = []
    for text in artifact.texts():
        parts.extend(split_text(text, cfg))
    parts = _merge_short(parts, cfg.min_sentence_chars)
    return [Sentence(artifact=artifact.ref, ordinal=i, text=t) for i, t in enumerate(parts)]

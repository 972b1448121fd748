from __future__ import annotations

import hashlib
import os
from pathlib import Path

import pytest

from rationale_forge.model import Artifact, ArtifactKind, ArtifactRef, BodyBlock, Commit, Sentence

FIXTURES = Path(__file__).parent / "fixtures"
E2E = FIXTURES / "e2e"
OKHTTP_SHA = "4c86085429edbeef0a383941936ee7b64cc3805e"
WIDGETS_SHA = hashlib.sha1(b"widgets-render-cache").hexdigest()
PLAIN_SHA = hashlib.sha1(b"plain-logging").hexdigest()
# one "criterion N: PASS|FAIL ..." line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}
E2E_COMMITS = [("square/okhttp", OKHTTP_SHA), ("example-org/widgets", WIDGETS_SHA), ("example-org/plain", PLAIN_SHA)]


def make_commit(message: str = "Fix the thing", sha_seed: str = "x", diff: str = "", files=()) -> Commit:
    return Commit("acme/app", hashlib.sha1(sha_seed.encode()).hexdigest(), message, diff, tuple(files))


def make_artifact(kind: ArtifactKind = ArtifactKind.ISSUE, locator: str = "1", *texts: str, title: str = "") -> Artifact:
    ref = ArtifactRef(kind, locator, f"https://github.com/acme/app/issues/{locator}")
    return Artifact(ref=ref, title=title, body_blocks=tuple(BodyBlock("", "", t) for t in texts))


def make_sentences(*texts: str, kind: ArtifactKind = ArtifactKind.ISSUE, locator: str = "1") -> list[Sentence]:
    ref = ArtifactRef(kind, locator, f"https://github.com/acme/app/issues/{locator}")
    return [Sentence(ref, i, t) for i, t in enumerate(texts)]


def check_golden(name: str, text: str) -> None:
    """Compare against a reviewed golden file; RF_REGEN_GOLDEN=1 rewrites it."""
    path = FIXTURES / "golden" / name
    if os.environ.get("RF_REGEN_GOLDEN") == "1":
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    assert path.read_text(encoding="utf-8") == text


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])

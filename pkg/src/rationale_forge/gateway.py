"""Chat-completion and embedding access with deterministic record/replay.

A request is fingerprinted over ``(model_id, system_text, user_text,
run_index)``; recordings live at ``<cache_dir>/llm/<fingerprint>.rec``.
Replay never touches the network and returns the recorded text verbatim.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import httpx

from .errors import (
    BudgetExceeded,
    EmbedderUnavailable,
    MissingRecording,
    ProviderError,
    UnparseableOutput,
)
from .model import RationaleComponent

logger = logging.getLogger(__name__)

API_KEY_ENV = "RF_LLM_API_KEY"
BASE_URL_ENV = "RF_LLM_BASE_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
MODES = ("record", "replay", "live")
BACKOFF = (1.0, 2.0, 4.0)


def netstring(*parts: str | int) -> bytes:
    """Length-prefixed concatenation, so field boundaries cannot collide."""
    out = bytearray()
    for p in parts:
        b = str(p).encode("utf-8")
        out += f"{len(b)}:".encode() + b + b","
    return bytes(out)


@dataclass(frozen=True)
class ModelSpec:
    provider: str
    model_id: str
    supports_temperature: bool = False
    max_output_tokens: int = 16000

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValueError("model_id must be non-empty")

    @classmethod
    def parse(cls, text: str) -> ModelSpec:
        """``provider:model_id``; a bare id defaults the provider to ``openai``."""
        provider, _, model_id = text.partition(":") if ":" in text else ("openai", "", text)
        return cls(provider=provider, model_id=model_id)

    def __str__(self) -> str:
        return f"{self.provider}:{self.model_id}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "provider": self.provider,
            "model_id": self.model_id,
            "supports_temperature": self.supports_temperature,
            "max_output_tokens": self.max_output_tokens,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelSpec:
        return cls(**data)


@dataclass(frozen=True)
class CompletionRequest:
    model: ModelSpec
    system_text: str
    user_text: str
    run_index: int = 0

    def __post_init__(self) -> None:
        if self.run_index < 0:
            raise ValueError("run_index must be >= 0")

    def payload(self) -> bytes:
        return netstring(self.model.model_id, self.system_text, self.user_text, self.run_index)

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.payload()).hexdigest()


@dataclass(frozen=True)
class ParseFailure:
    reason: str


@dataclass(frozen=True)
class CompletionResult:
    raw_text: str
    parsed: Any
    request_fingerprint: str


class _RecordStore:
    """One JSON file per key; writes are serialized, reads are lock-free."""

    def __init__(self, root: Path) -> None:
        self.root = root
        self._lock = threading.Lock()

    def path(self, key: str) -> Path:
        return self.root / f"{key}.rec"

    def load(self, key: str) -> dict | None:
        p = self.path(key)
        return json.loads(p.read_text(encoding="utf-8")) if p.exists() else None

    def store(self, key: str, entry: dict) -> None:
        with self._lock:
            self.root.mkdir(parents=True, exist_ok=True)
            tmp = self.path(key).with_suffix(".tmp")
            tmp.write_text(json.dumps(entry, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
            tmp.replace(self.path(key))


def _post_with_retries(
    http: httpx.Client, url: str, body: dict, sleep: Callable[[float], None], error: type[Exception]
) -> dict:
    last: object = None
    for attempt in range(len(BACKOFF) + 1):
        if attempt:
            sleep(BACKOFF[attempt - 1])
        try:
            resp = http.post(url, json=body)
        except httpx.TransportError as exc:
            last = exc
            continue
        if resp.status_code == 429 or resp.status_code >= 500:
            last = f"HTTP {resp.status_code}"
            continue
        if resp.status_code >= 400:
            raise error(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
        return resp.json()
    raise error(f"POST {url} failed after {len(BACKOFF) + 1} attempts: {last}")


class Gateway:
    """Chat-completion client; ``mode`` is ``record``, ``replay`` or ``live``."""

    def __init__(
        self,
        cache_dir: str | Path | None = None,
        mode: str = "replay",
        *,
        api_key: str | None = None,
        base_url: str | None = None,
        max_requests: int | None = None,
        http: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode != "live" and cache_dir is None:
            raise ValueError(f"mode {mode!r} needs a cache directory")
        self.mode = mode
        self.store = _RecordStore(Path(cache_dir) / "llm") if cache_dir is not None else None
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.max_requests = max_requests
        self._http = http
        self._sleep = sleep
        self._count = 0
        self._count_lock = threading.Lock()

    def _client(self) -> httpx.Client:
        if self._http is None:
            headers = {"Authorization": f"Bearer {self._api_key}"} if self._api_key else {}
            self._http = httpx.Client(headers=headers, timeout=600.0)
        return self._http

    def _charge(self) -> None:
        with self._count_lock:
            if self.max_requests is not None and self._count >= self.max_requests:
                raise BudgetExceeded(f"request cap of {self.max_requests} reached")
            self._count += 1

    def _call(self, req: CompletionRequest) -> str:
        body: dict[str, Any] = {
            "model": req.model.model_id,
            "messages": [
                {"role": "system", "content": req.system_text},
                {"role": "user", "content": req.user_text},
            ],
            "max_completion_tokens": req.model.max_output_tokens,
        }
        data = _post_with_retries(self._client(), f"{self.base_url}/chat/completions", body, self._sleep, ProviderError)
        try:
            return data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"unexpected completion payload: {exc}") from exc

    def complete(self, req: CompletionRequest, parser: Callable[[str], Any] | None = None) -> CompletionResult:
        fp = req.fingerprint
        self._charge()
        if self.mode == "replay":
            assert self.store is not None
            entry = self.store.load(fp)
            if entry is None:
                raise MissingRecording(fp)
            raw = entry["raw_text"]
        else:
            raw = self._call(req)
            if self.mode == "record":
                assert self.store is not None
                self.store.store(fp, {
                    "fingerprint": fp,
                    "model": req.model.to_dict(),
                    "run_index": req.run_index,
                    "system_text": req.system_text,
                    "user_text": req.user_text,
                    "raw_text": raw,
                })
        parsed: Any = None
        if parser is not None:
            try:
                parsed = parser(raw)
            except UnparseableOutput as exc:
                parsed = ParseFailure(str(exc))
        return CompletionResult(raw_text=raw, parsed=parsed, request_fingerprint=fp)


class Embedder:
    """Text embeddings with the same record/replay discipline, under ``embed/``."""

    def __init__(
        self,
        cache_dir: str | Path | None = None,
        mode: str = "replay",
        model_id: str = "text-embedding-3-small",
        *,
        api_key: str | None = None,
        base_url: str | None = None,
        http: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode != "live" and cache_dir is None:
            raise ValueError(f"mode {mode!r} needs a cache directory")
        self.mode = mode
        self.model_id = model_id
        self.store = _RecordStore(Path(cache_dir) / "embed") if cache_dir is not None else None
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self._http = http
        self._sleep = sleep

    def fingerprint(self, text: str) -> str:
        return hashlib.sha256(netstring(self.model_id, text)).hexdigest()

    def embed(self, text: str) -> list[float]:
        fp = self.fingerprint(text)
        if self.mode == "replay":
            assert self.store is not None
            entry = self.store.load(fp)
            if entry is None:
                raise EmbedderUnavailable(f"no recorded embedding {fp}")
            return [float(v) for v in entry["vector"]]
        if self._http is None:
            headers = {"Authorization": f"Bearer {self._api_key}"} if self._api_key else {}
            self._http = httpx.Client(headers=headers, timeout=120.0)
        data = _post_with_retries(
            self._http, f"{self.base_url}/embeddings", {"model": self.model_id, "input": text},
            self._sleep, EmbedderUnavailable,
        )
        vector = [float(v) for v in data["data"][0]["embedding"]]
        if self.mode == "record":
            assert self.store is not None
            self.store.store(fp, {"fingerprint": fp, "model_id": self.model_id, "text": text, "vector": vector})
        return vector


# labeled-output parsing ----------------------------------------------------------

OUTPUT_FORMAT_VERSION = "labels-v1"

_FENCED = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
_LABEL_LINE = re.compile(
    r"^\s*(?:[-*+]\s*|\d+[.)]\s*)?[\"'`]?(?P<id>a\d+s\d+)[\"'`]?\s*(?:->|=>|:|=)\s*(?P<labels>.*?)\s*$"
)
_COMPONENT_NAMES = {re.sub(r"[^a-z]", "", c.value.lower()): c for c in RationaleComponent}
_COMPONENT_NAMES["alternative"] = RationaleComponent.ALTERNATIVES
_EMPTY_TOKENS = {"", "none", "empty", "null", "nolabel", "nolabels"}


@dataclass(frozen=True)
class LabelParse:
    labels: dict[str, frozenset[RationaleComponent]]
    notes: tuple[str, ...] = ()


def _parse_labels(text: str) -> tuple[set[RationaleComponent], list[str]]:
    inner = text.strip().strip(",;")
    if inner.startswith("[") and "]" in inner:
        inner = inner[1 : inner.index("]")]
    found: set[RationaleComponent] = set()
    unknown: list[str] = []
    for tok in re.split(r"[,;|/]", inner):
        norm = re.sub(r"[^a-z]", "", tok.lower())
        if norm in _EMPTY_TOKENS:
            continue
        comp = _COMPONENT_NAMES.get(norm)
        if comp is None:
            unknown.append(tok.strip().strip("\"'`"))
        else:
            found.add(comp)
    return found, unknown


def parse_labeled_output(raw_text: str, expected_ids: Sequence[str]) -> LabelParse:
    """Recover ``id -> [labels]`` lines; the fenced block wins over surrounding prose."""
    expected = list(expected_ids)
    wanted = set(expected)
    candidates = [m.group(1) for m in _FENCED.finditer(raw_text)]
    regions = [c for c in candidates if any(_LABEL_LINE.match(ln) for ln in c.splitlines())] or [raw_text]

    notes: list[str] = []
    result: dict[str, frozenset[RationaleComponent]] = {}
    for region in regions:
        for line in region.splitlines():
            m = _LABEL_LINE.match(line)
            if not m:
                continue
            sid = m.group("id")
            if sid not in wanted:
                notes.append(f"unexpected id {sid} ignored")
                continue
            if sid in result:
                notes.append(f"duplicate line for {sid} ignored")
                continue
            labels, unknown = _parse_labels(m.group("labels"))
            for u in unknown:
                notes.append(f"unknown label {u!r} for {sid} dropped")
            result[sid] = frozenset(labels)
    if not result and expected:
        raise UnparseableOutput("no sentence id could be recovered from model output")
    for sid in expected:
        if sid not in result:
            notes.append(f"{sid} missing from output; treated as unlabeled")
            result[sid] = frozenset()
    return LabelParse(labels={sid: result[sid] for sid in expected}, notes=tuple(notes))

"""GitHub REST access with a per-request record/replay cache.

Every GET is keyed by ``sha256("GET " + canonical_url)`` and stored as one
JSON file under ``<cache_dir>/http/``. In replay mode the network is never
touched and a cache miss is an error.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import threading
import time
from pathlib import Path
from typing import Any, Callable
from urllib.parse import urlencode, urlsplit, parse_qsl, urlunsplit

import httpx

from .errors import MissingCachedResponse, PlatformUnavailable, RateLimited
from .model import ChangedFile, Commit, language_for

logger = logging.getLogger(__name__)

API_URL = "https://api.github.com"
TOKEN_ENV = "RF_PLATFORM_TOKEN"
MODES = ("record", "replay", "off")
BACKOFF = (1.0, 2.0, 4.0)
_RESPONSE_HEADERS = ("link", "x-ratelimit-remaining", "content-type")


def canonical_url(url: str, params: dict[str, Any] | None = None) -> str:
    parts = urlsplit(url)
    query = parse_qsl(parts.query) + [(k, str(v)) for k, v in (params or {}).items()]
    return urlunsplit((parts.scheme, parts.netloc, parts.path, urlencode(sorted(query)), ""))


def request_key(url: str) -> str:
    return hashlib.sha256(f"GET {url}".encode()).hexdigest()


class TokenBucket:
    """Thread-safe token bucket; ``acquire`` blocks until a token is free."""

    def __init__(self, rate: float = 1.0, capacity: int = 10, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep) -> None:
        self.rate = rate
        self.capacity = capacity
        self._tokens = float(capacity)
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


class HttpCache:
    def __init__(self, cache_dir: str | Path) -> None:
        self.root = Path(cache_dir) / "http"
        self._lock = threading.Lock()

    def path(self, url: str) -> Path:
        return self.root / f"{request_key(url)}.rec"

    def load(self, url: str) -> dict[str, Any] | None:
        p = self.path(url)
        if not p.exists():
            return None
        return json.loads(p.read_text(encoding="utf-8"))

    def store(self, url: str, status: int, headers: dict[str, str], body: str, accept: str) -> None:
        entry = {
            "request_line": f"GET {url}",
            "request_headers": {"accept": accept},
            "status": status,
            "response_headers": {k: headers[k] for k in _RESPONSE_HEADERS if k in headers},
            "body": body,
        }
        with self._lock:
            self.root.mkdir(parents=True, exist_ok=True)
            tmp = self.path(url).with_suffix(".tmp")
            tmp.write_text(json.dumps(entry, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
            tmp.replace(self.path(url))


class PlatformClient:
    """Minimal GitHub REST client for one repository."""

    accept = "application/vnd.github+json"

    def __init__(
        self,
        repo_slug: str,
        *,
        mode: str = "off",
        cache_dir: str | Path | None = None,
        token: str | None = None,
        base_url: str = API_URL,
        http: httpx.Client | None = None,
        limiter: TokenBucket | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode != "off" and cache_dir is None:
            raise ValueError(f"mode {mode!r} needs a cache directory")
        self.repo_slug = repo_slug
        self.mode = mode
        self.cache = HttpCache(cache_dir) if cache_dir is not None else None
        self.base_url = base_url.rstrip("/")
        self._token = token if token is not None else os.environ.get(TOKEN_ENV)
        self._http = http
        self._limiter = limiter or TokenBucket()
        self._sleep = sleep

    # transport ------------------------------------------------------------

    def _client(self) -> httpx.Client:
        if self._http is None:
            headers = {"Accept": self.accept, "X-GitHub-Api-Version": "2022-11-28"}
            if self._token:
                headers["Authorization"] = f"Bearer {self._token}"
            self._http = httpx.Client(headers=headers, timeout=30.0, follow_redirects=True)
        return self._http

    def _live(self, url: str) -> tuple[int, dict[str, str], str]:
        last_error: Exception | None = None
        for attempt in range(len(BACKOFF) + 1):
            if attempt:
                self._sleep(BACKOFF[attempt - 1])
            self._limiter.acquire()
            try:
                resp = self._client().get(url)
            except httpx.TransportError as exc:
                last_error = exc
                logger.warning("GET %s failed (%s), attempt %d", url, exc, attempt + 1)
                continue
            headers = {k.lower(): v for k, v in resp.headers.items()}
            if resp.status_code == 429 or (
                resp.status_code == 403 and headers.get("x-ratelimit-remaining") == "0"
            ):
                raise RateLimited(f"rate limit exhausted at {url}")
            if resp.status_code == 401:
                raise PlatformUnavailable(f"authentication rejected for {url}; check ${TOKEN_ENV}")
            if resp.status_code >= 500:
                last_error = PlatformUnavailable(f"HTTP {resp.status_code} from {url}")
                continue
            return resp.status_code, headers, resp.text
        raise PlatformUnavailable(f"GET {url} failed after {len(BACKOFF) + 1} attempts: {last_error}")

    def fetch(self, url: str) -> tuple[int, dict[str, str], str]:
        """Raw GET through the cache: ``(status, headers, body)``."""
        if self.mode == "replay":
            assert self.cache is not None
            entry = self.cache.load(url)
            if entry is None:
                raise MissingCachedResponse(f"no cached response for GET {url}")
            return entry["status"], entry["response_headers"], entry["body"]
        status, headers, body = self._live(url)
        if self.mode == "record":
            assert self.cache is not None
            self.cache.store(url, status, headers, body, self.accept)
        return status, headers, body

    def get_json(self, path: str, params: dict[str, Any] | None = None) -> Any | None:
        """Decoded JSON, or ``None`` on 404."""
        url = canonical_url(f"{self.base_url}{path}", params)
        status, _, body = self.fetch(url)
        if status == 404:
            return None
        if status >= 400:
            raise PlatformUnavailable(f"HTTP {status} for {url}")
        return json.loads(body)

    def get_paginated(self, path: str, params: dict[str, Any] | None = None, items_key: str | None = None) -> list:
        url: str | None = canonical_url(f"{self.base_url}{path}", {"per_page": 100, **(params or {})})
        out: list = []
        while url:
            status, headers, body = self.fetch(url)
            if status == 404:
                return out
            if status >= 400:
                raise PlatformUnavailable(f"HTTP {status} for {url}")
            data = json.loads(body)
            out.extend(data[items_key] if items_key else data)
            url = _next_link(headers.get("link", ""))
            if url:
                url = canonical_url(url)
        return out

    # endpoints --------------------------------------------------------------

    @property
    def _repo(self) -> str:
        return f"/repos/{self.repo_slug}"

    def get_commit(self, sha: str) -> Commit:
        data = self.get_json(f"{self._repo}/commits/{sha}")
        if data is None:
            raise PlatformUnavailable(f"commit {sha} not found in {self.repo_slug}")
        files = data.get("files", [])
        diff_parts = []
        changed = []
        for f in files:
            name = f["filename"]
            changed.append(ChangedFile(name, language_for(name), int(f.get("additions", 0)), int(f.get("deletions", 0))))
            old = "/dev/null" if f.get("status") == "added" else f"a/{f.get('previous_filename', name)}"
            new = "/dev/null" if f.get("status") == "removed" else f"b/{name}"
            diff_parts.append(f"diff --git a/{name} b/{name}\n--- {old}\n+++ {new}\n{f.get('patch', '')}\n")
        return Commit(
            repo_slug=self.repo_slug,
            sha=data["sha"],
            message=data["commit"]["message"],
            diff="".join(diff_parts),
            changed_files=tuple(changed),
        )

    def get_file(self, path: str, ref: str) -> str | None:
        data = self.get_json(f"{self._repo}/contents/{path}", {"ref": ref})
        if data is None:
            return None
        return base64.b64decode(data["content"]).decode("utf-8", errors="replace")

    def get_issue(self, number: int) -> dict | None:
        return self.get_json(f"{self._repo}/issues/{number}")

    def get_issue_comments(self, number: int) -> list[dict]:
        return self.get_paginated(f"{self._repo}/issues/{number}/comments")

    def get_review_comments(self, number: int) -> list[dict]:
        return self.get_paginated(f"{self._repo}/pulls/{number}/comments")

    def search_mentions(self, text: str) -> list[dict]:
        """Issues and PRs of this repository whose text mentions ``text``."""
        return self.get_paginated("/search/issues", {"q": f"{text} repo:{self.repo_slug}"}, items_key="items")


def _next_link(link_header: str) -> str | None:
    for part in link_header.split(","):
        section = part.split(";")
        if len(section) >= 2 and section[1].strip() == 'rel="next"':
            return section[0].strip().strip("<>")
    return None

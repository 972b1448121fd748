"""Record the end-to-end replay fixture under ``tests/fixtures/e2e``.

A scripted hosting platform and a scripted model stand in for the live
services. Their answers go through the normal record-mode code paths, so the
cache has exactly the layout a live recording produces. The okhttp content is
a small hand reconstruction of the public commit and issues, not a mirror.

Outputs:
  cache/http, cache/llm, cache/embed   replay recordings
  corpus/                              ground truth for the three commits
  golden/<sha>/                        expected stage outputs (replay mode)

Run from the repository root: ``python3 scripts/build_fixtures.py``.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import shutil
from collections import defaultdict
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

import httpx

from rationale_forge import cli, pipeline
from rationale_forge.config import RunConfig
from rationale_forge.dataset import GroundTruthRecord, Split, save_corpus
from rationale_forge.extractor import PromptStrategy
from rationale_forge.gateway import Embedder, Gateway, ModelSpec
from rationale_forge.generator import consistency, generate
from rationale_forge.model import LabeledSentence, RationaleComponent
from rationale_forge.platform import PlatformClient, TokenBucket

ROOT = Path(__file__).resolve().parents[1]
OUT = ROOT / "tests" / "fixtures" / "e2e"
G, N, A = RationaleComponent.GOAL, RationaleComponent.NEED, RationaleComponent.ALTERNATIVES
MODEL = ModelSpec("openai", "o4-mini")
API = "https://api.github.com"


def sha(seed: str) -> str:
    return hashlib.sha1(seed.encode()).hexdigest()


# scripted platform ------------------------------------------------------------------

OKHTTP_SHA = "4c86085429edbeef0a383941936ee7b64cc3805e"
WIDGETS_SHA = sha("widgets-render-cache")
PLAIN_SHA = sha("plain-logging")

PLATFORM_JAVA = """\
/*
 * Copyright (C) 2012 Square, Inc.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 */
package com.squareup.okhttp.internal;

import java.net.Socket;
import javax.net.ssl.SSLSocket;

/**
 * Access to platform-specific features.
 *
 * <p>ALPN is not enabled on Android 4.4 because that release suffers from a
 * concurrency bug in its native TLS stack. NPN remains available there.
 */
public class Platform {
  private static final Platform PLATFORM = findPlatform();

  /** Returns the platform for the running VM. */
  public static Platform get() {
    return PLATFORM;
  }

  /**
   * Configures TLS extensions on {@code sslSocket} for {@code hostname}.
   */
  public void configureTlsExtensions(SSLSocket sslSocket, String hostname) {
    // Only NPN is negotiated here.
    // ALPN was removed because it crashes some devices.
    enableNpn(sslSocket, "// not a comment");
  }

  private void enableNpn(SSLSocket sslSocket, String tag) {
    // Reflective call kept for older releases.
  }

  private static Platform findPlatform() {
    return new Platform();
  }
}
"""

WIDGET_JAVA = """\
package widgets;

import java.util.LinkedHashMap;
import java.util.Map;

/**
 * Renders dashboard widgets.
 *
 * Rendering is expensive, so unchanged widgets are served from a cache.
 */
public final class WidgetRenderer {
  private final Map<String, View> cache;

  /** Creates a renderer whose cache holds at most {@code capacity} views. */
  public WidgetRenderer(int capacity) {
    this.cache = new LinkedHashMap<>(capacity, 0.75f, true);
  }

  /** Renders {@code widget}, reusing the cached view when its state is unchanged. */
  public View render(Widget widget) {
    String key = widget.stateKey();
    // A hit means the widget state is unchanged since the last render.
    View cached = cache.get(key);
    if (cached != null) {
      return cached;
    }
    /* Miss: render and remember the view. */
    View view = widget.draw();
    cache.put(key, view);
    return view;
  }

  private void unrelated() {
    // This comment sits in a method the commit does not touch.
  }
}
"""

LOG_JAVA = """\
package plain;

/** Central logging setup for the command line tools. */
public final class Log {
  public static void init() {
    System.setProperty("log.level", "info");
  }
}
"""


def _line_of(source: str, needle: str) -> int:
    return source[: source.index(needle)].count("\n") + 1


def _okhttp_patch() -> str:
    start = _line_of(PLATFORM_JAVA, "  public void configureTlsExtensions")
    return (
        f"@@ -{start},5 +{start},5 @@ public class Platform {{\n"
        "   public void configureTlsExtensions(SSLSocket sslSocket, String hostname) {\n"
        "-    if (useAlpn) {\n"
        "-      enableAlpn(sslSocket, hostname);\n"
        "-    }\n"
        "+    // Only NPN is negotiated here.\n"
        "+    // ALPN was removed because it crashes some devices.\n"
        "     enableNpn(sslSocket, \"// not a comment\");\n"
    )


def _widgets_patch() -> str:
    start = _line_of(WIDGET_JAVA, "    String key = widget.stateKey();")
    return (
        f"@@ -{start},2 +{start},10 @@ public final class WidgetRenderer {{\n"
        "     String key = widget.stateKey();\n"
        "+    // A hit means the widget state is unchanged since the last render.\n"
        "+    View cached = cache.get(key);\n"
        "+    if (cached != null) {\n"
        "+      return cached;\n"
        "+    }\n"
        "+    /* Miss: render and remember the view. */\n"
        "     View view = widget.draw();\n"
        "+    cache.put(key, view);\n"
    )


def _plain_patch() -> str:
    start = _line_of(LOG_JAVA, '    System.setProperty')
    return (
        f"@@ -{start},1 +{start},1 @@ public final class Log {{\n"
        '-    System.setProperty("log.level", "debug");\n'
        '+    System.setProperty("log.level", "info");\n'
    )


def _user(login: str) -> dict:
    return {"login": login}


def _issue(slug, number, title, body, login, created, pr=False):
    kind = "pull" if pr else "issues"
    data = {
        "number": number,
        "title": title,
        "body": body,
        "user": _user(login),
        "created_at": created,
        "html_url": f"https://github.com/{slug}/{kind}/{number}",
    }
    if pr:
        data["pull_request"] = {"url": f"{API}/repos/{slug}/pulls/{number}"}
    return data


def _comment(cid, login, created, body, **extra):
    return {"id": cid, "user": _user(login), "created_at": created, "body": body, **extra}


REPOS: dict[str, dict] = {
    "square/okhttp": {
        "commits": {
            OKHTTP_SHA: {
                "sha": OKHTTP_SHA,
                "commit": {"message": "Dropping ALPN support.\n\nSee #666."},
                "files": [{
                    "filename": "okhttp/src/main/java/com/squareup/okhttp/internal/Platform.java",
                    "status": "modified", "additions": 2, "deletions": 3, "patch": _okhttp_patch(),
                }],
            },
        },
        "contents": {
            ("okhttp/src/main/java/com/squareup/okhttp/internal/Platform.java", OKHTTP_SHA): PLATFORM_JAVA,
        },
        "issues": {
            666: _issue(
                "square/okhttp", 666, "ALPN negotiation crashes on Android 4.4",
                "Enabling ALPN on Android 4.4 leads to intermittent native crashes under load. "
                "The SSL_CTX_set_alpn_protos call is not thread safe, so concurrent handshakes corrupt shared state.\n\n"
                "```\nFatal signal 11 (SIGSEGV) at 0x00000000\n```",
                "dev-a", "2014-03-02T10:00:00Z",
            ),
            647: _issue(
                "square/okhttp", 647, "Segfault in libssl.so during concurrent requests",
                "Our app hits a segfault in libssl.so when many requests start at once.\n\n"
                "```\n#00 pc 0003a1f4 /system/lib/libssl.so\n```",
                "dev-b", "2014-02-20T08:00:00Z",
            ),
        },
        "comments": {
            666: [
                _comment(6662, "dev-c", "2014-03-02T12:00:00Z",
                         "Another option is to enable ALPN only on Android 5.0 and newer."),
                _comment(6661, "dev-b", "2014-03-02T11:00:00Z",
                         "We could guard the call with a global lock, but that would serialize every handshake."),
                _comment(6663, "dev-a", "2014-03-03T09:00:00Z",
                         "Given how few servers need ALPN today, dropping it is the simplest fix. "
                         "Thanks for the analysis!"),
            ],
            647: [
                _comment(6471, "dev-a", "2014-03-04T09:00:00Z",
                         "Fixed by 4c86085, which drops ALPN. Likely the same root cause as #666."),
            ],
        },
        "reviews": {},
        "search": {"4c86085": [647]},
    },
    "example-org/widgets": {
        "commits": {
            WIDGETS_SHA: {
                "sha": WIDGETS_SHA,
                "commit": {"message": "Cache rendered widgets\n\nFixes #12"},
                "files": [{
                    "filename": "src/main/java/widgets/WidgetRenderer.java",
                    "status": "modified", "additions": 7, "deletions": 0, "patch": _widgets_patch(),
                }],
            },
        },
        "contents": {("src/main/java/widgets/WidgetRenderer.java", WIDGETS_SHA): WIDGET_JAVA},
        "issues": {
            12: _issue(
                "example-org/widgets", 12, "Widget rendering is slow on large dashboards",
                "Every refresh re-renders all widgets, which takes seconds on dashboards with hundreds of widgets.",
                "ops-1", "2021-05-01T09:00:00Z",
            ),
            34: _issue(
                "example-org/widgets", 34, "Add a render cache for widgets",
                "This adds an LRU cache so unchanged widgets are not re-rendered. "
                "Alternatively we could diff the widget tree, but that needs a larger refactor.\n\n"
                "- Cache size is bounded.\n- Hits skip drawing entirely.",
                "dev-w", "2021-05-02T09:00:00Z", pr=True,
            ),
        },
        "comments": {
            12: [_comment(121, "dev-w", "2021-05-01T15:00:00Z", "I opened #34 with a cache keyed by widget state.")],
            34: [_comment(341, "ops-1", "2021-05-03T08:00:00Z", "Looks good to me, version 2.4.1 can ship it.")],
        },
        "reviews": {
            34: [
                _comment(904, "dev-w", "2021-05-02T11:00:00Z",
                         "A weak map would evict too eagerly under GC pressure, so I kept the LRU.", in_reply_to_id=902),
                _comment(901, "rev-1", "2021-05-02T10:00:00Z",
                         "> @@ -10,6 +10,8 @@\n> +    cache.put(key, view);\n\nShould the cache size be configurable?"),
                _comment(903, "dev-w", "2021-05-02T10:30:00Z",
                         "Yes, I made it a constructor argument.", in_reply_to_id=901),
                _comment(902, "rev-2", "2021-05-02T10:05:00Z", "Consider a weak-value map instead of an LRU."),
            ],
        },
        "search": {},
    },
    "example-org/plain": {
        "commits": {
            PLAIN_SHA: {
                "sha": PLAIN_SHA,
                "commit": {"message": "Tidy up logging setup for 1.2.3"},
                "files": [
                    {"filename": "README.md", "status": "modified", "additions": 1, "deletions": 1,
                     "patch": "@@ -1,1 +1,1 @@\n-Logs\n+Logging\n"},
                    {"filename": "src/main/java/plain/Log.java", "status": "modified", "additions": 1,
                     "deletions": 1, "patch": _plain_patch()},
                ],
            },
        },
        "contents": {("src/main/java/plain/Log.java", PLAIN_SHA): LOG_JAVA},
        "issues": {},
        "comments": {},
        "reviews": {},
        "search": {},
    },
}

COMMITS = [("square/okhttp", OKHTTP_SHA), ("example-org/widgets", WIDGETS_SHA), ("example-org/plain", PLAIN_SHA)]


def _json(data, status=200, headers=None):
    return httpx.Response(status, json=data, headers=headers or {})


def platform_handler(request: httpx.Request) -> httpx.Response:
    parts = urlsplit(str(request.url))
    query = parse_qs(parts.query)
    path = parts.path
    if path == "/search/issues":
        q = query["q"][0]
        text, _, repo = q.partition(" repo:")
        hits = REPOS[repo]["search"].get(text, [])
        return _json({"total_count": len(hits), "items": [REPOS[repo]["issues"][n] for n in hits]})
    m = re.match(r"^/repos/([^/]+/[^/]+)/(.*)$", path)
    repo, rest = REPOS[m.group(1)], m.group(2)
    if m2 := re.match(r"^commits/([0-9a-f]+)$", rest):
        return _json(repo["commits"][m2.group(1)])
    if m2 := re.match(r"^contents/(.+)$", rest):
        source = repo["contents"].get((m2.group(1), query["ref"][0]))
        if source is None:
            return _json({"message": "Not Found"}, 404)
        return _json({"content": base64.b64encode(source.encode()).decode(), "encoding": "base64"})
    if m2 := re.match(r"^issues/(\d+)$", rest):
        issue = repo["issues"].get(int(m2.group(1)))
        return _json(issue) if issue else _json({"message": "Not Found"}, 404)
    if m2 := re.match(r"^issues/(\d+)/comments$", rest):
        comments = repo["comments"].get(int(m2.group(1)), [])
        # two-page answer for the longest thread, to exercise pagination
        page = int(query.get("page", ["1"])[0])
        if len(comments) >= 3:
            if page == 1:
                nxt = f"{API}{path}?per_page=100&page=2"
                return _json(comments[:2], headers={"Link": f'<{nxt}>; rel="next"'})
            return _json(comments[2:])
        return _json(comments)
    if m2 := re.match(r"^pulls/(\d+)/comments$", rest):
        return _json(repo["reviews"].get(int(m2.group(1)), []))
    return _json({"message": "Not Found"}, 404)


# scripted model ----------------------------------------------------------------------

# gold labels, matched against segmented sentence text
GOLD: list[tuple[str, set]] = [
    ("Dropping ALPN support.", {G}),
    ("ALPN negotiation crashes on Android 4.4", {N}),
    ("Enabling ALPN on Android 4.4 leads to intermittent native crashes", {N}),
    ("SSL_CTX_set_alpn_protos call is not thread safe", {N}),
    ("Segfault in libssl.so during concurrent requests", {N}),
    ("segfault in libssl.so when many requests start at once", {N}),
    ("We could guard the call with a global lock", {A}),
    ("enable ALPN only on Android 5.0 and newer", {A}),
    ("dropping it is the simplest fix", {G}),
    ("suffers from a", {N}),
    ("ALPN was removed because it crashes some devices", {G, N}),
    ("Cache rendered widgets", {G}),
    ("Widget rendering is slow on large dashboards", {N}),
    ("Every refresh re-renders all widgets", {N}),
    ("Add a render cache for widgets", {G}),
    ("This adds an LRU cache", {G}),
    ("Alternatively we could diff the widget tree", {A}),
    ("Consider a weak-value map instead of an LRU.", {A}),
    ("A weak map would evict too eagerly", {A}),
    ("Rendering is expensive, so unchanged widgets are served from a cache.", {N}),
]

# where the scripted model disagrees with the gold labels in every run
MODEL_BIAS: list[tuple[str, set]] = [
    ("dropping it is the simplest fix", {G, A}),
    ("Hits skip drawing entirely.", {G}),
    ("Rendering is expensive, so unchanged widgets are served from a cache.", set()),
]


def gold_labels(text: str) -> set:
    for needle, labels in GOLD:
        if needle in text:
            return set(labels)
    return set()


def model_labels(text: str) -> set:
    for needle, labels in MODEL_BIAS:
        if needle in text:
            return set(labels)
    return gold_labels(text)


_SENT = re.compile(r"^(a\d+s\d+): (.*)$")


def _identification_answer(user: str, run: int) -> str:
    body = user.split("\n## Sentences\n", 1)[1].split("\n## Output format", 1)[0]
    rows = [(m.group(1), m.group(2)) for m in map(_SENT.match, body.splitlines()) if m]
    labels = {sid: model_labels(text) for sid, text in rows}
    if run == 1:
        # a false positive that the other runs outvote
        for sid, _ in rows:
            if not labels[sid]:
                labels[sid] = {N}
                break
    if run == 2:
        # a dropped label that the other runs restore
        for sid, _ in reversed(rows):
            if labels[sid]:
                labels[sid] = set()
                break
    order = [c for c in (G, N, A)]
    lines = [f"{sid} -> [{', '.join(c.value for c in order if c in labels[sid])}]" for sid, _ in rows]
    if run == 0:
        return "```\n" + "\n".join(lines) + "\n```\n"
    if run == 1:
        return "Here are the labels for each sentence.\n\n```text\n" + "\n".join(lines) + "\n```\nLet me know if you need more."
    return "\n".join(line.replace(" -> ", " => ") for line in lines) + "\n"


_LABELED = re.compile(r"^(a\d+s\d+): (.*) \[([^\]]*)\]$")


def _generation_answer(user: str, nth: int) -> str:
    body = user.split("\n## Labeled sentences\n", 1)[1].split("\n## Output format", 1)[0]
    by_comp: dict[str, list[tuple[str, str]]] = defaultdict(list)
    for m in map(_LABELED.match, body.splitlines()):
        if m:
            for comp in filter(None, (c.strip() for c in m.group(3).split(","))):
                by_comp[comp].append((m.group(1), m.group(2)))
    out = {}
    for comp in ("Goal", "Need", "Alternatives"):
        items = by_comp.get(comp)
        if not items:
            # hallucinated section; the generator must drop it
            out[comp] = {"summary": f"No {comp.lower()} is documented.", "sources": []}
            continue
        lead = items[0][1].rstrip(".")
        prefix = "In short, " if nth else ""
        text = f"{prefix}{lead[0].lower() if prefix else lead[0]}{lead[1:]}."
        if len(items) > 1:
            text += f" Related discussion adds: {items[1][1].rstrip('.')}."
        sources = [sid for sid, _ in items[:2]]
        if comp == "Goal" and "Need" in by_comp:
            sources.append(by_comp["Need"][0][0])  # invalid citation, filtered out
        out[comp] = {"summary": text, "sources": sources}
    return "Summaries follow.\n\n```json\n" + json.dumps(out, indent=2) + "\n```\n"


class ScriptedModel:
    def __init__(self) -> None:
        self.calls: dict[str, int] = defaultdict(int)

    def __call__(self, request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        if request.url.path.endswith("/embeddings"):
            return httpx.Response(200, json={"data": [{"embedding": embed_vector(body["input"])}]})
        system, user = body["messages"][0]["content"], body["messages"][1]["content"]
        key = hashlib.sha256((system + "\x00" + user).encode()).hexdigest()
        nth = self.calls[key]
        self.calls[key] += 1
        if "\n## Sentences\n" in user:
            text = _identification_answer(user, nth)
        else:
            text = _generation_answer(user, nth)
        return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})


def embed_vector(text: str, dim: int = 16) -> list[float]:
    """Hashed bag of words, rounded so the recording is short and exact."""
    vec = [0.0] * dim
    for word in re.findall(r"[a-z0-9]+", text.lower()):
        h = int(hashlib.md5(word.encode()).hexdigest(), 16)
        vec[h % dim] += 1.0 if (h >> 8) % 2 else -1.0
    return [round(v, 6) for v in vec]


# build ---------------------------------------------------------------------------------


def main() -> None:
    if OUT.exists():
        shutil.rmtree(OUT)
    cache = OUT / "cache"
    record_cfg = RunConfig(cache_dir=cache, mode="record", model=MODEL, parallelism=1)
    model_http = httpx.Client(transport=httpx.MockTransport(ScriptedModel()))
    gateway = Gateway(cache, "record", http=model_http, api_key="fixture")
    embedder = Embedder(cache, "record", http=model_http, api_key="fixture")

    records = []
    for slug, commit_sha in COMMITS:
        platform = PlatformClient(
            slug, mode="record", cache_dir=cache, token="fixture",
            http=httpx.Client(transport=httpx.MockTransport(platform_handler)),
            limiter=TokenBucket(rate=1e9, capacity=10**9),
        )
        graph = pipeline.link(slug, commit_sha, record_cfg, platform)
        assert not graph.check(), graph.check()
        labels = pipeline.extract(graph, record_cfg, gateway)
        commit, voted = pipeline.read_labels(labels)
        if any(ls.labels for ls in voted):
            report = pipeline.generate_report(labels, record_cfg, gateway)
            if commit_sha == OKHTTP_SHA:
                second = generate(commit, voted, PromptStrategy.CG_FS, gateway, MODEL,
                                  exemplars=pipeline._exemplars(record_cfg, True), run_index=1)
                consistency([report, second], embedder)
        sentences = pipeline.graph_sentences(graph, record_cfg.segmenter)
        gold = [LabeledSentence(s, frozenset(gold_labels(s.text))) for s in sentences]
        present = {c for ls in gold for c in ls.labels}
        summaries = {
            G: "Remove ALPN negotiation from the platform layer.",
            N: "ALPN setup is not thread safe on Android 4.4 and crashes apps in libssl.so.",
            A: "A global lock or limiting ALPN to newer Android releases were considered.",
        } if commit_sha == OKHTTP_SHA else {
            G: "Cache rendered widget views keyed by widget state.",
            N: "Re-rendering every widget made large dashboards slow.",
            A: "Diffing the widget tree and a weak-value map were considered.",
        }
        records.append(GroundTruthRecord(
            commit=graph.commit, artifacts=graph.artifacts, labeled_sentences=tuple(gold),
            reference_summaries={c: t for c, t in summaries.items() if c in present}, split=Split.EVAL,
        ))
    save_corpus(records, OUT / "corpus")
    print("recorded", sum(1 for _ in cache.rglob("*.rec")), "responses")
    write_goldens(cache)


def write_goldens(cache: Path) -> None:
    """Run the CLI in replay mode and keep its outputs as the expected files.

    Paths are relative to the golden directory so the digest keys stay portable.
    """
    golden = OUT / "golden"
    golden.mkdir(parents=True, exist_ok=True)
    common = ["--mode", "replay", "--cache-dir", str(cache.resolve())]
    corpus = str((OUT / "corpus").resolve())
    prev = Path.cwd()
    os.chdir(golden)
    try:
        labels = []
        for slug, commit_sha in COMMITS:
            d = commit_sha[:7]
            assert cli.main(["link", slug, commit_sha, *common, "-o", f"{d}/graph.json"]) == 0
            assert cli.main(["extract", f"{d}/graph.json", *common, "-o", f"{d}/labels.json"]) == 0
            labels.append(f"{d}/labels.json")
            if commit_sha != PLAIN_SHA:
                assert cli.main(["generate", f"{d}/labels.json", *common, "-o", f"{d}/report.json",
                                 "--markdown", f"{d}/report.md"]) == 0
        assert cli.main(["evaluate", *labels, "--corpus", corpus, "-o", "metrics.json"]) == 0
    finally:
        os.chdir(prev)

if __name__ == "__main__":
    main()

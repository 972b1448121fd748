"""Regenerate the bundled exemplar pack (two small hand-written commits)."""

import hashlib
import json
from pathlib import Path

from rationale_forge.extractor import ExemplarCommit
from rationale_forge.model import (
    ArtifactKind, ArtifactRef, ChangedFile, Commit, LabeledSentence, RationaleComponent, Sentence,
)

OUT = Path(__file__).resolve().parents[1] / "src" / "rationale_forge" / "assets" / "exemplars"
G, N, A = RationaleComponent.GOAL, RationaleComponent.NEED, RationaleComponent.ALTERNATIVES


def sha(seed: str) -> str:
    return hashlib.sha1(seed.encode()).hexdigest()


def build(commit, arts, explanations, summaries):
    sents = []
    for ref, items in arts:
        for i, (text, labels) in enumerate(items):
            sents.append(LabeledSentence(Sentence(ref, i, text), frozenset(labels)))
    return ExemplarCommit(commit, tuple(sents), explanations, summaries)


def msg_ref(commit):
    return ArtifactRef(ArtifactKind.COMMIT_MESSAGE, "commit-message", commit.url)


NETKIT_DIFF = """diff --git a/src/main/java/netkit/ConnectionPool.java b/src/main/java/netkit/ConnectionPool.java
--- a/src/main/java/netkit/ConnectionPool.java
+++ b/src/main/java/netkit/ConnectionPool.java
@@ -40,7 +40,9 @@ public final class ConnectionPool {
   void evictIdle(long now) {
-    for (Connection c : connections) {
+    Iterator<Connection> it = connections.iterator();
+    while (it.hasNext()) {
+      Connection c = it.next();
       if (now - c.idleSince() > keepAliveNanos) {
-        connections.remove(c);
+        it.remove();
"""

JSONKIT_DIFF = """diff --git a/src/main/java/jsonkit/Reader.java b/src/main/java/jsonkit/Reader.java
--- a/src/main/java/jsonkit/Reader.java
+++ b/src/main/java/jsonkit/Reader.java
@@ -88,6 +88,9 @@ public class Reader {
   public Reader(InputStream in) {
+    if (in == null) {
+      throw new NullPointerException("in == null");
+    }
     this.in = in;
"""


def netkit() -> ExemplarCommit:
    slug = "example-org/netkit"
    c = Commit(slug, sha("exemplar-1"), "Evict idle connections through the iterator\n\nFixes #212.", NETKIT_DIFF,
               (ChangedFile("src/main/java/netkit/ConnectionPool.java", "java", 4, 2),))
    issue = ArtifactRef(ArtifactKind.ISSUE, "212", f"https://github.com/{slug}/issues/212")
    return build(
        c,
        [
            (msg_ref(c), [("Evict idle connections through the iterator", [G]), ("Fixes #212.", [])]),
            (issue, [
                ("ConcurrentModificationException when the pool cleans up", []),
                ("The cleanup task crashes with a ConcurrentModificationException whenever two connections "
                 "expire in the same pass.", [N]),
                ("We could copy the list before iterating, but that allocates on every cleanup run.", [A]),
                ("Removing through the iterator avoids both the crash and the copy.", [G]),
                ("Thanks for the quick report!", []),
            ]),
        ],
        {
            "a0s0": "The commit title states the intended outcome of the change.",
            "a1s1": "Reports the crash that made the change necessary.",
            "a1s2": "Weighs a different fix and gives the reason it was not taken.",
            "a1s3": "States what the adopted fix achieves.",
        },
        {
            G: "Remove idle connections through the iterator during pool cleanup.",
            N: "Cleanup crashed with a ConcurrentModificationException when several connections expired in one pass.",
            A: "Copying the connection list before iterating was considered but rejected because it allocates on "
               "every cleanup.",
        },
    )


def jsonkit() -> ExemplarCommit:
    slug = "example-org/jsonkit"
    c = Commit(slug, sha("exemplar-2"), "Reject null streams in Reader", JSONKIT_DIFF,
               (ChangedFile("src/main/java/jsonkit/Reader.java", "java", 3, 0),))
    pr = ArtifactRef(ArtifactKind.PULL_REQUEST, "57", f"https://github.com/{slug}/pull/57")
    review = ArtifactRef(ArtifactKind.CODE_REVIEW, "57", f"https://github.com/{slug}/pull/57/files")
    return build(
        c,
        [
            (msg_ref(c), [("Reject null streams in Reader", [G])]),
            (pr, [
                ("Fail fast on a null input stream", [G]),
                ("Passing null currently surfaces as an obscure failure deep inside the first read call.", [N]),
                ("This makes the constructor throw immediately so the stack trace points at the caller.", [G]),
                ("CI is green.", []),
            ]),
            (review, [
                ("Should we use Objects.requireNonNull here instead?", [A]),
                ("Works for me either way.", []),
            ]),
        ],
        {
            "a0s0": "Names the behavior the commit adds.",
            "a1s0": "The pull request title restates the intended behavior.",
            "a1s1": "Describes the problem with current behavior that motivates the change.",
            "a1s2": "Describes the effect the change is meant to have.",
            "a2s0": "Proposes a different implementation of the same check.",
        },
        {
            G: "Make the Reader constructor reject a null stream immediately.",
            N: "A null stream previously caused a confusing failure on the first read, far from the faulty caller.",
            A: "Using Objects.requireNonNull was suggested as an alternative way to perform the check.",
        },
    )


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for name, ex in (("01_netkit.json", netkit()), ("02_jsonkit.json", jsonkit())):
        assert not ex.missing_explanations(), ex.missing_explanations()
        (OUT / name).write_text(json.dumps(ex.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print("wrote", OUT / name)


if __name__ == "__main__":
    main()

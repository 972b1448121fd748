"""``rationale-forge`` command line.

Stages talk through files::

    rationale-forge link owner/repo SHA -o graph.json
    rationale-forge extract graph.json -o labels.json
    rationale-forge generate labels.json -o report.json --markdown report.md
    rationale-forge evaluate labels.json ... --corpus corpus/ -o metrics.json
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import config as config_mod
from . import pipeline
from .dataset import Split, load_corpus
from .errors import ForgeError, InputContractError
from .evalkit import classification_report, merge_reports, relative_improvement
from .extractor import PromptStrategy, classify, default_rules, load_exemplars, majority_vote
from .gateway import Gateway, ModelSpec
from .retriever import ArtifactGraph
from .tables import check_table, load_table

logger = logging.getLogger("rationale_forge")


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def _read_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InputContractError(f"{path} not found") from exc
    except json.JSONDecodeError as exc:
        raise InputContractError(f"{path} is not valid JSON: {exc}") from exc


def _config(args: argparse.Namespace) -> config_mod.RunConfig:
    flags = {
        "cache_dir": args.cache_dir,
        "mode": args.mode,
        "model": args.model,
        "runs": args.runs,
        "threshold": args.threshold,
        "parallelism": args.parallelism,
        "token_budget": args.token_budget,
        "seed": args.seed,
        "exemplars": getattr(args, "exemplars", None),
    }
    strategy = getattr(args, "strategy", None)
    if strategy is not None:
        key = "ci_strategy" if strategy.startswith("ci-") else "cg_strategy"
        flags[key] = strategy
    return config_mod.build(config_mod.load_file(args.config), flags)


# commands --------------------------------------------------------------------------------


def cmd_link(args: argparse.Namespace) -> int:
    cfg = _config(args)
    graph = pipeline.link(args.repo, args.sha, cfg)
    problems = graph.check()
    if problems:
        logger.warning("graph invariants: %s", "; ".join(problems))
    _write(args.output, graph.dumps())
    out = sys.stderr if args.output in (None, "-") else sys.stdout
    print(f"{graph.commit.repo_slug}@{graph.commit.short_sha}: {len(graph.artifacts)} artifacts, "
          f"{len(graph.edges)} links", file=out)
    for a in graph.artifacts:
        print(f"  {a.ref.kind.value:<14} {a.ref.locator:<40} {len(a.body_blocks):>3} blocks  {a.ref.url}", file=out)
    return 0


def cmd_extract(args: argparse.Namespace) -> int:
    cfg = _config(args)
    graph = ArtifactGraph.from_dict(_read_json(args.graph))
    doc = pipeline.extract(graph, cfg, pipeline.gateway_for(cfg))
    doc["graph_sha256"] = pipeline.digest(args.graph)
    _write(args.output, pipeline.dumps(doc))
    labeled = sum(1 for s in doc["labeled_sentences"] if s["labels"])
    print(f"{len(doc['labeled_sentences'])} sentences, {labeled} labeled", file=sys.stderr)
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _config(args)
    report = pipeline.generate_report(_read_json(args.labels), cfg, pipeline.gateway_for(cfg))
    _write(args.output, report.dumps())
    if args.markdown:
        _write(args.markdown, report.to_markdown())
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def _check_tables(paths: Sequence[str]) -> int:
    bad = 0
    for path in paths:
        for cell in check_table(load_table(path)):
            print(cell.line())
            bad += not cell.ok
    print(f"{bad} cell(s) outside tolerance")
    return 0 if bad == 0 else 1


def cmd_evaluate(args: argparse.Namespace) -> int:
    if args.reference_table:
        return _check_tables(args.reference_table)
    if not args.predictions or not args.corpus:
        raise InputContractError("evaluate needs prediction files and --corpus (or --reference-table)")
    records = load_corpus(args.corpus)
    gold = {r.commit.sha: list(r.labeled_sentences) for r in records}
    docs = [_read_json(p) for p in args.predictions]
    metrics = pipeline.evaluate_predictions(docs, gold)
    metrics["inputs"] = {
        "predictions": {p: pipeline.digest(p) for p in args.predictions},
        "corpus_index": pipeline.digest(Path(args.corpus) / "index.json"),
    }
    _write(args.output, pipeline.dumps(metrics))
    pooled = metrics["pooled"]["overall"]
    print("overall " + "  ".join(f"{k}={_pct(pooled[k])}" for k in ("precision", "recall", "f2")), file=sys.stderr)
    return 0


def _pct(v: float | None) -> str:
    return "n/a" if v is None else f"{100 * v:.1f}"


def _bench_cell(records, strategy: PromptStrategy, model: ModelSpec, cfg, gateway: Gateway) -> dict[str, Any]:
    exemplars = load_exemplars(cfg.exemplars) if strategy.uses_exemplars else []
    rules = default_rules() if strategy is PromptStrategy.CI_RFS else []
    reports = []
    for rec in records:
        sentences = [ls.sentence for ls in rec.labeled_sentences]
        runs = classify(rec.commit, sentences, strategy, cfg.voting, gateway, model, exemplars, rules,
                        cfg.token_budget, min(cfg.parallelism, cfg.voting.runs))
        reports.append(classification_report(majority_vote(runs, cfg.voting), list(rec.labeled_sentences)))
    return merge_reports(reports).to_dict()


def cmd_bench(args: argparse.Namespace) -> int:
    if args.ri_table:
        return _check_tables(args.ri_table)
    if not args.corpus:
        raise InputContractError("bench needs --corpus (or --ri-table)")
    cfg = _config(args)
    records = [r for r in load_corpus(args.corpus) if args.split is None or r.split is Split(args.split)]
    strategies = [PromptStrategy(s) for s in args.strategies.split(",")]
    models = [ModelSpec.parse(m) for m in args.models.split(",")] if args.models else [cfg.model]
    gateway = pipeline.gateway_for(cfg)
    table: dict[str, Any] = {}
    for model in models:
        row: dict[str, Any] = {}
        for strategy in strategies:
            row[strategy.value] = _bench_cell(records, strategy, model, cfg, gateway)
        for base, new in zip(strategies, strategies[1:]):
            ri = {}
            for metric in ("precision", "recall", "f2"):
                b, n = row[base.value]["overall"][metric], row[new.value]["overall"][metric]
                ri[metric] = None if b in (None, 0) or n is None else relative_improvement(n, b)
            row[f"RI {new.value} vs {base.value}"] = ri
        table[str(model)] = row
    _write(args.output, pipeline.dumps({"commits": len(records), "results": table}))
    for model, row in table.items():
        for strategy in strategies:
            o = row[strategy.value]["overall"]
            print(f"{model:<28} {strategy.value:<7} P={_pct(o['precision'])} R={_pct(o['recall'])} F2={_pct(o['f2'])}",
                  file=sys.stderr)
    return 0


# parser --------------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file (default: ./rationale-forge.toml when present)")
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--mode", choices=config_mod.MODES)
    p.add_argument("--model", help="provider:model_id")
    p.add_argument("--runs", type=int)
    p.add_argument("--threshold", type=int)
    p.add_argument("--parallelism", type=int)
    p.add_argument("--token-budget", dest="token_budget", type=int, help="prompt size cap in characters")
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rationale-forge",
                                     description="Recover commit rationale from linked development artifacts.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("link", help="resolve the artifacts linked to a commit")
    p.add_argument("repo")
    p.add_argument("sha")
    _common(p)
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("extract", help="label artifact sentences")
    p.add_argument("graph")
    p.add_argument("--strategy", choices=[s.value for s in PromptStrategy if s.is_identification])
    p.add_argument("--exemplars", help="directory of exemplar JSON files")
    _common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("generate", help="summarize labeled sentences per component")
    p.add_argument("labels")
    p.add_argument("--strategy", choices=[s.value for s in PromptStrategy if not s.is_identification])
    p.add_argument("--exemplars", help="directory of exemplar JSON files")
    p.add_argument("--markdown", help="also write a Markdown report here")
    _common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score predictions against a ground-truth corpus")
    p.add_argument("predictions", nargs="*")
    p.add_argument("--corpus")
    p.add_argument("--reference-table", dest="reference_table", action="append",
                   help="check a P/R/F2 or IC/EI/F2 table file instead (repeatable)")
    _common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="compare strategies and models on a corpus")
    p.add_argument("--corpus")
    p.add_argument("--split", choices=[s.value for s in Split])
    p.add_argument("--strategies", default="ci-zs,ci-fs,ci-rfs")
    p.add_argument("--models", help="comma-separated provider:model_id list")
    p.add_argument("--exemplars")
    p.add_argument("--ri-table", dest="ri_table", action="append",
                   help="verify a relative-improvement table file instead (repeatable)")
    _common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

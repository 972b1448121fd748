"""Run configuration: ``rationale-forge.toml`` merged under command-line flags."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import InputContractError
from .extractor import DEFAULT_PROMPT_BUDGET, PromptStrategy, VotingPolicy
from .gateway import ModelSpec
from .segmenter import SegmenterConfig

CONFIG_FILE = "rationale-forge.toml"
MODES = ("record", "replay", "live")


@dataclass(frozen=True)
class RunConfig:
    cache_dir: Path | None = None
    mode: str = "live"
    model: ModelSpec = field(default_factory=lambda: ModelSpec("openai", "o4-mini"))
    ci_strategy: PromptStrategy = PromptStrategy.CI_RFS
    cg_strategy: PromptStrategy = PromptStrategy.CG_FS
    voting: VotingPolicy = field(default_factory=VotingPolicy)
    parallelism: int = 4
    token_budget: int = DEFAULT_PROMPT_BUDGET
    seed: int = 0
    exemplars: Path | None = None
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise InputContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode != "live" and self.cache_dir is None:
            raise InputContractError(f"mode {self.mode!r} needs --cache-dir")
        if self.mode == "replay" and not Path(self.cache_dir).is_dir():
            raise InputContractError(f"replay cache {self.cache_dir} does not exist")
        if not self.ci_strategy.is_identification:
            raise InputContractError(f"{self.ci_strategy.value} is not an identification strategy")
        if self.cg_strategy.is_identification:
            raise InputContractError(f"{self.cg_strategy.value} is not a generation strategy")
        if self.parallelism < 1:
            raise InputContractError("parallelism must be >= 1")

    @property
    def http_mode(self) -> str:
        """Platform cache mode: ``live`` means no cache at all."""
        return "off" if self.mode == "live" else self.mode


def load_file(path: str | Path | None = None) -> dict[str, Any]:
    """Parse the config file; a missing default file is an empty config."""
    p = Path(path) if path is not None else Path.cwd() / CONFIG_FILE
    if not p.exists():
        if path is not None:
            raise InputContractError(f"config file {p} not found")
        return {}
    with p.open("rb") as fh:
        return tomllib.load(fh)


def build(file_values: Mapping[str, Any], flags: Mapping[str, Any]) -> RunConfig:
    """Flags that were given (not ``None``) override file values."""
    merged = {k: v for k, v in file_values.items() if k != "segmenter"}
    merged.update({k: v for k, v in flags.items() if v is not None})
    try:
        voting = VotingPolicy(int(merged.get("runs", 3)), int(merged.get("threshold", 2)))
    except ValueError as exc:
        raise InputContractError(str(exc)) from exc
    kwargs: dict[str, Any] = {
        "mode": merged.get("mode", "live"),
        "voting": voting,
        "parallelism": int(merged.get("parallelism", 4)),
        "token_budget": int(merged.get("token_budget", DEFAULT_PROMPT_BUDGET)),
        "seed": int(merged.get("seed", 0)),
        "segmenter": SegmenterConfig.from_mapping(file_values.get("segmenter", {})),
    }
    if merged.get("cache_dir"):
        kwargs["cache_dir"] = Path(merged["cache_dir"])
    if merged.get("exemplars"):
        kwargs["exemplars"] = Path(merged["exemplars"])
    if merged.get("model"):
        kwargs["model"] = ModelSpec.parse(str(merged["model"]))
    try:
        if merged.get("ci_strategy"):
            kwargs["ci_strategy"] = PromptStrategy(merged["ci_strategy"])
        if merged.get("cg_strategy"):
            kwargs["cg_strategy"] = PromptStrategy(merged["cg_strategy"])
    except ValueError as exc:
        raise InputContractError(str(exc)) from exc
    return RunConfig(**kwargs)

"""Python front end for the RHEA CL curriculum scheduler."""

from __future__ import annotations

import json
from os import PathLike
from typing import Any, Iterable

from . import _core
from ._core import (
    ConfigError,
    Env,
    curriculum_score,
    sobol_rate_grid,
    step_budget_multiplier,
    success_reward,
    validate_run_dir,
)

__version__ = _core.__version__

ACTIONS = ("left", "right", "forward", "pickup", "drop", "toggle", "done")


def default_config() -> dict[str, Any]:
    """Complete configuration with every default filled in."""
    return json.loads(_core.resolve_config())


def resolve_config(config: dict[str, Any] | None = None, overrides: Iterable[str] = ()) -> dict[str, Any]:
    """Validate a (partial) config plus dotted `key=value` overrides; return the full config."""
    text = json.dumps(config) if config is not None else ""
    return json.loads(_core.resolve_config(text, list(overrides)))


def load_config(path: str | PathLike[str], overrides: Iterable[str] = ()) -> dict[str, Any]:
    """Load a config file (same format as the CLI) with optional overrides."""
    return json.loads(_core.load_config_file(path, list(overrides)))


def run(config: dict[str, Any], out: str | PathLike[str] = "", jobs: int = 1) -> list[dict[str, Any]]:
    """Run every seed of `config` into `out`; returns one outcome dict per seed."""
    return _core.run(json.dumps(resolve_config(config)), out, jobs)


def aggregate(roots: Iterable[str | PathLike[str]], group_by: str = "name", bucket: int = 0) -> list[dict[str, Any]]:
    """Mean/std of roster performance per group and frame bucket."""
    return _core.aggregate(list(roots), group_by, bucket)


def read_log(run_dir: str | PathLike[str]) -> list[dict[str, Any]]:
    """All lines of a run's log.jsonl as dicts."""
    from pathlib import Path

    with open(Path(run_dir) / "log.jsonl", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


__all__ = [
    "ACTIONS",
    "ConfigError",
    "Env",
    "aggregate",
    "curriculum_score",
    "default_config",
    "load_config",
    "read_log",
    "resolve_config",
    "run",
    "sobol_rate_grid",
    "step_budget_multiplier",
    "success_reward",
    "validate_run_dir",
]

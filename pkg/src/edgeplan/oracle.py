"""Accuracy oracles: a deterministic synthetic surrogate, an external command
hook for real evaluation pipelines, and an exhaustive grid-search reference."""

from __future__ import annotations

import itertools
import json
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .errors import OracleError

DEFAULT_GRID_BUDGET = 10**6


@dataclass(frozen=True)
class SurrogateModel:
    """Synthetic accuracy model: kappa = clamp(kappa0 - sum_i w_i * (1 - a_i)^p).

    Stands in for fine-tuned evaluation of a compressed model. Masked layers
    pass a_i = 1 and therefore contribute no damage. The default weights are
    NOT measured values: they scale with each layer's share of prunable FLOPs
    so that compressing heavy layers hurts more, which keeps the search
    landscape non-trivial.
    """

    base_accuracy: float = 0.9299
    damage_weights: tuple[float, ...] = ()
    exponent: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.base_accuracy <= 1.0:
            raise ValueError(f"base accuracy must lie in [0, 1], got {self.base_accuracy}")
        if self.exponent <= 0:
            raise ValueError("damage exponent must be positive")
        if any(w < 0 for w in self.damage_weights):
            raise ValueError("damage weights must be non-negative")

    def accuracy(self, effective_actions: Sequence[float]) -> float:
        if len(effective_actions) != len(self.damage_weights):
            raise OracleError(
                f"surrogate has {len(self.damage_weights)} weights but plan has "
                f"{len(effective_actions)} actions")
        damage = sum(
            w * (1.0 - a) ** self.exponent
            for w, a in zip(self.damage_weights, effective_actions)
        )
        return min(1.0, max(0.0, self.base_accuracy - damage))


def default_surrogate(
    prunable_flops: Sequence[int],
    base_accuracy: float = 0.9299,
    total_damage: float = 0.3,
    exponent: float = 2.0,
) -> SurrogateModel:
    """Surrogate with damage weights proportional to each layer's FLOPs share."""
    total = float(sum(prunable_flops))
    if total <= 0:
        raise ValueError("prunable FLOPs must sum to a positive value")
    weights = tuple(total_damage * f / total for f in prunable_flops)
    return SurrogateModel(base_accuracy=base_accuracy, damage_weights=weights, exponent=exponent)


@dataclass(frozen=True)
class ExternalOracle:
    """Runs a user command to score a plan.

    The command template may reference ``{plan}``, replaced by the path of a
    JSON plan file. The command must print the accuracy as a single decimal
    token on its last non-empty stdout line; nothing else in the output is
    interpreted.
    """

    command: str
    timeout_s: float = 600.0

    def accuracy(self, payload: dict) -> float:
        fd, path = tempfile.mkstemp(prefix="edgeplan_plan_", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh)
            command = self.command.replace("{plan}", shlex.quote(path))
            try:
                proc = subprocess.run(
                    command, shell=True, capture_output=True, text=True, timeout=self.timeout_s)
            except subprocess.TimeoutExpired as exc:
                raise OracleError(f"oracle command timed out after {self.timeout_s}s: {command}") from exc
            if proc.returncode != 0:
                raise OracleError(
                    f"oracle command exited {proc.returncode}: {command}\n"
                    f"stdout: {proc.stdout.strip()!r}\nstderr: {proc.stderr.strip()!r}")
            return _parse_accuracy(proc.stdout, command)
        finally:
            try:
                os.unlink(path)
            except OSError:
                pass


def _parse_accuracy(stdout: str, command: str) -> float:
    lines = [line.strip() for line in stdout.splitlines() if line.strip()]
    if not lines:
        raise OracleError(f"oracle command produced no output: {command}")
    tokens = lines[-1].split()
    if len(tokens) != 1:
        raise OracleError(
            f"last output line must be a single decimal, got {lines[-1]!r}: {command}")
    try:
        value = float(tokens[0])
    except ValueError as exc:
        raise OracleError(f"cannot parse accuracy from {tokens[0]!r}: {command}") from exc
    if not 0.0 <= value <= 1.0:
        raise OracleError(f"accuracy {value} outside [0, 1]: {command}")
    return value


@dataclass(frozen=True)
class GridSpec:
    """Finite action grid applied to every prunable layer."""

    values: tuple[float, ...]
    layers: int

    def __post_init__(self):
        if not self.values:
            raise ValueError("grid must be non-empty")
        if any(not 0.0 < v <= 1.0 for v in self.values):
            raise ValueError("grid values must lie in (0, 1]")
        if self.layers < 1:
            raise ValueError("layer count must be >= 1")
        object.__setattr__(self, "values", tuple(sorted(set(float(v) for v in self.values))))


class GridSearchResult(NamedTuple):
    actions: tuple[float, ...]
    reward: float
    evaluations: int


def grid_search_reference(environment, grid: GridSpec, budget: int = DEFAULT_GRID_BUDGET) -> GridSearchResult:
    """Exhaustive optimum over the grid, through the same environment the agent sees.

    Combinations are scanned in lexicographic order of the ascending grid, so
    reward ties resolve to the lexicographically smallest action vector.
    """
    if grid.layers != environment.max_layer:
        raise OracleError(
            f"grid is for {grid.layers} layers, environment has {environment.max_layer}")
    total = len(grid.values) ** grid.layers
    if total > budget:
        raise OracleError(f"grid search needs {total} evaluations, budget is {budget}")
    best_actions: tuple[float, ...] | None = None
    best_reward = -1.0
    for combo in itertools.product(grid.values, repeat=grid.layers):
        outcome = environment.evaluate(combo)
        if outcome.terms.reward > best_reward:
            best_reward = outcome.terms.reward
            best_actions = combo
    assert best_actions is not None
    return GridSearchResult(actions=best_actions, reward=best_reward, evaluations=total)

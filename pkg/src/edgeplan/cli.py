"""Configuration loading, command dispatch, and report emission.

Commands: ``search`` (plan JSON + episode trace CSV), ``frontier`` (trade-off
CSV over split candidates), ``latency`` (latency-vs-rate CSV), ``gridcheck``
(brute-force optimum vs agent result). Configs are strict JSON: unknown keys
are rejected and every random draw descends from the single ddpg seed, so
identical config + seed reproduce artifacts byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ddpg, environment as env_mod, latency as latency_mod, oracle as oracle_mod
from .compressor import attach_autoencoder, make_banks
from .errors import ConfigError, EdgeplanError, SearchError
from .netgraph import NetworkGraph, layer_flops, make_split, parse_network

DEFAULT_RATES = tuple(float(r) for r in np.logspace(6, 9, 50))


def _fmt(value) -> str:
    """CSV/JSON number formatting: 9 significant digits for floats."""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _round9(value: float) -> float:
    return float(f"{value:.9g}")


@dataclass(frozen=True)
class OracleConfig:
    kind: str
    base_accuracy: float
    damage_total: float = 0.3
    exponent: float = 2.0
    damage_weights: tuple[float, ...] | None = None
    command: str | None = None
    timeout_s: float = 600.0

    def factory(self, net):
        """(accuracy_fn, base_accuracy) for one split network."""
        if self.kind == "surrogate":
            if self.damage_weights is not None:
                model = oracle_mod.SurrogateModel(
                    base_accuracy=self.base_accuracy,
                    damage_weights=self.damage_weights,
                    exponent=self.exponent)
            else:
                model = oracle_mod.default_surrogate(
                    [layer_flops(layer) for layer in net.prunable_layers],
                    base_accuracy=self.base_accuracy,
                    total_damage=self.damage_total,
                    exponent=self.exponent)
            return env_mod.surrogate_accuracy_fn(model), self.base_accuracy
        external = oracle_mod.ExternalOracle(command=self.command, timeout_s=self.timeout_s)
        return env_mod.external_accuracy_fn(external), self.base_accuracy


@dataclass(frozen=True)
class RunConfig:
    network_path: Path
    split: int | str
    beta: float
    seed: int
    output_dir: Path
    oracle: OracleConfig
    ddpg: ddpg.DdpgConfig
    profiles: tuple[latency_mod.DeploymentProfile, ...]
    rates: tuple[float, ...]

    @property
    def frontier_mode(self) -> bool:
        return self.split == "all"


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _number(obj: dict, key: str, default, where: str, lo=None, hi=None, integer=False):
    value = obj.get(key, default)
    if value is None:
        raise ConfigError(f"{where}: '{key}' is required")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: '{key}' must be a number, got {value!r}")
    if integer and not isinstance(value, int):
        raise ConfigError(f"{where}: '{key}' must be an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"{where}: '{key}' must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(f"{where}: '{key}' must be <= {hi}, got {value}")
    return value


_DDPG_KEYS = {
    "episodes", "buffer_capacity", "batch_size", "lr_actor", "lr_critic", "tau",
    "sigma_init", "sigma_decay", "sigma_min", "action_floor", "hidden_units", "seed",
}
_ORACLE_KEYS = {
    "kind", "base_accuracy", "damage_total", "exponent", "damage_weights",
    "command", "timeout_s",
}
_PROFILE_KEYS = {"name", "device_throughput", "server_throughput", "rate", "bytes_per_element"}
_TOP_KEYS = {"network", "split", "beta", "output_dir", "oracle", "ddpg", "profiles", "rates"}


def load_config(text: str, base_dir: Path | None = None) -> RunConfig:
    """Parse, validate, and default-fill a run configuration."""
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "config")

    network = raw.get("network")
    if not isinstance(network, str) or not network:
        raise ConfigError("config: 'network' (path to a network file) is required")
    network_path = Path(network)
    if not network_path.is_absolute():
        network_path = base_dir / network_path

    split = raw.get("split")
    if split != "all" and not (isinstance(split, int) and not isinstance(split, bool) and split >= 0):
        raise ConfigError("config: 'split' must be a layer id or \"all\"")

    beta = float(_number(raw, "beta", 1.0, "config", lo=0.0, hi=1.0))
    output_dir = Path(raw.get("output_dir", "out"))
    if not output_dir.is_absolute():
        output_dir = base_dir / output_dir

    d = raw.get("ddpg", {})
    if not isinstance(d, dict):
        raise ConfigError("config: 'ddpg' must be an object")
    _check_keys(d, _DDPG_KEYS, "ddpg")
    seed = _number(d, "seed", 0, "ddpg", lo=0, integer=True)
    ddpg_config = ddpg.DdpgConfig(
        episodes=_number(d, "episodes", 1100, "ddpg", lo=1, integer=True),
        buffer_capacity=_number(d, "buffer_capacity", 2000, "ddpg", lo=1, integer=True),
        batch_size=_number(d, "batch_size", 64, "ddpg", lo=1, integer=True),
        lr_actor=float(_number(d, "lr_actor", 0.001, "ddpg")),
        lr_critic=float(_number(d, "lr_critic", 0.0001, "ddpg")),
        tau=float(_number(d, "tau", 0.01, "ddpg")),
        sigma_init=float(_number(d, "sigma_init", 0.5, "ddpg")),
        sigma_decay=float(_number(d, "sigma_decay", 0.99, "ddpg")),
        sigma_min=float(_number(d, "sigma_min", 0.05, "ddpg")),
        action_floor=float(_number(d, "action_floor", 0.001, "ddpg")),
        hidden_units=_number(d, "hidden_units", 300, "ddpg", lo=1, integer=True),
    )
    try:
        ddpg_config.validate()
    except ValueError as exc:
        raise ConfigError(f"ddpg: {exc}") from exc

    o = raw.get("oracle", {"kind": "surrogate"})
    if not isinstance(o, dict):
        raise ConfigError("config: 'oracle' must be an object")
    _check_keys(o, _ORACLE_KEYS, "oracle")
    kind = o.get("kind", "surrogate")
    if kind not in ("surrogate", "external"):
        raise ConfigError(f"oracle: 'kind' must be surrogate or external, got {kind!r}")
    weights = o.get("damage_weights")
    if weights is not None:
        if not isinstance(weights, list) or not all(isinstance(w, (int, float)) for w in weights):
            raise ConfigError("oracle: 'damage_weights' must be a list of numbers")
        weights = tuple(float(w) for w in weights)
    command = o.get("command")
    if kind == "external" and not isinstance(command, str):
        raise ConfigError("oracle: external oracle needs a 'command' template")
    oracle_config = OracleConfig(
        kind=kind,
        base_accuracy=float(_number(o, "base_accuracy", 0.9299, "oracle", lo=0.0, hi=1.0)),
        damage_total=float(_number(o, "damage_total", 0.3, "oracle", lo=0.0)),
        exponent=float(_number(o, "exponent", 2.0, "oracle", lo=1e-9)),
        damage_weights=weights,
        command=command,
        timeout_s=float(_number(o, "timeout_s", 600.0, "oracle", lo=1e-9)),
    )

    raw_profiles = raw.get("profiles", [{
        "name": "default", "device_throughput": 1e9, "server_throughput": 1e11,
        "rate": 8e6, "bytes_per_element": 1,
    }])
    if not isinstance(raw_profiles, list) or not raw_profiles:
        raise ConfigError("config: 'profiles' must be a non-empty list")
    profiles = []
    for i, p in enumerate(raw_profiles):
        if not isinstance(p, dict):
            raise ConfigError(f"profiles[{i}]: must be an object")
        _check_keys(p, _PROFILE_KEYS, f"profiles[{i}]")
        profiles.append(latency_mod.DeploymentProfile(
            name=str(p.get("name", f"profile{i}")),
            device_throughput=float(_number(p, "device_throughput", None, f"profiles[{i}]")),
            server_throughput=float(_number(p, "server_throughput", None, f"profiles[{i}]")),
            rate=float(_number(p, "rate", None, f"profiles[{i}]")),
            bytes_per_element=_number(p, "bytes_per_element", 1, f"profiles[{i}]", lo=1, integer=True),
        ))

    raw_rates = raw.get("rates")
    if raw_rates is None:
        rates = DEFAULT_RATES
    else:
        if not isinstance(raw_rates, list) or not all(
                isinstance(r, (int, float)) and r > 0 for r in raw_rates):
            raise ConfigError("config: 'rates' must be a list of positive numbers")
        rates = tuple(float(r) for r in raw_rates)

    return RunConfig(
        network_path=network_path, split=split, beta=beta, seed=seed,
        output_dir=output_dir, oracle=oracle_config, ddpg=ddpg_config,
        profiles=tuple(profiles), rates=rates,
    )


def _load_graph(config: RunConfig) -> NetworkGraph:
    try:
        text = config.network_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read network file {config.network_path}: {exc}") from exc
    return parse_network(text)


def _build_environment(config: RunConfig, graph: NetworkGraph, split_id: int):
    net = attach_autoencoder(graph, make_split(graph, split_id))
    banks = make_banks(net, config.seed)
    accuracy_fn, base_accuracy = config.oracle.factory(net)
    env = env_mod.SearchEnvironment(net, banks, accuracy_fn, beta=config.beta)
    return env, base_accuracy


def _require_single_split(config: RunConfig, command: str) -> int:
    if config.frontier_mode:
        raise ConfigError(f"'{command}' needs a single split id, config says \"all\"")
    return int(config.split)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_trace(path: Path, trace) -> None:
    _write_csv(
        path,
        ["episode", "R_episode", "kappa", "nu", "rho", "sigma", "best_so_far"],
        [[r.episode, r.reward, r.kappa, r.nu, r.rho, r.sigma, r.best_so_far] for r in trace],
    )


def _plan_document(config: RunConfig, graph: NetworkGraph, result, outcome) -> dict:
    plan, terms = outcome.plan, outcome.terms
    return {
        "network": graph.name,
        "split_layer_id": plan.split.split_layer_id,
        "actions": [_round9(a) for a in plan.actions],
        "encoder_ratio": _round9(plan.encoder_ratio),
        "keep_sets": {str(k): list(v) for k, v in plan.keep_sets.items()},
        "masked_layer_ids": sorted(plan.masked_ids),
        "reward": _round9(terms.reward),
        "kappa": _round9(terms.kappa),
        "nu": _round9(terms.nu),
        "rho": _round9(terms.rho),
        "nu_clamped": terms.nu_clamped,
        "rho_clamped": terms.rho_clamped,
        "lambda_flops": plan.lambda_flops,
        "Lambda_flops": plan.capital_lambda_flops,
        "omega": plan.omega,
        "Omega": plan.capital_omega,
        "beta": _round9(config.beta),
        "seed": config.seed,
        "episodes": config.ddpg.episodes,
    }


def _run_search_command(config: RunConfig) -> None:
    graph = _load_graph(config)
    if config.frontier_mode:
        # Dispatch rule: split == "all" means frontier mode regardless of the
        # requested command.
        _run_frontier_command(config, graph)
        return
    split_id = int(config.split)
    env, _ = _build_environment(config, graph, split_id)
    try:
        result = ddpg.run_search(env, config.ddpg, config.seed)
    except SearchError as exc:
        _write_trace(config.output_dir / "trace.csv", exc.trace)
        raise
    outcome = env.evaluate(result.best_actions)
    _write_json(config.output_dir / "plan.json", _plan_document(config, graph, result, outcome))
    _write_trace(config.output_dir / "trace.csv", result.trace)


def _run_frontier_command(config: RunConfig, graph: NetworkGraph | None = None) -> None:
    graph = graph if graph is not None else _load_graph(config)
    candidates = None if config.frontier_mode else [int(config.split)]
    points = latency_mod.tradeoff_frontier(
        graph, config.profiles, config.ddpg,
        beta=config.beta, seed=config.seed,
        oracle_factory=config.oracle.factory,
        candidates=candidates,
    )
    _write_csv(
        config.output_dir / "frontier.csv",
        ["split_id", "device_flops", "feature_elements", "kappa", "reward",
         "latency_s", "dominated", "reference"],
        [[p.split_id, p.device_flops, p.feature_elements, p.kappa, p.reward,
          p.latency_s, p.dominated, p.reference] for p in points],
    )


def _run_latency_command(config: RunConfig, rates: Sequence[float] | None) -> None:
    graph = _load_graph(config)
    split_id = _require_single_split(config, "latency")
    env, _ = _build_environment(config, graph, split_id)
    result = ddpg.run_search(env, config.ddpg, config.seed)
    costs = latency_mod.plan_costs(env.evaluate(result.best_actions).plan)
    sweep = tuple(rates) if rates else config.rates
    rows = []
    for profile in config.profiles:
        for rate in sweep:
            adjusted = latency_mod.DeploymentProfile(
                name=profile.name,
                device_throughput=profile.device_throughput,
                server_throughput=profile.server_throughput,
                rate=float(rate),
                bytes_per_element=profile.bytes_per_element,
            )
            rows.append([profile.name, float(rate),
                         latency_mod.end_to_end_latency(costs, adjusted)])
    _write_csv(config.output_dir / "latency.csv", ["profile", "rate_bps", "latency_s"], rows)


def _run_gridcheck_command(config: RunConfig, grid_values: Sequence[float] | None) -> None:
    graph = _load_graph(config)
    split_id = _require_single_split(config, "gridcheck")
    env, _ = _build_environment(config, graph, split_id)
    values = tuple(grid_values) if grid_values else tuple(np.round(np.arange(1, 11) * 0.1, 10))
    grid = oracle_mod.GridSpec(values=values, layers=env.max_layer)
    reference = oracle_mod.grid_search_reference(env, grid)
    result = ddpg.run_search(env, config.ddpg, config.seed)
    ratio = result.best_reward / reference.reward if reference.reward > 0 else float("inf")
    _write_json(config.output_dir / "gridcheck.json", {
        "split_layer_id": split_id,
        "grid": [_round9(v) for v in grid.values],
        "grid_evaluations": reference.evaluations,
        "grid_actions": [_round9(a) for a in reference.actions],
        "grid_reward": _round9(reference.reward),
        "search_actions": [_round9(a) for a in result.best_actions],
        "search_reward": _round9(result.best_reward),
        "reward_ratio": _round9(ratio),
        "seed": config.seed,
        "episodes": config.ddpg.episodes,
    })


def execute(config: RunConfig, command: str, *,
            rates: Sequence[float] | None = None,
            grid: Sequence[float] | None = None) -> int:
    """Run one command against a loaded config; returns the process exit status."""
    config.output_dir.mkdir(parents=True, exist_ok=True)
    if command == "search":
        _run_search_command(config)
    elif command == "frontier":
        _run_frontier_command(config)
    elif command == "latency":
        _run_latency_command(config, rates)
    elif command == "gridcheck":
        _run_gridcheck_command(config, grid)
    else:
        raise ConfigError(f"unknown command {command!r}")
    return 0


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgeplan",
        description="Search pruning ratios and feature compression for device-edge co-inference.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("search", "run the agent on one split and write plan.json + trace.csv"),
        ("frontier", "search every split candidate and write frontier.csv"),
        ("latency", "sweep link rates for the searched plan and write latency.csv"),
        ("gridcheck", "compare the agent against the exhaustive grid optimum"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, type=Path, help="path to a JSON run config")
        if name == "latency":
            cmd.add_argument("--rates", type=_float_list, default=None,
                             help="comma-separated link rates in bit/s")
        if name == "gridcheck":
            cmd.add_argument("--grid", type=_float_list, default=None,
                             help="comma-separated preserved ratios in (0, 1]")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config.read_text(encoding="utf-8"), args.config.parent)
        return execute(config, args.command,
                       rates=getattr(args, "rates", None),
                       grid=getattr(args, "grid", None))
    except EdgeplanError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

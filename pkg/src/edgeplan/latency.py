"""End-to-end latency model and communication-computation trade-off frontier.

Latency is modeled linearly: device compute at a device throughput, feature
transmission at a link rate (one configurable payload byte count per feature
element, no entropy coding), and server compute (decoder included) at a
server throughput. Hardware is never measured; profiles are configuration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import ddpg, environment as env_mod, reward as reward_mod
from .compressor import CompressionPlan, attach_autoencoder, make_banks
from .errors import ConfigError
from .netgraph import NetworkGraph, enumerate_split_points

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeploymentProfile:
    """Throughputs in FLOPs/s, link rate in bits/s."""

    name: str
    device_throughput: float
    server_throughput: float
    rate: float
    bytes_per_element: int = 1

    def __post_init__(self):
        if min(self.device_throughput, self.server_throughput, self.rate) <= 0:
            raise ConfigError(f"profile '{self.name}': throughputs and rate must be positive")
        if not isinstance(self.bytes_per_element, int) or self.bytes_per_element < 1:
            raise ConfigError(f"profile '{self.name}': bytes_per_element must be a positive integer")


@dataclass(frozen=True)
class DeploymentCosts:
    """What a resolved plan costs: device FLOPs, link elements, server FLOPs."""

    device_flops: float
    transmitted_elements: float
    server_flops: float


def plan_costs(plan: CompressionPlan) -> DeploymentCosts:
    return DeploymentCosts(
        device_flops=plan.lambda_flops,
        transmitted_elements=plan.omega,
        server_flops=plan.server_flops,
    )


def raw_input_costs(graph: NetworkGraph) -> DeploymentCosts:
    """Server-based reference: ship the raw input, run everything remotely."""
    return DeploymentCosts(
        device_flops=0.0,
        transmitted_elements=graph.input_elements,
        server_flops=graph.total_flops,
    )


def end_to_end_latency(costs: DeploymentCosts, profile: DeploymentProfile) -> float:
    """Seconds for one inference: device compute + transmission + server compute."""
    comm_bits = costs.transmitted_elements * profile.bytes_per_element * 8.0
    return (costs.device_flops / profile.device_throughput
            + comm_bits / profile.rate
            + costs.server_flops / profile.server_throughput)


def non_dominated(xs: Sequence[float], ys: Sequence[float]) -> list[bool]:
    """Flags[i] is True iff no other point is <= in both coordinates and < in one.

    Duplicate points do not dominate each other. Sort-based, O(n log n).
    """
    n = len(xs)
    if len(ys) != n:
        raise ValueError("coordinate lists must have equal length")
    order = sorted(range(n), key=lambda i: (xs[i], ys[i]))
    flags = [True] * n
    best_y_before = float("inf")  # min y among points with strictly smaller x
    i = 0
    while i < n:
        j = i
        while j < n and xs[order[j]] == xs[order[i]]:
            j += 1
        group = order[i:j]
        group_min_y = min(ys[g] for g in group)
        for g in group:
            if ys[g] >= best_y_before or ys[g] > group_min_y:
                flags[g] = False
        best_y_before = min(best_y_before, group_min_y)
        i = j
    return flags


@dataclass(frozen=True)
class TradeoffPoint:
    split_id: int
    device_flops: float
    feature_elements: float
    kappa: float
    reward: float
    latency_s: float
    dominated: bool
    reference: bool


def tradeoff_frontier(
    graph: NetworkGraph,
    profiles: Sequence[DeploymentProfile],
    search_config: ddpg.DdpgConfig,
    *,
    beta: float,
    seed: int,
    oracle_factory,
    accuracy_drop: float = 0.01,
    candidates: Sequence[int] | None = None,
) -> list[TradeoffPoint]:
    """One searched point per split candidate, plus its uncompressed reference.

    ``oracle_factory(net)`` returns (accuracy_fn, base_accuracy) for a split
    network. Searched points whose accuracy falls more than ``accuracy_drop``
    below the base are excluded. Dominance in (device FLOPs, transmitted
    elements) space is marked separately for searched and reference points;
    latency is evaluated at the first profile. Each candidate searches with an
    independent seed derived from (seed, split id), so results do not depend
    on evaluation order.
    """
    if not profiles:
        raise ConfigError("need at least one deployment profile")
    splits = enumerate_split_points(graph)
    if candidates is not None:
        wanted = set(candidates)
        splits = [s for s in splits if s.split_layer_id in wanted]
    if not splits:
        raise ConfigError("no split candidates to search")

    searched: list[TradeoffPoint] = []
    references: list[TradeoffPoint] = []
    excluded = 0
    for split in splits:
        net = attach_autoencoder(graph, split)
        banks = make_banks(net, seed)
        accuracy_fn, base_accuracy = oracle_factory(net)
        env = env_mod.SearchEnvironment(net, banks, accuracy_fn, beta=beta)
        child_seed = np.random.SeedSequence([seed, split.split_layer_id])
        result = ddpg.run_search(env, search_config, child_seed)

        outcome = env.evaluate(result.best_actions)
        terms = outcome.terms
        costs = plan_costs(outcome.plan)
        if terms.kappa < base_accuracy - accuracy_drop:
            excluded += 1
            logger.warning(
                "split %d excluded: kappa %.4f more than %.2f%% below base %.4f",
                split.split_layer_id, terms.kappa, 100 * accuracy_drop, base_accuracy)
        else:
            searched.append(TradeoffPoint(
                split_id=split.split_layer_id,
                device_flops=costs.device_flops,
                feature_elements=costs.transmitted_elements,
                kappa=terms.kappa,
                reward=terms.reward,
                latency_s=end_to_end_latency(costs, profiles[0]),
                dominated=False,
                reference=False,
            ))
        # Uncompressed analog of a simple model partition: full-width device
        # partition, raw split feature on the link, no autoencoder. Its reward
        # under the compression objective is 0 (nu = rho = 0).
        ref_costs = DeploymentCosts(
            device_flops=net.original_device_flops,
            transmitted_elements=split.feature_elements,
            server_flops=net.original_server_flops,
        )
        ref_terms = reward_mod.score_plan(
            kappa=base_accuracy,
            lam=ref_costs.device_flops, capital_lambda=ref_costs.device_flops,
            omega=ref_costs.transmitted_elements, capital_omega=ref_costs.transmitted_elements,
            beta=beta)
        references.append(TradeoffPoint(
            split_id=split.split_layer_id,
            device_flops=ref_costs.device_flops,
            feature_elements=ref_costs.transmitted_elements,
            kappa=base_accuracy,
            reward=ref_terms.reward,
            latency_s=end_to_end_latency(ref_costs, profiles[0]),
            dominated=False,
            reference=True,
        ))

    if not searched and excluded:
        logger.warning("all %d searched candidates excluded by the accuracy rule; "
                       "frontier contains reference points only", excluded)

    points: list[TradeoffPoint] = []
    for group in (searched, references):
        if not group:
            continue
        flags = non_dominated([p.device_flops for p in group],
                              [p.feature_elements for p in group])
        points.extend(replace(p, dominated=not flag) for p, flag in zip(group, flags))
    points.sort(key=lambda p: (p.split_id, p.reference))
    return points

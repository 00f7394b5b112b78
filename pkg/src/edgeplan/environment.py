"""The sequential decision environment the agent and the grid reference share.

One episode visits every prunable layer of a split network in order, collects
one preserved ratio per layer, then scores the resolved plan: compression
metrics from the pruned costs, accuracy from the configured oracle, and the
F1-style episode reward.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import compressor, reward
from .compressor import CompressionPlan, FilterBank, SplitNetwork
from .netgraph import StateBuilder
from .reward import RewardTerms

logger = logging.getLogger(__name__)

AccuracyFn = Callable[[CompressionPlan], float]


@dataclass(frozen=True)
class EpisodeOutcome:
    plan: CompressionPlan
    terms: RewardTerms


class SearchEnvironment:
    """Episode semantics over one split network.

    ``accuracy_fn`` maps a resolved CompressionPlan to kappa in [0, 1]; it is
    where the surrogate or an external evaluation pipeline plugs in.
    """

    def __init__(
        self,
        net: SplitNetwork,
        banks: dict[int, FilterBank],
        accuracy_fn: AccuracyFn,
        beta: float = 1.0,
    ):
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {beta}")
        self.net = net
        self.accuracy_fn = accuracy_fn
        self.beta = beta
        prunable = net.prunable_layers
        d_elements = [0] * len(prunable)
        d_elements[-1] = net.autoencoder.fc_out_base  # transmitted size, encoder fc only
        self._builder = StateBuilder(
            prunable,
            d_elements,
            feature_elements=net.split.feature_elements,
            norm_layers=tuple(net.graph.layers) + (net.encoder_conv, net.encoder_fc),
        )
        # Rankings are static per bank; caching them keeps repeated
        # evaluation (grid search, long training runs) cheap.
        self._rankings = {layer_id: bank.ranking() for layer_id, bank in banks.items()}
        self._warned_clamp = False

    @property
    def max_layer(self) -> int:
        return len(self.net.prunable_layers)

    @property
    def state_builder(self) -> StateBuilder:
        return self._builder

    def state(self, t: int, decided_actions: Sequence[float]) -> np.ndarray:
        """Normalized state for prunable layer ``t`` (1-based) given decided actions."""
        if len(decided_actions) < t - 1:
            raise ValueError(f"state {t} needs {t - 1} decided actions, got {len(decided_actions)}")
        prefix = list(decided_actions[: t - 1])
        reduced = compressor.reduced_flops(self.net, prefix)
        a_prev = prefix[-1] if prefix else 1.0
        return self._builder.build(t, reduced, a_prev)

    def evaluate(self, actions: Sequence[float]) -> EpisodeOutcome:
        """Resolve a full action vector and score it."""
        plan = compressor.apply_plan(self.net, actions, self._rankings)
        kappa = self.accuracy_fn(plan)
        terms = reward.score_plan(
            kappa=kappa,
            lam=plan.lambda_flops,
            capital_lambda=plan.capital_lambda_flops,
            omega=plan.omega,
            capital_omega=plan.capital_omega,
            beta=self.beta,
        )
        if terms.nu_clamped and not self._warned_clamp:
            self._warned_clamp = True
            logger.warning(
                "split %d: encoder overhead exceeds pruning savings (lambda=%d > Lambda=%d); "
                "sparsity clamped to 0", self.net.split.split_layer_id,
                plan.lambda_flops, plan.capital_lambda_flops)
        return EpisodeOutcome(plan=plan, terms=terms)


def surrogate_accuracy_fn(model) -> AccuracyFn:
    """Adapter: a SurrogateModel scores the plan's mask-adjusted actions."""
    return lambda plan: model.accuracy(plan.effective_actions)


def external_accuracy_fn(external) -> AccuracyFn:
    """Adapter: an ExternalOracle scores the plan's wire-format payload."""
    return lambda plan: external.accuracy(plan.payload())

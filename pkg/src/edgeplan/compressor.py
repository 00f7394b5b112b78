"""One-shot l1 filter pruning, the bottleneck autoencoder, and plan application.

Pruning keeps the ``max(1, round(a * out_channels))`` filters with the largest
l1 norms (half-up rounding, ties to the lower index). Layers that feed an
elementwise add are never width-pruned: their action is recorded but masked to
full width, which keeps every add shape-valid without cross-layer grouping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import PlanError
from .netgraph import (
    LayerDescriptor,
    NetworkGraph,
    SplitPlan,
    effective_flops,
    layer_flops,
    residual_masked_ids,
)


@dataclass(frozen=True)
class FilterBank:
    """Weights of one prunable layer: (out, in, k, k) for conv, (out, in) for fc."""

    layer_id: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim not in (2, 4) or w.shape[0] < 1:
            raise PlanError(f"bank for layer {self.layer_id}: expected 2-D or 4-D weights, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise PlanError(f"bank for layer {self.layer_id}: weights contain non-finite values")
        object.__setattr__(self, "weights", w)

    @property
    def filter_count(self) -> int:
        return self.weights.shape[0]

    def l1_norms(self) -> np.ndarray:
        return np.abs(self.weights).reshape(self.filter_count, -1).sum(axis=1)

    def ranking(self) -> tuple[int, ...]:
        """Filter indices ordered by descending l1 norm, ties to the lower index."""
        norms = self.l1_norms()
        return tuple(sorted(range(self.filter_count), key=lambda i: (-norms[i], i)))


def keep_count(action: float, out_channels: int) -> int:
    """Half-up rounding with a floor of one kept filter."""
    if not 0.0 < action <= 1.0:
        raise PlanError(f"preserved ratio must lie in (0, 1], got {action}")
    return max(1, math.floor(action * out_channels + 0.5))


def prune_filters(bank: FilterBank, action: float) -> tuple[int, ...]:
    """Sorted indices of the filters kept at preserved ratio ``action``."""
    n = keep_count(action, bank.filter_count)
    return tuple(sorted(bank.ranking()[:n]))


@dataclass(frozen=True)
class AutoencoderSpec:
    """Bottleneck autoencoder inserted at the split point.

    The encoder is a stride-2 convolution that halves the feature map and
    keeps 1/8 of the channels, followed by a fully-connected stage that keeps
    1/4 of the flattened features. Channel/feature counts round up with a
    floor of one. The decoder mirrors both stages and always restores the
    original (C, H, W) feature shape.
    """

    in_channels: int
    in_spatial: int
    conv_kernel: int = 3
    conv_stride: int = 2

    def __post_init__(self):
        if self.in_spatial < 2:
            raise PlanError(
                f"split feature spatial size {self.in_spatial} cannot be halved by the encoder")

    @property
    def conv_out_channels(self) -> int:
        return max(1, -(-self.in_channels // 8))

    @property
    def conv_out_spatial(self) -> int:
        return -(-self.in_spatial // self.conv_stride)

    @property
    def flattened_base(self) -> int:
        return self.conv_out_channels * self.conv_out_spatial**2

    @property
    def fc_out_base(self) -> int:
        """Encoder output width before pruning: the transmitted feature size at ratio 1."""
        return max(1, -(-self.flattened_base // 4))


@dataclass(frozen=True)
class SplitNetwork:
    """Backbone split at a candidate point with the autoencoder attached.

    Prunable layers, in rollout order: the device-side conv layers, then the
    encoder conv, then the encoder fc. Encoder layers get synthetic ids after
    the backbone's. The server partition is never pruned; the decoder restores
    the original split feature shape so server layers run at full width.
    """

    graph: NetworkGraph
    split: SplitPlan
    autoencoder: AutoencoderSpec
    encoder_conv: LayerDescriptor
    encoder_fc: LayerDescriptor
    masked_ids: frozenset[int]

    @property
    def encoder_conv_id(self) -> int:
        return self.encoder_conv.id

    @property
    def encoder_fc_id(self) -> int:
        return self.encoder_fc.id

    @property
    def prunable_layers(self) -> tuple[LayerDescriptor, ...]:
        device_convs = tuple(
            self.graph.layers[i] for i in self.split.device_layer_ids
            if self.graph.layers[i].kind == "conv"
        )
        return device_convs + (self.encoder_conv, self.encoder_fc)

    @property
    def prunable_ids(self) -> tuple[int, ...]:
        return tuple(layer.id for layer in self.prunable_layers)

    @property
    def original_device_flops(self) -> int:
        """Backbone FLOPs on the device side at full width (no encoder)."""
        per_layer = [layer_flops(self.graph.layers[i]) for i in self.split.device_layer_ids]
        return sum(per_layer)

    @property
    def original_server_flops(self) -> int:
        return sum(layer_flops(self.graph.layers[i]) for i in self.split.server_layer_ids)

    def decoder_flops(self, omega: int, conv_in_width: int) -> int:
        """Mirror decoder cost: fc omega -> flattened, then conv back to (C, H, W)."""
        ae = self.autoencoder
        flattened = conv_in_width * ae.conv_out_spatial**2
        fc = 2 * omega * flattened
        conv = 2 * ae.conv_kernel**2 * conv_in_width * ae.in_channels * ae.in_spatial**2
        return fc + conv


def attach_autoencoder(graph: NetworkGraph, split: SplitPlan) -> SplitNetwork:
    """Insert the encoder on the device side and its mirror decoder on the server side."""
    ae = AutoencoderSpec(in_channels=split.feature_channels, in_spatial=split.feature_spatial)
    base = len(graph.layers)
    encoder_conv = LayerDescriptor(
        id=base, kind="conv", in_channels=ae.in_channels, out_channels=ae.conv_out_channels,
        in_spatial=ae.in_spatial, kernel_size=ae.conv_kernel, stride=ae.conv_stride, padding="same",
    )
    encoder_fc = LayerDescriptor(
        id=base + 1, kind="fc", in_channels=ae.flattened_base, out_channels=ae.fc_out_base,
        in_spatial=1,
    )
    return SplitNetwork(
        graph=graph, split=split, autoencoder=ae,
        encoder_conv=encoder_conv, encoder_fc=encoder_fc,
        masked_ids=residual_masked_ids(graph),
    )


def compressed_feature_size(net: SplitNetwork, encoder_ratio: float) -> int:
    """Transmitted feature elements after pruning the encoder fc outputs."""
    return keep_count(encoder_ratio, net.autoencoder.fc_out_base)


def make_banks(net: SplitNetwork, seed: int) -> dict[int, FilterBank]:
    """Seeded synthetic weights standing in for a trained model.

    Only the filter ranking depends on these; each layer draws from its own
    stream so banks are stable under changes elsewhere in the network.
    """
    banks: dict[int, FilterBank] = {}
    for layer in net.prunable_layers:
        rng = np.random.default_rng(np.random.SeedSequence([seed, layer.id]))
        if layer.kind == "conv":
            shape = (layer.out_channels, layer.in_channels, layer.kernel_size, layer.kernel_size)
        else:
            shape = (layer.out_channels, layer.in_channels)
        banks[layer.id] = FilterBank(layer_id=layer.id, weights=rng.standard_normal(shape))
    return banks


@dataclass(frozen=True)
class CompressionPlan:
    """A fully resolved compression decision for one split network."""

    split: SplitPlan
    actions: tuple[float, ...]
    effective_actions: tuple[float, ...]
    keep_sets: dict[int, tuple[int, ...]]
    widths: dict[int, int]
    masked_ids: frozenset[int]
    lambda_flops: int
    capital_lambda_flops: int
    omega: int
    capital_omega: int
    server_flops: int

    @property
    def encoder_ratio(self) -> float:
        return self.actions[-1]

    def payload(self) -> dict:
        """Wire format consumed by external accuracy commands."""
        return {
            "split_layer_id": self.split.split_layer_id,
            "actions": list(self.actions),
            "encoder_ratio": self.encoder_ratio,
        }


@dataclass(frozen=True)
class _DeviceCosts:
    widths: dict[int, int]
    prunable_flops: list[int]
    device_total: int


def _device_costs(net: SplitNetwork, actions: Sequence[float], decided: int) -> _DeviceCosts:
    """Effective widths and costs with the first ``decided`` prunable layers pruned.

    Undecided layers stay at full width. ``device_total`` is the device-side
    backbone at effective widths plus both encoder stages.
    """
    prunable = net.prunable_layers
    if decided > len(prunable):
        raise PlanError(f"{decided} actions for {len(prunable)} prunable layers")
    widths: dict[int, int] = {}
    for layer, action in zip(prunable[:decided], actions):
        if layer.id in net.masked_ids:
            widths[layer.id] = layer.out_channels
        else:
            widths[layer.id] = keep_count(action, layer.out_channels)

    backbone_widths = {i: w for i, w in widths.items() if i < len(net.graph.layers)}
    per_layer = effective_flops(net.graph, backbone_widths)

    # Encoder input width follows the (possibly pruned) device output.
    split_id = net.split.split_layer_id
    device_out_width = _backbone_out_width(net.graph, backbone_widths, split_id)
    conv_width = widths.get(net.encoder_conv_id, net.encoder_conv.out_channels)
    fc_width = widths.get(net.encoder_fc_id, net.encoder_fc.out_channels)
    ae = net.autoencoder
    enc_conv_flops = layer_flops(net.encoder_conv, in_width=device_out_width, out_width=conv_width)
    enc_fc_flops = layer_flops(
        net.encoder_fc, in_width=conv_width * ae.conv_out_spatial**2, out_width=fc_width)

    eff_prunable: list[int] = []
    for layer in prunable[:decided]:
        if layer.id == net.encoder_conv_id:
            eff_prunable.append(enc_conv_flops)
        elif layer.id == net.encoder_fc_id:
            eff_prunable.append(enc_fc_flops)
        else:
            eff_prunable.append(per_layer[layer.id])

    device_total = sum(per_layer[i] for i in net.split.device_layer_ids)
    device_total += enc_conv_flops + enc_fc_flops
    return _DeviceCosts(widths=widths, prunable_flops=eff_prunable, device_total=device_total)


def _backbone_out_width(graph: NetworkGraph, widths: Mapping[int, int], layer_id: int) -> int:
    """Effective output width of a backbone layer after propagation."""
    eff = widths.get(layer_id)
    if eff is not None:
        return eff
    layer = graph.layers[layer_id]
    if layer.kind in ("add", "pool"):
        return _backbone_out_width(graph, widths, layer_id - 1) if layer_id > 0 else graph.input_channels
    return layer.out_channels


def reduced_flops(net: SplitNetwork, actions: Sequence[float]) -> int:
    """FLOPs removed so far by the decided prefix of actions.

    Counts only decided prunable layers; an undecided layer's savings from a
    narrowed input are credited once its own action is taken.
    """
    decided = len(actions)
    costs = _device_costs(net, actions, decided)
    original = [layer_flops(layer) for layer in net.prunable_layers[:decided]]
    return sum(o - e for o, e in zip(original, costs.prunable_flops))


def apply_plan(
    net: SplitNetwork,
    actions: Sequence[float],
    banks: Mapping[int, FilterBank] | Mapping[int, tuple[int, ...]] | None = None,
) -> CompressionPlan:
    """Resolve a full action vector into widths, keep sets, and cost totals.

    ``banks`` may map layer ids to FilterBanks or to precomputed rankings
    (descending-l1 index order); keep sets are omitted when absent.
    """
    prunable = net.prunable_layers
    if len(actions) != len(prunable):
        raise PlanError(f"plan has {len(actions)} actions but {len(prunable)} prunable layers")
    actions = tuple(float(a) for a in actions)
    for a in actions:
        if not 0.0 < a <= 1.0:
            raise PlanError(f"preserved ratio must lie in (0, 1], got {a}")

    costs = _device_costs(net, actions, len(actions))
    widths = costs.widths
    effective_actions = tuple(
        1.0 if layer.id in net.masked_ids else a for layer, a in zip(prunable, actions))

    keep_sets: dict[int, tuple[int, ...]] = {}
    if banks is not None:
        for layer in prunable:
            bank = banks.get(layer.id)
            if bank is None:
                raise PlanError(f"no filter bank for prunable layer {layer.id}")
            ranking = bank.ranking() if isinstance(bank, FilterBank) else tuple(bank)
            if len(ranking) != layer.out_channels:
                raise PlanError(
                    f"bank for layer {layer.id} ranks {len(ranking)} filters, "
                    f"layer has {layer.out_channels}")
            keep_sets[layer.id] = tuple(sorted(ranking[:widths[layer.id]]))

    omega = widths[net.encoder_fc_id]
    lam = costs.device_total
    conv_width = widths[net.encoder_conv_id]
    server = net.original_server_flops + net.decoder_flops(omega, conv_width)

    return CompressionPlan(
        split=net.split,
        actions=actions,
        effective_actions=effective_actions,
        keep_sets=keep_sets,
        widths=widths,
        masked_ids=net.masked_ids,
        lambda_flops=lam,
        capital_lambda_flops=net.original_device_flops,
        omega=omega,
        capital_omega=net.split.feature_elements,
        server_flops=server,
    )

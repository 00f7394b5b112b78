"""Backbone network representation, FLOPs model, split points, and state vectors.

The network is an ordered list of layers where layer ``i`` consumes the output
of layer ``i - 1`` (layer 0 consumes the graph input). ``add`` layers take a
second input from an earlier layer via ``residual_from``, which is how
residual blocks are expressed. Feature maps are square throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import NetworkError, PlanError

LAYER_KINDS = ("conv", "fc", "add", "pool")
PADDINGS = ("same", "valid")

STATE_SIZE = 12


@dataclass(frozen=True)
class LayerDescriptor:
    """One layer of the abstract network."""

    id: int
    kind: str
    in_channels: int
    out_channels: int
    in_spatial: int
    kernel_size: int = 1
    stride: int = 1
    padding: str = "same"
    residual_from: int | None = None

    @property
    def out_spatial(self) -> int:
        """Side length of the square output feature map."""
        if self.kind == "fc":
            return 1
        if self.kind == "add":
            return self.in_spatial
        if self.padding == "same":
            return -(-self.in_spatial // self.stride)
        return (self.in_spatial - self.kernel_size) // self.stride + 1

    @property
    def out_elements(self) -> int:
        return self.out_channels * self.out_spatial**2


@dataclass(frozen=True)
class NetworkGraph:
    """Validated backbone network plus its admissible split points."""

    name: str
    input_channels: int
    input_spatial: int
    layers: tuple[LayerDescriptor, ...]
    split_candidates: tuple[int, ...]

    @property
    def total_flops(self) -> int:
        return sum(layer_flops(layer) for layer in self.layers)

    @property
    def input_elements(self) -> int:
        return self.input_channels * self.input_spatial**2

    def layer(self, layer_id: int) -> LayerDescriptor:
        return self.layers[layer_id]


@dataclass(frozen=True)
class SplitPlan:
    """A single split point: which layers stay on device and what crosses the link."""

    split_layer_id: int
    device_layer_ids: tuple[int, ...]
    server_layer_ids: tuple[int, ...]
    feature_channels: int
    feature_spatial: int

    @property
    def feature_elements(self) -> int:
        """Elements of the uncompressed intermediate feature at the split."""
        return self.feature_channels * self.feature_spatial**2


def layer_flops(layer: LayerDescriptor, in_width: int | None = None, out_width: int | None = None) -> int:
    """FLOPs to process one layer, counting one multiply-accumulate as 2 FLOPs.

    ``in_width``/``out_width`` override the descriptor's channel counts (or, for
    fc layers, feature counts) so pruned variants can be costed. ``add`` and
    ``pool`` layers contribute 0: their cost is negligible next to conv/fc.
    """
    cin = layer.in_channels if in_width is None else in_width
    cout = layer.out_channels if out_width is None else out_width
    if layer.kind == "conv":
        return 2 * layer.kernel_size**2 * cin * cout * layer.out_spatial**2
    if layer.kind == "fc":
        return 2 * cin * cout
    return 0


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise NetworkError(message)


_LAYER_KEYS = {
    "id", "kind", "kernel", "stride", "in_channels", "out_channels",
    "in_spatial", "padding", "residual_from",
}
_TOP_KEYS = {"name", "input_channels", "input_spatial", "layers", "split_candidates"}


def _positive_int(obj: Mapping, key: str, where: str) -> int:
    value = obj.get(key)
    _require(isinstance(value, int) and not isinstance(value, bool) and value >= 1,
             f"{where}: '{key}' must be a positive integer, got {value!r}")
    return value


def parse_network(text: str) -> NetworkGraph:
    """Parse and fully validate a network description (JSON text)."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"invalid JSON: {exc}") from exc
    _require(isinstance(raw, dict), "top-level value must be an object")
    unknown = set(raw) - _TOP_KEYS
    _require(not unknown, f"unknown top-level keys: {sorted(unknown)}")

    name = raw.get("name", "network")
    _require(isinstance(name, str), "'name' must be a string")
    input_channels = _positive_int(raw, "input_channels", "network")
    input_spatial = _positive_int(raw, "input_spatial", "network")

    raw_layers = raw.get("layers")
    _require(isinstance(raw_layers, list) and len(raw_layers) > 0, "'layers' must be a non-empty list")

    layers: list[LayerDescriptor] = []
    for pos, entry in enumerate(raw_layers):
        where = f"layer #{pos}"
        _require(isinstance(entry, dict), f"{where}: must be an object")
        unknown = set(entry) - _LAYER_KEYS
        _require(not unknown, f"{where}: unknown keys {sorted(unknown)}")
        _require(entry.get("id") == pos, f"{where}: 'id' must equal its position {pos}")
        kind = entry.get("kind")
        _require(kind in LAYER_KINDS, f"{where}: 'kind' must be one of {LAYER_KINDS}")
        kernel = entry.get("kernel", 1)
        stride = entry.get("stride", 1)
        padding = entry.get("padding", "same")
        _require(isinstance(kernel, int) and kernel >= 1, f"{where}: 'kernel' must be >= 1")
        _require(isinstance(stride, int) and stride >= 1, f"{where}: 'stride' must be >= 1")
        _require(padding in PADDINGS, f"{where}: 'padding' must be one of {PADDINGS}")
        if kind in ("fc", "add"):
            _require(kernel == 1 and stride == 1, f"{where}: {kind} layers must have kernel=1, stride=1")
        in_channels = _positive_int(entry, "in_channels", where)
        out_channels = _positive_int(entry, "out_channels", where)
        in_spatial = _positive_int(entry, "in_spatial", where)
        residual_from = entry.get("residual_from")
        if kind == "add":
            _require(isinstance(residual_from, int) and 0 <= residual_from < pos,
                     f"{where}: add layer needs 'residual_from' pointing at an earlier layer")
        else:
            _require(residual_from is None, f"{where}: only add layers may set 'residual_from'")

        layer = LayerDescriptor(
            id=pos, kind=kind, in_channels=in_channels, out_channels=out_channels,
            in_spatial=in_spatial, kernel_size=kernel, stride=stride, padding=padding,
            residual_from=residual_from,
        )
        if kind in ("add", "pool"):
            _require(in_channels == out_channels, f"{where}: {kind} layers preserve channel count")
        if kind in ("conv", "pool") and padding == "valid":
            _require(in_spatial >= kernel, f"{where}: valid padding needs in_spatial >= kernel")
        _require(layer.out_spatial >= 1, f"{where}: output spatial size collapses below 1")
        layers.append(layer)

    # Edge consistency along the main path.
    for pos, layer in enumerate(layers):
        where = f"layer #{pos}"
        if pos == 0:
            prev_channels, prev_spatial, prev_kind = input_channels, input_spatial, None
        else:
            prod = layers[pos - 1]
            prev_channels, prev_spatial, prev_kind = prod.out_channels, prod.out_spatial, prod.kind
        if layer.kind == "fc":
            expected = prev_channels * prev_spatial**2
            _require(layer.in_channels == expected,
                     f"{where}: fc in_channels {layer.in_channels} != producer's flattened output {expected}")
            _require(layer.in_spatial == 1, f"{where}: fc layers must declare in_spatial=1")
        else:
            _require(prev_kind != "fc", f"{where}: {layer.kind} cannot follow an fc layer")
            _require(layer.in_channels == prev_channels,
                     f"{where}: in_channels {layer.in_channels} != producer out_channels {prev_channels}")
            _require(layer.in_spatial == prev_spatial,
                     f"{where}: in_spatial {layer.in_spatial} != producer out_spatial {prev_spatial}")
        if layer.kind == "add":
            src = layers[layer.residual_from]
            _require(src.out_channels == layer.in_channels,
                     f"{where}: residual source channels {src.out_channels} != {layer.in_channels}")
            _require(src.out_spatial == layer.in_spatial,
                     f"{where}: residual source spatial {src.out_spatial} != {layer.in_spatial}")

    raw_candidates = raw.get("split_candidates", [])
    _require(isinstance(raw_candidates, list), "'split_candidates' must be a list")
    candidates = sorted(set(raw_candidates))
    ids = range(len(layers))
    for cand in candidates:
        _require(isinstance(cand, int) and cand in ids, f"split candidate {cand!r} is not a layer id")
        for layer in layers:
            if layer.kind == "add" and layer.residual_from <= cand < layer.id:
                raise NetworkError(
                    f"split candidate {cand} is crossed by the residual edge "
                    f"{layer.residual_from} -> {layer.id}; candidates must sit at block boundaries")

    return NetworkGraph(
        name=name, input_channels=input_channels, input_spatial=input_spatial,
        layers=tuple(layers), split_candidates=tuple(candidates),
    )


def enumerate_split_points(graph: NetworkGraph) -> list[SplitPlan]:
    """One SplitPlan per candidate, ascending by layer id."""
    plans = []
    n = len(graph.layers)
    for cand in graph.split_candidates:
        boundary = graph.layers[cand]
        plans.append(SplitPlan(
            split_layer_id=cand,
            device_layer_ids=tuple(range(cand + 1)),
            server_layer_ids=tuple(range(cand + 1, n)),
            feature_channels=boundary.out_channels,
            feature_spatial=boundary.out_spatial,
        ))
    return plans


def make_split(graph: NetworkGraph, split_layer_id: int) -> SplitPlan:
    """SplitPlan for a specific candidate id."""
    for plan in enumerate_split_points(graph):
        if plan.split_layer_id == split_layer_id:
            return plan
    raise NetworkError(f"layer {split_layer_id} is not a split candidate of '{graph.name}'")


def effective_flops(graph: NetworkGraph, out_widths: Mapping[int, int] | None = None) -> list[int]:
    """Per-layer FLOPs with pruned output widths propagated to downstream inputs.

    ``out_widths`` maps layer id -> effective out_channels (conv) or output
    features (fc); absent layers keep their original width.
    """
    out_widths = dict(out_widths or {})
    flops: list[int] = []
    eff_out: list[int] = []
    for layer in graph.layers:
        if layer.id == 0:
            prev_width, prev_spatial, prev_kind = graph.input_channels, graph.input_spatial, None
        else:
            prod = graph.layers[layer.id - 1]
            prev_width, prev_spatial, prev_kind = eff_out[layer.id - 1], prod.out_spatial, prod.kind
        if layer.kind == "fc" and prev_kind != "fc":
            in_width = prev_width * prev_spatial**2
        else:
            in_width = prev_width

        width = out_widths.pop(layer.id, None)
        if layer.kind in ("add", "pool"):
            if width is not None:
                raise PlanError(f"layer {layer.id}: cannot assign a width to a {layer.kind} layer")
            out_width = in_width
            if layer.kind == "add":
                res_width = eff_out[layer.residual_from]
                if res_width != in_width:
                    raise PlanError(
                        f"add layer {layer.id}: input widths differ ({in_width} vs {res_width}); "
                        "layers feeding an add must keep full width")
        else:
            out_width = layer.out_channels if width is None else width
            if not 1 <= out_width <= layer.out_channels:
                raise PlanError(
                    f"layer {layer.id}: width {out_width} outside [1, {layer.out_channels}]")
        eff_out.append(out_width)
        flops.append(layer_flops(layer, in_width=in_width, out_width=out_width))
    if out_widths:
        raise PlanError(f"widths given for unknown layers: {sorted(out_widths)}")
    return flops


def partition_flops(
    graph: NetworkGraph,
    split: SplitPlan,
    out_widths: Mapping[int, int] | None = None,
) -> tuple[int, int]:
    """(device_flops, server_flops) of the backbone at the given effective widths."""
    per_layer = effective_flops(graph, out_widths)
    device = sum(per_layer[i] for i in split.device_layer_ids)
    server = sum(per_layer[i] for i in split.server_layer_ids)
    return device, server


def residual_masked_ids(graph: NetworkGraph) -> frozenset[int]:
    """Layers whose output width must stay full because it reaches an add input.

    Pool layers pass widths through unchanged, so the mask is applied to the
    nearest width-determining producer behind each add input.
    """
    masked: set[int] = set()
    for layer in graph.layers:
        if layer.kind != "add":
            continue
        for source in (layer.id - 1, layer.residual_from):
            while source >= 0 and graph.layers[source].kind == "pool":
                source -= 1
            if source >= 0 and graph.layers[source].kind in ("conv", "fc"):
                masked.add(source)
    return frozenset(masked)


@dataclass(frozen=True)
class StateNorms:
    """Static normalization constants, computed once per (graph, split)."""

    max_layer: int
    max_kernel: int
    max_stride: int
    max_in_channels: int
    max_out_channels: int
    max_spatial: int
    total_prunable_flops: int
    feature_elements: int


class StateBuilder:
    """Builds the 12-component normalized state for each prunable layer.

    Components, in order: layer index, layer type, kernel size, stride, input
    channels, output channels, input spatial size, layer FLOPs, FLOPs already
    removed by earlier actions, original FLOPs still undecided, transmitted
    data size (positive only for the final encoder layer), previous action.
    Every component is scaled into [0, 1] by constants fixed at construction.
    """

    def __init__(
        self,
        prunable: Sequence[LayerDescriptor],
        d_elements: Sequence[int],
        feature_elements: int,
        norm_layers: Iterable[LayerDescriptor] | None = None,
    ):
        if len(prunable) != len(d_elements):
            raise ValueError("prunable layers and d_elements must align")
        if not prunable:
            raise ValueError("need at least one prunable layer")
        for layer in prunable:
            if layer.kind not in ("conv", "fc"):
                raise ValueError(f"layer {layer.id}: only conv/fc layers are prunable")
        self.prunable = tuple(prunable)
        self.d_elements = tuple(d_elements)
        pool = tuple(norm_layers) if norm_layers is not None else self.prunable
        self._flops = [layer_flops(layer) for layer in self.prunable]
        # Suffix sums: original FLOPs of layers still undecided after step t.
        self._rest = [sum(self._flops[t:]) for t in range(1, len(self._flops) + 1)]
        self.norms = StateNorms(
            max_layer=len(self.prunable),
            max_kernel=max(l.kernel_size for l in pool),
            max_stride=max(l.stride for l in pool),
            max_in_channels=max(l.in_channels for l in pool),
            max_out_channels=max(l.out_channels for l in pool),
            max_spatial=max(l.in_spatial for l in pool),
            total_prunable_flops=sum(self._flops),
            feature_elements=feature_elements,
        )

    def original_flops(self, t: int) -> int:
        """Original FLOPs of prunable layer t (1-based)."""
        return self._flops[t - 1]

    def rest_flops(self, t: int) -> int:
        """Original FLOPs of prunable layers after t (1-based)."""
        return self._rest[t - 1]

    def build(self, t: int, reduced_flops: float, a_prev: float) -> np.ndarray:
        """State vector for prunable layer ``t`` (1-based, per rollout order)."""
        if not 1 <= t <= len(self.prunable):
            raise IndexError(f"prunable layer index {t} out of range 1..{len(self.prunable)}")
        layer = self.prunable[t - 1]
        n = self.norms
        total = float(n.total_prunable_flops)
        state = np.array([
            t / n.max_layer,
            0.0 if layer.kind == "conv" else 1.0,
            layer.kernel_size / n.max_kernel,
            layer.stride / n.max_stride,
            layer.in_channels / n.max_in_channels,
            layer.out_channels / n.max_out_channels,
            layer.in_spatial / n.max_spatial,
            self._flops[t - 1] / total,
            float(reduced_flops) / total,
            self._rest[t - 1] / total,
            self.d_elements[t - 1] / n.feature_elements,
            float(a_prev),
        ], dtype=np.float64)
        if state.min() < 0.0 or state.max() > 1.0:
            raise ValueError(f"state component outside [0, 1]: {state}")
        return state

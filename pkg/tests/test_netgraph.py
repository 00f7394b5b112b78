"""Network parsing, the FLOPs model, split enumeration, and state building."""

import json

import numpy as np
import pytest

from conftest import NETS, mac_count_oracle
from edgeplan.errors import NetworkError, PlanError
from edgeplan.netgraph import (
    LayerDescriptor,
    SplitPlan,
    StateBuilder,
    effective_flops,
    enumerate_split_points,
    layer_flops,
    make_split,
    parse_network,
    partition_flops,
    residual_masked_ids,
)


def chain3_dict():
    return json.loads((NETS / "chain3.json").read_text())


class TestParse:
    def test_chain3_parses(self, chain3_graph):
        assert len(chain3_graph.layers) == 3
        assert chain3_graph.split_candidates == (0, 1)
        kinds = [l.kind for l in chain3_graph.layers]
        assert kinds == ["conv", "conv", "fc"]

    def test_chain3_total_flops_matches_enumeration_oracle(self, chain3_graph):
        expected = sum(2 * mac_count_oracle(l) for l in chain3_graph.layers)
        assert chain3_graph.total_flops == expected == 761_856

    def test_fc_input_mismatch_rejected(self):
        raw = chain3_dict()
        raw["layers"][2]["in_channels"] = 999
        with pytest.raises(NetworkError, match="flattened"):
            parse_network(json.dumps(raw))

    def test_empty_layer_list_rejected(self):
        raw = chain3_dict()
        raw["layers"] = []
        with pytest.raises(NetworkError, match="non-empty"):
            parse_network(json.dumps(raw))

    def test_unknown_keys_rejected(self):
        raw = chain3_dict()
        raw["extra"] = 1
        with pytest.raises(NetworkError, match="unknown top-level"):
            parse_network(json.dumps(raw))
        raw = chain3_dict()
        raw["layers"][0]["bogus"] = 1
        with pytest.raises(NetworkError, match="unknown keys"):
            parse_network(json.dumps(raw))

    def test_ids_must_be_positional(self):
        raw = chain3_dict()
        raw["layers"][0]["id"] = 5
        with pytest.raises(NetworkError, match="position"):
            parse_network(json.dumps(raw))

    def test_invalid_json_rejected(self):
        with pytest.raises(NetworkError, match="invalid JSON"):
            parse_network("{not json")

    def test_channel_mismatch_on_main_path(self):
        raw = chain3_dict()
        raw["layers"][1]["in_channels"] = 16
        with pytest.raises(NetworkError, match="in_channels"):
            parse_network(json.dumps(raw))

    def test_candidate_must_be_layer_id(self):
        raw = chain3_dict()
        raw["split_candidates"] = [7]
        with pytest.raises(NetworkError, match="not a layer id"):
            parse_network(json.dumps(raw))

    def test_candidate_crossing_residual_rejected(self):
        raw = json.loads((NETS / "block4.json").read_text())
        raw["split_candidates"] = [1]  # inside the first residual block
        with pytest.raises(NetworkError, match="residual edge"):
            parse_network(json.dumps(raw))

    def test_add_needs_residual_from(self):
        raw = json.loads((NETS / "block4.json").read_text())
        del raw["layers"][3]["residual_from"]
        with pytest.raises(NetworkError, match="residual_from"):
            parse_network(json.dumps(raw))

    def test_residual_shape_mismatch_rejected(self):
        raw = json.loads((NETS / "block4.json").read_text())
        raw["layers"][3]["residual_from"] = 4 - 4  # fine: points at layer 0
        parse_network(json.dumps(raw))
        raw["layers"][8]["residual_from"] = 0  # 16ch@32 vs expected 32ch@16
        with pytest.raises(NetworkError, match="residual source"):
            parse_network(json.dumps(raw))

    def test_conv_after_fc_rejected(self):
        raw = chain3_dict()
        raw["layers"].append({"id": 3, "kind": "conv", "kernel": 1, "stride": 1,
                              "in_channels": 10, "out_channels": 10,
                              "in_spatial": 1, "padding": "same"})
        with pytest.raises(NetworkError, match="follow an fc"):
            parse_network(json.dumps(raw))

    def test_valid_padding_needs_room_for_kernel(self):
        raw = chain3_dict()
        raw["layers"][0]["padding"] = "valid"
        raw["layers"][0]["kernel"] = 9  # larger than the 8x8 input
        with pytest.raises(NetworkError, match="valid padding"):
            parse_network(json.dumps(raw))

    def test_fc_with_kernel_or_stride_rejected(self):
        raw = chain3_dict()
        raw["layers"][2]["stride"] = 2
        with pytest.raises(NetworkError, match="kernel=1, stride=1"):
            parse_network(json.dumps(raw))


class TestLayerFlops:
    def test_conv_example(self):
        layer = LayerDescriptor(id=0, kind="conv", in_channels=16, out_channels=32,
                                in_spatial=8, kernel_size=3, stride=1)
        assert layer_flops(layer) == 589_824
        assert layer_flops(layer) == 2 * mac_count_oracle(layer)

    def test_single_mac_conv(self):
        layer = LayerDescriptor(id=0, kind="conv", in_channels=1, out_channels=1,
                                in_spatial=1, kernel_size=1, stride=1)
        assert layer_flops(layer) == 2

    def test_fc_example(self):
        layer = LayerDescriptor(id=0, kind="fc", in_channels=256, out_channels=10, in_spatial=1)
        assert layer_flops(layer) == 2 * 256 * 10 == 5_120

    def test_add_and_pool_are_free(self):
        add = LayerDescriptor(id=1, kind="add", in_channels=8, out_channels=8,
                              in_spatial=4, residual_from=0)
        pool = LayerDescriptor(id=1, kind="pool", in_channels=8, out_channels=8,
                               in_spatial=4, kernel_size=2, stride=2)
        assert layer_flops(add) == 0
        assert layer_flops(pool) == 0

    def test_matches_enumeration_oracle_on_random_shapes(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            k = int(rng.integers(1, 5))
            stride = int(rng.integers(1, 4))
            padding = rng.choice(["same", "valid"])
            f_in = int(rng.integers(k if padding == "valid" else 1, 9))
            layer = LayerDescriptor(
                id=0, kind="conv",
                in_channels=int(rng.integers(1, 7)), out_channels=int(rng.integers(1, 7)),
                in_spatial=f_in, kernel_size=k, stride=stride, padding=str(padding))
            assert layer_flops(layer) == 2 * mac_count_oracle(layer)

    def test_spatial_conventions(self):
        same = LayerDescriptor(id=0, kind="conv", in_channels=1, out_channels=1,
                               in_spatial=7, kernel_size=3, stride=2, padding="same")
        valid = LayerDescriptor(id=0, kind="conv", in_channels=1, out_channels=1,
                                in_spatial=7, kernel_size=3, stride=2, padding="valid")
        assert same.out_spatial == 4
        assert valid.out_spatial == 3


class TestSplits:
    def test_block4_has_four_plans_ascending(self, block4_graph):
        plans = enumerate_split_points(block4_graph)
        assert [p.split_layer_id for p in plans] == [3, 8, 13, 17]

    def test_feature_elements(self):
        text = json.dumps({
            "name": "wide", "input_channels": 256, "input_spatial": 16,
            "layers": [{"id": 0, "kind": "conv", "kernel": 1, "stride": 1,
                        "in_channels": 256, "out_channels": 256, "in_spatial": 16,
                        "padding": "same"}],
            "split_candidates": [0],
        })
        plan = enumerate_split_points(parse_network(text))[0]
        assert plan.feature_elements == 256 * 16 * 16 == 65_536

    def test_no_candidates_is_empty_list(self):
        raw = chain3_dict()
        raw["split_candidates"] = []
        assert enumerate_split_points(parse_network(json.dumps(raw))) == []

    def test_make_split_rejects_non_candidate(self, chain3_graph):
        with pytest.raises(NetworkError, match="not a split candidate"):
            make_split(chain3_graph, 2)


class TestPartitionFlops:
    def test_split_after_first_conv(self, chain3_graph):
        device, server = partition_flops(chain3_graph, make_split(chain3_graph, 0))
        assert device == 589_824
        assert server == 131_072 + 40_960 == 172_032

    def test_split_after_everything_is_device_only(self, chain3_graph):
        split = SplitPlan(split_layer_id=2, device_layer_ids=(0, 1, 2),
                          server_layer_ids=(), feature_channels=10, feature_spatial=1)
        device, server = partition_flops(chain3_graph, split)
        assert server == 0
        assert device == chain3_graph.total_flops

    def test_halved_width_propagates_to_consumer(self, chain3_graph):
        per_layer = effective_flops(chain3_graph, {0: 16})
        assert per_layer[0] == 294_912
        assert per_layer[1] == 2 * 1 * 16 * 32 * 64  # layer 1 now sees 16 input channels
        device, _ = partition_flops(chain3_graph, make_split(chain3_graph, 0), {0: 16})
        assert device == 294_912

    def test_width_above_original_rejected(self, chain3_graph):
        with pytest.raises(PlanError, match="outside"):
            effective_flops(chain3_graph, {0: 33})

    def test_width_on_pool_rejected(self, block4_graph):
        with pytest.raises(PlanError, match="pool"):
            effective_flops(block4_graph, {4: 8})

    def test_unmasked_width_into_add_rejected(self, block4_graph):
        with pytest.raises(PlanError, match="full width"):
            effective_flops(block4_graph, {2: 8})

    def test_unknown_layer_width_rejected(self, chain3_graph):
        with pytest.raises(PlanError, match="unknown layers"):
            effective_flops(chain3_graph, {42: 1})


class TestResidualMask:
    def test_block4_masked_set(self, block4_graph):
        assert residual_masked_ids(block4_graph) == frozenset({0, 2, 5, 7, 10, 12, 16})

    def test_chain_has_no_masks(self, chain3_graph):
        assert residual_masked_ids(chain3_graph) == frozenset()


class TestStateBuilder:
    def make_builder(self):
        layers = (
            LayerDescriptor(id=0, kind="conv", in_channels=4, out_channels=8,
                            in_spatial=6, kernel_size=3, stride=1),
            LayerDescriptor(id=1, kind="conv", in_channels=8, out_channels=8,
                            in_spatial=6, kernel_size=1, stride=2),
            LayerDescriptor(id=2, kind="fc", in_channels=72, out_channels=18, in_spatial=1),
        )
        return StateBuilder(layers, d_elements=[0, 0, 18], feature_elements=288)

    def test_components_within_unit_interval(self):
        builder = self.make_builder()
        rng = np.random.default_rng(3)
        for t in (1, 2, 3):
            reduced = float(rng.uniform(0, builder.norms.total_prunable_flops))
            state = builder.build(t, reduced, float(rng.uniform(0.001, 1.0)))
            assert state.shape == (12,)
            assert state.min() >= 0.0 and state.max() <= 1.0

    def test_normalization_is_idempotent_and_pure(self):
        builder = self.make_builder()
        first = builder.build(2, 100.0, 0.5)
        second = builder.build(2, 100.0, 0.5)
        assert np.array_equal(first, second)
        assert np.array_equal(np.clip(first, 0.0, 1.0), first)

    def test_type_and_d_components(self):
        builder = self.make_builder()
        conv_state = builder.build(1, 0.0, 1.0)
        fc_state = builder.build(3, 0.0, 1.0)
        assert conv_state[1] == 0.0 and fc_state[1] == 1.0
        assert conv_state[10] == 0.0
        assert fc_state[10] == pytest.approx(18 / 288)

    def test_out_of_range_index_rejected(self):
        builder = self.make_builder()
        with pytest.raises(IndexError):
            builder.build(0, 0.0, 1.0)
        with pytest.raises(IndexError):
            builder.build(4, 0.0, 1.0)

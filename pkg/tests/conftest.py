"""Shared fixtures and independent test oracles."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from edgeplan import cli, environment, oracle
from edgeplan.compressor import attach_autoencoder, make_banks
from edgeplan.netgraph import LayerDescriptor, layer_flops, make_split, parse_network

REPO = Path(__file__).resolve().parent.parent
NETS = REPO / "nets"
CONFIGS = REPO / "configs"


@pytest.fixture(scope="session")
def chain3_graph():
    return parse_network((NETS / "chain3.json").read_text())


@pytest.fixture(scope="session")
def block4_graph():
    return parse_network((NETS / "block4.json").read_text())


@pytest.fixture(scope="session")
def accept_config():
    """The shipped search-quality configuration (4-prunable-layer environment)."""
    path = CONFIGS / "accept_search.json"
    return cli.load_config(path.read_text(), path.parent)


def build_env(graph, split_id, seed=0, beta=1.0, surrogate=None):
    """Environment with the default FLOPs-proportional surrogate unless given."""
    net = attach_autoencoder(graph, make_split(graph, split_id))
    banks = make_banks(net, seed)
    if surrogate is None:
        surrogate = oracle.default_surrogate([layer_flops(l) for l in net.prunable_layers])
    return environment.SearchEnvironment(
        net, banks, environment.surrogate_accuracy_fn(surrogate), beta=beta)


# ---------------------------------------------------------------------------
# Independent oracles
# ---------------------------------------------------------------------------

def mac_count_oracle(layer: LayerDescriptor) -> int:
    """Count multiply-accumulates by enumeration instead of closed form.

    Output positions come from sliding the kernel (same padding: one output
    anchored at every stride-th input position; valid: only where the window
    fits), never from the ceil/floor formulas under test.
    """
    if layer.kind == "fc":
        macs = 0
        for _ in range(layer.in_channels):
            for _ in range(layer.out_channels):
                macs += 1
        return macs
    if layer.kind != "conv":
        return 0
    f, k, s = layer.in_spatial, layer.kernel_size, layer.stride
    if layer.padding == "same":
        positions = list(range(0, f, s))
    else:
        positions = list(range(0, f - k + 1, s))
    window_cells = 0
    for _ in positions:
        for _ in positions:
            for _ in range(k):
                for _ in range(k):
                    window_cells += 1
    return window_cells * layer.in_channels * layer.out_channels


def brute_force_keep(weights: np.ndarray, n: int) -> tuple[int, ...]:
    """Top-n filters by l1 norm via plain-Python sort; ties to the lower index."""
    norms = []
    for row in weights.reshape(weights.shape[0], -1):
        total = 0.0
        for value in row.tolist():
            total += abs(value)
        norms.append(total)
    ranked = sorted(range(len(norms)), key=lambda i: (-norms[i], i))
    return tuple(sorted(ranked[:n]))


def brute_force_non_dominated(xs, ys) -> list[bool]:
    """O(n^2) dominance scan."""
    n = len(xs)
    flags = [True] * n
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if xs[j] <= xs[i] and ys[j] <= ys[i] and (xs[j] < xs[i] or ys[j] < ys[i]):
                flags[i] = False
                break
    return flags


def finite_difference_entries(loss_fn, arrays, rng, n_coords=24, h=1e-5):
    """Central differences of ``loss_fn`` on a random coordinate subset.

    ``loss_fn()`` returns (value, relu_masks). Coordinates whose perturbation
    flips any ReLU between the +h and -h evaluations are skipped: a central
    difference is not a derivative estimate across a kink.
    Returns (coords, fd_values) with coords as (array_index, flat_offset).
    """
    sizes = [a.size for a in arrays]
    bounds = np.cumsum([0] + sizes)
    order = rng.permutation(int(bounds[-1]))
    coords, values = [], []
    for flat in order:
        if len(coords) >= n_coords:
            break
        ai = int(np.searchsorted(bounds, flat, side="right") - 1)
        off = int(flat - bounds[ai])
        arr = arrays[ai]
        orig = arr.flat[off]
        arr.flat[off] = orig + h
        up, masks_up = loss_fn()
        arr.flat[off] = orig - h
        down, masks_down = loss_fn()
        arr.flat[off] = orig
        if not all(np.array_equal(a, b) for a, b in zip(masks_up, masks_down)):
            continue
        coords.append((ai, off))
        values.append((up - down) / (2.0 * h))
    return coords, np.array(values)


def gradient_relative_error(analytic_arrays, coords, fd_values) -> float:
    """Vector-norm relative error between analytic and FD gradients on coords."""
    analytic = np.array([analytic_arrays[ai].flat[off] for ai, off in coords])
    denom = max(np.linalg.norm(analytic), np.linalg.norm(fd_values), 1e-12)
    return float(np.linalg.norm(analytic - fd_values) / denom)

"""Composition, concatenation and conversions between network kinds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .activations import IDENTITY, RELU
from .errors import DimensionMismatch, InvalidNetwork, UnboundedCollation, WidthMismatch
from .network import (
    ChannelMeta,
    Kind,
    LinearLayer,
    Network,
    check_valid,
    complexity,
    forward_trace,
)


def affine_network(weights, bias=None) -> Network:
    """Network without hidden layers computing ``W x + b``."""
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    b = np.zeros(w.shape[0]) if bias is None else np.asarray(bias, dtype=float)
    return Network(Kind.STANDARD, w.shape[1], (LinearLayer(w, b, IDENTITY),))


def identity_network(d: int = 1) -> Network:
    """One-hidden-layer network computing ``x`` exactly via ``σ(x) − σ(−x)``."""
    if d < 1:
        raise DimensionMismatch("identity network needs d >= 1")
    eye = np.eye(d)
    first = LinearLayer(np.vstack([eye, -eye]), np.zeros(2 * d), RELU)
    last = LinearLayer(np.hstack([eye, -eye]), np.zeros(d), IDENTITY)
    return Network(Kind.STANDARD, d, (first, last))


def _require_not_special(*nets: Network) -> None:
    for net in nets:
        if net.kind == Kind.SPECIAL:
            raise InvalidNetwork("convert special networks with special_to_standard first")


def to_connected(net: Network) -> Network:
    """View a standard network as a connected one by inserting zero blocks."""
    check_valid(net)
    _require_not_special(net)
    if net.kind == Kind.CONNECTED:
        return net
    widths = net.widths
    layers = []
    for idx, layer in enumerate(net.layers):
        pad = int(sum(widths[:idx]))
        w = np.hstack([np.zeros((layer.fan_out, pad)), layer.weights])
        layers.append(LinearLayer(w, layer.bias, layer.activation))
    return Network(Kind.CONNECTED, net.input_dim, tuple(layers))


def compose(outer: Network, inner: Network) -> Network:
    """Connected network computing ``outer(inner(x))``.

    The output layer of ``inner`` is duplicated with opposite signs and
    rectified, and ``outer`` reads ``y = relu(y) - relu(-y)``; earlier
    blocks of ``inner`` are visible to ``outer`` through zero weights.
    Depth is the sum of the depths.
    """
    if outer.input_dim != inner.output_dim:
        raise DimensionMismatch(
            f"outer expects {outer.input_dim} inputs, inner produces {inner.output_dim}"
        )
    a = to_connected(inner)
    b = to_connected(outer)
    m = a.output_dim
    last = a.layers[-1]
    layers = list(a.layers[:-1])
    layers.append(
        LinearLayer(
            np.vstack([last.weights, -last.weights]),
            np.concatenate([last.bias, -last.bias]),
            RELU,
        )
    )
    skip = int(sum(a.widths[:-1]))
    for layer in b.layers:
        w = layer.weights
        w0, rest = w[:, :m], w[:, m:]
        new = np.hstack([np.zeros((layer.fan_out, skip)), w0, -w0, rest])
        layers.append(LinearLayer(new, layer.bias, layer.activation))
    return Network(Kind.CONNECTED, a.input_dim, tuple(layers))


def compose_merge(outer: Network, inner: Network) -> Network:
    """Standard network computing ``outer(inner(x))`` with the seam layers fused.

    The output layer of ``inner`` and the first layer of ``outer`` are
    replaced by their product, so hidden depth is additive.
    """
    if outer.input_dim != inner.output_dim:
        raise DimensionMismatch(
            f"outer expects {outer.input_dim} inputs, inner produces {inner.output_dim}"
        )
    for net in (outer, inner):
        check_valid(net)
        if net.kind != Kind.STANDARD:
            raise InvalidNetwork("compose_merge needs standard networks")
    last = inner.layers[-1]
    first = outer.layers[0]
    if last.activation != IDENTITY:
        raise InvalidNetwork("inner output layer must be affine")
    merged = LinearLayer(
        first.weights @ last.weights,
        first.weights @ last.bias + first.bias,
        first.activation,
    )
    layers = inner.layers[:-1] + (merged,) + outer.layers[1:]
    return Network(Kind.STANDARD, inner.input_dim, layers)


def concat(a: Network, b: Network) -> Network:
    """Connected network computing ``(a(x), b(x))`` on a shared input."""
    return concat_all([a, b])


def concat_all(nets: Sequence[Network]) -> Network:
    """Stack several networks on a shared input into one connected network.

    Hidden layer ``t`` of the result holds hidden layer ``t`` of every network
    deep enough to have one.  The output layer holds every output row, in
    order, each reading only the blocks of its own network.
    """
    if not nets:
        raise ValueError("nothing to concatenate")
    d = nets[0].input_dim
    if any(n.input_dim != d for n in nets):
        raise DimensionMismatch("concatenated networks must share the input dimension")
    conn = [to_connected(n) for n in nets]
    depth = max(c.total_layers for c in conn)

    pos: dict[tuple[int, int], int] = {}
    hidden_sizes = []
    for t in range(depth - 1):
        size = 0
        for k, c in enumerate(conn):
            if t < c.total_layers - 1:
                pos[(k, t)] = size
                size += c.layers[t].fan_out
        hidden_sizes.append(size)
    offsets = np.concatenate([[0], np.cumsum([d] + hidden_sizes)]).astype(int)

    def columns(k: int, t: int) -> np.ndarray:
        # result columns read by layer t of network k
        cols = [np.arange(d)]
        c = conn[k]
        for blk in range(1, t + 1):
            start = offsets[blk] + pos[(k, blk - 1)]
            cols.append(np.arange(start, start + c.layers[blk - 1].fan_out))
        return np.concatenate(cols)

    layers = []
    for t in range(depth):
        if t < depth - 1:
            owners = [(k, t) for k, c in enumerate(conn) if t < c.total_layers - 1]
        else:
            owners = [(k, c.total_layers - 1) for k, c in enumerate(conn)]
        rows = sum(conn[k].layers[lt].fan_out for k, lt in owners)
        w = np.zeros((rows, offsets[t + 1]))
        bias = np.zeros(rows)
        acts = {conn[k].layers[lt].activation for k, lt in owners}
        if len(acts) != 1:
            raise InvalidNetwork(f"mixed activations in concatenated layer {t}")
        r = 0
        for k, lt in owners:
            src = conn[k].layers[lt]
            w[r : r + src.fan_out, columns(k, lt)] = src.weights
            bias[r : r + src.fan_out] = src.bias
            r += src.fan_out
        layers.append(LinearLayer(w, bias, acts.pop()))
    return Network(Kind.CONNECTED, d, tuple(layers))


def drop_outputs(net: Network, keep: Sequence[int]) -> Network:
    """Same network restricted to the listed output rows."""
    last = net.layers[-1]
    keep = list(keep)
    layer = LinearLayer(last.weights[keep], last.bias[keep], last.activation)
    return Network(net.kind, net.input_dim, net.layers[:-1] + (layer,), net.channel_meta)


def connected_to_standard(net: Network) -> Network:
    """Equivalent standard network of the same depth.

    Earlier hidden outputs needed by later layers are carried forward by
    unit-weight ReLU neurons (they are nonnegative), and input coordinates
    by ``relu(x), relu(-x)`` pairs.  A value is carried only until its
    last use.
    """
    check_valid(net)
    if net.kind == Kind.STANDARD:
        return net
    _require_not_special(net)
    if any(layer.activation != RELU for layer in net.layers[:-1]):
        raise InvalidNetwork("carrying hidden values needs ReLU hidden layers")
    depth = net.total_layers
    d = net.input_dim
    block_sizes = net.widths[:-1]

    last_use = [np.full(size, -1) for size in block_sizes]
    for t, layer in enumerate(net.layers):
        off = net.block_offsets(t)
        used = np.any(layer.weights != 0.0, axis=0)
        for blk in range(t + 1):
            hit = used[off[blk] : off[blk + 1]]
            last_use[blk][hit] = t

    # position maps of the standard layer t-1 that layer t reads from
    prev_new = None  # start row of new neurons
    prev_carry: dict[tuple[int, int], int] = {}
    prev_pair: dict[int, tuple[int, int]] = {}
    layers = []
    for t, layer in enumerate(net.layers):
        off = net.block_offsets(t)
        w_conn = layer.weights
        fan_in = d if t == 0 else layers[-1].fan_out
        new_rows = np.zeros((layer.fan_out, fan_in))
        for blk in range(t + 1):
            sub = w_conn[:, off[blk] : off[blk + 1]]
            for j in np.flatnonzero(np.any(sub != 0.0, axis=0)):
                col = sub[:, j]
                if t == 0:
                    new_rows[:, j] += col
                elif blk == 0:
                    plus, minus = prev_pair[j]
                    new_rows[:, plus] += col
                    new_rows[:, minus] -= col
                elif blk == t:
                    new_rows[:, prev_new + j] += col
                else:
                    new_rows[:, prev_carry[(blk, j)]] += col
        if t == depth - 1:
            layers.append(LinearLayer(new_rows, layer.bias, layer.activation))
            break

        rows = [new_rows]
        carry: dict[tuple[int, int], int] = {}
        pair: dict[int, tuple[int, int]] = {}
        r = layer.fan_out
        for j in np.flatnonzero(last_use[0] > t):
            row_p = np.zeros(fan_in)
            row_m = np.zeros(fan_in)
            if t == 0:
                row_p[j], row_m[j] = 1.0, -1.0
            else:
                row_p[prev_pair[j][0]] = 1.0
                row_m[prev_pair[j][1]] = 1.0
            rows.extend([row_p[None], row_m[None]])
            pair[j] = (r, r + 1)
            r += 2
        for blk in range(1, t + 1):
            for j in np.flatnonzero(last_use[blk] > t):
                row = np.zeros(fan_in)
                row[prev_new + j if blk == t else prev_carry[(blk, j)]] = 1.0
                rows.append(row[None])
                carry[(blk, j)] = r
                r += 1
        w = np.vstack(rows)
        bias = np.concatenate([layer.bias, np.zeros(r - layer.fan_out)])
        layers.append(LinearLayer(w, bias, RELU))
        prev_new, prev_carry, prev_pair = 0, carry, pair
    return Network(Kind.STANDARD, d, tuple(layers))


def inflation(connected: Network, standard: Network) -> dict:
    """Measured size ratios of a connected-to-standard conversion."""
    c = complexity(connected)
    s = complexity(standard)
    depth = c.total_layers
    return {
        "neuron_ratio": s.total_neurons / (depth * c.total_neurons),
        "param_ratio": s.nonzero_params / (depth * max(1, c.nonzero_params)),
    }


# -- special networks ------------------------------------------------------------
def special_network(layers: Sequence[LinearLayer], source: int = 0, collation: int = -1) -> Network:
    """Special network whose channels sit at fixed row indices in every layer."""
    width = layers[0].fan_out
    coll = collation % width
    meta = ChannelMeta((source,) * (len(layers) - 1), (coll,) * (len(layers) - 1))
    net = Network(Kind.SPECIAL, 1, tuple(layers), meta)
    check_valid(net)
    return net


def special_width(net: Network) -> int:
    return net.hidden_widths[0]


def special_add(a: Network, b: Network) -> Network:
    """Special network computing ``a(x) + b(x)`` with depth ``L(a) + L(b)``.

    The hidden layers of ``b`` follow those of ``a``.  At the seam the
    collation neuron absorbs the output of ``a``, and the compute neurons of
    ``b`` read the input from the source channel.
    """
    for net in (a, b):
        check_valid(net)
        if net.kind != Kind.SPECIAL:
            raise InvalidNetwork("special_add needs special networks")
        if net.output_dim != 1:
            raise DimensionMismatch("special networks with one output expected")
    width = special_width(a)
    if special_width(b) != width:
        raise WidthMismatch(f"widths {width} and {special_width(b)} differ")
    sa, ca = a.channel_meta.source[-1], a.channel_meta.collation[-1]
    sb, cb = b.channel_meta.source[0], b.channel_meta.collation[0]
    a_out = a.layers[-1]
    b0 = b.layers[0]
    w = np.zeros((width, width))
    bias = np.array(b0.bias, dtype=float)
    for r in range(width):
        if r == sb:
            w[r, sa] = 1.0
            bias[r] = 0.0
        elif r == cb:
            w[r] = a_out.weights[0]
            w[r, sa] += b0.weights[r, 0]
            bias[r] = a_out.bias[0] + b0.bias[r]
        else:
            w[r, sa] = b0.weights[r, 0]
    seam = LinearLayer(w, bias, b0.activation)
    layers = a.layers[:-1] + (seam,) + b.layers[1:]
    meta = ChannelMeta(
        a.channel_meta.source + b.channel_meta.source,
        a.channel_meta.collation + b.channel_meta.collation,
    )
    net = Network(Kind.SPECIAL, 1, layers, meta)
    check_valid(net)
    return net


def special_sum(nets: Sequence[Network]) -> Network:
    out = nets[0]
    for net in nets[1:]:
        out = special_add(out, net)
    return out


def lift_with_channels(net: Network) -> Network:
    """Special network of width ``W + 2`` computing the same function.

    Hidden layers narrower than the widest one are padded with dead neurons.
    """
    check_valid(net)
    if net.kind != Kind.STANDARD or net.input_dim != 1 or net.output_dim != 1:
        raise InvalidNetwork("lift_with_channels needs a univariate scalar standard network")
    if net.hidden_layers < 1:
        raise InvalidNetwork("at least one hidden layer is needed")
    inner = max(net.hidden_widths)
    width = inner + 2
    coll = width - 1
    layers = []
    for t, layer in enumerate(net.layers):
        rows = layer.fan_out
        if t == net.hidden_layers:
            w = np.zeros((1, width))
            w[0, 1 : 1 + layer.fan_in] = layer.weights[0]
            w[0, coll] = 1.0
            layers.append(LinearLayer(w, layer.bias, layer.activation))
            break
        w = np.zeros((width, 1 if t == 0 else width))
        bias = np.zeros(width)
        w[0, 0] = 1.0
        if t == 0:
            w[1 : 1 + rows, 0] = layer.weights[:, 0]
        else:
            w[1 : 1 + rows, 1 : 1 + layer.fan_in] = layer.weights
            w[coll, coll] = 1.0
        bias[1 : 1 + rows] = layer.bias
        layers.append(LinearLayer(w, bias, layer.activation))
    return special_network(layers, 0, coll)


@dataclass(frozen=True)
class ShiftCertificate:
    """Nonnegative shifts that let ReLU neurons stand in for the channel neurons.

    ``source_shift`` is added to every source neuron.  ``collation_shifts[l]``
    is the increment ``C_l`` applied at hidden layer ``l``; the collation
    neuron of layer ``l`` carries ``C_0 + ... + C_l`` and the output bias
    drops by the full sum.  ``min_margin`` is the smallest shifted channel
    pre-activation seen on the validation points.
    """

    domain: tuple[float, float]
    source_shift: float
    collation_shifts: tuple[float, ...]
    grid_points: int
    validation_points: int
    min_margin: float

    @property
    def total_collation_shift(self) -> float:
        total = 0.0
        for c in self.collation_shifts:
            total += c
        return total


def special_to_standard(
    net: Network,
    domain: tuple[float, float] = (0.0, 1.0),
    grid: int = 10_001,
    seed: int = 42,
) -> tuple[Network, ShiftCertificate]:
    """Standard ReLU network agreeing with a special network on ``domain``.

    Each channel neuron is shifted by a constant that keeps it nonnegative on
    the domain, so the ReLU acts as the identity there; readers compensate
    through their biases.  The source shift is exact; the collation shift is
    estimated on a grid with a safety margin and then checked on fresh
    random points.
    """
    check_valid(net)
    if net.kind != Kind.SPECIAL:
        raise InvalidNetwork("special_to_standard needs a special network")
    lo, hi = map(float, domain)
    meta = net.channel_meta
    xs = np.linspace(lo, hi, int(grid))
    step = (hi - lo) / max(1, int(grid) - 1)
    trace = forward_trace(net, xs)
    src_shift = max(0.0, -lo)
    increments = []
    offsets = []
    running = 0.0
    for t in range(net.hidden_layers):
        col = trace[t][:, meta.collation[t]]
        # a kink between grid points can dip below the sampled minimum by at
        # most the steepest sampled slope times the spacing
        slope = float(np.max(np.abs(np.diff(col)))) / step if col.size > 1 else 0.0
        need = 1.1 * max(0.0, -float(col.min())) + slope * step
        inc = max(0.0, need - running)
        running += inc
        increments.append(inc)
        offsets.append(running)

    layers = []
    prev_offset = np.zeros(net.input_dim)
    for t, layer in enumerate(net.layers):
        offset = np.zeros(layer.fan_out)
        if t < net.hidden_layers:
            offset[meta.source[t]] = src_shift
            offset[meta.collation[t]] = offsets[t]
        bias = layer.bias - layer.weights @ prev_offset + offset
        layers.append(LinearLayer(layer.weights, bias, layer.activation))
        prev_offset = offset
    out = Network(Kind.STANDARD, 1, tuple(layers))

    rng = np.random.default_rng(seed + 1)
    probe = np.concatenate([rng.uniform(lo, hi, 10_000), [lo, hi]])
    check = forward_trace(net, probe)
    margin = np.inf
    for t in range(net.hidden_layers):
        margin = min(margin, float(np.min(check[t][:, meta.source[t]])) + src_shift)
        margin = min(margin, float(np.min(check[t][:, meta.collation[t]])) + offsets[t])
    if margin < 0.0:
        raise UnboundedCollation(f"channel value drops {-margin:g} below the certified shift")
    cert = ShiftCertificate((lo, hi), src_shift, tuple(increments), int(grid), probe.size, margin)
    return out, cert

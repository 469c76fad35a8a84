"""Encode-process-decode message passing over the latent grid graph.

Forward pass follows the usual mesh-graph-network convention: MLP node and
edge encoders, L residual message-passing layers (edge update, then node
update with summed incoming messages), an MLP decoder producing a per-node
delta added back onto the input (residual prediction).

Gradients are hand-rolled reverse mode over cached activations; the
finite-difference tests pin them down.  Everything is float64 numpy.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DataError

ACTIVATIONS = ("relu", "silu")


# -- two-hidden-layer MLP ---------------------------------------------------

def mlp_init(sizes, rng):
    """Scaled-uniform (fan-in) init; sizes = (in, hidden, hidden, out)."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append([W, b])
    return layers


def _act(x, kind):
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "silu":
        return x * expit(x)
    raise ConfigError(f"unknown activation {kind!r}")


def _act_grad(x, kind):
    if kind == "relu":
        return (x > 0).astype(np.float64)
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


def mlp_forward(layers, x, activation):
    """Hidden layers activated, linear output.  Returns (y, cache)."""
    cache = []
    h = x
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        cache.append((h, z))
        h = z if i == last else _act(z, activation)
    return h, cache


def mlp_backward(layers, cache, dy, activation):
    """Returns (dx, grads) with grads shaped like the layer list."""
    grads = [None] * len(layers)
    g = dy
    last = len(layers) - 1
    for i in range(last, -1, -1):
        h, z = cache[i]
        if i != last:
            g = g * _act_grad(z, activation)
        W, _ = layers[i]
        grads[i] = [h.T @ g, g.sum(axis=0)]
        g = g @ W.T
    return g, grads


# -- parameters -------------------------------------------------------------

@dataclass
class GnnParams:
    node_encoder: list
    edge_encoder: list
    edge_mlps: list   # L entries
    node_mlps: list   # L entries
    node_decoder: list
    hidden: int
    activation: str = "silu"
    aggregation: str = "sum"

    @property
    def num_layers(self):
        return len(self.edge_mlps)


def init_gnn_params(channels, hidden, layers, ndim, rng, activation="silu",
                    aggregation="sum", zero_decoder=False):
    if layers < 1:
        raise ConfigError("need at least one message-passing layer")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"activation must be one of {ACTIVATIONS}")
    H = hidden
    p = GnnParams(
        node_encoder=mlp_init((channels, H, H, H), rng),
        edge_encoder=mlp_init((ndim + 1, H, H, H), rng),
        edge_mlps=[mlp_init((3 * H, H, H, H), rng) for _ in range(layers)],
        node_mlps=[mlp_init((2 * H, H, H, H), rng) for _ in range(layers)],
        node_decoder=mlp_init((H, H, H, channels), rng),
        hidden=H, activation=activation, aggregation=aggregation)
    if zero_decoder:
        for W, b in p.node_decoder:
            W[:] = 0.0
            b[:] = 0.0
    return p


def gnn_param_arrays(params):
    """Flat list of the learnable arrays, in a fixed documented order."""
    out = []
    for mlp in ([params.node_encoder, params.edge_encoder]
                + params.edge_mlps + params.node_mlps + [params.node_decoder]):
        for W, b in mlp:
            out.extend([W, b])
    return out


# -- forward / backward -----------------------------------------------------

def _aggregate(edge_vals, receivers, num_nodes, aggregation):
    agg = np.zeros((num_nodes, edge_vals.shape[1]))
    np.add.at(agg, receivers, edge_vals)
    if aggregation == "mean":
        counts = np.bincount(receivers, minlength=num_nodes)[:, None]
        agg = agg / np.maximum(counts, 1)
    return agg


def gnn_forward(latent, params, graph, return_cache=False):
    """One surrogate step in latent space: z_{t+1} = z_t + decoder(process(z_t))."""
    z = np.asarray(latent, dtype=np.float64)
    if tuple(z.shape[:-1]) != graph.dims:
        raise DataError(f"latent dims {z.shape[:-1]} do not match graph {graph.dims}")
    C = z.shape[-1]
    act = params.activation
    x = z.reshape(-1, C)
    v, ce_n = mlp_forward(params.node_encoder, x, act)
    e, ce_e = mlp_forward(params.edge_encoder, graph.edge_features, act)
    layer_caches = []
    for emlp, nmlp in zip(params.edge_mlps, params.node_mlps):
        ein = np.concatenate([e, v[graph.senders], v[graph.receivers]], axis=1)
        de, c1 = mlp_forward(emlp, ein, act)
        e_new = e + de
        agg = _aggregate(e_new, graph.receivers, graph.num_nodes,
                         params.aggregation)
        nin = np.concatenate([v, agg], axis=1)
        dv, c2 = mlp_forward(nmlp, nin, act)
        layer_caches.append((c1, c2))
        e, v = e_new, v + dv
    delta, cd = mlp_forward(params.node_decoder, v, act)
    out = z + delta.reshape(z.shape)
    if not return_cache:
        return out
    cache = dict(x=x, ce_n=ce_n, ce_e=ce_e, layers=layer_caches, cd=cd,
                 shape=z.shape, graph=graph)
    return out, cache


def gnn_backward(d_out, params, cache):
    """Reverse mode through :func:`gnn_forward`.

    d_out is the loss gradient at z_{t+1} (same shape as the latent field).
    Returns (d_latent, grads) where grads mirrors gnn_param_arrays order.
    """
    graph = cache["graph"]
    act = params.activation
    shape = cache["shape"]
    g = np.asarray(d_out, dtype=np.float64)
    d_z = g.copy()  # residual path
    d_delta = g.reshape(-1, shape[-1])
    dv, g_dec = mlp_backward(params.node_decoder, cache["cd"], d_delta, act)
    de = np.zeros((graph.num_edges, params.hidden))
    g_edge_mlps = [None] * params.num_layers
    g_node_mlps = [None] * params.num_layers
    H = params.hidden
    for li in range(params.num_layers - 1, -1, -1):
        c1, c2 = cache["layers"][li]
        # node update: v' = v + MLP_v([v, agg])
        dnin, g_n = mlp_backward(params.node_mlps[li], c2, dv, act)
        g_node_mlps[li] = g_n
        dv = dv + dnin[:, :H]
        dagg = dnin[:, H:]
        if params.aggregation == "mean":
            counts = np.bincount(graph.receivers,
                                 minlength=graph.num_nodes)[:, None]
            dagg = dagg / np.maximum(counts, 1)
        de_new = de + dagg[graph.receivers]
        # edge update: e' = e + MLP_e([e, v_s, v_r])
        dein, g_e = mlp_backward(params.edge_mlps[li], c1, de_new, act)
        g_edge_mlps[li] = g_e
        de = de_new + dein[:, :H]
        np.add.at(dv, graph.senders, dein[:, H:2 * H])
        np.add.at(dv, graph.receivers, dein[:, 2 * H:])
    dx, g_enc_n = mlp_backward(params.node_encoder, cache["ce_n"], dv, act)
    _, g_enc_e = mlp_backward(params.edge_encoder, cache["ce_e"], de, act)
    d_z += dx.reshape(shape)
    grads = []
    for mlp_g in ([g_enc_n, g_enc_e] + g_edge_mlps + g_node_mlps + [g_dec]):
        for gW, gb in mlp_g:
            grads.extend([gW, gb])
    return d_z, grads

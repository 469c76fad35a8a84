"""Autoregressive inference.

Three algorithms share one trained parameter set:

* original-space: every step encodes, applies the latent dynamics, decodes;
* latent-space: encode once, step the dynamics repeatedly, decode at the
  recording cadence (and always at the final step);
* gnn-only: the graph network runs directly on the full-resolution field,
  no compression.

Each rollout records per-frame diagnostics (max |phi|, wall-clock per
step) and counts encode/decode calls; divergence is reported, never
masked.
"""

from dataclasses import dataclass
import time

import numpy as np

from .errors import ConfigError, DataError
from .invertible import encode, decode
from .gnn import gnn_forward
from .graph import build_grid_graph

DIVERGENCE_THRESHOLD = 10.0


@dataclass
class RolloutResult:
    frames: np.ndarray          # (num_recorded, *dims, c)
    step_indices: list          # rollout step of each recorded frame
    max_abs: list               # per recorded frame
    step_seconds: list          # wall clock per dynamics step
    encode_calls: int = 0
    decode_calls: int = 0
    diverged: bool = False
    graph_nodes: int = 0
    graph_edges: int = 0

    def peak_elements(self):
        """Live-element memory proxy: largest array active during a step."""
        return int(max(np.prod(self.frames.shape[1:]), 1))


def _record(frames, steps, maxes, arr, step, result_diverged):
    m = float(np.abs(arr).max())
    frames.append(arr.copy())
    steps.append(step)
    maxes.append(m)
    return result_diverged or m > DIVERGENCE_THRESHOLD or not np.isfinite(m)


def rollout_original(phi0, steps, ae_params, gnn_params, graph=None,
                     connectivity="von_neumann"):
    """Original-space algorithm: phi <- decode(G(encode(phi))) each step."""
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    phi = np.asarray(phi0, dtype=np.float64)
    latent_shape = _latent_dims(phi, ae_params)
    if graph is None:
        graph = build_grid_graph(latent_shape, connectivity)
    frames, idxs, maxes, times = [], [], [], []
    diverged = _record(frames, idxs, maxes, phi, 0, False)
    enc = dec = 0
    for k in range(1, steps + 1):
        t0 = time.perf_counter()
        z = encode(phi, ae_params)
        enc += 1
        z = gnn_forward(z, gnn_params, graph)
        phi = decode(z, ae_params)
        dec += 1
        times.append(time.perf_counter() - t0)
        diverged = _record(frames, idxs, maxes, phi, k, diverged)
    return RolloutResult(np.stack(frames), idxs, maxes, times, enc, dec,
                         diverged, graph.num_nodes, graph.num_edges)


def rollout_latent(phi0, steps, ae_params, gnn_params, emit_every=1,
                   graph=None, connectivity="von_neumann"):
    """Latent-space algorithm: encode once, step G repeatedly, decode only
    at the recording cadence."""
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    if emit_every < 1:
        raise ConfigError("emit_every must be >= 1")
    phi = np.asarray(phi0, dtype=np.float64)
    latent_shape = _latent_dims(phi, ae_params)
    if graph is None:
        graph = build_grid_graph(latent_shape, connectivity)
    frames, idxs, maxes, times = [], [], [], []
    diverged = _record(frames, idxs, maxes, phi, 0, False)
    z = encode(phi, ae_params)
    enc, dec = 1, 0
    for k in range(1, steps + 1):
        t0 = time.perf_counter()
        z = gnn_forward(z, gnn_params, graph)
        times.append(time.perf_counter() - t0)
        if k % emit_every == 0 or k == steps:
            out = decode(z, ae_params)
            dec += 1
            diverged = _record(frames, idxs, maxes, out, k, diverged)
    return RolloutResult(np.stack(frames), idxs, maxes, times, enc, dec,
                         diverged, graph.num_nodes, graph.num_edges)


def rollout_gnn_only(phi0, steps, gnn_params, graph=None,
                     connectivity="von_neumann"):
    """Uncompressed baseline: the graph spans every cell of the field."""
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    phi = np.asarray(phi0, dtype=np.float64)
    if graph is None:
        graph = build_grid_graph(phi.shape[:-1], connectivity)
    frames, idxs, maxes, times = [], [], [], []
    diverged = _record(frames, idxs, maxes, phi, 0, False)
    for k in range(1, steps + 1):
        t0 = time.perf_counter()
        phi = gnn_forward(phi, gnn_params, graph)
        times.append(time.perf_counter() - t0)
        diverged = _record(frames, idxs, maxes, phi, k, diverged)
    return RolloutResult(np.stack(frames), idxs, maxes, times, 0, 0,
                         diverged, graph.num_nodes, graph.num_edges)


def extrapolate(phi0, steps, ae_params, gnn_params, emit_every=1,
                connectivity="von_neumann"):
    """Run trained parameters on a larger mesh and/or longer horizon.  All
    MLPs are node/edge-local, so only the graph needs rebuilding."""
    phi = np.asarray(phi0, dtype=np.float64)
    latent_dims = _latent_dims(phi, ae_params)
    graph = build_grid_graph(latent_dims, connectivity)
    return rollout_latent(phi, steps, ae_params, gnn_params, emit_every,
                          graph=graph)


def _latent_dims(phi, ae_params):
    n = ae_params.linear_ratio
    spatial = phi.shape[:-1]
    if any(s % n for s in spatial):
        raise DataError(
            f"field dims {spatial} not divisible by compression ratio {n}")
    return tuple(s // n for s in spatial)

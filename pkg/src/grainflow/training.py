"""Training: noise injection, symmetry augmentation, the multi-step
autoregressive loss, AdamW with plateau scheduling, and the epoch loop.

The multi-step loss rolls the surrogate forward p steps in latent space
(encode once, apply the graph network k times, decode per step for the
loss term) and backpropagates through all p steps.  Noise is added to the
input frame of each training window only; validation evaluation never
touches an RNG.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .invertible import (encode_with_cache, encode_backward, decode_with_cache,
                         decode_backward, refresh_inverses)
from .gnn import gnn_forward, gnn_backward, gnn_param_arrays
from .symmetry import enumerate_ops, apply_symmetry
from .rng import substream


@dataclass
class TrainConfig:
    horizon: int = 1            # p autoregressive steps in the loss
    noise_amplitude: float = 1e-3
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    batch_size: int = 8
    plateau_patience: int = 5
    plateau_factor: float = 0.5
    augment: bool = True
    val_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.noise_amplitude < 0:
            raise ConfigError("noise_amplitude must be >= 0")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must be in [0, 1)")


def add_noise(field_arr, amplitude, rng):
    """field + amplitude * standard normal, elementwise."""
    if amplitude == 0:
        return field_arr.copy()
    return field_arr + amplitude * rng.standard_normal(field_arr.shape)


# -- multi-step loss --------------------------------------------------------

def multi_step_loss(ae_params, gnn_params, graph, phi_t, targets,
                    with_grads=True):
    """Sum over k of the mean-square error of the k-step prediction.

    targets is the list [phi_{t+1}, ..., phi_{t+p}].  Returns
    (loss, ae_grads, gnn_grads) with grads None when with_grads is False.
    """
    p = len(targets)
    if p < 1:
        raise ConfigError("need at least one target frame")
    z, enc_cache = encode_with_cache(phi_t, ae_params)
    gnn_caches, dec_caches, dphis = [], [], []
    loss = 0.0
    for k in range(p):
        z, gc = gnn_forward(z, gnn_params, graph, return_cache=True)
        gnn_caches.append(gc)
        phi_hat, dc = decode_with_cache(z, ae_params)
        dec_caches.append(dc)
        diff = phi_hat - targets[k]
        loss += float(np.mean(diff**2))
        dphis.append(2.0 * diff / diff.size)
    if not with_grads:
        return loss, None, None

    n_gnn = len(gnn_param_arrays(gnn_params))
    gnn_grads = [0.0] * n_gnn
    ae_grads = [np.zeros_like(M) for M in ae_params.matrices]
    dz = np.zeros_like(z)
    for k in range(p - 1, -1, -1):
        dz_dec, dmats = decode_backward(dphis[k], ae_params, dec_caches[k])
        for i, dm in enumerate(dmats):
            ae_grads[i] += dm
        dz = dz + dz_dec
        dz, g = gnn_backward(dz, gnn_params, gnn_caches[k])
        for i, gi in enumerate(g):
            gnn_grads[i] = gnn_grads[i] + gi
    _, dmats = encode_backward(dz, ae_params, enc_cache)
    for i, dm in enumerate(dmats):
        ae_grads[i] += dm
    return loss, ae_grads, gnn_grads


# -- AdamW + plateau scheduler ---------------------------------------------

@dataclass
class AdamWState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    best_val: float = np.inf
    bad_epochs: int = 0

    @classmethod
    def for_params(cls, arrays, lr):
        return cls(m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays], lr=lr)


def optimizer_step(arrays, grads, state, config):
    """In-place AdamW update with decoupled weight decay."""
    state.t += 1
    b1, b2, eps = config.beta1, config.beta2, config.eps
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        a -= state.lr * ((m / c1) / (np.sqrt(v / c2) + eps)
                         + config.weight_decay * a)
    return state


def plateau_update(state, val_loss, config):
    """Multiply lr by the decay factor after `patience` non-improving epochs."""
    if val_loss < state.best_val - 1e-12:
        state.best_val = val_loss
        state.bad_epochs = 0
    else:
        state.bad_epochs += 1
        if state.bad_epochs > config.plateau_patience:
            state.lr *= config.plateau_factor
            state.bad_epochs = 0
    return state


# -- epoch loop -------------------------------------------------------------

def split_trajectories(num, val_fraction, rng):
    """Whole-trajectory split (never by frame)."""
    idx = rng.permutation(num)
    n_val = int(round(num * val_fraction))
    if num > 1 and val_fraction > 0:
        n_val = max(n_val, 1)
    return np.sort(idx[n_val:]), np.sort(idx[:n_val])


def _windows(traj_indices, num_frames, horizon):
    return [(ti, t) for ti in traj_indices
            for t in range(num_frames - horizon)]


def evaluate(dataset, traj_indices, ae_params, gnn_params, graph, horizon):
    """Mean multi-step loss over all windows; no noise, no augmentation,
    no RNG anywhere on this path."""
    wins = _windows(traj_indices, dataset.shape[1], horizon)
    if not wins:
        return np.nan
    total = 0.0
    for ti, t in wins:
        targets = [dataset[ti, t + k] for k in range(1, horizon + 1)]
        loss, _, _ = multi_step_loss(ae_params, gnn_params, graph,
                                     dataset[ti, t], targets, with_grads=False)
        total += loss
    return total / len(wins)


def train(dataset, ae_params, gnn_params, graph, config, start_epoch=0,
          opt_state=None, callback=None):
    """Optimize AE mixing matrices and GNN weights on (N_b, N_t, *dims, c).

    Returns (history, opt_state) where history rows are
    (epoch, train_loss, val_loss, lr).  The per-epoch RNG stream is derived
    from (seed, epoch), so resuming at epoch e replays the identical
    remaining schedule.
    """
    dataset = np.asarray(dataset, dtype=np.float64)
    nb, nt = dataset.shape[:2]
    d = dataset.ndim - 3
    if config.horizon + 1 > nt:
        raise ConfigError(
            f"horizon {config.horizon} needs {config.horizon + 1} frames, "
            f"trajectories have {nt}")
    split_rng = substream(config.seed, "split")
    train_idx, val_idx = split_trajectories(nb, config.val_fraction, split_rng)
    ops = enumerate_ops(d) if config.augment else None
    arrays = list(ae_params.matrices) + gnn_param_arrays(gnn_params)
    if opt_state is None:
        opt_state = AdamWState.for_params(arrays, config.learning_rate)
    n_ae = len(ae_params.matrices)
    history = []
    for epoch in range(start_epoch, config.epochs):
        rng = substream(config.seed, "epoch", epoch)
        wins = _windows(train_idx, nt, config.horizon)
        order = rng.permutation(len(wins))
        epoch_loss, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [wins[i] for i in order[start:start + config.batch_size]]
            agg = None
            batch_loss = 0.0
            for ti, t in batch:
                phi = dataset[ti, t]
                targets = [dataset[ti, t + k]
                           for k in range(1, config.horizon + 1)]
                if ops is not None:
                    op = ops[rng.integers(len(ops))]
                    phi = apply_symmetry(phi, op)
                    targets = [apply_symmetry(f, op) for f in targets]
                phi = add_noise(phi, config.noise_amplitude, rng)
                loss, g_ae, g_gnn = multi_step_loss(
                    ae_params, gnn_params, graph, phi, targets)
                batch_loss += loss
                gall = g_ae + g_gnn
                if agg is None:
                    agg = gall
                else:
                    agg = [a + b for a, b in zip(agg, gall)]
            if not np.isfinite(batch_loss):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}: {batch_loss}")
            agg = [a / len(batch) for a in agg]
            optimizer_step(arrays, agg, opt_state, config)
            refresh_inverses(ae_params)
            epoch_loss += batch_loss
            seen += len(batch)
        train_loss = epoch_loss / max(seen, 1)
        val_loss = evaluate(dataset, val_idx, ae_params, gnn_params, graph,
                            config.horizon)
        ref = val_loss if np.isfinite(val_loss) else train_loss
        plateau_update(opt_state, ref, config)
        history.append((epoch, train_loss, val_loss, opt_state.lr))
        if callback is not None:
            callback(epoch, train_loss, val_loss, opt_state)
    return history, opt_state

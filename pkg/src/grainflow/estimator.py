"""Scikit-learn style front ends.

Thin estimator wrappers over the functional core so the pipeline composes
with the wider ecosystem (``get_params``/``set_params``, ``clone``,
``Pipeline``).  Heavy lifting stays in the functional modules.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ConfigError, DataError
from .coarsen import CoarsenConfig, postprocess
from .lattice import SpinLattice
from .invertible import AeParams, encode, decode
from .graph import build_grid_graph
from .gnn import init_gnn_params
from .training import TrainConfig, train
from .rollout import rollout_original, rollout_latent, rollout_gnn_only
from .rng import substream


class LatticeCoarsener(BaseEstimator, TransformerMixin):
    """Stateless transformer applying the lattice-to-field operator."""

    def __init__(self, downsample=4, sigma=1.0, temporal_window=3,
                 neighborhood="moore"):
        self.downsample = downsample
        self.sigma = sigma
        self.temporal_window = temporal_window
        self.neighborhood = neighborhood

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        """X: (N_b, T, *dims) integer label trajectories -> (N_b, T, *coarse, 1).

        A bare (T, n1, n2) 2D trajectory is also accepted; 3D input must be
        batched (ndim 4 is read as 2D batched).
        """
        X = np.asarray(X)
        batched = True
        if X.ndim == 3:  # single 2D trajectory
            X, batched = X[None], False
        if X.ndim not in (4, 5):
            raise DataError(f"expected (N_b, T, *dims), got shape {X.shape}")
        cfg = CoarsenConfig(self.downsample, self.sigma, self.temporal_window)
        out = []
        for traj in X:
            q = int(traj.max()) + 1
            lats = [SpinLattice(traj.shape[1:], f.astype(np.int32), q,
                                self.neighborhood) for f in traj]
            out.append(postprocess(lats, cfg))
        out = np.stack(out)
        return out if batched else out[0]


class InvertibleCompressor(BaseEstimator, TransformerMixin):
    """Lossless space-to-depth compressor with learnable channel mixing."""

    def __init__(self, stages=2, init="orthogonal", random_state=0):
        self.stages = stages
        self.init = init
        self.random_state = random_state

    def fit(self, X, y=None):
        X = np.asarray(X)
        if X.ndim < 3:
            raise DataError("expected (N, *spatial, C) samples")
        ndim, channels = X.ndim - 2, X.shape[-1]
        rng = substream(self.random_state, "compressor")
        self.ae_params_ = AeParams.create(self.stages, channels, ndim,
                                          rng=rng, init=self.init)
        self.ratio_ = self.ae_params_.linear_ratio
        return self

    def transform(self, X):
        self._check_fitted()
        return np.stack([encode(x, self.ae_params_) for x in np.asarray(X)])

    def inverse_transform(self, Z):
        self._check_fitted()
        return np.stack([decode(z, self.ae_params_) for z in np.asarray(Z)])

    def _check_fitted(self):
        if not hasattr(self, "ae_params_"):
            raise ConfigError("InvertibleCompressor is not fitted")


class GrainGrowthSurrogate(BaseEstimator):
    """Latent-space dynamics surrogate: fit on coarsened trajectories,
    predict by autoregressive rollout."""

    def __init__(self, stages=2, hidden=32, layers=3, activation="silu",
                 aggregation="sum", connectivity="von_neumann", horizon=1,
                 epochs=20, learning_rate=1e-3, weight_decay=1e-4,
                 batch_size=8, noise_amplitude=1e-3, augment=True,
                 val_fraction=0.25, random_state=0):
        self.stages = stages
        self.hidden = hidden
        self.layers = layers
        self.activation = activation
        self.aggregation = aggregation
        self.connectivity = connectivity
        self.horizon = horizon
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.noise_amplitude = noise_amplitude
        self.augment = augment
        self.val_fraction = val_fraction
        self.random_state = random_state

    def fit(self, X, y=None):
        """X: (N_b, T, *dims, c) order-parameter trajectories."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim not in (5, 6):
            raise DataError(f"expected (N_b, T, *dims, c), got {X.shape}")
        ndim = X.ndim - 3
        channels = X.shape[-1]
        dims = X.shape[2:-1]
        n = 2**self.stages
        if any(s % n for s in dims):
            raise DataError(f"dims {dims} not divisible by ratio {n}")
        rng = substream(self.random_state, "surrogate")
        self.ae_params_ = AeParams.create(self.stages, channels, ndim, rng=rng)
        latent_channels = channels * (2**ndim)**self.stages
        self.gnn_params_ = init_gnn_params(
            latent_channels, self.hidden, self.layers, ndim, rng,
            self.activation, self.aggregation)
        self.graph_ = build_grid_graph(tuple(s // n for s in dims),
                                       self.connectivity)
        cfg = TrainConfig(
            horizon=self.horizon, noise_amplitude=self.noise_amplitude,
            learning_rate=self.learning_rate, weight_decay=self.weight_decay,
            epochs=self.epochs, batch_size=self.batch_size,
            augment=self.augment, val_fraction=self.val_fraction,
            seed=self.random_state)
        self.history_, self.opt_state_ = train(
            X, self.ae_params_, self.gnn_params_, self.graph_, cfg)
        return self

    def predict(self, phi0, steps=25, algorithm="ae_latent", emit_every=1):
        """Roll the trained surrogate forward; returns recorded frames."""
        if not hasattr(self, "gnn_params_"):
            raise ConfigError("GrainGrowthSurrogate is not fitted")
        phi0 = np.asarray(phi0, dtype=np.float64)
        if algorithm == "ae_original":
            res = rollout_original(phi0, steps, self.ae_params_,
                                   self.gnn_params_,
                                   connectivity=self.connectivity)
        elif algorithm == "ae_latent":
            res = rollout_latent(phi0, steps, self.ae_params_,
                                 self.gnn_params_, emit_every,
                                 connectivity=self.connectivity)
        elif algorithm == "gnn_only":
            raise ConfigError(
                "gnn_only needs parameters trained on uncompressed fields; "
                "fit with stages=0 and use predict with algorithm='ae_latent'")
        else:
            raise ConfigError(f"unknown algorithm {algorithm!r}")
        return res.frames

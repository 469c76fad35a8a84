"""Postprocessing operator mapping discrete spin lattices to smooth
order-parameter fields.

Stages, in fixed order: boundary extraction, block averaging, periodic
Gaussian smoothing, temporal averaging, trajectory-global normalization.
The result is near 1 inside grains and near 0 at grain boundaries.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .errors import ConfigError, DataError
from .lattice import neighbor_offsets


@dataclass
class CoarsenConfig:
    downsample: int = 4
    gaussian_sigma: float = 1.0  # in coarse-cell units
    temporal_window: int = 3     # odd

    def __post_init__(self):
        if self.downsample < 1:
            raise ConfigError("downsample must be a positive integer")
        if self.gaussian_sigma <= 0:
            raise ConfigError("gaussian_sigma must be positive")
        if self.temporal_window < 1 or self.temporal_window % 2 == 0:
            raise ConfigError("temporal_window must be odd and positive")


def extract_boundary(lattice):
    """1.0 where every neighbor shares the site's label, else 0.0."""
    labels = lattice.labels
    d = len(lattice.dims)
    interior = np.ones(lattice.dims, dtype=bool)
    for off in neighbor_offsets(d, lattice.neighborhood):
        rolled = np.roll(labels, shift=tuple(-off), axis=tuple(range(d)))
        interior &= labels == rolled
    return interior.astype(np.float64)


def block_average(field, downsample):
    """Mean over non-overlapping S^d blocks; output dims are dims/S."""
    S = int(downsample)
    if S == 1:
        return field.copy()
    if any(n % S for n in field.shape):
        raise DataError(f"dims {field.shape} not divisible by downsample {S}")
    shape = []
    for n in field.shape:
        shape.extend([n // S, S])
    blocked = field.reshape(shape)
    return blocked.mean(axis=tuple(range(1, 2 * field.ndim, 2)))


def gaussian_kernel(sigma):
    """Unit-sum 1D Gaussian truncated at +-ceil(3*sigma) cells."""
    r = int(np.ceil(3 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(field, sigma):
    """Separable periodic Gaussian convolution, same dims."""
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    k = gaussian_kernel(sigma)
    out = field
    for ax in range(field.ndim):
        out = convolve1d(out, k, axis=ax, mode="wrap")
    return out


def temporal_average(frames, window):
    """Centered moving average of width ``window`` over the frame axis.
    End frames use shrunken (valid-only) windows, so length is preserved."""
    if window % 2 == 0:
        raise ConfigError("temporal window must be odd")
    frames = np.asarray(frames)
    T = frames.shape[0]
    if window > T:
        raise ConfigError(f"window {window} exceeds trajectory length {T}")
    h = window // 2
    out = np.empty_like(frames, dtype=np.float64)
    for t in range(T):
        lo, hi = max(0, t - h), min(T, t + h + 1)
        out[t] = frames[lo:hi].mean(axis=0)
    return out


def normalize(frames):
    """Affine rescale of the whole trajectory onto [0, 1] using a min/max
    shared across frames; a constant trajectory maps to all zeros."""
    frames = np.asarray(frames, dtype=np.float64)
    lo, hi = frames.min(), frames.max()
    if hi == lo:
        return np.zeros_like(frames)
    return (frames - lo) / (hi - lo)


def postprocess(lattices, config):
    """Full operator: returns array of shape (N_t, n_1, ..., n_d, 1)."""
    raw = [extract_boundary(lat) for lat in lattices]
    coarse = [gaussian_smooth(block_average(f, config.downsample),
                              config.gaussian_sigma) for f in raw]
    averaged = temporal_average(np.stack(coarse), config.temporal_window)
    return normalize(averaged)[..., None]

"""Exactly invertible spatial compression.

Stacked stride-2 space-to-depth stages, each followed by a learnable
invertible linear channel-mixing matrix.  The decoder applies cached
matrix inverses and the inverse shuffle, so decode(encode(x)) recovers x
to floating-point accuracy (bit-exactly when mixing is the identity).

Shuffle raster order is canonical: within each stride^d block, offsets are
enumerated row-major and the original channel index varies fastest in the
expanded channel dimension.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericalError


def space_to_depth(x, stride):
    """Trade spatial resolution for channels: (*spatial, C) ->
    (*spatial/stride, C * stride^d).  Pure index permutation."""
    s = int(stride)
    if s == 1:
        return x.copy()
    d = x.ndim - 1
    spatial, C = x.shape[:d], x.shape[-1]
    if any(n % s for n in spatial):
        raise DataError(f"spatial dims {spatial} not divisible by stride {s}")
    shape = []
    for n in spatial:
        shape.extend([n // s, s])
    shape.append(C)
    y = x.reshape(shape)
    axes = list(range(0, 2 * d, 2)) + list(range(1, 2 * d, 2)) + [2 * d]
    y = y.transpose(axes)
    return np.ascontiguousarray(
        y.reshape(tuple(n // s for n in spatial) + (s**d * C,)))


def depth_to_space(x, stride):
    """Exact inverse of :func:`space_to_depth`."""
    s = int(stride)
    if s == 1:
        return x.copy()
    d = x.ndim - 1
    spatial, C = x.shape[:d], x.shape[-1]
    if C % s**d:
        raise DataError(f"channel count {C} not divisible by stride^d = {s**d}")
    c_out = C // s**d
    y = x.reshape(spatial + (s,) * d + (c_out,))
    axes = []
    for i in range(d):
        axes.extend([i, d + i])
    axes.append(2 * d)
    y = y.transpose(axes)
    return np.ascontiguousarray(
        y.reshape(tuple(n * s for n in spatial) + (c_out,)))


@dataclass
class AeParams:
    """Per-stage square channel-mixing matrices with cached inverses."""

    matrices: list
    inverses: list = field(default_factory=list)
    cond_limit: float = 1e6

    def __post_init__(self):
        if not self.inverses:
            refresh_inverses(self)

    @property
    def num_stages(self):
        return len(self.matrices)

    @property
    def linear_ratio(self):
        return 2 ** len(self.matrices)

    @classmethod
    def create(cls, num_stages, channels, ndim, rng=None, init="orthogonal"):
        """Stage i operates on channels * (2^ndim)^(i+1) channels.  Orthogonal
        init guarantees invertibility; 'identity' gives a bit-exact shuffle."""
        mats = []
        for i in range(num_stages):
            side = channels * (2**ndim) ** (i + 1)
            if init == "identity":
                mats.append(np.eye(side))
            elif init == "orthogonal":
                if rng is None:
                    raise ConfigError("orthogonal init needs an rng")
                a = rng.standard_normal((side, side))
                q, r = np.linalg.qr(a)
                mats.append(q * np.sign(np.diag(r)))
            else:
                raise ConfigError(f"unknown init {init!r}")
        return cls(mats)


def refresh_inverses(params):
    """Recompute cached inverses; validates conditioning and inverse quality."""
    inverses = []
    for i, M in enumerate(params.matrices):
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ConfigError(f"stage {i} matrix is not square: {M.shape}")
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > params.cond_limit:
            raise NumericalError(
                f"stage {i} matrix condition number {cond:.3g} exceeds "
                f"limit {params.cond_limit:.3g}")
        inv = np.linalg.inv(M)
        err = np.abs(M @ inv - np.eye(M.shape[0])).max()
        if err > 1e-6:
            raise NumericalError(
                f"stage {i} inverse residual {err:.3g} exceeds 1e-6")
        inverses.append(inv)
    params.inverses[:] = inverses
    return params


def _is_identity(params):
    return all(np.array_equal(M, np.eye(M.shape[0])) for M in params.matrices)


def encode(field, params):
    """Stride-2 shuffle + channel mixing per stage.  Element count preserved."""
    x = np.asarray(field, dtype=np.float64)
    identity = _is_identity(params)
    for M in params.matrices:
        x = space_to_depth(x, 2)
        if x.shape[-1] != M.shape[0]:
            raise DataError(
                f"channel mismatch: field has {x.shape[-1]}, stage expects "
                f"{M.shape[0]}")
        if not identity:
            x = x @ M.T
    return x


def decode(latent, params):
    """Inverse mixing then inverse shuffle, stages in reverse order."""
    x = np.asarray(latent, dtype=np.float64)
    identity = _is_identity(params)
    for M, A in zip(reversed(params.matrices), reversed(params.inverses)):
        if x.shape[-1] != M.shape[0]:
            raise DataError(
                f"channel mismatch: latent has {x.shape[-1]}, stage expects "
                f"{M.shape[0]}")
        if not identity:
            x = x @ A.T
        x = depth_to_space(x, 2)
    return x


# -- cached forward/backward used by the trainer ---------------------------

def encode_with_cache(field, params):
    x = np.asarray(field, dtype=np.float64)
    cache = []
    for M in params.matrices:
        x = space_to_depth(x, 2)
        cache.append(x)
        x = x @ M.T
    return x, cache


def encode_backward(d_out, params, cache):
    """Gradients of a scalar loss through encode: returns (d_field, d_mats)."""
    d_mats = [None] * params.num_stages
    g = d_out
    for i in range(params.num_stages - 1, -1, -1):
        M, xs = params.matrices[i], cache[i]
        gf = g.reshape(-1, g.shape[-1])
        xf = xs.reshape(-1, xs.shape[-1])
        d_mats[i] = gf.T @ xf
        g = depth_to_space(g @ M, 2)
    return g, d_mats


def decode_with_cache(latent, params):
    x = np.asarray(latent, dtype=np.float64)
    cache = []
    for A in reversed(params.inverses):
        cache.append(x)
        x = depth_to_space(x @ A.T, 2)
    return x, cache


def decode_backward(d_out, params, cache):
    """Gradients through decode.  The learnable parameter is the forward
    matrix M, so the inverse-chain rule dM = -A^T dA A^T (A = M^-1) applies."""
    n = params.num_stages
    d_mats = [None] * n
    g = d_out
    # forward applied stages j = n-1 .. 0; reverse-mode undoes j = 0 first
    for j in range(n):
        A = params.inverses[j]
        zin = cache[n - 1 - j]
        g = space_to_depth(g, 2)
        gf = g.reshape(-1, g.shape[-1])
        zf = zin.reshape(-1, zin.shape[-1])
        dA = gf.T @ zf
        d_mats[j] = -A.T @ dA @ A.T
        g = g @ A
    return g, d_mats

"""Point-group operations on periodic fields: signed axis permutations.

The 2D set is the square group (8 ops), the 3D set the full cubic group
(48 ops).  An op permutes the spatial axes and then flips a subset of
them; the trailing channel axis is untouched.
"""

from dataclasses import dataclass
import itertools

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SymmetryOp:
    perm: tuple   # output axis i draws from input axis perm[i]
    flips: tuple  # bool per output axis, applied after the permutation

    @property
    def ndim(self):
        return len(self.perm)

    def is_identity(self):
        return self.perm == tuple(range(self.ndim)) and not any(self.flips)


def apply_symmetry(field, op):
    """Transform the spatial axes of (*spatial, C); channels untouched."""
    d = op.ndim
    if field.ndim != d + 1:
        raise ConfigError(
            f"field has {field.ndim - 1} spatial axes, op expects {d}")
    out = np.transpose(field, op.perm + (d,))
    flip_axes = tuple(i for i, f in enumerate(op.flips) if f)
    if flip_axes:
        out = np.flip(out, axis=flip_axes)
    return np.ascontiguousarray(out)


def compose(a, b):
    """Op equal to applying b first, then a: apply(compose(a,b), x) ==
    apply(a, apply(b, x))."""
    perm = tuple(b.perm[p] for p in a.perm)
    flips = tuple(a.flips[i] ^ b.flips[a.perm[i]] for i in range(a.ndim))
    return SymmetryOp(perm, flips)


def inverse(op):
    inv_perm = [0] * op.ndim
    for i, p in enumerate(op.perm):
        inv_perm[p] = i
    inv_flips = tuple(op.flips[inv_perm[i]] for i in range(op.ndim))
    return SymmetryOp(tuple(inv_perm), inv_flips)


def enumerate_ops(ndim):
    """All signed axis permutations: 8 in 2D (4m), 48 in 3D (O_h)."""
    if ndim not in (2, 3):
        raise ConfigError("symmetry groups defined for 2 or 3 spatial dims")
    ops = []
    for perm in itertools.permutations(range(ndim)):
        for flips in itertools.product((False, True), repeat=ndim):
            ops.append(SymmetryOp(perm, flips))
    return ops


def identity_op(ndim):
    return SymmetryOp(tuple(range(ndim)), (False,) * ndim)

"""Potts-model Metropolis Monte Carlo on a periodic lattice.

State is an integer grain label per site.  The energy model penalizes
dissimilar labels at neighboring sites; flips are proposed as the label of
a uniformly chosen neighbor (never a fresh uniform label, so no grains
nucleate) and accepted with the Metropolis rule.  At kT = 0 only
non-increasing moves are accepted, which makes total energy exactly
monotone sweep-over-sweep.

The per-attempt inner loop is compiled with numba and carries its own
xorshift64* RNG state so trajectories are bit-reproducible for a seed.
"""

from dataclasses import dataclass, field
import itertools

import numpy as np
from numba import njit

from .errors import ConfigError
from .rng import kernel_seed


def neighbor_offsets(d, neighborhood="moore"):
    """Offset vectors for the chosen neighborhood (8/26 moore, 4/6 von neumann)."""
    if neighborhood == "moore":
        offs = [o for o in itertools.product((-1, 0, 1), repeat=d) if any(o)]
    elif neighborhood == "von_neumann":
        offs = []
        for ax in range(d):
            for s in (-1, 1):
                o = [0] * d
                o[ax] = s
                offs.append(tuple(o))
    else:
        raise ConfigError(f"unknown neighborhood {neighborhood!r}")
    return np.array(offs, dtype=np.int64)


def build_neighbor_table(dims, offsets):
    """(N, k) flat site indices of each site's neighbors, periodic wrap."""
    dims = tuple(dims)
    coords = np.indices(dims).reshape(len(dims), -1)
    cols = []
    for off in offsets:
        shifted = (coords + off[:, None]) % np.array(dims)[:, None]
        cols.append(np.ravel_multi_index(shifted, dims))
    return np.stack(cols, axis=1).astype(np.int32)


@dataclass
class SpinLattice:
    dims: tuple
    labels: np.ndarray  # int32, shape dims
    num_labels: int
    neighborhood: str = "moore"

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        if len(self.dims) not in (2, 3):
            raise ConfigError(f"lattice must be 2D or 3D, got dims {self.dims}")
        if self.labels.shape != self.dims:
            raise ConfigError("labels shape does not match dims")

    @property
    def size(self):
        return int(np.prod(self.dims))

    def copy(self):
        return SpinLattice(self.dims, self.labels.copy(), self.num_labels,
                           self.neighborhood)


@dataclass
class McConfig:
    dims: tuple
    num_labels: int
    kT: float = 0.5
    coupling: float = 1.0
    sweeps_per_frame: int = 10
    num_frames: int = 25
    seed: int = 0
    neighborhood: str = "moore"

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        if self.sweeps_per_frame < 1:
            raise ConfigError("sweeps_per_frame must be >= 1")
        if self.num_frames < 2:
            raise ConfigError("num_frames must be >= 2")
        if self.kT < 0:
            raise ConfigError("kT must be non-negative")
        if self.coupling <= 0:
            raise ConfigError("coupling must be positive")


def init_lattice(dims, num_labels, seed, neighborhood="moore"):
    """Fine-grained random start: one independent uniform label per site."""
    dims = tuple(int(n) for n in dims)
    if num_labels < 2:
        raise ConfigError("need num_labels >= 2, otherwise no boundaries exist")
    if any(n < 4 for n in dims):
        raise ConfigError(f"every dim must be >= 4, got {dims}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed)])))
    labels = rng.integers(0, num_labels, size=dims, dtype=np.int32)
    return SpinLattice(dims, labels, num_labels, neighborhood)


def site_energy(lattice, site, coupling=1.0):
    """coupling x (number of neighbors carrying a different label)."""
    offs = neighbor_offsets(len(lattice.dims), lattice.neighborhood)
    mine = lattice.labels[tuple(site)]
    mismatches = 0
    for off in offs:
        nb = tuple((np.array(site) + off) % np.array(lattice.dims))
        if lattice.labels[nb] != mine:
            mismatches += 1
    return coupling * mismatches


def total_energy(lattice, coupling=1.0):
    """Pairwise Potts energy; each mismatched neighbor pair counted once."""
    offs = neighbor_offsets(len(lattice.dims), lattice.neighborhood)
    labels = lattice.labels
    mism = 0
    for off in offs:
        rolled = np.roll(labels, shift=tuple(-off), axis=tuple(range(len(lattice.dims))))
        mism += int(np.count_nonzero(labels != rolled))
    return coupling * mism / 2.0


def flip_delta_energy(lattice, site, new_label, coupling=1.0):
    """Exact total-energy change of relabeling one site, from the local
    neighborhood only (equals brute-force total_energy difference)."""
    offs = neighbor_offsets(len(lattice.dims), lattice.neighborhood)
    cur = lattice.labels[tuple(site)]
    delta = 0
    for off in offs:
        nb = lattice.labels[tuple((np.array(site) + off) % np.array(lattice.dims))]
        delta += int(nb != new_label) - int(nb != cur)
    return coupling * delta


@njit(cache=True)
def _sweep_kernel(labels, nbr, kT, coupling, state, attempts):
    # xorshift64* stream; two draws per attempt plus one for the accept test
    N = labels.shape[0]
    k = nbr.shape[1]
    accepted = 0
    s = state
    mult = np.uint64(2685821657736338717)
    for _ in range(attempts):
        s ^= s >> np.uint64(12)
        s ^= s << np.uint64(25)
        s ^= s >> np.uint64(27)
        site = np.int64((s * mult) % np.uint64(N))
        s ^= s >> np.uint64(12)
        s ^= s << np.uint64(25)
        s ^= s >> np.uint64(27)
        j = np.int64((s * mult) % np.uint64(k))
        prop = labels[nbr[site, j]]
        cur = labels[site]
        if prop == cur:
            continue
        d = 0
        for m in range(k):
            nl = labels[nbr[site, m]]
            if nl != prop:
                d += 1
            if nl != cur:
                d -= 1
        dE = coupling * d
        if dE <= 0.0:
            labels[site] = prop
            accepted += 1
        elif kT > 0.0:
            s ^= s >> np.uint64(12)
            s ^= s << np.uint64(25)
            s ^= s >> np.uint64(27)
            u = np.float64((s * mult) >> np.uint64(11)) * (1.0 / 9007199254740992.0)
            if u < np.exp(-dE / kT):
                labels[site] = prop
                accepted += 1
    return accepted, s


class SweepState:
    """Mutable RNG state threaded through successive sweeps of one trajectory."""

    def __init__(self, seed):
        self.state = kernel_seed(seed, "lattice_mc")
        self._table = None
        self._table_key = None

    def table_for(self, lattice):
        key = (lattice.dims, lattice.neighborhood)
        if self._table_key != key:
            offs = neighbor_offsets(len(lattice.dims), lattice.neighborhood)
            self._table = build_neighbor_table(lattice.dims, offs)
            self._table_key = key
        return self._table


def mc_sweep(lattice, kT, sweep_state, coupling=1.0):
    """One sweep = N attempted flips (N sites).  Mutates the lattice in
    place; returns the accepted-flip count."""
    if kT < 0:
        raise ConfigError("kT must be non-negative")
    nbr = sweep_state.table_for(lattice)
    flat = lattice.labels.reshape(-1)
    accepted, new_state = _sweep_kernel(
        flat, nbr, float(kT), float(coupling), np.uint64(sweep_state.state),
        np.int64(lattice.size))
    sweep_state.state = np.uint64(new_state)
    return accepted


def run_trajectory(config):
    """Simulate and snapshot: frame k is the state after k * sweeps_per_frame
    sweeps from the fine-grained random start."""
    lattice = init_lattice(config.dims, config.num_labels, config.seed,
                           config.neighborhood)
    state = SweepState(config.seed)
    frames = [lattice.labels.copy()]
    for _ in range(config.num_frames - 1):
        for _ in range(config.sweeps_per_frame):
            mc_sweep(lattice, config.kT, state, config.coupling)
        frames.append(lattice.labels.copy())
    return [SpinLattice(config.dims, f, config.num_labels, config.neighborhood)
            for f in frames]

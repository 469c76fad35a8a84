import numpy as np
import pytest

from grainflow.errors import ConfigError
from grainflow.lattice import (McConfig, SweepState, flip_delta_energy,
                               init_lattice, mc_sweep, run_trajectory,
                               site_energy, total_energy)
from grainflow.grainstats import label_grains


def test_init_rejects_single_label():
    with pytest.raises(ConfigError):
        init_lattice((8, 8), 1, seed=0)


def test_init_rejects_tiny_dims():
    with pytest.raises(ConfigError):
        init_lattice((3, 8), 16, seed=0)


def test_init_deterministic():
    a = init_lattice((64, 64), 64 * 64, seed=1)
    b = init_lattice((64, 64), 64 * 64, seed=1)
    assert np.array_equal(a.labels, b.labels)


def test_init_label_histogram_uniform():
    # binomial oracle: each of 4 labels has mean 64, sd sqrt(256*p*(1-p))
    lat = init_lattice((16, 16), 4, seed=7)
    counts = np.bincount(lat.labels.ravel(), minlength=4)
    sd = np.sqrt(256 * 0.25 * 0.75)
    assert np.all(np.abs(counts - 64) <= 3 * sd)


def test_site_energy_uniform_zero():
    lat = init_lattice((8, 8), 4, seed=0)
    lat.labels[:] = 2
    assert site_energy(lat, (3, 3)) == 0.0


@pytest.mark.parametrize("dims,expected", [((6, 6), 8), ((5, 5, 5), 26)])
def test_site_energy_single_dissenter(dims, expected):
    lat = init_lattice(dims, 4, seed=0)
    lat.labels[:] = 0
    center = tuple(n // 2 for n in dims)
    lat.labels[center] = 1
    # brute-force oracle: count differing neighbors directly
    assert site_energy(lat, center) == expected


def test_flip_delta_matches_total_energy_difference():
    lat = init_lattice((8, 8), 5, seed=11)
    rng = np.random.default_rng(0)
    for _ in range(25):
        site = tuple(rng.integers(8, size=2))
        new = int(rng.integers(5))
        local = flip_delta_energy(lat, site, new)
        before = total_energy(lat)
        old = lat.labels[site]
        lat.labels[site] = new
        after = total_energy(lat)
        lat.labels[site] = old
        assert local == pytest.approx(after - before)


def test_sweep_uniform_lattice_is_absorbing():
    lat = init_lattice((8, 8), 4, seed=0)
    lat.labels[:] = 3
    accepted = mc_sweep(lat, 1.0, SweepState(0))
    assert accepted == 0
    assert np.all(lat.labels == 3)


def test_sweep_energy_monotone_at_zero_temperature():
    lat = init_lattice((16, 16), 256, seed=5)
    state = SweepState(5)
    energies = [total_energy(lat)]
    for _ in range(10):
        mc_sweep(lat, 0.0, state)
        energies.append(total_energy(lat))
    assert all(b <= a for a, b in zip(energies, energies[1:]))


def test_single_dissenter_relaxes_at_zero_temperature():
    # dE = -8J for the dissenting site, so the flip is accepted when chosen
    lat = init_lattice((8, 8), 4, seed=0)
    lat.labels[:] = 0
    lat.labels[4, 4] = 1
    state = SweepState(1)
    for _ in range(10):
        mc_sweep(lat, 0.0, state)
        if np.all(lat.labels == 0):
            break
    assert np.all(lat.labels == 0)


def test_no_new_labels_ever_appear():
    lat = init_lattice((16, 16), 64, seed=2)
    initial = set(np.unique(lat.labels))
    state = SweepState(2)
    for _ in range(20):
        mc_sweep(lat, 0.5, state)
    assert set(np.unique(lat.labels)) <= initial


def test_trajectory_config_invariants():
    with pytest.raises(ConfigError):
        McConfig((8, 8), 4, sweeps_per_frame=0, num_frames=2)
    with pytest.raises(ConfigError):
        McConfig((8, 8), 4, num_frames=1)


def test_trajectory_deterministic():
    cfg = McConfig((16, 16), 256, kT=0.5, sweeps_per_frame=5, num_frames=4,
                   seed=9)
    a = run_trajectory(cfg)
    b = run_trajectory(cfg)
    for la, lb in zip(a, b):
        assert np.array_equal(la.labels, lb.labels)


def test_trajectory_seeds_diverge():
    base = dict(dims=(32, 32), num_labels=32 * 32, kT=0.5,
                sweeps_per_frame=10, num_frames=5)
    a = run_trajectory(McConfig(seed=1, **base))
    b = run_trajectory(McConfig(seed=2, **base))
    assert not np.array_equal(a[-1].labels, b[-1].labels)


def test_trajectory_coarsens():
    # 200 sweeps on 128^2: final grain count under 20% of frame-1 count
    cfg = McConfig((128, 128), 128 * 128, kT=0.5, sweeps_per_frame=20,
                   num_frames=11, seed=3)
    lats = run_trajectory(cfg)
    first = label_grains(lats[1].labels).count
    final = label_grains(lats[-1].labels).count
    assert final < 0.2 * first

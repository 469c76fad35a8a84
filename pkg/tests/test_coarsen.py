import numpy as np
import pytest

from grainflow.coarsen import (CoarsenConfig, block_average, extract_boundary,
                               gaussian_smooth, normalize, postprocess,
                               temporal_average)
from grainflow.errors import ConfigError, DataError
from grainflow.lattice import SpinLattice, init_lattice, McConfig, run_trajectory


def make_lattice(labels):
    labels = np.asarray(labels, dtype=np.int32)
    return SpinLattice(labels.shape, labels, int(labels.max()) + 1)


def test_boundary_uniform_is_interior():
    lat = make_lattice(np.zeros((8, 8), dtype=np.int32))
    lat.num_labels = 2
    assert np.all(extract_boundary(lat) == 1.0)


def test_boundary_two_half_planes():
    labels = np.zeros((8, 8), dtype=np.int32)
    labels[4:] = 1
    f = extract_boundary(make_lattice(labels))
    # periodic: boundaries at rows 3|4 and 7|0; moore reach marks both sides
    expected_zero_rows = {3, 4, 7, 0}
    for r in range(8):
        if r in expected_zero_rows:
            assert np.all(f[r] == 0.0)
        else:
            assert np.all(f[r] == 1.0)


def test_boundary_checkerboard_all_zero():
    labels = np.indices((8, 8)).sum(axis=0) % 2
    f = extract_boundary(make_lattice(labels.astype(np.int32)))
    assert np.all(f == 0.0)


def test_block_average_constant():
    f = np.full((8, 8), 0.7)
    assert np.allclose(block_average(f, 4), 0.7)


def test_block_average_corner_impulse():
    f = np.zeros((4, 4))
    f[0, 0] = 1.0
    out = block_average(f, 4)
    assert out.shape == (1, 1)
    assert out[0, 0] == pytest.approx(1 / 16)


def test_block_average_identity_and_divisibility():
    f = np.random.default_rng(0).random((6, 6))
    assert np.array_equal(block_average(f, 1), f)
    with pytest.raises(DataError):
        block_average(f, 4)


def test_gaussian_smooth_constant_preserved():
    f = np.full((16, 16), 0.3)
    assert np.allclose(gaussian_smooth(f, 1.0), 0.3)


def test_gaussian_smooth_impulse_is_kernel():
    f = np.zeros((17, 17))
    f[8, 8] = 1.0
    out = gaussian_smooth(f, 1.0)
    assert out[8, 8] == out.max()
    assert np.allclose(out, out[::-1, ::-1])  # symmetric about the impulse


def test_gaussian_smooth_conserves_mass():
    f = np.random.default_rng(1).random((32, 32))
    out = gaussian_smooth(f, 1.3)
    assert abs(out.sum() - f.sum()) <= 1e-9 * abs(f.sum())


def test_temporal_average_identity_and_constant():
    seq = np.random.default_rng(2).random((5, 4, 4))
    assert np.array_equal(temporal_average(seq, 1), seq)
    const = np.tile(seq[0], (5, 1, 1))
    assert np.allclose(temporal_average(const, 3), const)


def test_temporal_average_hand_value():
    seq = np.zeros((3, 1, 1))
    seq[1] = 1.0
    out = temporal_average(seq, 3)
    assert out[1, 0, 0] == pytest.approx(1 / 3)


def test_temporal_average_rejects_even_window():
    with pytest.raises(ConfigError):
        temporal_average(np.zeros((4, 2, 2)), 2)


def test_normalize():
    f = np.array([[2.0, 6.0]])
    assert np.array_equal(normalize(f), np.array([[0.0, 1.0]]))
    spanning = np.array([[0.0, 0.5, 1.0]])
    assert np.array_equal(normalize(spanning), spanning)
    assert np.all(normalize(np.full((3, 3), 4.2)) == 0.0)


def test_postprocess_shape_law():
    cfg = McConfig((64, 64), 64 * 64, kT=0.5, sweeps_per_frame=5,
                   num_frames=5, seed=0)
    lats = run_trajectory(cfg)
    out = postprocess(lats, CoarsenConfig(4, 1.0, 3))
    assert out.shape == (5, 16, 16, 1)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_postprocess_shape_law_3d():
    cfg = McConfig((8, 8, 8), 512, kT=0.5, sweeps_per_frame=2, num_frames=3,
                   seed=0)
    lats = run_trajectory(cfg)
    out = postprocess(lats, CoarsenConfig(2, 1.0, 3))
    assert out.shape == (3, 4, 4, 4, 1)


def test_postprocess_single_grain_degenerate():
    lat = init_lattice((16, 16), 4, seed=0)
    lat.labels[:] = 1
    out = postprocess([lat.copy() for _ in range(3)], CoarsenConfig(4, 1.0, 3))
    assert np.all(out == 0.0)


def test_stage_order_matters():
    # permuting smooth and block-average must change an impulse response
    f = np.zeros((16, 16))
    f[0, 0] = 1.0
    a = gaussian_smooth(block_average(f, 4), 1.0)
    b = block_average(gaussian_smooth(f, 1.0), 4)
    assert not np.allclose(a, b)


def test_boundary_cells_lower_than_interior():
    labels = np.zeros((32, 32), dtype=np.int32)
    labels[16:] = 1
    lat = make_lattice(labels)
    fields = postprocess([lat.copy() for _ in range(3)], CoarsenConfig(4, 1.0, 3))
    f = fields[1, ..., 0]
    boundary_rows = f[[3, 4], :].mean()
    interior_rows = f[[1, 6], :].mean()
    assert boundary_rows < interior_rows

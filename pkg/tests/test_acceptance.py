"""Acceptance gate: one test per release criterion, each printing a
PASS line with the measured figure so the run log doubles as a report.

The trained-surrogate criteria share a pair of models fitted once per
session on the desk-scale dataset fixture (12 coarsened 64^2 runs).
"""

import inspect
import itertools
import time

import numpy as np
import pytest

from grainflow.coarsen import CoarsenConfig, postprocess
from grainflow.gnn import gnn_forward, gnn_param_arrays, init_gnn_params
from grainflow.graph import build_grid_graph
from grainflow.grainstats import (grain_metrics, ks_statistic, label_grains,
                                  rmse)
from grainflow.invertible import (AeParams, decode, encode, refresh_inverses,
                                  space_to_depth)
from grainflow.lattice import (McConfig, SweepState, init_lattice, mc_sweep,
                               run_trajectory, total_energy)
from grainflow.rng import substream
from grainflow.rollout import rollout_gnn_only, rollout_latent, rollout_original
from grainflow.symmetry import (apply_symmetry, compose, enumerate_ops,
                                identity_op, inverse)
from grainflow.training import (TrainConfig, add_noise, evaluate,
                                multi_step_loss, train)


def report(criterion, detail):
    print(f"\nACCEPT PASS  {criterion}: {detail}")


def fit_surrogate(dataset, horizon, seed=7, epochs=40):
    rng = substream(seed, "accept", horizon)
    ae = AeParams.create(1, 1, 2, rng=rng)
    gnn = init_gnn_params(4, 16, 2, 2, rng)
    graph = build_grid_graph((8, 8))
    cfg = TrainConfig(horizon=horizon, epochs=epochs, batch_size=8, seed=seed)
    train(dataset, ae, gnn, graph, cfg)
    return ae, gnn, graph


@pytest.fixture(scope="module")
def trained_pair(desk_dataset):
    """Surrogates trained with 1-step and 3-step loss, same everything else."""
    return {p: fit_surrogate(desk_dataset, p) for p in (1, 3)}


# -- 1: lossless compression ------------------------------------------------

def test_criterion_01_bijectivity():
    t0 = time.time()
    rng = substream(1, "accept")
    worst = 0.0
    shapes = {2: (64, 64, 1), 3: (32, 32, 32, 1)}
    for ndim, shape in shapes.items():
        for stages in (1, 2, 3):
            ae = AeParams.create(stages, 1, ndim, rng=rng)
            for _ in range(100):
                x = rng.random(shape)
                worst = max(worst, np.abs(decode(encode(x, ae), ae) - x).max())
    assert worst <= 1e-5
    ae = AeParams.create(2, 1, 2, init="identity")
    x = rng.random((64, 64, 1))
    assert np.array_equal(decode(encode(x, ae), ae), x)
    elapsed = time.time() - t0
    assert elapsed < 10.0
    report("01 bijectivity",
           f"max round-trip error {worst:.2e} over 600 fields "
           f"(2D and 3D, ratios 2/4/8), identity mixing bit-exact, "
           f"{elapsed:.1f}s")


# -- 2: shape law -----------------------------------------------------------

def test_criterion_02_shape_law():
    x2 = substream(2, "accept").random((64, 64, 1))
    z2 = space_to_depth(space_to_depth(x2, 2), 2)
    assert z2.shape == (16, 16, 16)
    assert np.array_equal(np.sort(z2.ravel()), np.sort(x2.ravel()))
    x3 = substream(2, "accept3").random((32, 32, 32, 1))
    z3 = space_to_depth(x3, 2)
    assert z3.shape == (16, 16, 16, 8)
    assert np.array_equal(np.sort(z3.ravel()), np.sort(x3.ravel()))
    report("02 shape law",
           "(64,64,1)->(16,16,16) at n=4 and (32,32,32,1)->(16,16,16,8) "
           "at n=2, element multisets preserved")


# -- 3: rollout parity ------------------------------------------------------

def test_criterion_03_rollout_parity(desk_dataset, trained_pair):
    ae, gnn, graph = trained_pair[1]
    phi0 = desk_dataset[0, 0]
    ro = rollout_original(phi0, 25, ae, gnn, graph=graph)
    rl = rollout_latent(phi0, 25, ae, gnn, emit_every=1, graph=graph)
    disc = np.abs(ro.frames - rl.frames).max()
    assert disc <= 1e-4
    single = rollout_latent(phi0, 25, ae, gnn, emit_every=25, graph=graph)
    assert single.encode_calls == 1 and single.decode_calls == 1
    report("03 rollout parity",
           f"25-step original/latent discrepancy {disc:.2e} <= 1e-4 on the "
           f"trained model; deferred-decode rollout used 1 encode, 1 decode")


# -- 4: latent graph economy ------------------------------------------------

def test_criterion_04_graph_reduction_and_speed():
    rng = substream(4, "accept")
    phi0 = rng.random((64, 64, 1))
    ae = AeParams.create(2, 1, 2, rng=rng)
    gnn_latent = init_gnn_params(16, 32, 3, 2, rng)
    gnn_full = init_gnn_params(1, 32, 3, 2, rng)
    res_l = rollout_latent(phi0, 3, ae, gnn_latent, emit_every=3)
    res_f = rollout_gnn_only(phi0, 3, gnn_full)
    assert res_l.graph_nodes * 4**2 == res_f.graph_nodes == 4096
    assert res_l.graph_edges * 4**2 == res_f.graph_edges == 16384
    t_l, t_f = np.mean(res_l.step_seconds), np.mean(res_f.step_seconds)
    assert t_l < t_f
    report("04 graph economy",
           f"latent graph 256 nodes vs 4096 full (exact n^d=16 reduction); "
           f"{t_l * 1e3:.2f} ms/step latent vs {t_f * 1e3:.2f} ms/step full")


# -- 5: training gradients --------------------------------------------------

def test_criterion_05_loss_gradients():
    t0 = time.time()
    rng = substream(5, "accept")
    ae = AeParams.create(1, 1, 2, rng=rng)
    gnn = init_gnn_params(4, 8, 2, 2, rng)
    graph = build_grid_graph((4, 4))
    phi = rng.random((8, 8, 1))
    targets = [rng.random((8, 8, 1)) for _ in range(2)]
    _, g_ae, g_gnn = multi_step_loss(ae, gnn, graph, phi, targets)

    def f():
        refresh_inverses(ae)
        val, _, _ = multi_step_loss(ae, gnn, graph, phi, targets,
                                    with_grads=False)
        return val

    arrays = list(ae.matrices) + gnn_param_arrays(gnn)
    grads = list(g_ae) + [np.asarray(g) for g in g_gnn]
    fd_rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        k = int(fd_rng.integers(len(arrays)))
        a, g = arrays[k].reshape(-1), grads[k].reshape(-1)
        i = int(fd_rng.integers(a.size))
        h = 1e-6
        old = a[i]
        a[i] = old + h
        lp = f()
        a[i] = old - h
        lm = f()
        a[i] = old
        refresh_inverses(ae)
        fd = (lp - lm) / (2 * h)
        rel = abs(g[i] - fd) / max(abs(fd), 1e-8)
        worst = max(worst, rel)
    elapsed = time.time() - t0
    assert worst <= 1e-3
    assert elapsed < 60.0
    report("05 loss gradients",
           f"2-step loss: worst relative error {worst:.2e} over 100 "
           f"randomly chosen parameters, {elapsed:.1f}s")


# -- 6: coarsening physics --------------------------------------------------

def test_criterion_06_coarsening_physics(desk_mc_run):
    t0 = time.time()
    mc, lats = desk_mc_run
    sweeps = np.arange(len(lats)) * mc.sweeps_per_frame
    areas, counts = [], []
    for lat in lats:
        lab = label_grains(lat.labels)
        c, mean_size, _, _ = grain_metrics(lab, 2)
        counts.append(c)
        areas.append(mean_size)
    # parabolic growth law: mean grain area linear in time past the onset
    x, y = sweeps[5:], np.asarray(areas[5:])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    r2 = 1.0 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2)
    drop = counts[1] / counts[-1]
    assert r2 >= 0.9
    assert drop >= 5.0
    lat = init_lattice((32, 32), 1024, seed=6)
    st = SweepState(6)
    energies = [total_energy(lat)]
    for _ in range(10):
        mc_sweep(lat, 0.0, st)
        energies.append(total_energy(lat))
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    elapsed = time.time() - t0
    assert elapsed < 300.0
    report("06 coarsening physics",
           f"mean-area growth R^2 {r2:.3f} >= 0.9, grain count drop "
           f"{drop:.1f}x >= 5x, zero-temperature energy non-increasing, "
           f"{elapsed:.0f}s")


# -- 7: self-similar size distribution --------------------------------------

def test_criterion_07_self_similarity():
    pooled = {15: [], 24: []}
    for i in range(20):
        cfg = McConfig((64, 64), 64 * 64, kT=0.5, sweeps_per_frame=20,
                       num_frames=25, seed=700 + i)
        lats = run_trajectory(cfg)
        for t in pooled:
            lab = label_grains(lats[t].labels)
            _, _, _, norm = grain_metrics(lab, 2)
            pooled[t].append(norm)
    a = np.concatenate(pooled[15])
    b = np.concatenate(pooled[24])
    ks = ks_statistic(a, b)
    assert ks < 0.15
    report("07 self-similarity",
           f"KS distance {ks:.3f} < 0.15 between normalized-diameter "
           f"distributions at two late times ({a.size} and {b.size} grains "
           f"pooled over 20 runs)")


# -- 8: multi-step loss pays off --------------------------------------------

def test_criterion_08_multistep_beats_onestep(desk_dataset, trained_pair):
    errs = {}
    for p, (ae, gnn, graph) in trained_pair.items():
        vals = []
        for ti in range(desk_dataset.shape[0]):
            res = rollout_latent(desk_dataset[ti, 0], 20, ae, gnn,
                                 emit_every=20, graph=graph)
            vals.append(rmse(res.frames[-1:], desk_dataset[ti, 20:21])[0])
        errs[p] = float(np.mean(vals))
    assert errs[3] <= errs[1]
    report("08 multi-step loss",
           f"20-step rollout RMSE {errs[3]:.4f} (3-step loss) <= "
           f"{errs[1]:.4f} (1-step loss), identical budget otherwise")


# -- 9: symmetry group ------------------------------------------------------

def test_criterion_09_symmetry_groups():
    for ndim, size in ((2, 8), (3, 48)):
        ops = enumerate_ops(ndim)
        assert len(ops) == len(set(ops)) == size
        table = set(ops)
        for a, b in itertools.product(ops, ops):
            assert compose(a, b) in table
        x = substream(9, "accept", ndim).random((4,) * ndim + (2,))
        ident = identity_op(ndim)
        for op in ops:
            assert compose(inverse(op), op) == ident
            assert np.array_equal(
                apply_symmetry(apply_symmetry(x, op), inverse(op)), x)
    report("09 symmetry groups",
           "8 ops in 2D and 48 in 3D, closed under composition, "
           "every inverse undoes its op bit-exactly")


# -- 10: noise discipline ----------------------------------------------------

def test_criterion_10_noise_discipline():
    rng = np.random.default_rng(10)
    draws = add_noise(np.zeros(1_000_000), 1e-3, rng)
    std = draws.std()
    assert abs(std - 1e-3) <= 0.01e-3
    sig = inspect.signature(evaluate)
    assert "rng" not in sig.parameters and "seed" not in sig.parameters
    r = substream(10, "accept")
    ae = AeParams.create(1, 1, 2, rng=r)
    gnn = init_gnn_params(4, 8, 1, 2, r)
    graph = build_grid_graph((4, 4))
    data = r.random((2, 4, 8, 8, 1))
    a = evaluate(data, np.arange(2), ae, gnn, graph, 1)
    b = evaluate(data, np.arange(2), ae, gnn, graph, 1)
    assert a == b
    report("10 noise discipline",
           f"1e6-draw std {std:.6e} within 1% of 1e-3; validation path "
           f"takes no RNG and repeats bit-identically")


# -- 11: deep stacks ---------------------------------------------------------

def test_criterion_11_deep_stack_and_receptive_field():
    rng = substream(11, "accept")
    # 12 message-passing layers must train without numerical failure
    ae = AeParams.create(1, 1, 2, rng=rng)
    gnn = init_gnn_params(4, 8, 12, 2, rng)
    graph = build_grid_graph((4, 4))
    data = np.tanh(rng.random((2, 3, 8, 8, 1)))
    cfg = TrainConfig(horizon=1, epochs=1, batch_size=4, seed=11)
    history, _ = train(data, ae, gnn, graph, cfg)
    assert np.isfinite(history[0][1])
    # the impulse response must span exactly 12 graph hops, no more;
    # inflate the message-passing weights so the per-hop gain stays near
    # unity and the reach is measurable above float64 roundoff
    g32 = build_grid_graph((32, 32))
    deep = init_gnn_params(1, 6, 12, 2, rng)
    for mlps in deep.edge_mlps + deep.node_mlps:
        for W, _ in mlps:
            W *= 3.0
    z = np.zeros((32, 32, 1))
    base = gnn_forward(z, deep, g32)
    z2 = z.copy()
    z2[0, 0, 0] = 1.0
    diff = np.abs(gnn_forward(z2, deep, g32) - base)[..., 0]
    ii, jj = np.indices((32, 32))
    dist = np.minimum(ii, 32 - ii) + np.minimum(jj, 32 - jj)
    assert np.all(diff[dist > 12] == 0.0)
    assert np.any(diff[dist == 12] > 0.0)
    report("11 deep stacks",
           "12-layer network trains to a finite loss; impulse response "
           "reaches graph distance 12 exactly and is zero beyond it")

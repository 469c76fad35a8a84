"""Command-line front end.

Subcommands: generate, postprocess, train, infer, stats, bench, verify.
Configuration comes from defaults, an optional config file, and repeated
``--set key=value`` overrides, in that precedence order.  Exit codes:
0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .containers import (load_config, parse_dims, read_trajectory,
                         write_trajectory, save_checkpoint, load_checkpoint,
                         restore_params)
from .lattice import (McConfig, run_trajectory, init_lattice, SpinLattice,
                      total_energy, mc_sweep, SweepState)
from .coarsen import CoarsenConfig, postprocess
from .invertible import AeParams, encode, decode, space_to_depth, depth_to_space
from .graph import build_grid_graph
from .gnn import init_gnn_params, gnn_param_arrays
from .training import TrainConfig, train, AdamWState
from .rollout import (rollout_original, rollout_latent, rollout_gnn_only,
                      extrapolate)
from .grainstats import trajectory_statistics, ks_statistic, rmse
from .symmetry import enumerate_ops, inverse, apply_symmetry
from .rng import substream


def _mc_config(cfg, seed):
    dims = parse_dims(cfg["mc.dims"])
    q = cfg["mc.num_labels"] or int(np.prod(dims))
    return McConfig(dims, q, cfg["mc.kT"], cfg["mc.coupling"],
                    cfg["mc.sweeps_per_frame"], cfg["mc.num_frames"],
                    seed, cfg["mc.neighborhood"])


def _coarsen_config(cfg):
    return CoarsenConfig(cfg["coarsen.downsample"], cfg["coarsen.sigma"],
                         cfg["coarsen.temporal_window"])


def _train_config(cfg):
    return TrainConfig(
        horizon=cfg["train.horizon"],
        noise_amplitude=cfg["train.noise_amplitude"],
        learning_rate=cfg["train.learning_rate"],
        weight_decay=cfg["train.weight_decay"],
        epochs=cfg["train.epochs"], batch_size=cfg["train.batch_size"],
        plateau_patience=cfg["train.plateau_patience"],
        plateau_factor=cfg["train.plateau_factor"],
        augment=bool(cfg["train.augment"]),
        val_fraction=cfg["train.val_fraction"], seed=cfg["seed"])


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# -- generate ---------------------------------------------------------------

def cmd_generate(args):
    cfg = load_config(args.config, args.set)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    nb = cfg["generate.num_trajectories"]
    ccfg = _coarsen_config(cfg)
    names = []
    for i in range(nb):
        mc = _mc_config(cfg, cfg["seed"] + i)
        lats = run_trajectory(mc)
        raw = np.stack([l.labels for l in lats])[..., None]
        fields = postprocess(lats, ccfg)
        raw_name, field_name = f"raw_{i:04d}.ggt", f"field_{i:04d}.ggt"
        write_trajectory(outdir / raw_name, raw.astype(np.int32))
        write_trajectory(outdir / field_name, fields.astype(np.float32))
        names.append({"raw": raw_name, "field": field_name,
                      "seed": cfg["seed"] + i})
    manifest = {"config": cfg, "trajectories": names,
                "postprocess": {"downsample": ccfg.downsample,
                                "sigma": ccfg.gaussian_sigma,
                                "temporal_window": ccfg.temporal_window}}
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"wrote {nb} trajectories to {outdir}")
    return 0


def cmd_postprocess(args):
    cfg = load_config(args.config, args.set)
    ccfg = _coarsen_config(cfg)
    for path in args.inputs:
        raw = read_trajectory(path)[..., 0]
        q = int(raw.max()) + 1
        lats = [SpinLattice(raw.shape[1:], f.astype(np.int32), q,
                            cfg["mc.neighborhood"]) for f in raw]
        fields = postprocess(lats, ccfg)
        out = Path(path).with_suffix(".field.ggt")
        write_trajectory(out, fields.astype(np.float32))
        print(f"{path} -> {out}")
    return 0


# -- train ------------------------------------------------------------------

def _load_dataset(dataset_dir):
    paths = sorted(Path(dataset_dir).glob("field_*.ggt"))
    if not paths:
        raise DataError(f"no field_*.ggt files in {dataset_dir}")
    trajs = [read_trajectory(p) for p in paths]
    shapes = {t.shape for t in trajs}
    if len(shapes) > 1:
        raise DataError(f"inconsistent trajectory shapes: {sorted(shapes)}")
    return np.stack(trajs).astype(np.float64)


def cmd_train(args):
    cfg = load_config(args.config, args.set)
    dataset = _load_dataset(args.dataset)
    nb, nt = dataset.shape[:2]
    ndim = dataset.ndim - 3
    channels = dataset.shape[-1]
    tcfg = _train_config(cfg)
    if tcfg.horizon + 1 > nt:
        raise ConfigError(
            f"train.horizon={tcfg.horizon} needs {tcfg.horizon + 1} frames "
            f"but trajectories have {nt}")
    stages = cfg["ae.stages"]
    n = 2**stages
    dims = dataset.shape[2:-1]
    start_epoch, opt_state = 0, None
    if args.resume:
        arrays, header = load_checkpoint(args.resume)
        ae, gnn = restore_params(arrays, header)
        opt_state = _restore_opt_state(arrays, header, ae, gnn)
        start_epoch = header["meta"].get("next_epoch", 0)
    else:
        rng = substream(cfg["seed"], "init")
        ae = AeParams.create(stages, channels, ndim, rng=rng,
                             init=cfg["ae.init"])
        ae.cond_limit = cfg["ae.cond_limit"]
        gnn = init_gnn_params(channels * (2**ndim)**stages,
                              cfg["gnn.hidden"], cfg["gnn.layers"], ndim, rng,
                              cfg["gnn.activation"], cfg["gnn.aggregation"])
    graph = build_grid_graph(tuple(s // n for s in dims),
                             cfg["gnn.connectivity"])
    history, opt_state = train(dataset, ae, gnn, graph, tcfg,
                               start_epoch=start_epoch, opt_state=opt_state)
    meta = {"next_epoch": tcfg.epochs, "config": cfg,
            "opt": {"t": opt_state.t, "lr": opt_state.lr,
                    "best_val": opt_state.best_val,
                    "bad_epochs": opt_state.bad_epochs}}
    opt_arrays = {"m": opt_state.m, "v": opt_state.v}
    save_checkpoint(args.out, ae, gnn, meta=meta, opt_arrays=opt_arrays)
    loss_csv = args.loss_csv or str(Path(args.out).with_suffix(".loss.csv"))
    mode = "a" if args.resume and Path(loss_csv).exists() else "w"
    with open(loss_csv, mode, newline="") as fh:
        w = csv.writer(fh)
        if mode == "w":
            w.writerow(["epoch", "train_loss", "val_loss", "lr"])
        w.writerows(history)
    print(f"trained {len(history)} epochs; checkpoint {args.out}, "
          f"losses {loss_csv}")
    return 0


def _restore_opt_state(arrays, header, ae, gnn):
    n_params = len(ae.matrices) + len(gnn_param_arrays(gnn))
    m = [arrays[f"opt.m.{i}"] for i in range(n_params)]
    v = [arrays[f"opt.v.{i}"] for i in range(n_params)]
    meta = header["meta"].get("opt", {})
    state = AdamWState(m=m, v=v, t=meta.get("t", 0),
                       lr=meta.get("lr", 1e-3))
    state.best_val = meta.get("best_val", np.inf)
    state.bad_epochs = meta.get("bad_epochs", 0)
    return state


# -- infer ------------------------------------------------------------------

def cmd_infer(args):
    cfg = load_config(args.config, args.set)
    arrays, header = load_checkpoint(args.checkpoint)
    ae, gnn = restore_params(arrays, header)
    initial = read_trajectory(args.initial)
    phi0 = initial[args.frame].astype(np.float64)
    steps = args.steps or cfg["infer.steps"]
    emit = args.emit_every or cfg["infer.emit_every"]
    algorithm = args.algorithm or cfg["infer.algorithm"]
    connectivity = cfg["gnn.connectivity"]
    if args.verify_parity:
        ro = rollout_original(phi0, steps, ae, gnn, connectivity=connectivity)
        rl = rollout_latent(phi0, steps, ae, gnn, 1, connectivity=connectivity)
        disc = np.abs(ro.frames - rl.frames).max(axis=tuple(
            range(1, ro.frames.ndim)))
        print(f"parity max discrepancy over {steps} steps: {disc.max():.3e}")
        return 0
    if algorithm == "ae_original":
        res = rollout_original(phi0, steps, ae, gnn, connectivity=connectivity)
    elif algorithm == "ae_latent":
        res = extrapolate(phi0, steps, ae, gnn, emit, connectivity)
    elif algorithm == "gnn_only":
        res = rollout_gnn_only(phi0, steps, gnn, connectivity=connectivity)
    else:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    if res.diverged and args.strict:
        raise NumericalError("rollout diverged (|phi| exceeded threshold)")
    write_trajectory(args.out, res.frames.astype(np.float32))
    rows = []
    ref_rmse = [""] * len(res.step_indices)
    if args.reference:
        ref = read_trajectory(args.reference).astype(np.float64)
        usable = [i for i, s in enumerate(res.step_indices) if s < len(ref)]
        vals = rmse(res.frames[usable],
                    np.stack([ref[res.step_indices[i]] for i in usable]))
        for i, v in zip(usable, vals):
            ref_rmse[i] = f"{v:.6g}"
    secs = {s: t for s, t in zip(res.step_indices[1:], res.step_seconds)}
    for i, s in enumerate(res.step_indices):
        rows.append([s, f"{res.max_abs[i]:.6g}", ref_rmse[i],
                     f"{secs.get(s, '')}", res.graph_nodes, res.graph_edges])
    _write_csv(Path(args.out).with_suffix(".metrics.csv"),
               ["step", "max_abs", "rmse", "seconds", "nodes", "edges"], rows)
    print(f"{algorithm}: {steps} steps, encode_calls={res.encode_calls} "
          f"decode_calls={res.decode_calls} diverged={res.diverged}")
    return 0


# -- stats ------------------------------------------------------------------

def cmd_stats(args):
    cfg = load_config(args.config, args.set)
    threshold = cfg["stats.threshold"]
    min_size = cfg["stats.min_grain_size"]
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    sets = {}
    for name, paths in (("truth", args.truth), ("pred", args.pred)):
        if not paths:
            continue
        trajs = [read_trajectory(p).astype(np.float64) for p in paths]
        sets[name] = trajs
    if not sets:
        raise DataError("no trajectories given (use --truth/--pred)")
    reports = {}
    for name, trajs in sets.items():
        T = trajs[0].shape[0]
        frames = sorted({T // 2, T - 1})
        rep = trajectory_statistics(trajs, threshold, min_size,
                                    hist_frames=frames)
        reports[name] = rep
        rows = [[t, rep["count_mean"][t], rep["count_min"][t],
                 rep["count_max"][t], rep["size_mean"][t], rep["size_min"][t],
                 rep["size_max"][t]] for t in range(T)]
        _write_csv(outdir / f"{name}_frames.csv",
                   ["frame", "count_mean", "count_min", "count_max",
                    "size_mean", "size_min", "size_max"], rows)
        edges = rep["histogram_edges"]
        hrows = []
        for t, h in rep["histograms"].items():
            hrows += [[edges[i], edges[i + 1], h[i], f"{name}@frame{t}"]
                      for i in range(len(h))]
        _write_csv(outdir / f"{name}_histogram.csv",
                   ["bin_left", "bin_right", "density", "source"], hrows)
    if "truth" in reports and "pred" in reports:
        rows = []
        for t in reports["pred"]["pooled_diameters"]:
            if t in reports["truth"]["pooled_diameters"]:
                ks = ks_statistic(reports["pred"]["pooled_diameters"][t],
                                  reports["truth"]["pooled_diameters"][t])
                rows.append([t, ks])
        _write_csv(outdir / "ks.csv", ["frame", "ks_statistic"], rows)
    if args.plots:
        _emit_plots(reports, outdir)
    print(f"stats written to {outdir}")
    return 0


def _emit_plots(reports, outdir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    for name, rep in reports.items():
        edges = rep["histogram_edges"]
        centers = 0.5 * (edges[:-1] + edges[1:])
        for t, h in rep["histograms"].items():
            axes[0].plot(centers, h, label=f"{name}@{t}")
        T = len(rep["count_mean"])
        axes[1].plot(range(T), rep["count_mean"], label=name)
        axes[1].fill_between(range(T), rep["count_min"], rep["count_max"],
                             alpha=0.2)
        axes[2].plot(range(T), rep["size_mean"], label=name)
        axes[2].fill_between(range(T), rep["size_min"], rep["size_max"],
                             alpha=0.2)
    axes[0].set_xlabel("normalized diameter")
    axes[0].set_ylabel("density")
    axes[1].set_xlabel("frame")
    axes[1].set_ylabel("grain count")
    axes[2].set_xlabel("frame")
    axes[2].set_ylabel("mean grain size")
    for ax in axes:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(outdir / "statistics.png", dpi=120)
    plt.close(fig)


# -- bench ------------------------------------------------------------------

def _element_proxy(nodes, edges, hidden, channels):
    # live activations: node + edge features per MP round, plus the field
    return nodes * (hidden + channels) + edges * hidden


def cmd_bench(args):
    cfg = load_config(args.config, args.set)
    meshes = [int(s) for s in str(cfg["bench.meshes"]).split(",")]
    ratios = [int(s) for s in str(cfg["bench.ratios"]).split(",")]
    steps = cfg["bench.steps"]
    hidden, layers = cfg["gnn.hidden"], cfg["gnn.layers"]
    rng = substream(cfg["seed"], "bench")
    rows = []
    for mesh in meshes:
        dims = (mesh, mesh)
        phi0 = rng.random(dims + (1,))
        for ratio in ratios:
            if any(m % ratio for m in dims):
                continue
            stages = int(np.log2(ratio))
            if 2**stages != ratio:
                raise ConfigError(f"ratio {ratio} is not a power of two")
            if ratio == 1:
                gnn = init_gnn_params(1, hidden, layers, 2, rng,
                                      cfg["gnn.activation"])
                res = rollout_gnn_only(phi0, steps, gnn)
                algs = [("gnn_only", res)]
            else:
                ae = AeParams.create(stages, 1, 2, rng=rng)
                latent_c = 1 * 4**stages
                gnn = init_gnn_params(latent_c, hidden, layers, 2, rng,
                                      cfg["gnn.activation"])
                algs = [
                    ("ae_original",
                     rollout_original(phi0, steps, ae, gnn)),
                    ("ae_latent",
                     rollout_latent(phi0, steps, ae, gnn, emit_every=steps)),
                ]
            for name, res in algs:
                channels = 1 * ratio**2
                rows.append([mesh, name, ratio, res.graph_nodes,
                             res.graph_edges,
                             _element_proxy(res.graph_nodes, res.graph_edges,
                                            hidden, channels),
                             f"{np.mean(res.step_seconds):.6g}"])
    _write_csv(args.out, ["mesh", "algorithm", "ratio", "nodes", "edges",
                          "element_proxy", "sec_per_step"], rows)
    print(f"benchmark table written to {args.out}")
    return 0


# -- verify -----------------------------------------------------------------

def cmd_verify(args):
    cfg = load_config(args.config, args.set)
    rng = substream(cfg["seed"], "verify")
    failures = []

    def check(name, ok):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok:
            failures.append(name)

    x = rng.random((16, 16, 4))
    check("shuffle round trip bit-exact",
          np.array_equal(depth_to_space(space_to_depth(x, 2), 2), x))
    ae = AeParams.create(2, 1, 2, rng=rng)
    y = rng.random((32, 32, 1))
    check("bijectivity within 1e-5",
          np.abs(decode(encode(y, ae), ae) - y).max() <= 1e-5)
    check("symmetry group sizes 8 and 48",
          len(enumerate_ops(2)) == 8 and len(enumerate_ops(3)) == 48)
    ops = enumerate_ops(2)
    f = rng.random((4, 4, 1))
    check("ops invert bit-exactly",
          all(np.array_equal(apply_symmetry(apply_symmetry(f, op),
                                            inverse(op)), f) for op in ops))
    lat = init_lattice((16, 16), 256, cfg["seed"])
    st = SweepState(cfg["seed"])
    energies = [total_energy(lat)]
    for _ in range(5):
        mc_sweep(lat, 0.0, st)
        energies.append(total_energy(lat))
    check("energy non-increasing at kT=0",
          all(b <= a for a, b in zip(energies, energies[1:])))
    gnn = init_gnn_params(16, 8, 2, 2, rng)
    z0 = rng.random((16, 16, 1))
    ro = rollout_original(z0, 5, ae, gnn)
    rl = rollout_latent(z0, 5, ae, gnn, 1)
    check("rollout parity within 1e-4",
          np.abs(ro.frames - rl.frames).max() <= 1e-4)
    if failures:
        raise NumericalError(f"verification failed: {failures}")
    print("all checks passed")
    return 0


# -- entry point ------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="grainflow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="key=value config file")
        sp.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key")

    g = sub.add_parser("generate", help="simulate + postprocess a dataset")
    common(g)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    pp = sub.add_parser("postprocess", help="apply the coarsening operator")
    common(pp)
    pp.add_argument("inputs", nargs="+")
    pp.set_defaults(func=cmd_postprocess)

    t = sub.add_parser("train", help="train the surrogate")
    common(t)
    t.add_argument("--dataset", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--loss-csv", default=None)
    t.add_argument("--resume", default=None, help="checkpoint to resume from")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="autoregressive rollout")
    common(i)
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--initial", required=True, help="trajectory container")
    i.add_argument("--frame", type=int, default=0)
    i.add_argument("--steps", type=int, default=None)
    i.add_argument("--emit-every", type=int, default=None)
    i.add_argument("--algorithm", default=None,
                   choices=["ae_original", "ae_latent", "gnn_only"])
    i.add_argument("--reference", default=None)
    i.add_argument("--out", default="prediction.ggt")
    i.add_argument("--verify-parity", action="store_true")
    i.add_argument("--strict", action="store_true")
    i.set_defaults(func=cmd_infer)

    s = sub.add_parser("stats", help="grain statistics reports")
    common(s)
    s.add_argument("--truth", nargs="*", default=[])
    s.add_argument("--pred", nargs="*", default=[])
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--plots", action="store_true")
    s.set_defaults(func=cmd_stats)

    b = sub.add_parser("bench", help="scaling benchmark table")
    common(b)
    b.add_argument("--out", required=True, help="CSV path")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="run the quick invariant suite")
    common(v)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

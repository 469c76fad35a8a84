"""File formats and run configuration.

Trajectory container (magic "GGT1"): little-endian header
    magic[4] version:u16 dtype:u8 (0=float32, 1=int32) d:u8
    dims: d x u32  channels:u32  frames:u32
followed by the payload, frames in temporal order, row-major cells,
channels fastest.  Round trips are bit-exact.

Checkpoint (magic "GGC1"): u32 JSON-header length, UTF-8 JSON header
(architecture hyperparameters + array manifest + config snapshot), then
all arrays concatenated as little-endian float32.

Run configuration is a flat key-value table: defaults, optional config
file ("key = value" lines, '#' comments), then command-line overrides.
Unknown keys are errors.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .gnn import GnnParams, gnn_param_arrays
from .invertible import AeParams

MAGIC = b"GGT1"
CKPT_MAGIC = b"GGC1"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<i4")}


def write_trajectory(path, array):
    """Write (frames, *dims, channels) as float32 or int32 per array dtype."""
    arr = np.asarray(array)
    if arr.ndim < 3:
        raise DataError("expected (frames, *dims, channels) array")
    if np.issubdtype(arr.dtype, np.floating):
        code, arr = 0, arr.astype("<f4")
    elif np.issubdtype(arr.dtype, np.integer):
        code, arr = 1, arr.astype("<i4")
    else:
        raise DataError(f"unsupported dtype {arr.dtype}")
    frames, channels = arr.shape[0], arr.shape[-1]
    dims = arr.shape[1:-1]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HBB", VERSION, code, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        fh.write(struct.pack("<II", channels, frames))
        fh.write(arr.tobytes())


def read_trajectory(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such trajectory file: {path}")
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise DataError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, code, d = struct.unpack_from("<HBB", blob, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    if code not in _DTYPES:
        raise DataError(f"{path}: unknown dtype code {code}")
    off = 8
    dims = struct.unpack_from(f"<{d}I", blob, off)
    off += 4 * d
    channels, frames = struct.unpack_from("<II", blob, off)
    off += 8
    dtype = _DTYPES[code]
    expected = frames * int(np.prod(dims)) * channels * dtype.itemsize
    payload = blob[off:]
    if len(payload) != expected:
        raise DataError(
            f"{path}: payload length {len(payload)} != expected {expected}")
    arr = np.frombuffer(payload, dtype=dtype)
    return arr.reshape((frames,) + dims + (channels,)).copy()


# -- checkpoints ------------------------------------------------------------

def _named_arrays(ae_params, gnn_params, opt_arrays=None):
    named = [(f"ae.stage{i}", M) for i, M in enumerate(ae_params.matrices)]
    named += [(f"gnn.{i}", a) for i, a in enumerate(gnn_param_arrays(gnn_params))]
    for group, arrs in (opt_arrays or {}).items():
        named += [(f"opt.{group}.{i}", a) for i, a in enumerate(arrs)]
    return named


def save_checkpoint(path, ae_params, gnn_params, meta=None, opt_arrays=None):
    named = _named_arrays(ae_params, gnn_params, opt_arrays)
    header = {
        "ae": {"stages": ae_params.num_stages,
               "sides": [int(M.shape[0]) for M in ae_params.matrices],
               "cond_limit": ae_params.cond_limit},
        "gnn": {"layers": gnn_params.num_layers,
                "hidden": gnn_params.hidden,
                "activation": gnn_params.activation,
                "aggregation": gnn_params.aggregation},
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in named],
        "meta": meta or {},
    }
    blob = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, a in named:
            fh.write(np.asarray(a, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Returns (named array dict, header dict).  Arrays come back float64."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such checkpoint: {path}")
    blob = path.read_bytes()
    if blob[:4] != CKPT_MAGIC:
        raise DataError(f"{path}: bad checkpoint magic {blob[:4]!r}")
    (hlen,) = struct.unpack_from("<I", blob, 4)
    header = json.loads(blob[8:8 + hlen].decode())
    off = 8 + hlen
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        arrays[entry["name"]] = a.reshape(shape).astype(np.float64)
        off += count * 4
    if off != len(blob):
        raise DataError(f"{path}: trailing bytes in checkpoint payload")
    return arrays, header


def restore_params(arrays, header):
    """Rebuild AeParams and GnnParams from a loaded checkpoint."""
    ae_cfg, gnn_cfg = header["ae"], header["gnn"]
    mats = [arrays[f"ae.stage{i}"] for i in range(ae_cfg["stages"])]
    ae = AeParams(mats, cond_limit=ae_cfg.get("cond_limit", 1e6))
    flat = [arrays[k] for k in sorted(
        (k for k in arrays if k.startswith("gnn.")),
        key=lambda s: int(s.split(".")[1]))]
    L, H = gnn_cfg["layers"], gnn_cfg["hidden"]
    it = iter(flat)

    def take_mlp():
        return [[next(it), next(it)] for _ in range(3)]

    gnn = GnnParams(
        node_encoder=take_mlp(), edge_encoder=take_mlp(),
        edge_mlps=[take_mlp() for _ in range(L)],
        node_mlps=[take_mlp() for _ in range(L)],
        node_decoder=take_mlp(), hidden=H,
        activation=gnn_cfg["activation"], aggregation=gnn_cfg["aggregation"])
    return ae, gnn


# -- run configuration ------------------------------------------------------

DEFAULTS = {
    # lattice_mc
    "mc.dims": "64,64",
    "mc.num_labels": 0,          # 0 -> one grain per site
    "mc.kT": 0.5,
    "mc.coupling": 1.0,
    "mc.sweeps_per_frame": 10,
    "mc.num_frames": 25,
    "mc.neighborhood": "moore",
    # coarsen
    "coarsen.downsample": 4,
    "coarsen.sigma": 1.0,
    "coarsen.temporal_window": 3,
    # autoencoder
    "ae.stages": 2,              # linear ratio n = 2^stages
    "ae.init": "orthogonal",
    "ae.cond_limit": 1e6,
    # gnn
    "gnn.hidden": 32,
    "gnn.layers": 3,
    "gnn.activation": "silu",
    "gnn.aggregation": "sum",
    "gnn.connectivity": "von_neumann",
    # training
    "train.horizon": 1,
    "train.noise_amplitude": 1e-3,
    "train.learning_rate": 1e-3,
    "train.weight_decay": 1e-4,
    "train.epochs": 50,
    "train.batch_size": 8,
    "train.plateau_patience": 5,
    "train.plateau_factor": 0.5,
    "train.augment": 1,
    "train.val_fraction": 0.25,
    # generation / inference / stats / bench
    "generate.num_trajectories": 32,
    "infer.algorithm": "ae_latent",
    "infer.steps": 25,
    "infer.emit_every": 1,
    "stats.threshold": 0.5,
    "stats.min_grain_size": 2,
    "bench.meshes": "32,64",
    "bench.ratios": "1,2,4,8",
    "bench.steps": 3,
    # shared
    "seed": 0,
}


def parse_value(raw, like):
    if isinstance(like, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    return raw


def load_config(path=None, overrides=()):
    """Defaults + optional file + key=value overrides; unknown keys error."""
    cfg = dict(DEFAULTS)

    def assign(key, raw, where):
        if key not in cfg:
            raise ConfigError(f"unknown config key {key!r} ({where})")
        try:
            cfg[key] = parse_value(raw, DEFAULTS[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc

    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"no such config file: {p}")
        for ln, line in enumerate(p.read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{p}:{ln}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            assign(key, raw, f"{p}:{ln}")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        assign(key, raw, "command line")
    return cfg


def parse_dims(spec):
    try:
        dims = tuple(int(s) for s in str(spec).split(","))
    except ValueError as exc:
        raise ConfigError(f"bad dims spec {spec!r}") from exc
    if len(dims) not in (2, 3):
        raise ConfigError(f"dims must have 2 or 3 axes, got {dims}")
    return dims

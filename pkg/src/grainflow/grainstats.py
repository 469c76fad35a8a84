"""Grain statistics: periodic connected-component labeling, grain count /
size / equivalent-diameter metrics, ensemble time series, and RMSE.

Components use face adjacency (4/6 connectivity) with periodic wrap,
implemented as connected components of a sparse cell-adjacency graph so
the same code path handles thresholded continuous fields and integer spin
lattices.
"""

from dataclasses import dataclass
import warnings

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.stats import ks_2samp

from .errors import ConfigError, DataError

BACKGROUND = -1
HISTOGRAM_EDGES = np.arange(0.0, 3.0 + 1e-9, 0.15)


@dataclass
class GrainLabeling:
    labels: np.ndarray  # per-cell grain id, BACKGROUND for non-grain cells
    count: int
    sizes: np.ndarray   # cells per grain, indexed by grain id


def _face_pairs(dims):
    idx = np.arange(int(np.prod(dims))).reshape(dims)
    for ax in range(len(dims)):
        yield idx.ravel(), np.roll(idx, -1, axis=ax).ravel()


def label_grains(data, threshold=0.5, min_size=2):
    """Label connected grain regions with periodic wrap.

    Continuous fields (float, trailing channel axis allowed) are
    thresholded at ``threshold``; integer lattices connect equal-label
    cells.  Components below ``min_size`` cells become background.
    """
    arr = np.asarray(data)
    if np.issubdtype(arr.dtype, np.floating):
        if arr.ndim >= 3 and arr.shape[-1] == 1:
            arr = arr[..., 0]
        if not 0 < threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")
        mask = arr >= threshold
        connect = lambda a, b: mask.ravel()[a] & mask.ravel()[b]
    else:
        mask = np.ones(arr.shape, dtype=bool)
        connect = lambda a, b: arr.ravel()[a] == arr.ravel()[b]
    dims = arr.shape
    n = int(np.prod(dims))
    rows, cols = [], []
    for a, b in _face_pairs(dims):
        ok = connect(a, b)
        rows.append(a[ok])
        cols.append(b[ok])
    adj = sparse.coo_matrix(
        (np.ones(sum(len(r) for r in rows), dtype=np.int8),
         (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    _, comp = connected_components(adj, directed=False)
    comp = comp.reshape(dims)
    comp = np.where(mask, comp, BACKGROUND)

    ids, counts = np.unique(comp[comp != BACKGROUND], return_counts=True)
    keep = counts >= min_size
    remap = np.full(comp.max() + 2, BACKGROUND, dtype=np.int64)
    remap[ids[keep]] = np.arange(keep.sum())
    labels = np.where(comp == BACKGROUND, BACKGROUND, remap[comp])
    return GrainLabeling(labels, int(keep.sum()), counts[keep])


def grain_metrics(labeling, ndim):
    """(count, mean size, equivalent diameters, normalized diameters)."""
    if ndim not in (2, 3):
        raise ConfigError("ndim must be 2 or 3")
    if labeling.count == 0:
        return 0, np.nan, np.array([]), np.array([])
    sizes = labeling.sizes.astype(np.float64)
    if ndim == 2:
        diam = np.sqrt(4.0 * sizes / np.pi)
    else:
        diam = np.cbrt(6.0 * sizes / np.pi)
    return labeling.count, float(sizes.mean()), diam, diam / diam.mean()


def trajectory_statistics(trajectories, threshold=0.5, min_size=2,
                          hist_frames=None):
    """Per-frame ensemble statistics and a pooled diameter histogram.

    trajectories: list of (T, *dims[, c]) arrays, all the same length.
    Returns a dict with per-frame mean/min/max envelopes of grain count and
    mean grain size, plus a pooled normalized-diameter histogram over
    ``hist_frames`` (default: the final frame).
    """
    if not trajectories:
        raise DataError("empty trajectory set")
    T = trajectories[0].shape[0]
    if any(t.shape[0] != T for t in trajectories):
        raise DataError("trajectories differ in length")
    first = np.asarray(trajectories[0][0])
    ndim = first.ndim - 1 if (np.issubdtype(first.dtype, np.floating)
                              and first.shape[-1] == 1) else first.ndim
    counts = np.zeros((len(trajectories), T))
    mean_sizes = np.zeros((len(trajectories), T))
    if hist_frames is None:
        hist_frames = [T - 1]
    pooled = {t: [] for t in hist_frames}
    for i, traj in enumerate(trajectories):
        for t in range(T):
            lab = label_grains(traj[t], threshold, min_size)
            c, ms, _, nd = grain_metrics(lab, ndim)
            counts[i, t] = c
            mean_sizes[i, t] = ms
            if t in pooled:
                pooled[t].append(nd)
    pooled = {t: np.concatenate(v) if v else np.array([])
              for t, v in pooled.items()}
    hist = {t: np.histogram(v, bins=HISTOGRAM_EDGES, density=True)[0]
            for t, v in pooled.items()}
    with warnings.catch_warnings():
        # frames where no trajectory has any grain are reported as NaN
        warnings.simplefilter("ignore", category=RuntimeWarning)
        size_mean = np.nanmean(mean_sizes, axis=0)
        size_min = np.nanmin(mean_sizes, axis=0)
        size_max = np.nanmax(mean_sizes, axis=0)
    return {
        "count_mean": counts.mean(axis=0),
        "count_min": counts.min(axis=0),
        "count_max": counts.max(axis=0),
        "size_mean": size_mean,
        "size_min": size_min,
        "size_max": size_max,
        "pooled_diameters": pooled,
        "histograms": hist,
        "histogram_edges": HISTOGRAM_EDGES.copy(),
    }


def ks_statistic(samples_a, samples_b):
    """Kolmogorov-Smirnov distance between two empirical samples."""
    if len(samples_a) == 0 or len(samples_b) == 0:
        raise DataError("KS statistic needs non-empty samples")
    return float(ks_2samp(samples_a, samples_b).statistic)


def rmse(predicted, reference):
    """Per-frame root mean square error over all cells and channels."""
    pred = np.asarray(predicted, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if pred.shape != ref.shape:
        raise DataError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    diff = (pred - ref).reshape(pred.shape[0], -1)
    return np.sqrt(np.mean(diff**2, axis=1))

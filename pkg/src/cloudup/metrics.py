"""Evaluation metrics: CD, HD, JSD, P2F, NUC.

Each accelerated metric has a *_bruteforce oracle next to it built from
different primitives (scipy cdist / histogramdd, plain python FPS) so the
two can be compared in tests. All metrics expect clouds already
normalized into the unit sphere; evaluate() performs that normalization
with the transform shared from the ground truth.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import SparseCloud, ball_members, fps_indices, nearest_assignment, \
    normalize_unit_sphere
from .errors import ContractError, RangeError, ShapeError

NUC_DEFAULT_P = (0.004, 0.006, 0.008, 0.010, 0.012)
METRIC_NAMES = ("cd", "hd", "jsd", "p2f", "nuc")


def _check_cloud(pts, name):
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ShapeError(f"{name} must be (M, 3), got {pts.shape}")
    if pts.shape[0] < 1:
        raise RangeError(f"{name} is empty")
    return pts


def _directional_distances(a, b):
    idx = nearest_assignment(a, b)
    diff = a - b[idx]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def metric_cd(p, g):
    """Chamfer distance, each directional mean over its own cloud."""
    p = _check_cloud(p, "prediction")
    g = _check_cloud(g, "ground truth")
    return float(np.mean(_directional_distances(p, g))
                 + np.mean(_directional_distances(g, p)))


def metric_cd_bruteforce(p, g):
    d = cdist(np.asarray(p, dtype=np.float64), np.asarray(g, dtype=np.float64))
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


def metric_hd(p, g):
    """Symmetric Hausdorff distance (max of both directional maxima)."""
    p = _check_cloud(p, "prediction")
    g = _check_cloud(g, "ground truth")
    return float(max(np.max(_directional_distances(p, g)),
                     np.max(_directional_distances(g, p))))


def metric_hd_bruteforce(p, g):
    d = cdist(np.asarray(p, dtype=np.float64), np.asarray(g, dtype=np.float64))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def _voxel_distribution(pts, grid):
    idx = np.floor((pts + 1.0) / 2.0 * grid).astype(np.int64)
    idx = np.clip(idx, 0, grid - 1)
    flat = (idx[:, 0] * grid + idx[:, 1]) * grid + idx[:, 2]
    counts = np.bincount(flat, minlength=grid ** 3)
    return counts / counts.sum()


def _kl(p, q):
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def metric_jsd(p, g, grid=32):
    """Jensen-Shannon divergence between voxel occupancy distributions
    on [-1,1]^3, natural log. Bounded by ln 2."""
    p = _check_cloud(p, "prediction")
    g = _check_cloud(g, "ground truth")
    if grid < 1:
        raise RangeError("grid resolution must be >= 1")
    dp = _voxel_distribution(p, grid)
    dg = _voxel_distribution(g, grid)
    mid = 0.5 * (dp + dg)
    return 0.5 * _kl(dp, mid) + 0.5 * _kl(dg, mid)


def metric_jsd_bruteforce(p, g, grid=32):
    edges = [np.linspace(-1.0, 1.0, grid + 1)] * 3
    hp, _ = np.histogramdd(np.clip(np.asarray(p, dtype=np.float64), -1, 1), bins=edges)
    hg, _ = np.histogramdd(np.clip(np.asarray(g, dtype=np.float64), -1, 1), bins=edges)
    dp = (hp / hp.sum()).ravel()
    dg = (hg / hg.sum()).ravel()
    mid = 0.5 * (dp + dg)
    out = 0.0
    for dist in (dp, dg):
        mask = dist > 0
        out += 0.5 * float(np.sum(dist[mask] * np.log(dist[mask] / mid[mask])))
    return out


def metric_p2f(p, surface):
    """Exact unsigned distance of each point to an analytic surface;
    returns (mean, population std)."""
    p = _check_cloud(p, "prediction")
    if surface is None or not hasattr(surface, "distance"):
        raise ContractError("p2f requires a surface with exact distances")
    d = np.asarray([surface.distance(point) for point in p])
    return float(d.mean()), float(d.std())


def metric_nuc(p, disk_fraction, seeds=64):
    """Normalized uniformity coefficient at one disk-area fraction.

    FPS-selects `seeds` centers, counts members in balls of radius
    sqrt(disk_fraction) and returns the root mean squared deviation of
    the normalized counts q_k = n_k / (|P| * p) around their mean.
    """
    p_arr = _check_cloud(p, "cloud")
    if not 0.0 < disk_fraction < 1.0:
        raise RangeError(f"disk fraction {disk_fraction} outside (0, 1)")
    seeds = min(seeds, p_arr.shape[0])
    centers = p_arr[fps_indices(p_arr, seeds)]
    counts = np.array([m.shape[0] for m in
                       ball_members(p_arr, centers, np.sqrt(disk_fraction))])
    q = counts / (p_arr.shape[0] * disk_fraction)
    return float(np.sqrt(np.mean((q - q.mean()) ** 2)))


def _fps_bruteforce(pts, m):
    # true (not squared) distances, explicit max with index tie rule
    chosen = [0]
    best = np.linalg.norm(pts - pts[0], axis=1)
    while len(chosen) < m:
        nxt = max(range(len(pts)), key=lambda i: (best[i], -i))
        chosen.append(nxt)
        best = np.minimum(best, np.linalg.norm(pts - pts[nxt], axis=1))
    return chosen


def metric_nuc_bruteforce(p, disk_fraction, seeds=64):
    pts = np.asarray(p, dtype=np.float64)
    seeds = min(seeds, pts.shape[0])
    centers = pts[_fps_bruteforce(pts, seeds)]
    d = cdist(centers, pts)
    counts = (d <= np.sqrt(disk_fraction)).sum(axis=1)
    q = counts / (pts.shape[0] * disk_fraction)
    return float(np.sqrt(np.mean((q - q.mean()) ** 2)))


@dataclass
class MetricReport:
    """Computed metrics; fields left None were not requested."""

    cd: float = None
    hd: float = None
    jsd: float = None
    p2f_mean: float = None
    p2f_std: float = None
    nuc_by_p: dict = None

    def as_dict(self):
        out = {}
        for name in ("cd", "hd", "jsd", "p2f_mean", "p2f_std"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        if self.nuc_by_p is not None:
            for frac in sorted(self.nuc_by_p):
                out[f"nuc_{frac:g}"] = self.nuc_by_p[frac]
        return out

    def as_lines(self):
        return [f"{key}={value!r}" for key, value in self.as_dict().items()]


def evaluate(pred, gt, metrics=("cd", "hd", "jsd"), surface=None,
             grid=32, nuc_p=NUC_DEFAULT_P, nuc_seeds=64):
    """Compute the requested metrics for a prediction against ground
    truth. Both clouds are normalized by the ground truth's unit-sphere
    transform; p2f is measured against the surface in its original frame
    and rescaled into normalized units.
    """
    pred = _check_cloud(pred, "prediction")
    gt = _check_cloud(gt, "ground truth")
    unknown = set(metrics) - set(METRIC_NAMES)
    if unknown:
        raise ContractError(f"unknown metrics: {sorted(unknown)}")
    _, centroid, scale = normalize_unit_sphere(SparseCloud(gt))
    pred_n = (pred - centroid) / scale
    gt_n = (gt - centroid) / scale

    report = MetricReport()
    if "cd" in metrics:
        report.cd = metric_cd(pred_n, gt_n)
    if "hd" in metrics:
        report.hd = metric_hd(pred_n, gt_n)
    if "jsd" in metrics:
        report.jsd = metric_jsd(pred_n, gt_n, grid)
    if "p2f" in metrics:
        mean, std = metric_p2f(pred, surface)
        report.p2f_mean = mean / scale
        report.p2f_std = std / scale
    if "nuc" in metrics:
        report.nuc_by_p = {frac: metric_nuc(pred_n, frac, nuc_seeds)
                           for frac in nuc_p}
    return report

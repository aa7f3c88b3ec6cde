"""Point cloud containers and spatial queries.

Everything here is deterministic: farthest-point sampling and k-nearest
neighbors break distance ties by the smaller point index, and FPS seeds
default to index 0. All functions are pure; clouds are never mutated.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateCloudError, RangeError, ShapeError

NORMAL_UNIT_TOL = 1e-6


def _as_points(arr, name="points"):
    pts = np.asarray(arr, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ShapeError(f"{name} must have shape (M, 3), got {pts.shape}")
    if pts.shape[0] < 1:
        raise RangeError(f"{name} must contain at least one point")
    if not np.all(np.isfinite(pts)):
        raise ContractError(f"{name} contains non-finite coordinates")
    return pts


@dataclass(frozen=True)
class SparseCloud:
    """A point set of M points, optionally with unit normals per point."""

    points: np.ndarray
    normals: np.ndarray = None

    def __post_init__(self):
        pts = _as_points(self.points)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64)
            if nrm.shape != pts.shape:
                raise ShapeError(
                    f"normals shape {nrm.shape} does not match points {pts.shape}")
            lengths = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lengths - 1.0) > NORMAL_UNIT_TOL):
                raise ContractError("normals must be unit length within 1e-6")
            object.__setattr__(self, "normals", nrm)

    @property
    def m(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class DenseCloud:
    """Upsampled point set of M*R points.

    provenance, when present, maps each point to its (source index, replica)
    pair; merging patches discards provenance because FPS mixes sources.
    """

    points: np.ndarray
    provenance: np.ndarray = None

    def __post_init__(self):
        pts = _as_points(self.points)
        object.__setattr__(self, "points", pts)
        if self.provenance is not None:
            prov = np.asarray(self.provenance, dtype=np.int64)
            if prov.shape != (pts.shape[0], 2):
                raise ShapeError("provenance must have shape (len(points), 2)")
            object.__setattr__(self, "provenance", prov)


@dataclass(frozen=True)
class NeighborIndex:
    """Row i holds the K nearest neighbors of point i, nearest first,
    with point i itself in position 0."""

    indices: np.ndarray
    k: int


@dataclass(frozen=True)
class PatchSet:
    anchors: np.ndarray
    patches: list
    n: int


def fps_indices(points, m, seed_index=0):
    """Greedy farthest-point sampling on a raw (M, 3) array.

    Returns m indices; the first is seed_index, each following index
    maximizes the minimum distance to the already-selected set. Ties go to
    the smallest index.
    """
    pts = np.asarray(points, dtype=np.float64)
    total = pts.shape[0]
    if not 1 <= m <= total:
        raise RangeError(f"sample count {m} outside [1, {total}]")
    if not 0 <= seed_index < total:
        raise RangeError(f"seed index {seed_index} outside [0, {total})")
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = seed_index
    # squared distances preserve the max-min ordering
    min_d2 = np.sum((pts - pts[seed_index]) ** 2, axis=1)
    for i in range(1, m):
        nxt = int(np.argmax(min_d2))  # argmax takes the first max: smallest index
        chosen[i] = nxt
        d2 = np.sum((pts - pts[nxt]) ** 2, axis=1)
        np.minimum(min_d2, d2, out=min_d2)
    return chosen


def farthest_point_sample(cloud, m, seed_index=0):
    """FPS over a SparseCloud; see fps_indices for the selection rule."""
    return fps_indices(cloud.points, m, seed_index)


def knn_indices(points, k, queries=None, query_self=None):
    """K nearest reference points for each query, ties by smaller index.

    queries defaults to the points themselves; in that case row i starts
    with i (self-inclusion at distance zero). query_self optionally gives
    the reference index of each query to pin at position 0.
    """
    pts = np.asarray(points, dtype=np.float64)
    total = pts.shape[0]
    if not 1 <= k <= total:
        raise RangeError(f"neighbor count {k} outside [1, {total}]")
    if queries is None:
        queries = pts
        query_self = np.arange(total, dtype=np.int64)
    else:
        queries = np.asarray(queries, dtype=np.float64)
    nq = queries.shape[0]
    out = np.empty((nq, k), dtype=np.int64)
    chunk = max(1, int(2**22 // max(total, 1)))
    for start in range(0, nq, chunk):
        stop = min(nq, start + chunk)
        diff = queries[start:stop, None, :] - pts[None, :, :]
        d2 = np.einsum("qmc,qmc->qm", diff, diff)
        # stable sort on distance keeps equal-distance candidates ordered
        # by index, which is exactly the documented tie rule
        order = np.argsort(d2, axis=1, kind="stable")
        if query_self is None:
            out[start:stop] = order[:, :k]
        else:
            for row in range(start, stop):
                own = query_self[row]
                row_order = order[row - start]
                rest = row_order[row_order != own]
                out[row, 0] = own
                out[row, 1:] = rest[: k - 1]
    return out


def knn(cloud, k):
    """Self-inclusive K nearest neighbors for every point of the cloud."""
    if k > cloud.m:
        raise RangeError(f"K={k} exceeds cloud size M={cloud.m}")
    return NeighborIndex(indices=knn_indices(cloud.points, k), k=k)


def nearest_assignment(queries, refs, exclude_self=False):
    """Index of the nearest reference for each query, ties to the smaller
    index. exclude_self skips reference j for query j (same array).

    Small problems use a chunked exact distance matrix; large ones fall
    back to a KD-tree (equal minimum distance, index tie rule then not
    guaranteed).
    """
    q = np.asarray(queries, dtype=np.float64)
    r = np.asarray(refs, dtype=np.float64)
    nq, nr = q.shape[0], r.shape[0]
    if nr < 1 or (exclude_self and nr < 2):
        raise RangeError("not enough reference points")
    if nq * nr <= 2**22:
        out = np.empty(nq, dtype=np.int64)
        chunk = max(1, int(2**22 // nr))
        for start in range(0, nq, chunk):
            stop = min(nq, start + chunk)
            diff = q[start:stop, None, :] - r[None, :, :]
            d2 = np.einsum("qmc,qmc->qm", diff, diff)
            if exclude_self:
                d2[np.arange(start, stop) - start, np.arange(start, stop)] = np.inf
            out[start:stop] = np.argmin(d2, axis=1)  # first min: smallest index
        return out
    from scipy.spatial import cKDTree

    tree = cKDTree(r)
    k = 2 if exclude_self else 1
    _, idx = tree.query(q, k=k)
    if exclude_self:
        rows = np.arange(nq)
        return np.where(idx[:, 0] == rows, idx[:, 1], idx[:, 0]).astype(np.int64)
    return np.asarray(idx, dtype=np.int64).reshape(nq)


def ball_members(points, centers, radius):
    """Indices of points within radius (inclusive) of each center row."""
    pts = np.asarray(points, dtype=np.float64)
    ctr = np.asarray(centers, dtype=np.float64)
    d = np.linalg.norm(ctr[:, None, :] - pts[None, :, :], axis=2)
    return [np.flatnonzero(row <= radius) for row in d]


def normalize_unit_sphere(cloud):
    """Center on the centroid and scale so the farthest point has norm 1.

    Returns (normalized cloud, centroid, scale) so callers can invert the
    transform. Raises DegenerateCloudError when all points coincide.
    """
    pts = cloud.points
    centroid = pts.mean(axis=0)
    shifted = pts - centroid
    scale = float(np.max(np.linalg.norm(shifted, axis=1)))
    if scale == 0.0:
        raise DegenerateCloudError("cannot normalize: all points coincide")
    return SparseCloud(shifted / scale, cloud.normals), centroid, scale


def extract_patches(cloud, n, coverage=None):
    """Split a cloud into overlapping N-point patches around FPS anchors.

    coverage anchors are selected by FPS from index 0; every patch is the
    N nearest neighbors of its anchor (anchor first). Extra anchors are
    appended at uncovered points until the union of patches covers the
    whole cloud.
    """
    total = cloud.m
    if not 1 <= n <= total:
        raise RangeError(f"patch size {n} outside [1, {total}]")
    if coverage is None:
        coverage = math.ceil(2 * total / n)
    coverage = max(1, min(int(coverage), total))

    anchors = list(farthest_point_sample(cloud, coverage, seed_index=0))
    patches = []
    covered = np.zeros(total, dtype=bool)

    def add_patch(anchor):
        idx = knn_indices(
            cloud.points, n,
            queries=cloud.points[anchor: anchor + 1],
            query_self=np.array([anchor]),
        )[0]
        patches.append(idx)
        covered[idx] = True

    for a in anchors:
        add_patch(int(a))
    while not covered.all():
        hole = int(np.argmin(covered))  # first uncovered index
        anchors.append(hole)
        add_patch(hole)
    return PatchSet(anchors=np.asarray(anchors, dtype=np.int64),
                    patches=patches, n=n)


def merge_patches(patch_points, target_count):
    """Concatenate upsampled patches and FPS-downsample to target_count.

    patch_points is a sequence of (n_i, 3) arrays already mapped back to
    the common coordinate frame. Deterministic: FPS is seeded at index 0
    of the concatenation.
    """
    arrays = [_as_points(p, "patch") for p in patch_points]
    merged = np.concatenate(arrays, axis=0)
    if merged.shape[0] < target_count:
        raise RangeError(
            f"patches supply {merged.shape[0]} points, need {target_count}")
    sel = fps_indices(merged, target_count, seed_index=0)
    return DenseCloud(points=merged[sel])

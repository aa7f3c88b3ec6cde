"""Synthetic training data: sampled analytic surfaces plus augmentation.

A TrainingPair is patch-scale: a sparse N-point input and, per upsampling
factor R, an independently sampled N*R ground truth with exact normals
(dense sets are not nested). Directory layout:

    <root>/<surface_id>/<seed>/sparse.xyz      (3 columns)
    <root>/<surface_id>/<seed>/dense_R<k>.xyz  (6 columns, with normals)
"""

import os
import re
from dataclasses import dataclass

import numpy as np

from .core import SparseCloud
from .errors import ContractError, RangeError
from .surfaces import parse_surface
from .xyzio import read_xyz, write_xyz

_DENSE_RE = re.compile(r"^dense_R(\d+)\.xyz$")


@dataclass(frozen=True)
class TrainingPair:
    surface_id: str
    seed: int
    sparse: SparseCloud
    dense_by_factor: dict  # R -> SparseCloud with normals, N*R points

    def __post_init__(self):
        n = self.sparse.m
        for r, dense in self.dense_by_factor.items():
            if dense.m != n * r:
                raise ContractError(
                    f"dense set for R={r} has {dense.m} points, want {n * r}")
            if dense.normals is None:
                raise ContractError(f"dense set for R={r} lacks normals")


def make_pair(surface, n, factors, seed):
    """Sample one training pair. Each cloud gets its own deterministic
    seed stream derived from (seed, role, factor)."""
    spec = parse_surface(surface) if isinstance(surface, str) else surface
    sparse = spec.sample(n, np.random.SeedSequence((seed, 0)))
    dense = {}
    for r in sorted(set(int(f) for f in factors)):
        if r < 1:
            raise RangeError(f"factor {r} must be >= 1")
        dense[r] = spec.sample(n * r, np.random.SeedSequence((seed, 1, r)))
    return TrainingPair(surface_id=spec.spec_id(), seed=seed,
                        sparse=sparse, dense_by_factor=dense)


def random_rotation(rng):
    """Uniform SO(3) rotation from a normalized Gaussian quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def transform_pair(pair, rotation, scale, jitter=None):
    """Shared rotation+scale on sparse and dense (normals rotate); jitter,
    when given, perturbs the sparse points only."""
    rot_t = np.asarray(rotation, dtype=np.float64).T
    sparse_pts = scale * (pair.sparse.points @ rot_t)
    if jitter is not None:
        sparse_pts = sparse_pts + jitter
    sparse_nrm = None if pair.sparse.normals is None else pair.sparse.normals @ rot_t
    dense = {}
    for r, cloud in pair.dense_by_factor.items():
        dense[r] = SparseCloud(scale * (cloud.points @ rot_t),
                               cloud.normals @ rot_t)
    return TrainingPair(pair.surface_id, pair.seed,
                        SparseCloud(sparse_pts, sparse_nrm), dense)


def augmentation_params(seed):
    """Rotation, scale, and the positioned rng for jitter draws."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 2))))
    rotation = random_rotation(rng)
    scale = float(rng.uniform(0.8, 1.25))
    return rotation, scale, rng


def augment(pair, seed, sigma_jitter=0.005):
    """Random rotation (uniform SO(3)), isotropic scale in [0.8, 1.25],
    and Gaussian jitter (clipped at 3 sigma) on the sparse input."""
    rotation, scale, rng = augmentation_params(seed)
    jitter = None
    if sigma_jitter > 0:
        jitter = rng.normal(0.0, sigma_jitter, size=pair.sparse.points.shape)
        jitter = np.clip(jitter, -3 * sigma_jitter, 3 * sigma_jitter)
    return transform_pair(pair, rotation, scale, jitter)


def add_noise(points, level, seed=0):
    """Isotropic Gaussian noise, sigma = level (fraction of unit radius)."""
    if level < 0:
        raise RangeError(f"noise level {level} must be >= 0")
    pts = np.asarray(points, dtype=np.float64)
    if level == 0:
        return pts.copy()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 5))))
    return pts + rng.normal(0.0, level, size=pts.shape)


def biased_subsample(points, count, bias, seed=0):
    """Non-uniform subsample: selection density ~ exp(bias * u) with u the
    z-coordinate rescaled to [0, 1]. bias 0 is uniform."""
    pts = np.asarray(points, dtype=np.float64)
    if not 1 <= count <= pts.shape[0]:
        raise RangeError(f"subsample count {count} outside [1, {pts.shape[0]}]")
    z = pts[:, 2]
    span = z.max() - z.min()
    u = (z - z.min()) / span if span > 0 else np.zeros_like(z)
    w = np.exp(bias * u)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 6))))
    idx = rng.choice(pts.shape[0], size=count, replace=False, p=w / w.sum())
    return pts[np.sort(idx)]


def write_dataset(root, pairs):
    """Write pairs into the documented directory layout."""
    for pair in pairs:
        d = os.path.join(root, pair.surface_id, str(pair.seed))
        os.makedirs(d, exist_ok=True)
        write_xyz(os.path.join(d, "sparse.xyz"), pair.sparse.points)
        for r in sorted(pair.dense_by_factor):
            cloud = pair.dense_by_factor[r]
            write_xyz(os.path.join(d, f"dense_R{r}.xyz"),
                      cloud.points, cloud.normals)


def load_dataset(root):
    """Read every pair under root, sorted by (surface_id, seed)."""
    if not os.path.isdir(root):
        raise FileNotFoundError(f"dataset directory {root} does not exist")
    pairs = []
    for surface_id in sorted(os.listdir(root)):
        surf_dir = os.path.join(root, surface_id)
        if not os.path.isdir(surf_dir):
            continue
        for seed_name in sorted(os.listdir(surf_dir), key=int):
            pair_dir = os.path.join(surf_dir, seed_name)
            sparse_path = os.path.join(pair_dir, "sparse.xyz")
            if not os.path.isfile(sparse_path):
                raise FileNotFoundError(f"missing {sparse_path}")
            pts, _ = read_xyz(sparse_path)
            dense = {}
            for fname in sorted(os.listdir(pair_dir)):
                m = _DENSE_RE.match(fname)
                if not m:
                    continue
                dpts, dnrm = read_xyz(os.path.join(pair_dir, fname))
                if dnrm is None:
                    raise ContractError(
                        f"{fname} in {pair_dir} lacks normal columns")
                dense[int(m.group(1))] = SparseCloud(dpts, dnrm)
            if not dense:
                raise FileNotFoundError(f"no dense_R*.xyz under {pair_dir}")
            pairs.append(TrainingPair(surface_id, int(seed_name),
                                      SparseCloud(pts), dense))
    if not pairs:
        raise FileNotFoundError(f"no training pairs found under {root}")
    return pairs

"""Training losses: Chamfer terms, surface projection, uniformity.

All losses return scalar autodiff Tensors. Discrete choices (nearest
neighbor assignments, FPS seeds, ball memberships) are piecewise constant
in the parameters, so each loss freezes them into a plan object on first
evaluation; passing the plan back in keeps repeated evaluations smooth,
which finite-difference gradient checking requires.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .core import ball_members, fps_indices, nearest_assignment
from .errors import ConfigError, ContractError, RangeError, ShapeError


@dataclass(frozen=True)
class LossWeights:
    """Composite weights: total = alpha*L_refine + beta*L_coarse
    + gamma*L_pro + zeta*L_uni."""

    alpha: float = 100.0
    beta: float = 30.0
    gamma: float = 100.0
    zeta: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "zeta"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")


@dataclass(frozen=True)
class UniformLossConfig:
    """Uniformity loss parameters. p is the disk area fraction; ball
    radius is sqrt(p) on a unit-sphere-normalized cloud. seed_count None
    means |cloud|/p capped at 64 (and at the cloud size)."""

    p: float = 0.01
    seed_count: int = None

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ConfigError(f"disk fraction p={self.p} outside (0, 1)")
        if self.seed_count is not None and self.seed_count < 1:
            raise ConfigError("seed_count must be >= 1")

    def radius(self):
        return float(np.sqrt(self.p))

    def seeds_for(self, n_points):
        if self.seed_count is not None:
            return min(self.seed_count, n_points)
        return min(64, int(round(n_points / self.p)), n_points)


def _as_tensor(x):
    return x if isinstance(x, ad.Tensor) else ad.Tensor(x)


def _row_norms(diff):
    """Euclidean norm of each row of an (n, 3) Tensor."""
    return ad.sqrt(ad.reduce_sum(ad.mul(diff, diff), axis=1))


@dataclass
class ChamferPlan:
    idx_xy: np.ndarray  # nearest y for each x
    idx_yx: np.ndarray  # nearest x for each y


def chamfer(x, y, plan=None):
    """Mean bidirectional nearest-neighbor distance (l2, not squared),
    each directional sum normalized by its own set size.

    Returns (scalar Tensor, plan). x and y may be Tensors or arrays.
    """
    x = _as_tensor(x)
    y = _as_tensor(y)
    if x.data.ndim != 2 or y.data.ndim != 2 or x.data.shape[1] != y.data.shape[1]:
        raise ShapeError(f"chamfer on shapes {x.data.shape}, {y.data.shape}")
    if x.data.shape[0] < 1 or y.data.shape[0] < 1:
        raise RangeError("chamfer of an empty cloud")
    if plan is None:
        plan = ChamferPlan(
            idx_xy=nearest_assignment(x.data, y.data),
            idx_yx=nearest_assignment(y.data, x.data),
        )
    d_xy = ad.reduce_mean(_row_norms(ad.sub(x, ad.gather(y, plan.idx_xy))))
    d_yx = ad.reduce_mean(_row_norms(ad.sub(y, ad.gather(x, plan.idx_yx))))
    return ad.add(d_xy, d_yx), plan


def coarse_and_refine_losses(coarse, refined, gt, plans=None):
    """Chamfer of both network stages against the ground truth.

    Returns ((L_coarse, L_refine), plans)."""
    if plans is None:
        plans = [None, None]
    l_coarse, plans[0] = chamfer(coarse, gt, plans[0])
    l_refine, plans[1] = chamfer(refined, gt, plans[1])
    return (l_coarse, l_refine), plans


def projection_loss(refined, gt, gt_normals, idx=None):
    """Mean |n_l . (y_l - nearest refined point)| over ground-truth
    points y_l: how far the prediction sits off the local tangent plane.

    Returns (scalar Tensor, idx) with idx the frozen correspondence.
    """
    refined = _as_tensor(refined)
    gt = np.asarray(gt, dtype=np.float64)
    if gt_normals is None:
        raise ContractError("projection loss requires ground-truth normals")
    normals = np.asarray(gt_normals, dtype=np.float64)
    if normals.shape != gt.shape:
        raise ShapeError("normals misaligned with ground-truth points")
    if idx is None:
        idx = nearest_assignment(gt, refined.data)
    diff = ad.sub(ad.Tensor(gt), ad.gather(refined, idx))
    along = ad.reduce_sum(ad.mul(diff, ad.Tensor(normals)), axis=1)
    return ad.reduce_mean(ad.absolute(along)), idx


@dataclass
class UniformPlan:
    """Frozen geometry of the uniformity loss: which points fall in which
    seed ball and who everyone's in-ball nearest neighbor is."""

    pair_a: np.ndarray        # member point index
    pair_b: np.ndarray        # its nearest other member in the same ball
    dhat: np.ndarray          # target spacing d_hat per member
    segments: np.ndarray      # (live balls, members) 0/1 ball membership
    imbalance_live: np.ndarray  # U_imbalance per live (>= 2 member) ball
    constant_term: float      # sum of U_imbalance over degenerate balls


def _uniform_plan(points, cfg):
    n = points.shape[0]
    n_hat = n * cfg.p
    r_d = cfg.radius()
    seeds = fps_indices(points, cfg.seeds_for(n))
    balls = ball_members(points, points[seeds], r_d)

    pair_a, pair_b, dhat, seg_rows, imb_live = [], [], [], [], []
    constant = 0.0
    for members in balls:
        size = members.shape[0]
        imbalance = (size - n_hat) ** 2 / n_hat
        if size < 2:
            constant += imbalance * 1.0
            continue
        local = points[members]
        nn = nearest_assignment(local, local, exclude_self=True)
        d_hat = np.sqrt(2.0 * np.pi * r_d * r_d / (size * np.sqrt(3.0)))
        start = len(pair_a)
        pair_a.extend(members.tolist())
        pair_b.extend(members[nn].tolist())
        dhat.extend([d_hat] * size)
        seg_rows.append((start, start + size))
        imb_live.append(imbalance)

    total = len(pair_a)
    segments = np.zeros((len(seg_rows), total))
    for row, (start, stop) in enumerate(seg_rows):
        segments[row, start:stop] = 1.0
    return UniformPlan(
        pair_a=np.asarray(pair_a, dtype=np.int64),
        pair_b=np.asarray(pair_b, dtype=np.int64),
        dhat=np.asarray(dhat),
        segments=segments,
        imbalance_live=np.asarray(imb_live),
        constant_term=constant,
    )


def uniform_loss(refined, cfg=None, plan=None):
    """Sum over seed balls of U_imbalance * U_clutter.

    U_imbalance = (|S| - n_hat)^2 / n_hat with n_hat = |cloud| * p;
    U_clutter = sum over members of (d_k - d_hat)^2 / d_hat with d_k the
    in-ball nearest-neighbor distance and d_hat the hexagonal-packing
    spacing for |S| points in the ball. Balls with < 2 members use
    U_clutter = 1. Membership counts and neighbor choices are frozen in
    the plan; only the distances d_k carry gradient.

    Returns (scalar Tensor, plan).
    """
    refined = _as_tensor(refined)
    if refined.data.shape[0] < 1:
        raise RangeError("uniform loss of an empty cloud")
    if cfg is None:
        cfg = UniformLossConfig()
    if plan is None:
        plan = _uniform_plan(refined.data, cfg)

    total = ad.Tensor(plan.constant_term)
    if plan.pair_a.size:
        diff = ad.sub(ad.gather(refined, plan.pair_a),
                      ad.gather(refined, plan.pair_b))
        d = _row_norms(diff)                                   # (members,)
        dev = ad.sub(d, ad.Tensor(plan.dhat))
        e = ad.mul(ad.mul(dev, dev), ad.Tensor(1.0 / plan.dhat))
        clutter = ad.matmul(ad.Tensor(plan.segments),
                            ad.reshape(e, (plan.pair_a.size, 1)))
        weighted = ad.mul(ad.reshape(clutter, (plan.segments.shape[0],)),
                          ad.Tensor(plan.imbalance_live))
        total = ad.add(total, ad.reduce_sum(weighted))
    return total, plan


def total_loss(l_refine, l_coarse, l_pro, l_uni, weights=None):
    """Weighted sum of the four terms; disabled terms arrive as None and
    contribute nothing."""
    if weights is None:
        weights = LossWeights()
    zero = ad.Tensor(0.0)
    parts = [
        ad.scale(l_refine if l_refine is not None else zero, weights.alpha),
        ad.scale(l_coarse if l_coarse is not None else zero, weights.beta),
        ad.scale(l_pro if l_pro is not None else zero, weights.gamma),
        ad.scale(l_uni if l_uni is not None else zero, weights.zeta),
    ]
    out = parts[0]
    for term in parts[1:]:
        out = ad.add(out, term)
    return out

"""Random-factor training loop and shared per-patch loss assembly.

Each iteration draws one upsampling factor from the configured
distribution, accumulates gradients of the composite loss over a
mini-batch of patches at that factor, and applies one Adam step.
Everything is driven by a single seeded Generator, so a (seed, config,
data) triple fully determines the checkpoint and the loss log.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .core import normalize_unit_sphere
from .errors import ConfigError, ContractError
from .losses import LossWeights, UniformLossConfig, chamfer, projection_loss, \
    total_loss, uniform_loss
from .network import init_params, upsample_patch
from .synth import augment

LOG_HEADER = "iter,R,L_total,L_refine,L_coarse,L_pro,L_uni"


@dataclass(frozen=True)
class TrainConfig:
    factors: tuple = (4, 8, 12, 16)
    probabilities: tuple = (0.1, 0.2, 0.3, 0.4)
    epochs: int = 50
    iterations: int = None    # overrides epochs when set
    batch_size: int = 8
    lr: float = 0.001
    seed: int = 0
    weights: LossWeights = LossWeights()
    uniform: UniformLossConfig = UniformLossConfig()
    augment: bool = False
    sigma_jitter: float = 0.005
    no_refine: bool = False
    no_coarse_loss: bool = False
    no_pro_loss: bool = False
    no_uni_loss: bool = False
    log_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(int(f) for f in self.factors))
        object.__setattr__(self, "probabilities",
                           tuple(float(p) for p in self.probabilities))
        if len(self.factors) != len(self.probabilities) or not self.factors:
            raise ConfigError("factors and probabilities must align, non-empty")
        if any(f < 1 for f in self.factors):
            raise ConfigError("factors must be >= 1")
        if any(p < 0 for p in self.probabilities):
            raise ConfigError("probabilities must be non-negative")
        if abs(sum(self.probabilities) - 1.0) > 1e-9:
            raise ConfigError(
                f"probabilities sum to {sum(self.probabilities)!r}, not 1")
        if self.batch_size < 1 or self.epochs < 1 or self.lr <= 0:
            raise ConfigError("batch_size, epochs must be >= 1 and lr > 0")
        if self.iterations is not None and self.iterations < 1:
            raise ConfigError("iterations must be >= 1 when given")


def draw_factor(rng, factors, probabilities):
    """Inverse-CDF draw from a discrete factor distribution (exactly one
    uniform consumed per call)."""
    u = rng.random()
    acc = 0.0
    for f, p in zip(factors, probabilities):
        acc += p
        if u < acc:
            return f
    return factors[-1]  # u landed in the rounding tail


@dataclass
class LossPlans:
    """All frozen discrete choices of one patch-loss evaluation."""

    forward: object = None
    refine_cd: object = None
    coarse_cd: object = None
    pro_idx: object = None
    uni: object = None


def patch_loss(params, net_cfg, sparse_pts, gt_pts, gt_normals, r,
               weights=None, uni_cfg=None, no_refine=False,
               no_coarse_loss=False, no_pro_loss=False, no_uni_loss=False,
               plans=None):
    """Composite loss for one patch at factor r.

    Returns (total loss Tensor, term value dict, plans). Passing plans
    back in reuses every discrete choice, keeping the map from parameters
    to loss smooth across evaluations.
    """
    if plans is None:
        plans = LossPlans()
    if weights is None:
        weights = LossWeights()
    if uni_cfg is None:
        uni_cfg = UniformLossConfig()

    result = upsample_patch(params, net_cfg, sparse_pts, r,
                            plan=plans.forward, with_refine=not no_refine)
    plans.forward = result.plan
    gt = np.asarray(gt_pts, dtype=np.float64)

    l_refine, plans.refine_cd = chamfer(result.refined, gt, plans.refine_cd)
    l_coarse = None
    if not no_coarse_loss:
        l_coarse, plans.coarse_cd = chamfer(result.coarse, gt, plans.coarse_cd)
    l_pro = None
    if not no_pro_loss:
        l_pro, plans.pro_idx = projection_loss(
            result.refined, gt, gt_normals, plans.pro_idx)
    l_uni = None
    if not no_uni_loss:
        l_uni, plans.uni = uniform_loss(result.refined, uni_cfg, plans.uni)

    total = total_loss(l_refine, l_coarse, l_pro, l_uni, weights)
    terms = {
        "L_total": total.item(),
        "L_refine": l_refine.item(),
        "L_coarse": l_coarse.item() if l_coarse is not None else 0.0,
        "L_pro": l_pro.item() if l_pro is not None else 0.0,
        "L_uni": l_uni.item() if l_uni is not None else 0.0,
    }
    return total, terms, plans


def normalized_pair_views(pair):
    """Unit-sphere-normalize the sparse patch and carry the ground truth
    into the same frame. Returns (sparse_pts, {R: (gt_pts, gt_normals)})."""
    normed, centroid, scale = normalize_unit_sphere(pair.sparse)
    gt = {}
    for r, cloud in pair.dense_by_factor.items():
        gt[r] = ((cloud.points - centroid) / scale, cloud.normals)
    return normed.points, gt


def train(pairs, cfg, net_cfg, params=None, log_lines=None):
    """Run the training loop; mutates/returns the parameter dict and
    appends CSV rows (starting with a header) to log_lines if given."""
    for f in cfg.factors:
        if f > net_cfg.rmax:
            raise ConfigError(f"factor {f} exceeds rmax {net_cfg.rmax}")
        for pair in pairs:
            if f not in pair.dense_by_factor:
                raise ContractError(
                    f"pair {pair.surface_id}/{pair.seed} has no R={f} ground truth")

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.seed, 3))))
    if params is None:
        params = init_params(net_cfg, np.random.SeedSequence((cfg.seed, 4)))
    adam = ad.Adam(lr=cfg.lr)
    if cfg.iterations is not None:
        iterations = cfg.iterations
    else:
        iterations = cfg.epochs * max(1, math.ceil(len(pairs) / cfg.batch_size))
    if log_lines is not None:
        log_lines.append(LOG_HEADER)

    for it in range(iterations):
        r = draw_factor(rng, cfg.factors, cfg.probabilities)
        chosen = rng.integers(0, len(pairs), size=cfg.batch_size)
        grand = {name: np.zeros_like(t.data) for name, t in params.items()}
        terms_acc = dict.fromkeys(
            ("L_total", "L_refine", "L_coarse", "L_pro", "L_uni"), 0.0)
        for pair_idx in chosen:
            pair = pairs[int(pair_idx)]
            if cfg.augment:
                pair = augment(pair, int(rng.integers(2 ** 31)), cfg.sigma_jitter)
            sparse_pts, gt = normalized_pair_views(pair)
            gt_pts, gt_normals = gt[r]
            with ad.Tape() as tape:
                loss, terms, _ = patch_loss(
                    params, net_cfg, sparse_pts, gt_pts, gt_normals, r,
                    weights=cfg.weights, uni_cfg=cfg.uniform,
                    no_refine=cfg.no_refine, no_coarse_loss=cfg.no_coarse_loss,
                    no_pro_loss=cfg.no_pro_loss, no_uni_loss=cfg.no_uni_loss)
            grads = ad.backward(tape, loss, params)
            for name in grand:
                grand[name] += grads[name]
            for key in terms_acc:
                terms_acc[key] += terms[key]
        for name in grand:
            grand[name] /= cfg.batch_size
        adam.step(params, grand)
        if log_lines is not None and (it % cfg.log_every == 0
                                      or it == iterations - 1):
            avg = {k: v / cfg.batch_size for k, v in terms_acc.items()}
            log_lines.append(
                f"{it},{r},{avg['L_total']!r},{avg['L_refine']!r},"
                f"{avg['L_coarse']!r},{avg['L_pro']!r},{avg['L_uni']!r}")
    return params


def evaluate_cd(params, net_cfg, pairs, r, with_refine=True):
    """Mean Chamfer distance over pairs at factor r, computed in each
    pair's normalized frame. Pure evaluation, no parameter updates."""
    from .metrics import metric_cd

    total = 0.0
    for pair in pairs:
        sparse_pts, gt = normalized_pair_views(pair)
        gt_pts, _ = gt[r]
        result = upsample_patch(params, net_cfg, sparse_pts, r,
                                with_refine=with_refine)
        total += metric_cd(result.refined.data, gt_pts)
    return total / len(pairs)

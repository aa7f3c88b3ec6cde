"""The magnification-flexible upsampling network.

One trained model upsamples a patch by any integer factor R between 2 and
rmax. The pipeline:

  1. dynamic edge convolutions over a KNN graph (recomputed in feature
     space after the first layer), dense skip concat, linear projection
     to the embedding width
  2. a distance encoder turning each (point, neighbor) pair into a
     geometric feature, concatenated with the neighbor's embedding
  3. a weight head scoring every (point, neighbor, replica) triple; for
     factor R only the first R replica channels are used, softmaxed over
     the neighbor axis, so smaller factors read a prefix of the channels
  4. coarse points as convex combinations of the K interpolation
     neighbors under those weights
  5. a self-attention refinement over the upsampled set producing a
     residual offset per coarse point

Replica ordering is replica-major: output row r*N + i is replica r of
input point i, so the R'=k output is literally the first k*N rows of the
R=k' output for any k <= k' (given the same patch and parameters).
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .core import knn_indices
from .errors import ConfigError, RangeError, ShapeError

DIST_FEATURES = 10  # x_i (3) + x_k (3) + (x_i - x_k) (3) + distance (1)


@dataclass(frozen=True)
class NetConfig:
    """Hyperparameters; every field is stored in checkpoints."""

    embed_dim: int = 32
    edge_widths: tuple = (16, 16)
    graph_k: int = 8
    k: int = 16
    rmax: int = 8
    query_dim: int = 16
    value_dim: int = 16
    weight_hidden: tuple = (32, 32)
    offset_hidden: tuple = (16,)

    def __post_init__(self):
        object.__setattr__(self, "edge_widths", tuple(int(w) for w in self.edge_widths))
        object.__setattr__(self, "weight_hidden", tuple(int(w) for w in self.weight_hidden))
        object.__setattr__(self, "offset_hidden", tuple(int(w) for w in self.offset_hidden))
        for name in ("embed_dim", "graph_k", "k", "query_dim", "value_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.rmax < 2:
            raise ConfigError("rmax must be >= 2")
        if not self.edge_widths:
            raise ConfigError("need at least one edge convolution layer")
        for widths in (self.edge_widths, self.weight_hidden, self.offset_hidden):
            if any(w < 1 for w in widths):
                raise ConfigError("layer widths must be >= 1")

    def to_config_dict(self):
        out = {
            "embed_dim": self.embed_dim,
            "graph_k": self.graph_k,
            "k": self.k,
            "rmax": self.rmax,
            "query_dim": self.query_dim,
            "value_dim": self.value_dim,
        }
        for i, w in enumerate(self.edge_widths):
            out[f"edge_width.{i}"] = w
        for i, w in enumerate(self.weight_hidden):
            out[f"weight_hidden.{i}"] = w
        for i, w in enumerate(self.offset_hidden):
            out[f"offset_hidden.{i}"] = w
        return out

    @classmethod
    def from_config_dict(cls, cfg):
        def series(prefix):
            vals = {}
            for key, v in cfg.items():
                if key.startswith(prefix + "."):
                    vals[int(key.split(".")[1])] = int(v)
            return tuple(vals[i] for i in sorted(vals))

        try:
            return cls(
                embed_dim=int(cfg["embed_dim"]),
                edge_widths=series("edge_width"),
                graph_k=int(cfg["graph_k"]),
                k=int(cfg["k"]),
                rmax=int(cfg["rmax"]),
                query_dim=int(cfg["query_dim"]),
                value_dim=int(cfg["value_dim"]),
                weight_hidden=series("weight_hidden"),
                offset_hidden=series("offset_hidden"),
            )
        except KeyError as missing:
            raise ConfigError(f"checkpoint config missing key {missing}") from None


@dataclass
class ForwardPlan:
    """Discrete choices frozen on the first forward pass so repeated
    evaluations under tiny parameter perturbations stay smooth."""

    interp_knn: np.ndarray = None
    graphs: list = field(default_factory=list)


@dataclass
class UpsampleResult:
    refined: ad.Tensor     # (N*R, 3), final output
    coarse: ad.Tensor      # (N*R, 3), pre-refinement
    weights: list          # R tensors of shape (N, K), rows on the simplex
    context: ad.Tensor     # (N*R, 2*embed_dim) interpolated features
    provenance: np.ndarray  # (N*R, 2) of (source index, replica)
    plan: ForwardPlan


def _xavier(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _mlp_shapes(width_in, hidden, width_out):
    dims = [width_in, *hidden, width_out]
    return list(zip(dims[:-1], dims[1:]))


def init_params(cfg, seed, zero_heads=True):
    """Create the parameter dict, Xavier-uniform weights and zero biases.

    zero_heads zeroes the last weight-head and offset layers, so a fresh
    model interpolates with exactly uniform 1/K weights and adds no
    refinement offset. Pass False to exercise the whole network with
    random values (gradient checking).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    params = {}

    def linear(name, fan_in, fan_out, zero=False):
        if zero:
            w = np.zeros((fan_in, fan_out))
        else:
            w = _xavier(rng, fan_in, fan_out)
        params[f"{name}.weight"] = ad.Tensor(w)
        params[f"{name}.bias"] = ad.Tensor(np.zeros(fan_out))

    fan = 3
    for i, width in enumerate(cfg.edge_widths):
        linear(f"edgeconv.{i}", 2 * fan, width)
        fan = width
    linear("embed_out", sum(cfg.edge_widths), cfg.embed_dim)

    linear("distenc.0", DIST_FEATURES, cfg.embed_dim)
    linear("distenc.1", cfg.embed_dim, cfg.embed_dim)

    shapes = _mlp_shapes(2 * cfg.embed_dim, cfg.weight_hidden, cfg.rmax)
    for i, (fi, fo) in enumerate(shapes):
        linear(f"weighthead.{i}", fi, fo, zero=zero_heads and i == len(shapes) - 1)

    linear("attn.query", 2 * cfg.embed_dim, cfg.query_dim)
    linear("attn.value", 2 * cfg.embed_dim, cfg.value_dim)

    shapes = _mlp_shapes(cfg.value_dim, cfg.offset_hidden, 3)
    for i, (fi, fo) in enumerate(shapes):
        linear(f"offset.{i}", fi, fo, zero=zero_heads and i == len(shapes) - 1)
    return params


def _linear(params, name, x):
    return ad.add(ad.matmul(x, params[f"{name}.weight"]), params[f"{name}.bias"])


def _mlp(params, prefix, n_layers, x, final_relu=False):
    for i in range(n_layers):
        x = _linear(params, f"{prefix}.{i}", x)
        if i < n_layers - 1 or final_relu:
            x = ad.relu(x)
    return x


def embed_features(params, cfg, pts, plan):
    """Dynamic edge convolutions with dense skip; returns (N, embed_dim).

    pts is a Tensor of shape (N, 3). Graphs come from plan.graphs when
    present, otherwise they are built (layer 0 from coordinates, later
    layers from the previous feature space) and appended to the plan.
    """
    n = pts.data.shape[0]
    feats = pts
    skips = []
    for i in range(len(cfg.edge_widths)):
        if i < len(plan.graphs):
            graph = plan.graphs[i]
        else:
            graph = knn_indices(feats.data, cfg.graph_k)
            plan.graphs.append(graph)
        width_in = feats.data.shape[1]
        fj = ad.gather(feats, graph)                       # (N, k, F)
        fi = ad.broadcast_to(
            ad.reshape(feats, (n, 1, width_in)), (n, cfg.graph_k, width_in))
        edge = ad.concat([fi, ad.sub(fj, fi)], axis=2)     # (N, k, 2F)
        edge = ad.reshape(edge, (n * cfg.graph_k, 2 * width_in))
        edge = ad.relu(_linear(params, f"edgeconv.{i}", edge))
        edge = ad.reshape(edge, (n, cfg.graph_k, cfg.edge_widths[i]))
        feats = ad.reduce_max(edge, axis=1)                # (N, width)
        skips.append(feats)
    return _linear(params, "embed_out", ad.concat(skips, axis=1))


def distance_encode(params, cfg, pts, interp_knn):
    """Geometric feature per (point, interpolation neighbor) pair."""
    n = pts.data.shape[0]
    k = interp_knn.shape[1]
    xk = ad.gather(pts, interp_knn)                        # (N, K, 3)
    xi = ad.broadcast_to(ad.reshape(pts, (n, 1, 3)), (n, k, 3))
    diff = ad.sub(xi, xk)
    dist = ad.sqrt(ad.reduce_sum(ad.mul(diff, diff), axis=2, keepdims=True))
    feats = ad.concat([xi, xk, diff, dist], axis=2)        # (N, K, 10)
    feats = ad.reshape(feats, (n * k, DIST_FEATURES))
    feats = ad.relu(_linear(params, "distenc.0", feats))
    feats = ad.relu(_linear(params, "distenc.1", feats))
    return ad.reshape(feats, (n, k, cfg.embed_dim))


def predict_weights(params, cfg, context):
    """Raw (pre-softmax) weight channels, shape (N, K, rmax)."""
    n, k, width = context.data.shape
    flat = ad.reshape(context, (n * k, width))
    n_layers = len(cfg.weight_hidden) + 1
    raw = _mlp(params, "weighthead", n_layers, flat)
    return ad.reshape(raw, (n, k, cfg.rmax))


def select_and_normalize(raw, r, rmax):
    """First r replica channels, each softmaxed over the neighbor axis.

    Channel r' is processed by the same ops regardless of r, which makes
    the weight list for a smaller factor a bit-identical prefix of the
    list for a larger one.
    """
    if not 1 <= r <= rmax:
        raise RangeError(f"factor {r} outside [1, {rmax}]")
    if raw.data.shape[2] != rmax:
        raise ShapeError(
            f"raw weights have {raw.data.shape[2]} channels, expected {rmax}")
    n, k, _ = raw.data.shape
    weights = []
    for replica in range(r):
        channel = ad.reshape(ad.gather(raw, [replica], axis=2), (n, k))
        weights.append(ad.softmax(channel, axis=1))
    return weights


def interpolate_coarse(pts, interp_knn, weights):
    """Convex combinations of each point's K neighbors, one group of N
    points per replica, concatenated replica-major."""
    n, k = interp_knn.shape
    nbr = ad.gather(pts, interp_knn)                       # (N, K, 3)
    groups = []
    for w in weights:
        w3 = ad.reshape(w, (n, k, 1))
        groups.append(ad.reduce_sum(ad.mul(w3, nbr), axis=1))
    return ad.concat(groups, axis=0)                       # (N*R, 3)


def refine(params, cfg, context_flat, coarse):
    """Self-attention over the upsampled set; returns coarse + offset."""
    q = _linear(params, "attn.query", context_flat)
    v = _linear(params, "attn.value", context_flat)
    scores = ad.scale(ad.matmul(q, ad.transpose(q)), 1.0 / np.sqrt(cfg.query_dim))
    mixed = ad.matmul(ad.softmax(scores, axis=1), v)
    n_layers = len(cfg.offset_hidden) + 1
    offset = _mlp(params, "offset", n_layers, mixed)
    return ad.add(coarse, offset)


def upsample_patch(params, cfg, points, r, plan=None, with_refine=True):
    """Upsample one patch of N points by integer factor r.

    points is a raw (N, 3) array in the patch's normalized frame. Returns
    an UpsampleResult whose .plan can be passed back in to freeze all
    discrete neighbor choices across repeated evaluations.
    """
    pts_arr = np.asarray(points, dtype=np.float64)
    if pts_arr.ndim != 2 or pts_arr.shape[1] != 3:
        raise ShapeError(f"patch must be (N, 3), got {pts_arr.shape}")
    n = pts_arr.shape[0]
    if cfg.k > n:
        raise RangeError(f"interpolation K={cfg.k} exceeds patch size {n}")
    if plan is None:
        plan = ForwardPlan()
    if plan.interp_knn is None:
        plan.interp_knn = knn_indices(pts_arr, cfg.k)

    pts = ad.Tensor(pts_arr)
    emb = embed_features(params, cfg, pts, plan)
    dist_feat = distance_encode(params, cfg, pts, plan.interp_knn)
    nbr_emb = ad.gather(emb, plan.interp_knn)              # (N, K, U)
    context = ad.concat([nbr_emb, dist_feat], axis=2)      # (N, K, 2U)

    raw = predict_weights(params, cfg, context)
    weights = select_and_normalize(raw, r, cfg.rmax)
    coarse = interpolate_coarse(pts, plan.interp_knn, weights)

    k = cfg.k
    ctx_groups = []
    for w in weights:
        w3 = ad.reshape(w, (n, k, 1))
        ctx_groups.append(ad.reduce_sum(ad.mul(w3, context), axis=1))
    context_flat = ad.concat(ctx_groups, axis=0)           # (N*R, 2U)

    if with_refine:
        refined = refine(params, cfg, context_flat, coarse)
    else:
        refined = coarse

    provenance = np.stack([
        np.tile(np.arange(n, dtype=np.int64), r),
        np.repeat(np.arange(r, dtype=np.int64), n),
    ], axis=1)
    return UpsampleResult(refined=refined, coarse=coarse, weights=weights,
                          context=context_flat, provenance=provenance, plan=plan)

"""Command-line interface.

Commands: synth, train, upsample, eval, gradcheck. Configuration comes
from an optional flat key=value file plus flag overrides; unknown keys
are rejected. Exit codes: 0 success, 2 usage/config error, 3 data error
(unreadable or malformed inputs), 4 check failure.
"""

import argparse
import json
import sys

import numpy as np

from . import autodiff as ad
from .checkpoint import load_checkpoint, save_checkpoint
from .core import SparseCloud, extract_patches, merge_patches, \
    normalize_unit_sphere
from .errors import CloudUpError, ConfigError, ContractError, RangeError, \
    XYZParseError
from .metrics import METRIC_NAMES, NUC_DEFAULT_P, evaluate
from .network import NetConfig, init_params, upsample_patch
from .losses import LossWeights, UniformLossConfig
from .surfaces import parse_surface, sample_surface
from .synth import add_noise, load_dataset, make_pair, write_dataset
from .train import TrainConfig, patch_loss, train
from .xyzio import read_xyz, write_xyz

_INT_KEYS = {"epochs", "iterations", "batch_size", "seed", "log_every", "n",
             "embed_dim", "graph_k", "k", "rmax", "query_dim", "value_dim",
             "uniform_seeds"}
_FLOAT_KEYS = {"lr", "sigma_jitter", "alpha", "beta", "gamma", "zeta",
               "uniform_p"}
_BOOL_KEYS = {"augment", "no_refine", "no_coarse_loss", "no_pro_loss",
              "no_uni_loss"}
_INT_LIST_KEYS = {"factors", "edge_widths", "weight_hidden", "offset_hidden"}
_FLOAT_LIST_KEYS = {"probabilities"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _INT_LIST_KEYS | _FLOAT_LIST_KEYS


def read_config_file(path):
    """Parse a flat key=value config file ('#' comments, blank lines ok)."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _ALL_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = _parse_value(key, value, f"{path}:{lineno}")
    return out


def _parse_value(key, value, where):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _BOOL_KEYS:
            lowered = value.lower()
            if lowered in ("1", "true", "yes"):
                return True
            if lowered in ("0", "false", "no"):
                return False
            raise ValueError(value)
        if key in _INT_LIST_KEYS:
            return tuple(int(v) for v in value.split(",") if v)
        if key in _FLOAT_LIST_KEYS:
            return tuple(float(v) for v in value.split(",") if v)
    except ValueError:
        raise ConfigError(f"{where}: bad value {value!r} for {key}") from None
    raise ConfigError(f"{where}: unknown key {key!r}")


def _parse_seeds(text):
    """Seed list grammar: 'a:b' is range(a, b); otherwise comma ints."""
    text = text.strip()
    if ":" in text:
        lo, _, hi = text.partition(":")
        try:
            lo, hi = int(lo), int(hi)
        except ValueError:
            raise ConfigError(f"bad seed range {text!r}") from None
        if hi <= lo:
            raise ConfigError(f"empty seed range {text!r}")
        return list(range(lo, hi))
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None


def _surface_from_flag(surface_id):
    try:
        return parse_surface(surface_id)
    except ContractError as exc:
        raise ConfigError(str(exc)) from None


def cmd_synth(args):
    factors = _parse_value("factors", args.factors, "--factors")
    seeds = _parse_seeds(args.seeds)
    if not seeds:
        raise ConfigError("no seeds given")
    pairs = []
    for surface_id in [s for s in args.surfaces.split(",") if s]:
        surface = _surface_from_flag(surface_id)
        for seed in seeds:
            pairs.append(make_pair(surface, args.patch_size, factors, seed))
    write_dataset(args.out, pairs)
    print(f"wrote {len(pairs)} pairs under {args.out} "
          f"(N={args.patch_size}, factors={sorted(set(factors))})")
    return 0


def _net_config_from(cfg):
    kw = {}
    for key in ("embed_dim", "edge_widths", "graph_k", "k", "rmax",
                "query_dim", "value_dim", "weight_hidden", "offset_hidden"):
        if key in cfg:
            kw[key] = cfg[key]
    return NetConfig(**kw)


def cmd_train(args):
    cfg = read_config_file(args.config) if args.config else {}
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.rmax is not None:
        cfg["rmax"] = args.rmax
    if args.patch_size is not None:
        cfg["n"] = args.patch_size
    for flag in ("no_refine", "no_coarse_loss", "no_pro_loss", "no_uni_loss"):
        if getattr(args, flag):
            cfg[flag] = True

    net_cfg = _net_config_from(cfg)
    weights = LossWeights(
        alpha=cfg.get("alpha", 100.0), beta=cfg.get("beta", 30.0),
        gamma=cfg.get("gamma", 100.0), zeta=cfg.get("zeta", 1.0))
    uniform = UniformLossConfig(
        p=cfg.get("uniform_p", 0.01), seed_count=cfg.get("uniform_seeds"))
    train_cfg = TrainConfig(
        factors=cfg.get("factors", (4, 8, 12, 16)),
        probabilities=cfg.get("probabilities", (0.1, 0.2, 0.3, 0.4)),
        epochs=cfg.get("epochs", 50),
        iterations=cfg.get("iterations"),
        batch_size=cfg.get("batch_size", 8),
        lr=cfg.get("lr", 0.001),
        seed=cfg.get("seed", 0),
        weights=weights, uniform=uniform,
        augment=cfg.get("augment", False),
        sigma_jitter=cfg.get("sigma_jitter", 0.005),
        no_refine=cfg.get("no_refine", False),
        no_coarse_loss=cfg.get("no_coarse_loss", False),
        no_pro_loss=cfg.get("no_pro_loss", False),
        no_uni_loss=cfg.get("no_uni_loss", False),
        log_every=cfg.get("log_every", 1))

    pairs = load_dataset(args.data)
    n = pairs[0].sparse.m
    if any(p.sparse.m != n for p in pairs):
        raise ConfigError("training pairs have inconsistent patch sizes")
    if "n" in cfg and cfg["n"] != n:
        raise ConfigError(f"dataset patch size {n} != configured n {cfg['n']}")
    if net_cfg.k > n:
        raise ConfigError(f"interpolation k={net_cfg.k} exceeds patch size {n}")

    log_lines = []
    params = train(pairs, train_cfg, net_cfg, log_lines=log_lines)

    meta = net_cfg.to_config_dict()
    meta["train_n"] = n
    save_checkpoint(args.out, params, meta)
    log_path = args.log or args.out + ".log.csv"
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(log_lines) + "\n")
    print(f"checkpoint {args.out} written ({log_lines[-1]})")
    return 0


def _load_model(path):
    arrays, meta = load_checkpoint(path)
    net_cfg = NetConfig.from_config_dict(meta)
    params = {name: ad.Tensor(arr) for name, arr in arrays.items()}
    return params, net_cfg, meta


def cmd_upsample(args):
    params, net_cfg, meta = _load_model(args.checkpoint)
    if args.factor > net_cfg.rmax:
        raise RangeError(
            f"factor {args.factor} exceeds the checkpoint's rmax={net_cfg.rmax}")
    if args.factor < 2:
        raise RangeError(f"factor {args.factor} must be >= 2")

    pts, _ = read_xyz(args.input)
    cloud = SparseCloud(pts)
    normalized, centroid, scale = normalize_unit_sphere(cloud)
    work = normalized.points
    if args.noise:
        work = add_noise(work, args.noise, seed=args.seed or 0)

    patch_size = args.patch_size or int(meta.get("train_n", 64))
    patch_size = min(patch_size, cloud.m)
    if net_cfg.k > patch_size:
        raise RangeError(
            f"patch size {patch_size} smaller than interpolation k={net_cfg.k}")

    work_cloud = SparseCloud(work)
    patch_set = extract_patches(work_cloud, patch_size, args.coverage)
    outputs = []
    for idx in patch_set.patches:
        patch_cloud = SparseCloud(work[idx])
        local, p_centroid, p_scale = normalize_unit_sphere(patch_cloud)
        result = upsample_patch(params, net_cfg, local.points, args.factor,
                                with_refine=not args.no_refine)
        outputs.append(result.refined.data * p_scale + p_centroid)

    merged = merge_patches(outputs, cloud.m * args.factor)
    final = merged.points * scale + centroid
    write_xyz(args.out, final)
    print(f"wrote {final.shape[0]} points to {args.out} "
          f"(R={args.factor}, {len(patch_set.patches)} patches)")
    return 0


def cmd_eval(args):
    metrics = tuple(m for m in args.metrics.split(",") if m)
    unknown = set(metrics) - set(METRIC_NAMES)
    if unknown:
        raise ConfigError(f"unknown metrics: {sorted(unknown)} "
                          f"(have {', '.join(METRIC_NAMES)})")
    surface = None
    if "p2f" in metrics:
        if not args.surface:
            raise ConfigError("p2f requires --surface")
        surface = _surface_from_flag(args.surface)
    nuc_p = NUC_DEFAULT_P
    if args.nuc_p:
        nuc_p = tuple(float(v) for v in args.nuc_p.split(",") if v)

    pred, _ = read_xyz(args.pred)
    gt, _ = read_xyz(args.gt)
    report = evaluate(pred, gt, metrics=metrics, surface=surface,
                      grid=args.grid, nuc_p=nuc_p)
    lines = report.as_lines()
    for line in lines:
        print(line)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        with open(args.out + ".json", "w", encoding="utf-8") as fh:
            json.dump(report.as_dict(), fh, sort_keys=True, indent=0)
            fh.write("\n")
    return 0


GRADCHECK_NET = NetConfig(
    embed_dim=6, edge_widths=(6,), graph_k=4, k=4, rmax=8,
    query_dim=6, value_dim=6, weight_hidden=(8,), offset_hidden=(6,))
GRADCHECK_N = 16
GRADCHECK_R = 4


def cmd_gradcheck(args):
    """Finite-difference check of the full composite loss on a small
    random patch with fully random (non-zeroed) parameters."""
    surface = parse_surface("sphere_1")
    sparse = sample_surface(surface, GRADCHECK_N,
                            np.random.SeedSequence((args.seed, 7)))
    dense = sample_surface(surface, GRADCHECK_N * GRADCHECK_R,
                           np.random.SeedSequence((args.seed, 8)))
    normed, centroid, scale = normalize_unit_sphere(sparse)
    gt_pts = (dense.points - centroid) / scale
    gt_normals = dense.normals

    params = init_params(GRADCHECK_NET, np.random.SeedSequence((args.seed, 9)),
                         zero_heads=False)
    plans = None

    def f():
        nonlocal plans
        loss, _, plans = patch_loss(
            params, GRADCHECK_NET, normed.points, gt_pts, gt_normals,
            GRADCHECK_R, no_refine=args.no_refine,
            no_coarse_loss=args.no_coarse_loss, no_pro_loss=args.no_pro_loss,
            no_uni_loss=args.no_uni_loss, plans=plans)
        return loss

    report = ad.gradcheck(f, params, tolerance=args.tolerance)
    status = "pass" if report.passed else "FAIL"
    print(f"gradcheck {status}: max_rel_error={report.max_rel_error!r} "
          f"(tolerance {report.tolerance!r}) at "
          f"{report.worst_param}{list(report.worst_index)}")
    return 0 if report.passed else 4


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cloudup",
        description="Magnification-flexible point cloud upsampling: one "
                    "model, any integer factor up to its rmax.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate an analytic-surface dataset")
    p.add_argument("--out", required=True, help="dataset root directory")
    p.add_argument("--surfaces", default="sphere_1,torus_1_0.4,bump_0.5_0.5")
    p.add_argument("--seeds", default="0:8", help="'a:b' range or comma list")
    p.add_argument("--patch-size", type=int, default=64)
    p.add_argument("--factors", default="2,4,8")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a flexible-factor model")
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--log", help="loss log path (default <out>.log.csv)")
    p.add_argument("--seed", type=int)
    p.add_argument("--rmax", type=int)
    p.add_argument("--patch-size", type=int)
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--no-coarse-loss", action="store_true")
    p.add_argument("--no-pro-loss", action="store_true")
    p.add_argument("--no-uni-loss", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("upsample", help="upsample a cloud by an integer factor")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="input .xyz")
    p.add_argument("--out", required=True, help="output .xyz")
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--patch-size", type=int)
    p.add_argument("--coverage", type=int, help="patch anchor count")
    p.add_argument("--noise", type=float, default=0.0,
                   help="Gaussian noise sigma added to the normalized input")
    p.add_argument("--seed", type=int, help="noise seed")
    p.add_argument("--no-refine", action="store_true")
    p.set_defaults(func=cmd_upsample)

    p = sub.add_parser("eval", help="compute metrics for a prediction")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--metrics", default="cd,hd,jsd")
    p.add_argument("--surface", help="surface id for p2f")
    p.add_argument("--grid", type=int, default=32, help="JSD voxel grid")
    p.add_argument("--nuc-p", help="comma list of NUC disk fractions")
    p.add_argument("--out", help="report path (json written alongside)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--no-coarse-loss", action="store_true")
    p.add_argument("--no-pro-loss", action="store_true")
    p.add_argument("--no-uni-loss", action="store_true")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits: 2 on usage, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, RangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except XYZParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (CloudUpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

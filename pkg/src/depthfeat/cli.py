"""depthfeat command line: synth, train, eval-depth, eval-feat.

Exit codes: 0 success, 2 configuration error, 3 checkpoint/architecture
error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config

EXIT_OK, EXIT_CONFIG, EXIT_CHECKPOINT, EXIT_NUMERIC = 0, 2, 3, 4


def _fail(code: int, msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig().validate()
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
        cfg.data.seed = args.seed
    return cfg


def _domains(cfg, args, split):
    root = cfg.path("data") / split
    if not root.is_dir():
        raise ConfigError(f"paths.data has no {split!r} split at {root}")
    present = sorted(p.name for p in root.iterdir() if p.is_dir())
    return present if args.domain == "all" else [d for d in present if d == args.domain]


def cmd_synth(args) -> int:
    from .synthscene import DatasetSpec, generate_dataset

    cfg = _config(args)
    out = Path(args.out) if args.out else cfg.path("data")
    d = cfg.data
    ds = DatasetSpec(d.train_scenes, d.val_scenes, d.height, d.width, d.frames, d.seed, tuple(d.domains))
    try:
        summary = generate_dataset(ds, out, overwrite=args.overwrite)
    except FileExistsError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    print(f"wrote {out}: " + ", ".join(f"{k}={v} scenes" for k, v in summary.items())
          + f" x domains {','.join(ds.domains)} at {ds.height}x{ds.width}, {ds.frames} frames")
    return EXIT_OK


def _ckpt_dir(cfg, args) -> Path:
    return Path(args.checkpoint) if args.checkpoint else cfg.path("checkpoints")


def cmd_train(args) -> int:
    from .synthscene import load_split
    from .train import NumericError, TripletPool, train

    cfg = _config(args)
    if args.steps is not None:
        cfg.train.steps = args.steps
    ckpt = _ckpt_dir(cfg, args)
    data = cfg.path("data")
    if not (data / "train").is_dir():
        raise ConfigError(f"paths.data={data} has no train split; run synth first")
    pool = TripletPool(load_split(data, "train", cfg.train.domain))
    log = Path(args.out) / "loss_log.csv" if args.out else None
    try:
        last = train(cfg, ckpt, log, resume=args.resume, stop_after=args.stop_after, pool=pool,
                     verbose=args.verbose)
    except NumericError as exc:
        return _fail(EXIT_NUMERIC, f"{exc}; diagnostic dump written to {ckpt}")
    print("final " + " ".join(f"{k}={v:.6f}" for k, v in last.items()))
    return EXIT_OK


def _load_nets(cfg, args, only):
    from .train import build_models, load_checkpoint

    if only == "feat" and not cfg.flags.enable_feat:
        cfg.flags.enable_feat = True
    models = build_models(cfg)
    if args.untrained:
        return models
    ckpt = _ckpt_dir(cfg, args)
    load_checkpoint(ckpt, models, only=(only,))
    return models


def _write_inverse_depth(path, depth):
    from .synthscene import write_ppm

    inv = 1.0 / np.asarray(depth)[0, 0]
    write_ppm(path, inv / inv.max())


def cmd_eval_depth(args) -> int:
    from .evaluate import depth_rows, predict_depth, summarize
    from .metrics import DepthMetrics, write_csv
    from .synthscene import load_split

    cfg = _config(args)
    out = Path(args.out) if args.out else cfg.path("output")
    domains = _domains(cfg, args, args.split)
    if not domains:
        raise ConfigError(f"no {args.domain!r} data in paths.data/{args.split}")
    if args.sanity == "gt":
        predictor = lambda img, gt: gt                          # noqa: E731
    else:
        models = _load_nets(cfg, args, "disp")
        predictor = lambda img, gt: predict_depth(models.disp, img)   # noqa: E731
    out.mkdir(parents=True, exist_ok=True)
    for dom in domains:
        rows = depth_rows(load_split(cfg.path("data"), args.split, dom), predictor, cfg.flags.median_scale)
        agg = summarize(rows)
        write_csv(out / f"depth_{dom}.csv", DepthMetrics.columns(), [r[2].row() for r in rows] + [agg.row()])
        vis = out / f"inv_depth_{dom}"
        vis.mkdir(exist_ok=True)
        for name, _, _, pred in rows:
            _write_inverse_depth(vis / (name.replace("/", "_") + ".ppm"), pred)
        print(f"{dom}: " + " ".join(f"{k}={v:.4f}" for k, v in zip(DepthMetrics.columns(), agg.row())))
    return EXIT_OK


def cmd_eval_feat(args) -> int:
    from .evaluate import feature_rows, net_featurizer, summarize_features
    from .metrics import FeatureMetrics, feature_metrics, write_csv
    from .synthscene import load_split

    cfg = _config(args)
    out = Path(args.out) if args.out else cfg.path("output")
    domains = _domains(cfg, args, args.split)
    if not domains:
        raise ConfigError(f"no {args.domain!r} data in paths.data/{args.split}")
    out.mkdir(parents=True, exist_ok=True)
    featurize = None
    if args.sanity != "identity":
        featurize = net_featurizer(_load_nets(cfg, args, "feat").feat)
    for dom in domains:
        seqs = load_split(cfg.path("data"), args.split, dom)
        if args.sanity == "identity":
            rows = []
            for seq in seqs:
                for t in seq.targets:
                    img = seq.images[t][None]
                    h, w = img.shape[-2:]
                    f = img / np.linalg.norm(img, axis=1, keepdims=True).clip(1e-12)
                    src = np.arange(h * w)
                    uv = np.stack([src % w, src // w]).astype(float)
                    rng = np.random.default_rng([cfg.train.seed, t])
                    rows.append((seq.name, dom, feature_metrics(f, f, src, uv, rng=rng)))
        else:
            rows = feature_rows(seqs, featurize, seed=cfg.train.seed)
        agg = summarize_features(rows)
        write_csv(out / f"feat_{dom}.csv", FeatureMetrics.columns(), [r[2].row() for r in rows] + [agg.row()])
        print(f"{dom}: " + " ".join(f"{k}={v:.4f}" for k, v in zip(FeatureMetrics.columns(), agg.row())))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="depthfeat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="section.key=value run configuration")
        sp.add_argument("--seed", type=int, help="override data.seed and train.seed")
        sp.add_argument("--out", help="output directory (overrides the configured path)")

    sp = sub.add_parser("synth", help="render the synthetic dataset")
    common(sp)
    sp.add_argument("--overwrite", action="store_true", help="replace a non-empty output directory")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train depth, pose and feature networks")
    common(sp)
    sp.add_argument("--checkpoint", help="checkpoint directory (overrides paths.checkpoints)")
    sp.add_argument("--steps", type=int, help="override train.steps")
    sp.add_argument("--resume", action="store_true", help="continue from the checkpoint if present")
    sp.add_argument("--stop-after", type=int, help="stop (and checkpoint) after this many steps")
    sp.add_argument("--verbose", "-v", action="store_true")
    sp.set_defaults(func=cmd_train)

    for name, fn, sanity in (("eval-depth", cmd_eval_depth, ("gt",)),
                             ("eval-feat", cmd_eval_feat, ("identity",))):
        sp = sub.add_parser(name, help=f"{name.split('-')[1]} metrics on a split")
        common(sp)
        sp.add_argument("--checkpoint", help="checkpoint directory (overrides paths.checkpoints)")
        sp.add_argument("--domain", choices=("day", "night", "all"), default="all")
        sp.add_argument("--split", choices=("train", "val"), default="val")
        sp.add_argument("--sanity", choices=sanity, help="oracle mode that bypasses the networks")
        sp.add_argument("--untrained", action="store_true", help="use freshly initialised weights")
        sp.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    from .train import CheckpointError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except CheckpointError as exc:
        return _fail(EXIT_CHECKPOINT, str(exc))
    except FloatingPointError as exc:
        return _fail(EXIT_NUMERIC, str(exc))


if __name__ == "__main__":
    sys.exit(main())

"""Joint self-supervised training of DispNet, PoseNet and FeatNet.

One step draws a frame triplet, predicts multi-scale disparity, the two
support poses and (optionally) dense features, then averages the combined
objective w_P*L_P + w_F*L_F + w_C*L_C + L_S over the disparity scales.
Every step uses its own generator seeded by (seed, step), so a run resumed
from a checkpoint continues exactly as the uninterrupted run would have.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from . import tensorio
from .camgeo import correspondence_map, disp_to_depth
from .config import RunConfig
from .losses import (IGNORE, masked_mean, mine_negatives, pixelwise_contrastive,
                     smoothness, warp_cost_map)
from .maskfilter import NEXT, PREV, min_reprojection, select, unwarped_error
from .nets import DispNet, FeatNet, PoseNet, upsample
from .optim import Adam
from .synthscene import SceneSample, load_split
from .warp import bilinear_sample

LOSS_COLUMNS = ("loss_total", "loss_P", "loss_F", "loss_C", "loss_S")


class CheckpointError(RuntimeError):
    pass


class NumericError(FloatingPointError):
    pass


@dataclass
class Models:
    disp: DispNet
    pose: PoseNet
    feat: FeatNet | None = None

    def named_parameters(self):
        for tag, net in (("disp", self.disp), ("pose", self.pose), ("feat", self.feat)):
            if net is not None:
                yield from net.named_parameters(tag + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]


def build_models(cfg: RunConfig) -> Models:
    rng = np.random.default_rng(cfg.train.seed)
    disp = DispNet(rng)
    pose = PoseNet(rng)
    feat = FeatNet(rng, cfg.train.n_features) if cfg.flags.enable_feat else None
    return Models(disp, pose, feat)


def _positive_subset(labels, keep_src, ratio):
    """Restrict a label mask to the pair groups whose source is in ``keep_src``."""
    group = ratio + 1
    first = labels.src[::group]
    sel = np.isin(first, keep_src)
    idx = (np.flatnonzero(sel)[:, None] * group + np.arange(group)).reshape(-1)
    return type(labels)(labels.src[idx], labels.dst[idx], labels.label[idx], labels.shape)


def step_losses(models: Models, sample: SceneSample, cfg: RunConfig, rng) -> dict:
    """All loss terms for one triplet, averaged over scales (tensors)."""
    lw, fl, mn = cfg.loss, cfg.flags, cfg.mining
    target = T.Tensor(sample.target)
    supports = {PREV: T.Tensor(sample.prev), NEXT: T.Tensor(sample.next)}
    K = sample.intrinsics
    h, w = target.shape[-2:]
    use_feat = fl.enable_feat and models.feat is not None

    disps = models.disp(target)[: cfg.train.scales]
    poses = {NEXT: models.pose(target, supports[NEXT])}
    if fl.pose_temporal_order:
        # both pairs are fed forward in time, so one constant output cannot
        # fit the earlier neighbour while starving the later one of gradient
        poses[PREV] = models.pose(supports[PREV], target).inverted()
    else:
        poses[PREV] = models.pose(target, supports[PREV])
    if use_feat:
        feats = {0: models.feat(target), PREV: models.feat(supports[PREV]), NEXT: models.feat(supports[NEXT])}
    unwarped = unwarped_error(target, list(supports.values()), lw.alpha) if fl.automask else None

    # positives may be thinned to a fixed random subset of target pixels per step
    keep_src = None
    if use_feat and mn.max_positives > 0 and mn.max_positives < h * w:
        keep_src = np.sort(rng.choice(h * w, mn.max_positives, replace=False))

    acc = {name: [] for name in ("P", "F", "C", "S")}
    for disp in disps:
        if disp.shape[-2:] != (h, w):
            disp = upsample(disp, h, w, "bilinear")
        depth = disp_to_depth(disp)
        cmaps = {k: correspondence_map(depth, poses[k], K) for k in (PREV, NEXT)}
        errs, inb = {}, {}
        for k in (PREV, NEXT):
            warped = bilinear_sample(supports[k], cmaps[k])
            errs[k] = warp_cost_map(target, warped.warped, lw.alpha)
            inb[k] = warped.validity
        if fl.min_reprojection:
            fused, selection = min_reprojection(errs[PREV], errs[NEXT])
            chosen = selection.chosen_k
            valid = np.where(chosen == PREV, inb[PREV], inb[NEXT])
        else:
            chosen = None
            fused = None
        mu = np.ones((1, 1, h, w), bool)
        if fl.automask:
            best = fused.data if fused is not None else np.minimum(errs[PREV].data, errs[NEXT].data)
            mu = unwarped > best

        if fl.min_reprojection:
            loss_p = masked_mean(fused, valid & mu)
        else:
            loss_p = T.scalar_mul(T.add(masked_mean(errs[PREV], inb[PREV] & mu),
                                        masked_mean(errs[NEXT], inb[NEXT] & mu)), 0.5)
        acc["P"].append(loss_p)
        acc["S"].append(smoothness(depth, target, lw.smooth_lambda, lw.smooth_on_disparity))

        if not use_feat:
            continue
        ferrs = {k: warp_cost_map(feats[0], bilinear_sample(feats[k], cmaps[k]).warped, lw.alpha)
                 for k in (PREV, NEXT)}
        if fl.min_reprojection:
            acc["F"].append(masked_mean(select(chosen, ferrs[PREV], ferrs[NEXT]), valid & mu))
        else:
            acc["F"].append(T.scalar_mul(T.add(masked_mean(ferrs[PREV], inb[PREV] & mu),
                                               masked_mean(ferrs[NEXT], inb[NEXT] & mu)), 0.5))
        lc = []
        for k in (PREV, NEXT):
            labels = mine_negatives(cmaps[k], mn.strategy, mn.ratio, mn.exclusion_radius, rng)
            if keep_src is not None:
                labels = _positive_subset(labels, keep_src, mn.ratio)
            bad = ~mu.reshape(-1)
            if chosen is not None:
                bad = bad | (chosen.reshape(-1) != k)
            labels = labels.ignore_sources(bad)
            if len(labels) == 0 or np.all(labels.label == IGNORE):
                lc.append(T.Tensor(0.0))
                continue
            lc.append(pixelwise_contrastive(feats[0], feats[k], labels, lw.margin))
        acc["C"].append(T.scalar_mul(T.add(lc[0], lc[1]), 0.5))

    n = len(disps)
    out = {}
    for name, terms in acc.items():
        out[name] = T.scalar_mul(_sum(terms), 1.0 / n) if terms else T.Tensor(0.0)
    total = T.add(T.scalar_mul(out["P"], lw.w_P), out["S"])
    if use_feat:
        total = T.add(total, T.add(T.scalar_mul(out["F"], lw.w_F), T.scalar_mul(out["C"], lw.w_C)))
    out["total"] = total
    return out


def _sum(terms):
    acc = terms[0]
    for t in terms[1:]:
        acc = T.add(acc, t)
    return acc


# -- data -----------------------------------------------------------------------
class TripletPool:
    """Every (sequence, target frame) pair of a split, drawn uniformly."""

    def __init__(self, sequences):
        if not sequences:
            raise FileNotFoundError("no training sequences found")
        self.sequences = sequences
        self.index = [(i, t) for i, s in enumerate(sequences) for t in s.targets]

    def __len__(self):
        return len(self.index)

    def draw(self, rng) -> SceneSample:
        i, t = self.index[int(rng.integers(len(self.index)))]
        return self.sequences[i].sample(t)


# -- checkpoints ----------------------------------------------------------------
def save_checkpoint(path, models: Models, opt: Adam, step: int, cfg: RunConfig):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines = [f"step={step}", f"enable_feat={str(models.feat is not None).lower()}",
             f"n_features={cfg.train.n_features}"]
    for i, (name, p) in enumerate(models.named_parameters()):
        tensorio.save(path / f"{name}.dft", p.data)
        tensorio.save(path / f"adam_m.{name}.dft", opt.m[i])
        tensorio.save(path / f"adam_v.{name}.dft", opt.v[i])
        lines.append(f"param.{name}={'x'.join(map(str, p.shape))}")
    lines.append(f"adam_t={opt.t}")
    (path / "manifest.txt").write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    mf = Path(path) / "manifest.txt"
    if not mf.exists():
        raise CheckpointError(f"no checkpoint manifest at {mf}")
    from .synthscene import read_kv
    return read_kv(mf)


def load_checkpoint(path, models: Models, opt: Adam | None = None, only: tuple | None = None) -> int:
    """Load weights (and optimiser state) in place; returns the saved step.

    ``only`` restricts loading and the architecture check to the named
    networks (e.g. ``("disp",)`` for depth evaluation).
    """
    path = Path(path)
    kv = read_manifest(path)
    saved = {k[6:]: v for k, v in kv.items() if k.startswith("param.")}
    named = list(models.named_parameters())
    if only is not None:
        if opt is not None:
            raise ValueError("partial loads cannot restore optimiser state")
        prefixes = tuple(n + "." for n in only)
        saved = {k: v for k, v in saved.items() if k.startswith(prefixes)}
        named = [(n, p) for n, p in named if n.startswith(prefixes)]
    expected = {n: "x".join(map(str, p.shape)) for n, p in named}
    if saved != expected:
        missing = sorted(set(expected) - set(saved))
        extra = sorted(set(saved) - set(expected))
        shape = sorted(n for n in set(saved) & set(expected) if saved[n] != expected[n])
        raise CheckpointError(f"architecture mismatch: missing={missing[:3]} unexpected={extra[:3]} "
                              f"shape={shape[:3]}")
    for name, p in named:
        p.data = tensorio.load(path / f"{name}.dft")
    if opt is not None:
        opt.load_state({"t": int(kv["adam_t"]),
                        "m": [tensorio.load(path / f"adam_m.{n}.dft") for n, _ in named],
                        "v": [tensorio.load(path / f"adam_v.{n}.dft") for n, _ in named]})
    return int(kv["step"])


# -- loop -----------------------------------------------------------------------
def learning_rate(cfg: RunConfig, step: int) -> float:
    """Step schedule; a function of the step alone so resumed runs match."""
    t = cfg.train
    if t.lr_decay_step and step > t.lr_decay_step:
        return t.lr * t.lr_decay
    return t.lr


def _dump_failure(out_dir: Path, step: int, sample: SceneSample, losses: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    tensorio.save(out_dir / f"nonfinite_step{step}_target.dft", sample.target)
    tensorio.save(out_dir / f"nonfinite_step{step}_prev.dft", sample.prev)
    tensorio.save(out_dir / f"nonfinite_step{step}_next.dft", sample.next)
    vals = {k: float(v.data) for k, v in losses.items()}
    (out_dir / f"nonfinite_step{step}.txt").write_text(
        f"step={step}\nsample={sample.name}\n" + "".join(f"{k}={v!r}\n" for k, v in vals.items()))


def train(cfg: RunConfig, ckpt_dir, log_path=None, resume: bool = False, stop_after: int | None = None,
          pool: TripletPool | None = None, verbose: bool = False) -> dict:
    """Run (or resume) training; returns the last step's loss values.

    ``stop_after`` ends the run early (after that many total steps) while
    still writing a checkpoint, which is how interruption is simulated.
    """
    ckpt_dir = Path(ckpt_dir)
    if pool is None:
        pool = TripletPool(load_split(cfg.path("data"), "train", cfg.train.domain))
    models = build_models(cfg)
    opt = Adam(models.parameters(), lr=cfg.train.lr)
    start = 0
    if resume and (ckpt_dir / "manifest.txt").exists():
        start = load_checkpoint(ckpt_dir, models, opt)
    log_path = Path(log_path) if log_path is not None else ckpt_dir / "loss_log.csv"
    log_path.parent.mkdir(parents=True, exist_ok=True)
    if start == 0 or not log_path.exists():
        log_path.write_text("step," + ",".join(LOSS_COLUMNS) + "\n")
    else:
        # drop rows beyond the checkpoint so the log matches the resumed state
        rows = log_path.read_text().splitlines()
        kept = [r for r in rows[1:] if int(r.split(",")[0]) <= start]
        log_path.write_text("\n".join([rows[0]] + kept) + "\n")
    end = cfg.train.steps if stop_after is None else min(stop_after, cfg.train.steps)
    last = {}
    with open(log_path, "a") as log:
        for step in range(start + 1, end + 1):
            rng = np.random.default_rng([cfg.train.seed, step])
            opt.lr = learning_rate(cfg, step)
            opt.zero_grad()
            vals = np.zeros(len(LOSS_COLUMNS))
            for _ in range(cfg.train.batch_size):
                sample = pool.draw(rng)
                losses = step_losses(models, sample, cfg, rng)
                row = [losses[k].item() for k in ("total", "P", "F", "C", "S")]
                if not all(math.isfinite(v) for v in row):
                    _dump_failure(ckpt_dir, step, sample, losses)
                    raise NumericError(f"non-finite loss at step {step} on {sample.name}: {row}")
                losses["total"].backward(np.array(1.0 / cfg.train.batch_size))
                vals += np.array(row) / cfg.train.batch_size
            opt.step()
            last = dict(zip(LOSS_COLUMNS, vals.tolist()))
            if step % cfg.train.log_every == 0 or step == end:
                log.write(f"{step}," + ",".join(f"{v:.9g}" for v in vals) + "\n")
                log.flush()
            if verbose and (step % 50 == 0 or step == end):
                print(f"step {step}: " + " ".join(f"{k}={v:.4f}" for k, v in last.items()), flush=True)
    save_checkpoint(ckpt_dir, models, opt, max(end, start), cfg)
    return last

import numpy as np
import pytest

from depthfeat import nets, tensorio
from depthfeat.train import (CheckpointError, LOSS_COLUMNS, NumericError, TripletPool, build_models, learning_rate,
                             load_checkpoint, step_losses, train)
from depthfeat.optim import Adam
from depthfeat.synthscene import load_split


def _pool(cfg):
    return TripletPool(load_split(cfg.path("data"), "train", cfg.train.domain))


def test_step_losses_finite_and_combined(make_config):
    cfg = make_config()
    models = build_models(cfg)
    sample = _pool(cfg).draw(np.random.default_rng(1))
    out = step_losses(models, sample, cfg, np.random.default_rng(2))
    vals = {k: out[k].item() for k in ("total", "P", "F", "C", "S")}
    assert all(np.isfinite(v) for v in vals.values())
    w = cfg.loss
    assert vals["total"] == pytest.approx(w.w_P * vals["P"] + w.w_F * vals["F"] + w.w_C * vals["C"] + vals["S"],
                                          rel=1e-9, abs=1e-12)
    assert vals["C"] > 0


def test_disabled_features_never_run_featnet(make_config, tmp_path):
    cfg = make_config("flags.enable_feat=false", "train.steps=3")
    before = nets.FORWARD_COUNTS["FeatNet"]
    last = train(cfg, tmp_path / "ck", pool=_pool(cfg))
    assert nets.FORWARD_COUNTS["FeatNet"] == before
    assert last["loss_F"] == 0 and last["loss_C"] == 0
    assert not any(p.name.startswith("feat.") for p in (tmp_path / "ck").iterdir())


def test_log_columns(make_config, tmp_path):
    cfg = make_config("train.steps=2")
    train(cfg, tmp_path / "ck", pool=_pool(cfg))
    rows = (tmp_path / "ck" / "loss_log.csv").read_text().splitlines()
    assert rows[0] == "step," + ",".join(LOSS_COLUMNS)
    assert [r.split(",")[0] for r in rows[1:]] == ["1", "2"]


def test_resume_matches_uninterrupted_run(make_config, tmp_path):
    cfg = make_config("train.steps=6")
    pool = _pool(cfg)
    train(cfg, tmp_path / "full", pool=pool)
    train(cfg, tmp_path / "part", pool=pool, stop_after=3)
    assert load_checkpoint(tmp_path / "part", build_models(cfg)) == 3
    train(cfg, tmp_path / "part", pool=pool, resume=True)
    full = (tmp_path / "full" / "loss_log.csv").read_text()
    part = (tmp_path / "part" / "loss_log.csv").read_text()
    assert full == part
    for f in sorted((tmp_path / "full").glob("*.dft")):
        assert np.array_equal(tensorio.load(f), tensorio.load(tmp_path / "part" / f.name)), f.name


def test_resume_drops_log_rows_past_checkpoint(make_config, tmp_path):
    cfg = make_config("train.steps=4")
    pool = _pool(cfg)
    train(cfg, tmp_path / "ck", pool=pool, stop_after=2)
    log = tmp_path / "ck" / "loss_log.csv"
    log.write_text(log.read_text() + "3,9,9,9,9,9\n")        # a row written after the last save
    train(cfg, tmp_path / "ck", pool=pool, resume=True)
    steps = [r.split(",")[0] for r in log.read_text().splitlines()[1:]]
    assert steps == ["1", "2", "3", "4"]


def test_same_seed_same_run(make_config, tmp_path):
    cfg = make_config("train.steps=3")
    pool = _pool(cfg)
    train(cfg, tmp_path / "a", pool=pool)
    train(cfg, tmp_path / "b", pool=pool)
    assert (tmp_path / "a" / "loss_log.csv").read_bytes() == (tmp_path / "b" / "loss_log.csv").read_bytes()


def test_checkpoint_architecture_mismatch(make_config, tmp_path):
    cfg = make_config("train.steps=1")
    train(cfg, tmp_path / "ck", pool=_pool(cfg))
    other = make_config("train.n_features=4")
    with pytest.raises(CheckpointError, match="architecture mismatch"):
        load_checkpoint(tmp_path / "ck", build_models(other))
    # depth-only loading ignores the feature head
    assert load_checkpoint(tmp_path / "ck", build_models(other), only=("disp",)) == 1
    nofeat = make_config("flags.enable_feat=false")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "ck", build_models(nofeat))
    with pytest.raises(CheckpointError, match="no checkpoint"):
        load_checkpoint(tmp_path / "missing", build_models(cfg))


def test_optimizer_state_restored(make_config, tmp_path):
    cfg = make_config("train.steps=2")
    train(cfg, tmp_path / "ck", pool=_pool(cfg))
    models = build_models(cfg)
    opt = Adam(models.parameters(), lr=cfg.train.lr)
    load_checkpoint(tmp_path / "ck", models, opt)
    assert opt.t == 2
    assert any(np.abs(m).max() > 0 for m in opt.m)


def test_nonfinite_loss_aborts_with_dump(make_config, tmp_path):
    cfg = make_config("train.steps=3")
    seqs = load_split(cfg.path("data"), "train", "day")
    for s in seqs:
        s.images[:, :, 0, 0] = np.nan
    with pytest.raises(NumericError, match="non-finite loss at step 1"):
        train(cfg, tmp_path / "ck", pool=TripletPool(seqs))
    txt = (tmp_path / "ck" / "nonfinite_step1.txt").read_text()
    assert "sample=" in txt and "total=nan" in txt
    assert np.isnan(tensorio.load(tmp_path / "ck" / "nonfinite_step1_target.dft")).any()


def test_temporal_order_pose_inputs(make_config):
    """The previous-frame pose comes from the (I_{t-1}, I_t) pair when the flag is set."""
    sample = _pool(make_config()).draw(np.random.default_rng(0))
    frames = {"target": sample.target, "prev": sample.prev, "next": sample.next}

    def which(x):
        return next(k for k, v in frames.items() if np.array_equal(x.data, v))

    class Spy:
        def __init__(self, net):
            self.net, self.seen = net, []

        def __call__(self, a, b):
            self.seen.append((which(a), which(b)))
            return self.net(a, b)

    for flag, want in (("true", {("target", "next"), ("prev", "target")}),
                       ("false", {("target", "next"), ("target", "prev")})):
        cfg = make_config(f"flags.pose_temporal_order={flag}", "flags.enable_feat=false")
        models = build_models(cfg)
        models.pose = spy = Spy(models.pose)
        step_losses(models, sample, cfg, np.random.default_rng(0))
        assert set(spy.seen) == want and len(spy.seen) == 2


def test_training_reduces_loss_on_fixed_batch(make_config, tmp_path):
    cfg = make_config("train.steps=200", "train.seed=7")
    pool = _pool(cfg)
    fixed = pool.draw(np.random.default_rng([7, 1]))

    def evaluate(models):
        return step_losses(models, fixed, cfg, np.random.default_rng(123))["total"].item()

    before = evaluate(build_models(cfg))
    train(cfg, tmp_path / "ck", pool=pool)
    models = build_models(cfg)
    load_checkpoint(tmp_path / "ck", models)
    after = evaluate(models)
    assert after < before


def test_learning_rate_schedule(make_config):
    cfg = make_config("train.lr=0.002", "train.lr_decay_step=3", "train.lr_decay=0.5")
    assert [learning_rate(cfg, s) for s in (1, 3, 4, 9)] == [0.002, 0.002, 0.001, 0.001]
    assert learning_rate(make_config("train.lr_decay_step=0"), 10 ** 6) == 1e-3


def test_resume_across_decay_boundary(make_config, tmp_path):
    cfg = make_config("train.steps=4", "train.lr_decay_step=2")
    pool = _pool(cfg)
    train(cfg, tmp_path / "full", pool=pool)
    train(cfg, tmp_path / "part", pool=pool, stop_after=2)
    train(cfg, tmp_path / "part", pool=pool, resume=True)
    assert (tmp_path / "full" / "loss_log.csv").read_bytes() == (tmp_path / "part" / "loss_log.csv").read_bytes()

import pytest

from depthfeat.config import ConfigError, RunConfig, load_config, parse_config


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert cfg.loss.alpha == 0.85 and cfg.loss.smooth_lambda == 0.001
    assert cfg.train.lr == 1e-3 and cfg.flags.median_scale and cfg.flags.enable_feat


def test_parse_types_comments_and_blank_lines():
    cfg = parse_config("""
# comment
paths.data = data   # trailing comment
train.steps=12
train.lr=0.003
flags.enable_feat=false
data.domains=day
mining.strategy=local
""")
    assert cfg.paths.data == "data" and cfg.train.steps == 12 and cfg.train.lr == 0.003
    assert cfg.flags.enable_feat is False and cfg.data.domains == ("day",)


@pytest.mark.parametrize("text", ["train.nope=1", "nosection.x=1", "train=1", "justtext",
                                  "train.steps=abc", "flags.automask=maybe"])
def test_bad_lines(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@pytest.mark.parametrize("text", ["data.height=60", "train.scales=5", "mining.strategy=nearest",
                                  "loss.alpha=2", "loss.margin=0", "train.n_features=1", "data.domains=dusk",
                                  "train.lr_decay=0", "train.lr_decay_step=-1"])
def test_validation_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_required_key_message():
    with pytest.raises(ConfigError, match="missing required config key paths.output"):
        RunConfig().path("output")


def test_relative_paths_resolve_against_file(tmp_path):
    (tmp_path / "sub").mkdir()
    p = tmp_path / "sub" / "run.cfg"
    p.write_text("paths.data=../ds\npaths.output=/abs/out\n")
    cfg = load_config(p)
    assert cfg.path("data") == tmp_path / "sub" / ".." / "ds"
    assert str(cfg.path("output")) == "/abs/out"


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_dump_round_trip():
    cfg = parse_config("paths.data=/x\ntrain.steps=7\nflags.automask=false\ndata.domains=night,day\n")
    again = parse_config(cfg.dump())
    assert again.dump() == cfg.dump()
    assert again.data.domains == ("night", "day") and again.flags.automask is False


def test_weights_view():
    w = parse_config("loss.w_C=0.5\nloss.margin=0.8").weights()
    assert w.w_C == 0.5 and w.margin == 0.8

"""Run configuration: line-oriented ``section.key=value`` text files.

Blank lines and ``#`` comments are ignored. Unknown keys and unparsable
values are configuration errors, as are required keys that are absent.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _tuple(s: str) -> tuple:
    return tuple(x.strip() for x in s.split(",") if x.strip())


@dataclass
class Paths:
    data: str | None = None
    checkpoints: str | None = None
    output: str | None = None


@dataclass
class Data:
    height: int = 64
    width: int = 96
    train_scenes: int = 20
    val_scenes: int = 4
    frames: int = 7
    seed: int = 0
    domains: tuple = ("day", "night")


@dataclass
class Train:
    steps: int = 5000
    batch_size: int = 1
    lr: float = 1e-3
    lr_decay_step: int = 4000  # after this step the rate is multiplied by lr_decay; 0 disables
    lr_decay: float = 0.1
    seed: int = 0
    scales: int = 4
    domain: str = "day"
    n_features: int = 16
    log_every: int = 1


@dataclass
class Loss:
    alpha: float = 0.85
    smooth_lambda: float = 0.001
    margin: float = 0.5
    w_P: float = 1.0
    w_F: float = 1.0
    w_C: float = 1.0
    smooth_on_disparity: bool = False


@dataclass
class Mining:
    strategy: str = "global"
    ratio: int = 4
    exclusion_radius: float = 3.0
    max_positives: int = 0     # 0 keeps every valid positive


@dataclass
class Flags:
    enable_feat: bool = True
    automask: bool = True
    min_reprojection: bool = True
    median_scale: bool = True
    pose_temporal_order: bool = True   # previous-frame pose = inverse of PoseNet(I_{t-1}, I_t)


@dataclass
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    data: Data = field(default_factory=Data)
    train: Train = field(default_factory=Train)
    loss: Loss = field(default_factory=Loss)
    mining: Mining = field(default_factory=Mining)
    flags: Flags = field(default_factory=Flags)
    source: Path | None = None

    SECTIONS = ("paths", "data", "train", "loss", "mining", "flags")

    def set(self, key: str, value: str):
        sec_name, _, name = key.partition(".")
        if sec_name not in self.SECTIONS or not name:
            raise ConfigError(f"unknown config key {key!r}")
        sec = getattr(self, sec_name)
        types = {f.name: f.type for f in fields(sec)}
        if name not in types:
            raise ConfigError(f"unknown config key {key!r}")
        typ = types[name]
        try:
            if typ == "bool":
                val = _bool(value)
            elif typ == "int":
                val = int(value)
            elif typ == "float":
                val = float(value)
            elif typ == "tuple":
                val = _tuple(value)
            else:
                val = value.strip() or None
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
        setattr(sec, name, val)

    def require(self, *keys: str):
        for key in keys:
            sec, _, name = key.partition(".")
            if getattr(getattr(self, sec), name) in (None, ""):
                raise ConfigError(f"missing required config key {key}")

    def path(self, key: str) -> Path:
        self.require(f"paths.{key}")
        p = Path(getattr(self.paths, key))
        if not p.is_absolute() and self.source is not None:
            p = self.source.parent / p
        return p

    def validate(self):
        d, t, m = self.data, self.train, self.mining
        if d.height % 8 or d.width % 8:
            raise ConfigError("data.height and data.width must be divisible by 8")
        if d.frames < 3:
            raise ConfigError("data.frames must be at least 3")
        for dom in d.domains:
            if dom not in ("day", "night"):
                raise ConfigError(f"unknown domain {dom!r} in data.domains")
        if t.domain not in ("day", "night", "all"):
            raise ConfigError("train.domain must be day, night or all")
        if not 1 <= t.scales <= 4:
            raise ConfigError("train.scales must be in 1..4")
        if t.steps < 0 or t.batch_size < 1 or t.lr <= 0:
            raise ConfigError("train.steps, train.batch_size and train.lr must be positive")
        if t.lr_decay_step < 0 or not 0 < t.lr_decay <= 1:
            raise ConfigError("train.lr_decay_step must be >= 0 and train.lr_decay in (0, 1]")
        if t.n_features < 2:
            raise ConfigError("train.n_features must be at least 2")
        if m.strategy not in ("global", "local", "global-local"):
            raise ConfigError(f"unknown mining.strategy {m.strategy!r}")
        if m.ratio < 1:
            raise ConfigError("mining.ratio must be >= 1")
        try:
            self.weights()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def weights(self):
        from .losses import LossWeights
        lw = self.loss
        return LossWeights(lw.alpha, lw.smooth_lambda, lw.margin, lw.w_P, lw.w_F, lw.w_C)

    def dump(self) -> str:
        lines = []
        for sec in self.SECTIONS:
            obj = getattr(self, sec)
            for f in fields(obj):
                v = getattr(obj, f.name)
                if v is None:
                    continue
                if isinstance(v, tuple):
                    v = ",".join(v)
                elif isinstance(v, bool):
                    v = str(v).lower()
                lines.append(f"{sec}.{f.name}={v}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, source: Path | None = None) -> RunConfig:
    cfg = RunConfig(source=source)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected section.key=value")
        key, _, value = line.partition("=")
        cfg.set(key.strip(), value.strip())
    return cfg.validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.resolve())

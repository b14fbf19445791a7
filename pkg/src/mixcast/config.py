"""Model-variant naming, hyperparameter config, and validation.

Variant names follow the "<backbone>-TSMixer(<enhancements>)" convention,
backbone in {V, CI, IC}, enhancements a subset of {G, H, CC}. Config files
are TOML with sections mirroring the package modules; every default matches
the standard setup (sl=512, pl=16, s=8, fl=96, nl=8, fs=2, do=0.1), so an
empty file is runnable as-is.
"""

import re
from dataclasses import dataclass, field, asdict

try:
    import tomllib
except ImportError:  # python 3.10
    import tomli as tomllib

from .errors import ConfigError

BACKBONES = ("V", "CI", "IC")
ENHANCEMENTS = ("G", "H", "CC")
_NAME_RE = re.compile(r"^(V|CI|IC)-TSMixer(?:\(([^)]*)\))?$")


@dataclass(frozen=True)
class VariantSpec:
    backbone: str
    enhancements: frozenset

    @property
    def gated(self):
        return "G" in self.enhancements

    @property
    def hierarchy(self):
        return "H" in self.enhancements

    @property
    def cross_channel(self):
        return "CC" in self.enhancements

    def canonical(self):
        if not self.enhancements:
            return f"{self.backbone}-TSMixer"
        ordered = ",".join(e for e in ENHANCEMENTS if e in self.enhancements)
        return f"{self.backbone}-TSMixer({ordered})"

    def validate(self, allow_ic_cc=True):
        if self.backbone == "V" and self.cross_channel:
            raise ConfigError("CC head requires per-channel forecasts; V-TSMixer flattens channels")
        if self.backbone == "IC" and self.cross_channel and not allow_ic_cc:
            raise ConfigError("IC backbone with CC head disabled by convention flag")


def parse_variant(name):
    m = _NAME_RE.match(name.strip())
    if not m:
        raise ConfigError(f"unrecognized model name {name!r}")
    backbone = m.group(1)
    enh = set()
    if m.group(2):
        for token in m.group(2).split(","):
            token = token.strip()
            if token not in ENHANCEMENTS:
                raise ConfigError(f"unknown enhancement token {token!r} in {name!r}")
            enh.add(token)
    return VariantSpec(backbone=backbone, enhancements=frozenset(enh))


@dataclass
class ModelConfig:
    sl: int = 512
    pl: int = 16
    s: int = 8
    fl: int = 96
    nl: int = 8
    fs: int = 2
    hf: int = None
    ef: int = None
    do: float = 0.1
    cl: int = 1
    mask_ratio: float = 0.4

    def __post_init__(self):
        if self.hf is None:
            self.hf = self.fs * self.pl
        if self.ef is None:
            self.ef = self.fs * self.hf

    @property
    def n(self):
        return (self.sl - self.pl) // self.s + 1

    def validate(self, variant, pretrain=False):
        if self.pl > self.sl:
            raise ConfigError(f"patch length {self.pl} exceeds sequence length {self.sl}")
        if variant.hierarchy and self.fl % self.pl != 0:
            raise ConfigError(f"hierarchy head needs fl % pl == 0, got fl={self.fl}, pl={self.pl}")
        if pretrain and self.s != self.pl:
            raise ConfigError(f"self-supervised flow needs non-overlapping patches (s == pl), got s={self.s}, pl={self.pl}")
        if not 0.0 <= self.do < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.do}")
        if self.cl < 0:
            raise ConfigError(f"context length must be >= 0, got {self.cl}")


@dataclass
class TrainPlan:
    mode: str = "supervised"  # supervised | pretrain | finetune
    epochs: int = 100
    probe_epochs: int = 20
    patience: int = 10
    lr: float = 1e-3
    batch_size: int = 8
    seeds: tuple = (42, 43, 44, 45, 46)
    shuffle: bool = True
    lr_plateau: bool = False

    def validate(self):
        if self.mode not in ("supervised", "pretrain", "finetune"):
            raise ConfigError(f"unknown training mode {self.mode!r}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.probe_epochs > self.epochs:
            raise ConfigError(f"probe_epochs ({self.probe_epochs}) exceeds epochs ({self.epochs})")


@dataclass
class RunConfig:
    dataset: str = ""
    split_profile: str = "ratio_70_10_20"
    variant: str = "CI-TSMixer"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainPlan = field(default_factory=TrainPlan)
    output_dir: str = "runs"
    raw_unit_metrics: bool = False

    def variant_spec(self):
        return parse_variant(self.variant)

    def validate(self, pretrain=False):
        spec = self.variant_spec()
        spec.validate()
        self.model.validate(spec, pretrain=pretrain)
        self.train.validate()
        return spec

    def as_dict(self):
        return asdict(self)


def _take(cls, section):
    known = {f for f in cls.__dataclass_fields__}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return section


def load_config(path=None, overrides=None):
    """Build a RunConfig from an optional TOML file plus flat overrides.

    Overrides use dotted keys, e.g. {"model.fl": 192, "train.epochs": 5}.
    """
    raw = {}
    if path is not None:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    model = ModelConfig(**_take(ModelConfig, raw.get("model", {})))
    seeds = raw.get("train", {})
    if "seeds" in seeds:
        seeds["seeds"] = tuple(seeds["seeds"])
    train = TrainPlan(**_take(TrainPlan, seeds))
    top = {k: v for k, v in raw.items() if k not in ("model", "train")}
    cfg = RunConfig(model=model, train=train, **_take(RunConfig, {**top}))
    for key, value in (overrides or {}).items():
        obj = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            obj = getattr(obj, part)
        if not hasattr(obj, parts[-1]):
            raise ConfigError(f"unknown config key {key!r}")
        setattr(obj, parts[-1], value)
    # re-derive hf/ef when fs or pl were overridden without explicit hf/ef
    if "model.hf" not in (overrides or {}) and "hf" not in raw.get("model", {}):
        cfg.model.hf = cfg.model.fs * cfg.model.pl
    if "model.ef" not in (overrides or {}) and "ef" not in raw.get("model", {}):
        cfg.model.ef = cfg.model.fs * cfg.model.hf
    return cfg

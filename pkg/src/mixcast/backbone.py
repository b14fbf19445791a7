"""Patch embedding and the mixer-layer stack.

Three backbone flavors: vanilla (channels flattened into the patch vector),
channel-independent (one weight set broadcast over channels), and
inter-channel (adds a channel-mixing block per layer). Every mixer block is
pre-norm residual: layernorm -> MLP over the target axis -> optional gated
attention over the hidden-feature axis -> residual add.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .errors import ConfigError, ShapeError
from .optim import Linear, Module

VARIANTS = ("V", "CI", "IC")


@dataclass
class BackboneConfig:
    variant: str
    nl: int
    pl: int
    n: int
    c: int
    fs: int = 2
    hf: int = None
    ef: int = None
    do: float = 0.1
    gated: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown backbone variant {self.variant!r}")
        if self.hf is None:
            self.hf = self.fs * self.pl
        if self.ef is None:
            self.ef = self.fs * self.hf

    @property
    def embed_dim(self):
        # V flattens all channels into one patch vector
        return self.c * self.pl if self.variant == "V" else self.pl

    @property
    def inner_channels(self):
        return 1 if self.variant == "V" else self.c


class MlpBlock(Module):
    """linear in->ef, GELU, dropout, linear ef->in, dropout."""

    def __init__(self, dim, ef, do, rng, name):
        self.fc1 = Linear(dim, ef, rng, name=f"{name}.fc1")
        self.fc2 = Linear(ef, dim, rng, name=f"{name}.fc2")
        self.do = do

    def __call__(self, x, rng, training):
        h = ad.gelu(self.fc1(x))
        h = ad.dropout(h, self.do, rng, training)
        h = self.fc2(h)
        return ad.dropout(h, self.do, rng, training)


class GatedAttention(Module):
    """Elementwise gate: x * softmax(affine(x)) over the last (feature) axis."""

    def __init__(self, hf, rng, name):
        self.proj = Linear(hf, hf, rng, name=f"{name}.proj")

    def __call__(self, x):
        return x * ad.softmax(self.proj(x), axis=-1)


class MixerBlock(Module):
    """One mixing direction: 'patch' (over n), 'feature' (over hf), 'channel' (over c)."""

    def __init__(self, mix, cfg, rng, name):
        self.mix = mix
        dim = {"patch": cfg.n, "feature": cfg.hf, "channel": cfg.inner_channels}[mix]
        self.norm_scale = Parameter(np.ones((cfg.n, cfg.hf)), f"{name}.norm.scale")
        self.norm_shift = Parameter(np.zeros((cfg.n, cfg.hf)), f"{name}.norm.shift")
        self.mlp = MlpBlock(dim, cfg.ef, cfg.do, rng, name=f"{name}.mlp")
        self.gate = GatedAttention(cfg.hf, rng, name=f"{name}.gate") if cfg.gated else None

    def __call__(self, x, rng, training):
        y = ad.layernorm(x, norm_axes=2) * self.norm_scale + self.norm_shift
        if self.mix == "patch":
            y = y.transpose(0, 1, 3, 2)  # b c hf n
            y = self.mlp(y, rng, training)
            y = y.transpose(0, 1, 3, 2)
        elif self.mix == "feature":
            y = self.mlp(y, rng, training)
        else:  # channel
            y = y.transpose(0, 2, 3, 1)  # b n hf c
            y = self.mlp(y, rng, training)
            y = y.transpose(0, 3, 1, 2)
        if self.gate is not None:
            y = self.gate(y)
        return x + y


class MixerLayer(Module):
    def __init__(self, cfg, rng, name):
        self.blocks = [
            MixerBlock("patch", cfg, rng, name=f"{name}.patch"),
            MixerBlock("feature", cfg, rng, name=f"{name}.feature"),
        ]
        if cfg.variant == "IC":
            self.blocks.append(MixerBlock("channel", cfg, rng, name=f"{name}.channel"))

    def __call__(self, x, rng, training):
        for block in self.blocks:
            x = block(x, rng, training)
        return x


class Backbone(Module):
    """embed + nl mixer layers; output is b x inner_channels x n x hf."""

    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.embed = Linear(cfg.embed_dim, cfg.hf, rng, name="embed")
        self.layers = [MixerLayer(cfg, rng, name=f"layer{i}") for i in range(cfg.nl)]

    def __call__(self, patches, rng, training=False):
        """patches: b x c x n x pl array (or Tensor for gradient checks)."""
        cfg = self.cfg
        x = patches if isinstance(patches, Tensor) else Tensor(patches)
        if x.shape[1:] != (cfg.c, cfg.n, cfg.pl):
            raise ShapeError(f"patch dims {x.shape[1:]} do not match config (c,n,pl)=({cfg.c},{cfg.n},{cfg.pl})")
        if cfg.variant == "V":
            x = x.transpose(0, 2, 1, 3).reshape((x.shape[0], 1, cfg.n, cfg.c * cfg.pl))
        x = self.embed(x)
        for layer in self.layers:
            x = layer(x, rng, training)
        return x

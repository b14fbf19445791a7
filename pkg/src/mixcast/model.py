"""Full forecasting / reconstruction model and checkpoint serialization."""

import hashlib
import json
import struct

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .backbone import Backbone, BackboneConfig
from .data import mask_patches, patch, revin_denormalize, revin_normalize
from .errors import ConfigError, ShapeError
from .heads import CrossChannelHead, FlattenHead, HierarchyHead, hier_loss, masked_mse
from .optim import Module

CHECKPOINT_MAGIC = b"MIXCAST1"


class ForecastModel(Module):
    """Backbone + task head (+ optional reconciliation heads).

    mode "predict": window -> instance-norm -> patch -> backbone -> forecast
    head -> optional hierarchy and cross-channel reconciliation -> inverse
    instance-norm. mode "pretrain": patches are randomly masked and the head
    reconstructs the full normalized window.
    """

    def __init__(self, spec, cfg, c, seed=42, mode="predict"):
        if mode not in ("predict", "pretrain"):
            raise ConfigError(f"unknown model mode {mode!r}")
        spec.validate()
        cfg.validate(spec, pretrain=(mode == "pretrain"))
        self.spec = spec
        self.cfg = cfg
        self.c = c
        self.mode = mode
        self.seed = seed
        init_rng = np.random.default_rng(seed)
        self.dropout_rng = np.random.default_rng(seed + 1)
        self.mask_rng = np.random.default_rng(seed + 2)

        bcfg = BackboneConfig(
            variant=spec.backbone, nl=cfg.nl, pl=cfg.pl, n=cfg.n, c=c,
            fs=cfg.fs, hf=cfg.hf, ef=cfg.ef, do=cfg.do, gated=spec.gated,
        )
        self.backbone = Backbone(bcfg, init_rng)
        out_len = cfg.fl if mode == "predict" else cfg.sl
        self.head = FlattenHead(
            cfg.n, cfg.hf, out_len, c, cfg.do, init_rng,
            flattened_channels=(spec.backbone == "V"),
        )
        self.hier = None
        self.cc = None
        if mode == "predict":
            if spec.hierarchy:
                self.hier = HierarchyHead(cfg.fl, cfg.pl, init_rng)
            if spec.cross_channel:
                self.cc = CrossChannelHead(c, cfg.cl, init_rng)

    # -- forward passes -------------------------------------------------

    def forward(self, inputs, training=False):
        """inputs: b x sl x c array. Returns dict with the denormalized
        forecast and (when the hierarchy head is active) the denormalized
        patch-aggregate forecast."""
        if self.mode != "predict":
            raise ConfigError("forward() is the prediction flow; use forward_pretrain()")
        if inputs.shape[1] != self.cfg.sl or inputs.shape[2] != self.c:
            raise ShapeError(f"expected b x {self.cfg.sl} x {self.c} inputs, got {inputs.shape}")
        norm, stats = revin_normalize(inputs)
        pb = patch(norm, self.cfg.pl, self.cfg.s)
        z = self.backbone(pb.patches, self.dropout_rng, training)
        yhat = self.head(z, self.dropout_rng, training)  # normalized space
        hhat = None
        if self.hier is not None:
            yhat, hhat = self.hier(yhat)
        if self.cc is not None:
            yhat = self.cc(yhat)
        forecast = yhat * Tensor(stats.std) + Tensor(stats.mean)
        out = {"forecast": forecast, "stats": stats, "hhat": None}
        if hhat is not None:
            # aggregate of pl denormalized points: std*sum(normalized) + pl*mean
            std_t = np.transpose(stats.std, (0, 2, 1))  # b x c x 1
            mean_t = np.transpose(stats.mean, (0, 2, 1))
            out["hhat"] = hhat * Tensor(std_t) + Tensor(self.cfg.pl * mean_t)
        return out

    def loss(self, out, targets):
        """Training objective: plain MSE, or the hierarchy objective when
        the hierarchy head is active. Returns (scalar Tensor, loss tag)."""
        if out["hhat"] is not None:
            return hier_loss(targets, out["forecast"], out["hhat"], self.cfg.pl), "hier"
        return ad.mse(out["forecast"], Tensor(np.asarray(targets))), "mse"

    def predict(self, inputs):
        with ad.no_grad():
            return self.forward(inputs, training=False)["forecast"].data

    def forward_pretrain(self, inputs, training=False):
        """Masked-reconstruction flow; loss is computed in normalized space."""
        if self.mode != "pretrain":
            raise ConfigError("forward_pretrain() requires a pretrain-mode model")
        norm, stats = revin_normalize(inputs)
        pb = patch(norm, self.cfg.pl, self.cfg.s)
        masked = mask_patches(pb, self.cfg.mask_ratio, self.mask_rng)
        z = self.backbone(masked.patches, self.dropout_rng, training)
        xhat = self.head(z, self.dropout_rng, training)  # b x sl x c normalized
        return {"reconstruction": xhat, "target": norm, "mask": masked.mask, "stats": stats}

    def pretrain_loss(self, out):
        return masked_mse(out["target"], out["reconstruction"], out["mask"], self.cfg.pl)

    # -- state ----------------------------------------------------------

    def component_names(self):
        parts = {"backbone": self.backbone, "head": self.head}
        if self.hier is not None:
            parts["hier"] = self.hier
        if self.cc is not None:
            parts["cc"] = self.cc
        return parts

    def state_items(self):
        return self.named_parameters()

    def load_state(self, arrays, prefix=""):
        loaded = 0
        for name, p in self.named_parameters():
            key = prefix + name
            if key in arrays:
                arr = np.asarray(arrays[key], dtype=np.float64)
                if arr.shape != p.data.shape:
                    raise ConfigError(f"checkpoint shape mismatch for {key}: {arr.shape} vs {p.data.shape}")
                p.data[...] = arr
                loaded += 1
        return loaded


def state_hash(module):
    h = hashlib.sha256()
    for name, p in module.named_parameters():
        h.update(name.encode())
        h.update(p.data.tobytes())
    return h.hexdigest()


def clone_state(module):
    return {name: p.data.copy() for name, p in module.named_parameters()}


def restore_state(module, state):
    for name, p in module.named_parameters():
        p.data[...] = state[name]


# -- checkpoint format: magic, manifest length, JSON manifest, raw values --


def save_checkpoint(path, named_params, manifest_config, dtype="float32"):
    entries = []
    blobs = []
    offset = 0
    for name, p in named_params:
        arr = np.ascontiguousarray(p.data, dtype=dtype)
        entries.append({"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    manifest = {"format": 1, "config": manifest_config, "params": entries}
    mbytes = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(mbytes)))
        fh.write(mbytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ConfigError(f"{path}: not a checkpoint file")
        (mlen,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(mlen).decode())
        body = fh.read()
    arrays = {}
    for entry in manifest["params"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        lo = entry["offset"]
        arrays[entry["name"]] = np.frombuffer(
            body, dtype=dt, count=count, offset=lo
        ).reshape(entry["shape"]).copy()
    return manifest, arrays

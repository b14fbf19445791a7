"""Training loops: supervised, masked pretraining, probe-then-finetune,
multi-seed evaluation, early stopping, and patch-embedding export."""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import no_grad
from .data import patch, revin_normalize
from .errors import ConfigError, DataError, DivergenceError
from .model import ForecastModel, clone_state, restore_state, save_checkpoint
from .optim import Adam

_VAL_MASK_SEED = 987654321


@dataclass
class SeedResult:
    seed: int
    train_curve: list
    val_curve: list
    best_epoch: int
    stopped_epoch: int
    test_mse: float
    test_mae: float
    loss_tag: str

    def as_dict(self):
        return asdict(self)


@dataclass
class RunReport:
    results: list
    mse_mean: float
    mse_std: float
    mae_mean: float
    mae_std: float
    loss_tag: str
    config: dict = field(default_factory=dict)
    profile: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    @classmethod
    def from_results(cls, results, config=None, profile=None, notes=None):
        mses = np.array([r.test_mse for r in results])
        maes = np.array([r.test_mae for r in results])
        return cls(
            results=results,
            mse_mean=float(mses.mean()),
            mse_std=float(mses.std()),
            mae_mean=float(maes.mean()),
            mae_std=float(maes.std()),
            loss_tag=results[0].loss_tag,
            config=config or {},
            profile=profile or {},
            notes=notes or {},
        )

    def as_dict(self):
        d = asdict(self)
        d["results"] = [r.as_dict() for r in self.results]
        return d

    def to_json(self, path=None):
        text = json.dumps({"schema": 1, **self.as_dict()}, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _epoch_pass(model, dataset, plan, optimizer, rng, epoch, pretrain):
    total, count = 0.0, 0
    for batch in dataset.batches(plan.batch_size, shuffle=plan.shuffle, rng=rng):
        if pretrain:
            out = model.forward_pretrain(batch.inputs, training=True)
            loss = model.pretrain_loss(out)
        else:
            out = model.forward(batch.inputs, training=True)
            loss, _ = model.loss(out, batch.targets)
        if not np.isfinite(loss.data):
            raise DivergenceError(epoch)
        model.zero_grad()
        ad.backward(loss)
        optimizer.step()
        total += float(loss.data) * batch.inputs.shape[0]
        count += batch.inputs.shape[0]
    return total / max(count, 1)


def validation_loss(model, dataset, plan, pretrain=False):
    """Validation uses the training objective so model selection and
    optimization agree. The pretrain flow re-seeds the mask generator so
    every evaluation sees the same masks."""
    total, count = 0.0, 0
    if pretrain:
        saved_rng = model.mask_rng
        model.mask_rng = np.random.default_rng(_VAL_MASK_SEED)
    try:
        with no_grad():
            for batch in dataset.batches(plan.batch_size):
                if pretrain:
                    out = model.forward_pretrain(batch.inputs, training=False)
                    loss = model.pretrain_loss(out)
                else:
                    out = model.forward(batch.inputs, training=False)
                    loss, _ = model.loss(out, batch.targets)
                total += float(loss.data) * batch.inputs.shape[0]
                count += batch.inputs.shape[0]
    finally:
        if pretrain:
            model.mask_rng = saved_rng
    if count == 0:
        raise DataError("validation stream is empty")
    return total / count


def _fit(model, train_ds, val_ds, plan, optimizer_params, seed, pretrain=False, probe_epochs=0, on_probe_end=None):
    """Shared loop: early stopping on validation loss, best-state restore.

    ``optimizer_params`` is the initial trainable set; when ``probe_epochs``
    is positive, ``on_probe_end`` supplies the full set afterwards.
    """
    shuffle_rng = np.random.default_rng(seed)
    optimizer = Adam(optimizer_params, lr=plan.lr)
    train_curve, val_curve = [], []
    best_val = np.inf
    best_state = clone_state(model)
    best_epoch = -1
    plateau_wait = 0
    epoch = -1
    for epoch in range(plan.epochs):
        if probe_epochs and epoch == probe_epochs:
            optimizer = Adam(on_probe_end(), lr=optimizer.lr)
        train_loss = _epoch_pass(model, train_ds, plan, optimizer, shuffle_rng, epoch, pretrain)
        val_loss = validation_loss(model, val_ds, plan, pretrain=pretrain)
        train_curve.append(train_loss)
        val_curve.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_state = clone_state(model)
            best_epoch = epoch
            plateau_wait = 0
        else:
            plateau_wait += 1
            if plan.lr_plateau and plateau_wait % 3 == 0:
                optimizer.lr *= 0.5
        if epoch - best_epoch >= plan.patience:
            break
    restore_state(model, best_state)
    return train_curve, val_curve, best_epoch, epoch


def evaluate(model, dataset, batch_size=64):
    """(MSE, MAE) over all test windows and channels, standardized scale."""
    if len(dataset) == 0:
        raise DataError("evaluation stream is empty")
    se, ae, count = 0.0, 0.0, 0
    for batch in dataset.batches(batch_size):
        pred = model.predict(batch.inputs)
        err = pred - batch.targets
        se += float(np.sum(err * err))
        ae += float(np.sum(np.abs(err)))
        count += err.size
    return se / count, ae / count


def train_supervised(spec, cfg, train_ds, val_ds, test_ds, plan, seed):
    model = ForecastModel(spec, cfg, c=train_ds.segment.num_channels, seed=seed, mode="predict")
    tc, vc, best, stopped = _fit(model, train_ds, val_ds, plan, model.parameters(), seed)
    mse, mae = evaluate(model, test_ds)
    tag = "hier" if spec.hierarchy else "mse"
    return model, SeedResult(seed, tc, vc, best, stopped, mse, mae, tag)


def pretrain_mtsm(spec, cfg, train_ds, val_ds, plan, seed, checkpoint_path=None):
    """Masked-reconstruction pretraining; saves a backbone-only checkpoint."""
    cfg.validate(spec, pretrain=True)
    model = ForecastModel(spec, cfg, c=train_ds.segment.num_channels, seed=seed, mode="pretrain")
    tc, vc, best, stopped = _fit(model, train_ds, val_ds, plan, model.parameters(), seed, pretrain=True)
    if checkpoint_path is not None:
        backbone_params = [(n, p) for n, p in model.named_parameters() if n.startswith("backbone.")]
        save_checkpoint(
            checkpoint_path,
            backbone_params,
            manifest_config={
                "variant": spec.canonical(),
                "scope": "backbone",
                "sl": cfg.sl, "pl": cfg.pl, "s": cfg.s, "nl": cfg.nl,
                "fs": cfg.fs, "hf": cfg.hf, "ef": cfg.ef,
                "channels": train_ds.segment.num_channels,
                "mask_ratio": cfg.mask_ratio,
            },
        )
    return model, SeedResult(seed, tc, vc, best, stopped, float("nan"), float("nan"), "masked_mse")


def finetune(spec, cfg, backbone_arrays, backbone_manifest, train_ds, val_ds, test_ds, plan, seed):
    """Linear probe (frozen backbone) for plan.probe_epochs, then full finetune."""
    c = train_ds.segment.num_channels
    mcfg = backbone_manifest.get("config", {})
    if mcfg.get("scope") != "backbone":
        raise ConfigError("checkpoint does not contain a backbone-only parameter set")
    ck_variant = mcfg.get("variant", "")
    if ck_variant.startswith("V-") and mcfg.get("channels") != c:
        raise ConfigError(
            f"vanilla backbone was trained on {mcfg.get('channels')} channels and cannot be reused on {c}"
        )
    for key in ("pl", "nl", "hf", "ef"):
        if key in mcfg and mcfg[key] != getattr(cfg, key):
            raise ConfigError(f"checkpoint {key}={mcfg[key]} incompatible with config {key}={getattr(cfg, key)}")
    model = ForecastModel(spec, cfg, c=c, seed=seed, mode="predict")
    loaded = model.load_state(backbone_arrays)
    if loaded == 0:
        raise ConfigError("no backbone parameters matched the model")

    backbone_params = set(id(p) for p in model.backbone.parameters())
    head_params = [p for p in model.parameters() if id(p) not in backbone_params]

    def unfreeze():
        for p in model.backbone.parameters():
            p.requires_grad = True
        return model.parameters()

    probe = plan.probe_epochs
    if probe > 0:
        for p in model.backbone.parameters():
            p.requires_grad = False
        initial = head_params
    else:
        initial = model.parameters()
    tc, vc, best, stopped = _fit(
        model, train_ds, val_ds, plan, initial, seed,
        probe_epochs=probe, on_probe_end=unfreeze,
    )
    unfreeze()
    mse, mae = evaluate(model, test_ds)
    tag = "hier" if spec.hierarchy else "mse"
    return model, SeedResult(seed, tc, vc, best, stopped, mse, mae, tag)


def run_seeds(run_one, seeds, config=None, profile=None, notes=None):
    """Execute one training run per seed and aggregate mean/std metrics."""
    results = [run_one(seed)[1] for seed in seeds]
    return RunReport.from_results(results, config=config, profile=profile, notes=notes)


def epochs_to_threshold(model, train_ds, plan, threshold, seed=0):
    """Epochs until the epoch-mean training loss drops below threshold,
    or None within the plan's budget. Used by the desk-scale pairing checks."""
    rng = np.random.default_rng(seed)
    optimizer = Adam([p for p in model.parameters() if p.requires_grad], lr=plan.lr)
    for epoch in range(plan.epochs):
        loss = _epoch_pass(model, train_ds, plan, optimizer, rng, epoch, pretrain=False)
        if loss < threshold:
            return epoch + 1
    return None


def export_embeddings(model, dataset, num_anchors=5, k=50, rng=None, max_windows=64):
    """Sample anchor patch embeddings and their Euclidean nearest neighbors.

    Returns a list of rows (anchor_id, neighbor_rank, distance, patch values);
    rank 0 is the anchor itself. Self-matches are excluded from neighbors.
    """
    rng = rng or np.random.default_rng(0)
    cfg = model.cfg
    embeddings, patch_values = [], []
    with no_grad():
        for wi in range(min(len(dataset), max_windows)):
            x, _ = dataset.window(wi)
            norm, _ = revin_normalize(x[None])
            pb = patch(norm, cfg.pl, cfg.s)
            z = model.backbone(pb.patches, model.dropout_rng, training=False).data
            b, c, n, hf = z.shape
            embeddings.append(z.reshape(c * n, hf))
            patch_values.append(pb.patches.reshape(c * n, cfg.pl))
    if not embeddings:
        raise DataError("no windows available for embedding export")
    emb = np.concatenate(embeddings)
    vals = np.concatenate(patch_values)
    total = emb.shape[0]
    k = min(k, total - 1)
    anchors = rng.choice(total, size=min(num_anchors, total), replace=False)
    rows = []
    for aid, a in enumerate(anchors):
        d = np.sqrt(((emb - emb[a]) ** 2).sum(axis=1))
        d[a] = np.inf  # exclude self
        order = np.argsort(d)[:k]
        rows.append({"anchor_id": aid, "neighbor_rank": 0, "distance": 0.0, "patch": vals[a].tolist()})
        for rank, j in enumerate(order, start=1):
            rows.append({"anchor_id": aid, "neighbor_rank": rank, "distance": float(d[j]), "patch": vals[j].tolist()})
    return rows

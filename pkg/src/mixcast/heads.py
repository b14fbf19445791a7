"""Forecast / reconstruction heads, reconciliation heads, and loss functions."""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .optim import Linear, Module


class FlattenHead(Module):
    """Flatten the per-channel n x hf map, dropout, one affine to out_len.

    Channel-shared for CI/IC. The vanilla backbone has a single flattened
    channel internally, so its head maps straight to out_len * c and the
    output is unfolded back to per-channel series.
    """

    def __init__(self, n, hf, out_len, c, do, rng, flattened_channels=False, name="head"):
        self.out_len = out_len
        self.c = c
        self.do = do
        self.flattened_channels = flattened_channels
        width = out_len * c if flattened_channels else out_len
        self.proj = Linear(n * hf, width, rng, name=f"{name}.proj")

    def __call__(self, z, rng, training=False):
        b, c_in, n, hf = z.shape
        flat = z.reshape((b, c_in, n * hf))
        flat = ad.dropout(flat, self.do, rng, training)
        out = self.proj(flat)  # b x c_in x width
        if self.flattened_channels:
            out = out.reshape((b, self.out_len, self.c))
            return out
        return out.transpose(0, 2, 1)  # b x out_len x c


class CrossChannelHead(Module):
    """Reconcile each forecast point against all channels in a +-cl context.

    Every time step t gathers [t-cl, t+cl] (edge-replicated) across all c
    channels into a d = c*(2cl+1) vector, gates it with softmax attention,
    and maps it to a per-channel correction added residually.
    """

    def __init__(self, c, cl, rng, name="cc"):
        self.c = c
        self.cl = cl
        self.spl = 2 * cl + 1
        d = c * self.spl
        self.gate_proj = Linear(d, d, rng, name=f"{name}.gate")
        self.out_proj = Linear(d, c, rng, name=f"{name}.out")

    def __call__(self, yhat):
        b, fl, c = yhat.shape
        if c != self.c:
            raise ShapeError(f"cross-channel head built for {self.c} channels, got {c}")
        cl = self.cl
        pieces = [yhat[:, :1, :]] * cl + [yhat] + [yhat[:, fl - 1 :, :]] * cl
        padded = ad.concat(pieces, axis=1)  # b x (fl+2cl) x c
        windows = [padded[:, k : k + fl, :] for k in range(self.spl)]
        ctx = ad.concat(windows, axis=2)  # b x fl x (spl*c)
        gated = ctx * ad.softmax(self.gate_proj(ctx), axis=-1)
        return yhat + self.out_proj(gated)


class HierarchyHead(Module):
    """Patch-aggregate forecaster plus per-patch reconciliation.

    The base forecast predicts its own patch aggregates through an affine
    fl -> op map; each length-pl forecast patch is then revised from
    [patch values, its aggregate] through an affine (pl+1) -> pl map,
    residually.
    """

    def __init__(self, fl, pl, rng, name="hier"):
        if fl % pl != 0:
            raise ConfigError(f"hierarchy head needs fl divisible by pl, got fl={fl}, pl={pl}")
        self.fl = fl
        self.pl = pl
        self.op = fl // pl
        self.agg_proj = Linear(fl, self.op, rng, name=f"{name}.agg")
        self.rec_proj = Linear(pl + 1, pl, rng, name=f"{name}.rec")

    def __call__(self, yhat):
        b, fl, c = yhat.shape
        ych = yhat.transpose(0, 2, 1)  # b x c x fl
        hhat = self.agg_proj(ych)  # b x c x op
        ypatch = ych.reshape((b, c, self.op, self.pl))
        joined = ad.concat([ypatch, hhat.reshape((b, c, self.op, 1))], axis=3)
        rec = ypatch + self.rec_proj(joined)
        yrec = rec.reshape((b, c, fl)).transpose(0, 2, 1)
        return yrec, hhat


def bu_aggregate(y, pl):
    """Bottom-up patch aggregation: sum each length-pl patch. b x fl x c -> b x c x op."""
    b, fl, c = y.shape
    if fl % pl != 0:
        raise ShapeError(f"bottom-up aggregation needs fl divisible by pl, got fl={fl}, pl={pl}")
    op = fl // pl
    if isinstance(y, Tensor):
        return y.transpose(0, 2, 1).reshape((b, c, op, pl)).sum(axis=3)
    return np.asarray(y).transpose(0, 2, 1).reshape(b, c, op, pl).sum(axis=3)


def hier_loss(y, yrec, hhat, pl):
    """Three-term patch-hierarchy objective with scale factor pl**2.

    MSE at the granular level, plus MSE of the aggregate forecast against
    the aggregated ground truth, plus a consistency MSE between the
    bottom-up aggregate of the reconciled forecast and the aggregate
    forecast, the latter two scaled down by 1/pl**2 (the factor that
    renormalizes an MSE of pl-term sums).
    """
    sf = float(pl * pl)
    h_true = bu_aggregate(np.asarray(y), pl)
    term_agg = ad.mse(hhat, Tensor(h_true))
    term_base = ad.mse(yrec, Tensor(np.asarray(y)))
    # both sides of the consistency term carry gradient
    cdiff = bu_aggregate(yrec, pl) - hhat
    term_consistency = ad.mean(cdiff * cdiff)
    return term_base + (term_agg + term_consistency) * (1.0 / sf)


def masked_mse(x, xhat, mask, pl):
    """MSE over timesteps belonging to masked patches only.

    mask is b x c x n; patches are non-overlapping (stride == pl), so each
    timestep belongs to exactly one patch.
    """
    b, sl, c = xhat.shape
    n = mask.shape[2]
    if n * pl != sl:
        raise ShapeError(f"mask covers {n * pl} timesteps but series has {sl}")
    if not mask.any():
        raise ConfigError("masked loss needs at least one masked patch")
    step_mask = np.repeat(mask, pl, axis=2)  # b x c x sl
    step_mask = np.transpose(step_mask, (0, 2, 1)).astype(np.float64)  # b x sl x c
    diff = xhat - Tensor(np.asarray(x))
    masked_sq = diff * diff * Tensor(step_mask)
    return masked_sq.sum() * (1.0 / step_mask.sum())

"""Analytic parameter / multiply-add accounting plus measured epoch cost.

MAC convention (printed in every report): forward pass only; one affine map
of in -> out applied to T token rows counts T*in*out multiply-adds;
normalization, softmax, and other elementwise work are excluded. Peak memory
is tracked at the tensor-allocator level, not process RSS.
"""

import time
from dataclasses import dataclass, field, asdict

from .autodiff import alloc_tracker

MAC_CONVENTION = "forward-only; affine in->out on T rows = T*in*out; elementwise/softmax/layernorm excluded"


@dataclass
class CostReport:
    nparams: int
    macs_per_epoch: int
    epoch_time_sec: float | None = None
    peak_bytes: int | None = None
    nparams_breakdown: dict = field(default_factory=dict)
    mac_convention: str = MAC_CONVENTION

    def as_dict(self):
        return asdict(self)


def count_params(model):
    """Total parameter elements and a per-component breakdown."""
    breakdown = {
        name: sum(p.size for p in comp.parameters())
        for name, comp in model.component_names().items()
    }
    return sum(breakdown.values()), breakdown


def macs_per_window(model):
    """Forward multiply-adds for one input window."""
    cfg = model.cfg
    bb = model.backbone.cfg
    ic, n, hf, ef = bb.inner_channels, bb.n, bb.hf, bb.ef
    total = ic * n * bb.embed_dim * hf  # patch embedding
    per_layer = ic * 2 * n * ef * hf  # inter-patch MLP (tokens=hf rows per channel)
    per_layer += ic * n * 2 * hf * ef  # intra-patch MLP
    blocks = 2
    if bb.variant == "IC":
        per_layer += n * hf * 2 * bb.c * ef  # inter-channel MLP
        blocks = 3
    if bb.gated:
        per_layer += blocks * ic * n * hf * hf  # gating affine per block
    total += bb.nl * per_layer
    out_len = cfg.fl if model.mode == "predict" else cfg.sl
    total += model.c * n * hf * out_len  # head (V maps to out_len*c on one channel)
    if model.hier is not None:
        op = cfg.fl // cfg.pl
        total += model.c * (cfg.fl * op + op * (cfg.pl + 1) * cfg.pl)
    if model.cc is not None:
        d = model.c * model.cc.spl
        total += cfg.fl * (d * d + d * model.c)
    return total


def count_macs(model, windows_per_epoch):
    """Forward MACs over one full epoch; linear in the window count and
    independent of batch grouping."""
    return macs_per_window(model) * windows_per_epoch


def measure_epoch(run_epoch, repeats=3):
    """Median wall-clock of >=3 timed epochs (one warm-up excluded) and the
    peak live tensor bytes observed during them."""
    run_epoch()  # warm-up
    alloc_tracker.start()
    times = []
    for _ in range(max(repeats, 3)):
        t0 = time.perf_counter()
        run_epoch()
        times.append(time.perf_counter() - t0)
    peak = alloc_tracker.stop()
    times.sort()
    return times[len(times) // 2], peak


def cost_report(model, windows_per_epoch, run_epoch=None, repeats=3):
    nparams, breakdown = count_params(model)
    macs = count_macs(model, windows_per_epoch)
    epoch_time, peak = (None, None)
    if run_epoch is not None:
        epoch_time, peak = measure_epoch(run_epoch, repeats=repeats)
        # parameters stay resident but predate the tracked window
        peak += sum(p.data.nbytes for p in model.parameters())
    return CostReport(
        nparams=nparams,
        macs_per_epoch=macs,
        epoch_time_sec=epoch_time,
        peak_bytes=peak,
        nparams_breakdown=breakdown,
    )

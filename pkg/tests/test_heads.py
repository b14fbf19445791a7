import numpy as np
import pytest

from mixcast.autodiff import Tensor, backward
from mixcast.errors import ConfigError, ShapeError
from mixcast.gradcheck import finite_diff_check
from mixcast.heads import (
    CrossChannelHead,
    FlattenHead,
    HierarchyHead,
    bu_aggregate,
    hier_loss,
    masked_mse,
)

RNG = np.random.default_rng


def test_flatten_head_shape_and_sharing():
    head = FlattenHead(n=5, hf=4, out_len=6, c=3, do=0.0, rng=RNG(0))
    z = RNG(1).normal(size=(2, 3, 5, 4))
    out = head(Tensor(z), RNG(0))
    assert out.shape == (2, 6, 3)
    # channel-shared affine: permuting channels permutes outputs
    perm = [2, 0, 1]
    out_perm = head(Tensor(z[:, perm]), RNG(0))
    assert np.array_equal(out_perm.data, out.data[:, :, perm])


def test_flatten_head_param_count():
    head = FlattenHead(n=63, hf=32, out_len=96, c=321, do=0.1, rng=RNG(0))
    assert sum(p.size for p in head.parameters()) == 63 * 32 * 96 + 96


def test_flatten_head_vanilla_width():
    head = FlattenHead(n=5, hf=4, out_len=6, c=3, do=0.0, rng=RNG(0), flattened_channels=True)
    out = head(Tensor(RNG(1).normal(size=(2, 1, 5, 4))), RNG(0))
    assert out.shape == (2, 6, 3)
    assert head.proj.weight.shape == (20, 18)


def test_cross_channel_zero_params_identity():
    head = CrossChannelHead(c=3, cl=1, rng=RNG(0))
    for p in head.parameters():
        p.data[...] = 0.0
    y = RNG(1).normal(size=(2, 8, 3))
    out = head(Tensor(y)).data
    # softmax gate becomes uniform but out_proj is zero -> pure residual
    assert np.array_equal(out, y)


def test_cross_channel_param_count_formula():
    for c, cl in [(3, 1), (7, 2), (321, 1)]:
        head = CrossChannelHead(c=c, cl=cl, rng=RNG(0))
        d = c * (2 * cl + 1)
        assert sum(p.size for p in head.parameters()) == d * d + d + d * c + c


def test_cross_channel_edge_replication():
    head = CrossChannelHead(c=1, cl=1, rng=RNG(0))
    # constant series: replicated edges keep the context constant too,
    # so every time step sees an identical context vector
    y = np.full((1, 6, 1), 2.0)
    out = head(Tensor(y)).data
    assert np.allclose(out, out[0, 0, 0])


def test_cross_channel_wrong_c_rejected():
    head = CrossChannelHead(c=3, cl=1, rng=RNG(0))
    with pytest.raises(ShapeError):
        head(Tensor(np.zeros((1, 4, 2))))


def test_cross_channel_gradcheck():
    head = CrossChannelHead(c=2, cl=1, rng=RNG(0))
    y = Tensor(RNG(1).normal(size=(2, 4, 2)))
    target = RNG(2).normal(size=(2, 4, 2))
    from mixcast import autodiff as ad

    res = finite_diff_check(lambda: ad.mse(head(y), Tensor(target)), head.parameters())
    assert res.passed, res.max_rel_err


def test_hierarchy_zero_params_identity_forecast():
    head = HierarchyHead(fl=8, pl=4, rng=RNG(0))
    for p in head.parameters():
        p.data[...] = 0.0
    y = RNG(1).normal(size=(2, 8, 3))
    yrec, hhat = head(Tensor(y))
    assert np.array_equal(yrec.data, y)
    assert np.allclose(hhat.data, 0.0)


def test_hierarchy_shapes_and_param_count():
    head = HierarchyHead(fl=96, pl=16, rng=RNG(0))
    y = RNG(1).normal(size=(2, 96, 3))
    yrec, hhat = head(Tensor(y))
    assert yrec.shape == (2, 96, 3) and hhat.shape == (2, 3, 6)
    assert sum(p.size for p in head.parameters()) == 96 * 6 + 6 + 17 * 16 + 16


def test_hierarchy_rejects_indivisible():
    with pytest.raises(ConfigError):
        HierarchyHead(fl=10, pl=4, rng=RNG(0))


def test_bu_aggregate_hand_computed():
    y = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1)
    assert np.array_equal(bu_aggregate(y, 2)[0, 0], [3.0, 7.0])


def test_bu_aggregate_tensor_matches_numpy():
    y = RNG(0).normal(size=(2, 12, 3))
    assert np.allclose(bu_aggregate(Tensor(y), 4).data, bu_aggregate(y, 4))


def test_hier_loss_zero_iff_perfect():
    y = RNG(0).normal(size=(2, 8, 3))
    hhat = Tensor(bu_aggregate(y, 4))
    loss = hier_loss(y, Tensor(y.copy()), hhat, pl=4)
    assert float(loss.data) < 1e-24
    # any perturbation raises it
    loss2 = hier_loss(y, Tensor(y + 0.1), hhat, pl=4)
    assert float(loss2.data) > 1e-4


def test_hier_loss_hand_computed():
    # y = zeros, yrec = zeros, hhat = ones, fl=4, pl=2, c=1, op=2
    # base term 0; agg term mean(1)=1; consistency mean((0-1)^2)=1
    # total = 0 + (1 + 1)/4 = 0.5
    y = np.zeros((1, 4, 1))
    loss = hier_loss(y, Tensor(np.zeros((1, 4, 1))), Tensor(np.ones((1, 1, 2))), pl=2)
    assert np.allclose(float(loss.data), 0.5)


def test_hier_loss_pl1_reduces_weighting():
    # with pl=1 the scale factor is 1 and aggregation is identity
    y = RNG(0).normal(size=(1, 4, 1))
    yrec = Tensor(y + 1.0)
    hhat = Tensor(bu_aggregate(y, 1))
    loss = hier_loss(y, yrec, hhat, pl=1)
    # base term 1, agg term 0, consistency mean(1)=1 -> total 2
    assert np.allclose(float(loss.data), 2.0)


def test_hier_loss_gradient_reaches_hhat():
    y = RNG(0).normal(size=(2, 8, 2))
    yrec = Tensor(RNG(1).normal(size=(2, 8, 2)), requires_grad=True)
    hhat = Tensor(RNG(2).normal(size=(2, 2, 2)), requires_grad=True)
    backward(hier_loss(y, yrec, hhat, pl=4))
    assert hhat.grad is not None and np.abs(hhat.grad).max() > 0
    assert yrec.grad is not None and np.abs(yrec.grad).max() > 0


def test_masked_mse_locality():
    rng = RNG(0)
    x = rng.normal(size=(2, 16, 3))
    mask = np.zeros((2, 3, 4), dtype=bool)
    mask[:, :, 1] = True  # only timesteps 4..7 are scored
    xhat = x.copy()
    xhat[:, 8:, :] += 100.0  # corrupt unmasked region
    loss = masked_mse(x, Tensor(xhat), mask, pl=4)
    assert float(loss.data) < 1e-24
    xhat2 = x.copy()
    xhat2[:, 4:8, :] += 1.0
    loss2 = masked_mse(x, Tensor(xhat2), mask, pl=4)
    assert np.allclose(float(loss2.data), 1.0)


def test_masked_mse_gradient_zero_outside_mask():
    rng = RNG(1)
    x = rng.normal(size=(1, 8, 2))
    mask = np.zeros((1, 2, 2), dtype=bool)
    mask[0, 0, 0] = True
    xhat = Tensor(rng.normal(size=(1, 8, 2)), requires_grad=True)
    backward(masked_mse(x, xhat, mask, pl=4))
    g = xhat.grad
    assert np.abs(g[0, :4, 0]).min() > 0
    g_masked = g.copy()
    g_masked[0, :4, 0] = 0.0
    assert np.abs(g_masked).max() == 0.0


def test_masked_mse_rejects_empty_mask():
    with pytest.raises(ConfigError):
        masked_mse(np.zeros((1, 8, 1)), Tensor(np.zeros((1, 8, 1))), np.zeros((1, 1, 2), bool), pl=4)


def test_masked_mse_rejects_coverage_mismatch():
    with pytest.raises(ShapeError):
        masked_mse(np.zeros((1, 8, 1)), Tensor(np.zeros((1, 8, 1))), np.zeros((1, 1, 3), bool), pl=4)

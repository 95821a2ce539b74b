import math

import numpy as np
import pytest

from growbench.arch import ArchError, ArchSpec, StageSpec, parse_arch
from growbench.data import gen_gaussians
from growbench.netcore import (
    Block,
    BlockKind,
    OptState,
    accuracy,
    build_network,
    forward,
    loss_and_grads,
    lr_at,
    sgd_step,
)


def small_arch(family="res", widths=(6, 6), blocks=(2, 1), input_dim=5, classes=3):
    stages = tuple(StageSpec(w, b) for w, b in zip(widths, blocks))
    return ArchSpec(family, stages, input_dim, classes)


def flatten_params(net):
    return np.concatenate([w.ravel() for _, w, b in net.iter_params() for w in (w, b)])


def flatten_grads(net, grads):
    parts = []
    for gst in grads.stages:
        for g in gst:
            parts.extend([g.weight.ravel(), g.bias.ravel()])
    parts.extend([grads.classifier.weight.ravel(), grads.classifier.bias.ravel()])
    return np.concatenate(parts)


def numeric_grads(net, feats, labels, eps=1e-5):
    """Central finite differences over every parameter, in place."""
    def loss():
        l, _ = loss_and_grads(net, feats, labels)
        return l

    out = []
    for _, w, b in net.iter_params():
        for arr in (w, b):
            g = np.zeros_like(arr)
            flat = arr.ravel()
            gflat = g.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                lp = loss()
                flat[i] = orig - eps
                lm = loss()
                flat[i] = orig
                gflat[i] = (lp - lm) / (2 * eps)
            out.append(g.ravel())
    return np.concatenate(out)


def max_rel_err(a, b, floor=1e-3):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


# --- build_network ----------------------------------------------------------

def test_build_deterministic_for_fixed_seed():
    a = build_network(small_arch(), 7)
    b = build_network(small_arch(), 7)
    assert flatten_params(a).tobytes() == flatten_params(b).tobytes()


def test_build_differs_across_seeds():
    a = build_network(small_arch(), 7)
    b = build_network(small_arch(), 8)
    assert flatten_params(a).tobytes() != flatten_params(b).tobytes()


def test_first_block_shape_maps_input_dim():
    arch = ArchSpec("plain", (StageSpec(8, 1),), input_dim=5, num_classes=3)
    net = build_network(arch, 0)
    assert net.stages[0].blocks[0].weight.shape == (8, 5)
    assert net.stages[0].blocks[0].kind is BlockKind.DOWNSAMPLE


def test_he_std_formula_and_sample():
    assert math.sqrt(2 / 50) == 0.2
    arch = ArchSpec("plain", (StageSpec(50, 2),), input_dim=50, num_classes=2)
    net = build_network(arch, 3)
    w = net.stages[0].blocks[1].weight  # square 50x50, in_width 50
    assert abs(w.std() - 0.2) < 0.015
    assert not net.stages[0].blocks[0].bias.any()


def test_build_rejects_bad_arch():
    with pytest.raises(ArchError):
        ArchSpec("res", (StageSpec(0, 1),), 4, 2)
    with pytest.raises(ArchError):
        ArchSpec("res", (StageSpec(4, 0),), 4, 2)
    with pytest.raises(ArchError):
        ArchSpec("res", (), 4, 2)


def test_parse_arch_round_trip():
    spec = parse_arch("res:64x2-64x2-64x2-64x2", 32, 10)
    assert spec.family == "res"
    assert spec.widths == (64, 64, 64, 64)
    assert spec.blocks_per_stage == (2, 2, 2, 2)
    assert spec.arch_string() == "res:64x2-64x2-64x2-64x2"
    with pytest.raises(ArchError):
        parse_arch("res:64x2-", 32, 10)
    with pytest.raises(ArchError):
        parse_arch("dense:64x2", 32, 10)


# --- forward ----------------------------------------------------------------

def test_residual_zero_block_is_identity():
    blk = Block(BlockKind.RESIDUAL, np.zeros((5, 5)), np.zeros(5))
    net = build_network(small_arch(widths=(5,), blocks=(1,), input_dim=5), 0)
    net.stages[0].blocks[0] = blk
    net.clf_weight = np.eye(3, 5)
    net.clf_bias = np.zeros(3)
    x = np.arange(10, dtype=float).reshape(2, 5)
    np.testing.assert_array_equal(forward(net, x), x[:, :3])


def test_forward_batch_independence():
    net = build_network(small_arch(), 11)
    rng = np.random.default_rng(1)
    big = rng.normal(size=(32, 5))
    row = big[17:18]
    np.testing.assert_allclose(forward(net, row)[0], forward(net, big)[17], rtol=0, atol=1e-12)


def test_forward_finite_on_random_inputs():
    net = build_network(small_arch(widths=(16, 16), blocks=(3, 3), input_dim=8), 2)
    x = np.random.default_rng(5).normal(size=(64, 8))
    assert np.isfinite(forward(net, x)).all()


def test_forward_rejects_dim_mismatch():
    net = build_network(small_arch(), 0)
    with pytest.raises(ValueError):
        forward(net, np.zeros((2, 4)))


# --- loss_and_grads ---------------------------------------------------------

def test_uniform_logits_loss_is_log_k():
    arch = ArchSpec("res", (StageSpec(6, 1),), input_dim=6, num_classes=10)
    net = build_network(arch, 0)
    net.clf_weight[:] = 0.0
    net.clf_bias[:] = 0.0
    loss, _ = loss_and_grads(net, np.random.default_rng(0).normal(size=(4, 6)),
                             np.array([0, 3, 9, 5]))
    assert loss == pytest.approx(math.log(10), abs=1e-12)


def test_label_out_of_range_rejected():
    net = build_network(small_arch(), 0)
    x = np.zeros((2, 5))
    with pytest.raises(ValueError):
        loss_and_grads(net, x, np.array([0, 3]))
    with pytest.raises(ValueError):
        loss_and_grads(net, x, np.array([-1, 0]))


def test_grads_match_finite_differences_two_stage():
    # 2 stages, 3 blocks total, 4-sample batch
    arch = small_arch(family="res", widths=(6, 6), blocks=(2, 1), input_dim=5, classes=3)
    net = build_network(arch, 13)
    rng = np.random.default_rng(4)
    feats = rng.normal(size=(4, 5))
    labels = rng.integers(0, 3, size=4)
    _, grads = loss_and_grads(net, feats, labels)
    analytic = flatten_grads(net, grads)
    numeric = numeric_grads(net, feats, labels)
    assert max_rel_err(analytic, numeric) < 1e-5


def test_grads_match_finite_differences_plain_family():
    arch = small_arch(family="plain", widths=(7, 4), blocks=(2, 2), input_dim=6, classes=4)
    net = build_network(arch, 21)
    rng = np.random.default_rng(9)
    feats = rng.normal(size=(5, 6))
    labels = rng.integers(0, 4, size=5)
    _, grads = loss_and_grads(net, feats, labels)
    assert max_rel_err(flatten_grads(net, grads), numeric_grads(net, feats, labels)) < 1e-5


def test_zero_residual_net_classifier_grads_equal_softmax_regression():
    # with all block weights zero, residual stages pass features through
    arch = ArchSpec("res", (StageSpec(5, 2),), input_dim=5, num_classes=3)
    net = build_network(arch, 1)
    for blk in net.stages[0].blocks:
        blk.weight[:] = 0.0
        blk.bias[:] = 0.0
    rng = np.random.default_rng(2)
    feats = rng.normal(size=(6, 5))
    labels = rng.integers(0, 3, size=6)
    _, grads = loss_and_grads(net, feats, labels)

    # closed-form softmax regression gradient on raw features
    logits = feats @ net.clf_weight.T + net.clf_bias
    p = np.exp(logits - logits.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    p[np.arange(6), labels] -= 1.0
    p /= 6.0
    np.testing.assert_allclose(grads.classifier.weight, p.T @ feats, atol=1e-12)
    np.testing.assert_allclose(grads.classifier.bias, p.sum(axis=0), atol=1e-12)


# --- sgd_step ---------------------------------------------------------------

def _constant_grads(net, value=0.5):
    from growbench.netcore import GradSet, ParamPair

    stages = [[ParamPair(np.full_like(b.weight, value), np.full_like(b.bias, value))
               for b in st.blocks] for st in net.stages]
    clf = ParamPair(np.full_like(net.clf_weight, value), np.full_like(net.clf_bias, value))
    return GradSet(stages=stages, classifier=clf)


def test_sgd_plain_step_without_momentum():
    net = build_network(small_arch(), 0)
    opt = OptState.for_network(net, momentum=0.0, weight_decay=0.0)
    before = flatten_params(net).copy()
    sgd_step(net, _constant_grads(net, 0.5), opt, lr=0.1)
    np.testing.assert_allclose(flatten_params(net), before - 0.1 * 0.5, atol=1e-15)


def test_sgd_zero_lr_updates_buffers_only():
    net = build_network(small_arch(), 0)
    opt = OptState.for_network(net, momentum=0.9, weight_decay=0.0)
    before = flatten_params(net).copy()
    sgd_step(net, _constant_grads(net, 1.0), opt, lr=0.0)
    np.testing.assert_array_equal(flatten_params(net), before)
    assert opt.classifier.weight.max() == 1.0  # v = g after one step


def test_sgd_two_steps_momentum_unrolled():
    # v1 = g, v2 = 0.9 g + g; total delta = -lr (g + 1.9 g)
    net = build_network(small_arch(), 0)
    opt = OptState.for_network(net, momentum=0.9, weight_decay=0.0)
    g = 0.25
    lr = 0.1
    before = flatten_params(net).copy()
    sgd_step(net, _constant_grads(net, g), opt, lr)
    sgd_step(net, _constant_grads(net, g), opt, lr)
    np.testing.assert_allclose(
        flatten_params(net), before - lr * (g + 1.9 * g), atol=1e-14
    )


def test_sgd_weight_decay_in_buffer():
    net = build_network(small_arch(), 0)
    opt = OptState.for_network(net, momentum=0.0, weight_decay=0.1)
    w0 = net.clf_weight.copy()
    sgd_step(net, _constant_grads(net, 0.0), opt, lr=1.0)
    np.testing.assert_allclose(net.clf_weight, w0 - 0.1 * w0, atol=1e-14)


# --- lr schedule ------------------------------------------------------------

def test_lr_constant_while_growing():
    assert lr_at(0.5, 10, None, 100) == 0.5
    assert lr_at(0.5, 10, 40, 100) == 0.5


def test_lr_cosine_endpoints_and_midpoint():
    base, t_e, total = 0.5, 40, 100
    assert lr_at(base, t_e, t_e, total) == base  # cos(0) term
    mid = t_e + (total - t_e) / 2
    assert lr_at(base, int(mid), t_e, total) == pytest.approx(base / 2, abs=1e-12)
    last = lr_at(base, total - 1, t_e, total)
    assert 0.0 <= last < base


def test_lr_vanilla_decays_from_start():
    assert lr_at(0.1, 0, 0, 50) == 0.1
    assert lr_at(0.1, 25, 0, 50) == pytest.approx(0.05, abs=1e-12)


# --- accuracy ---------------------------------------------------------------

def test_accuracy_all_correct_and_tie_rule():
    arch = ArchSpec("res", (StageSpec(4, 1),), input_dim=4, num_classes=3)
    net = build_network(arch, 0)
    net.stages[0].blocks[0].weight[:] = 0.0
    net.clf_weight[:] = 0.0
    net.clf_bias[:] = 0.0
    feats = np.random.default_rng(0).normal(size=(10, 4))
    labels = np.zeros(10, dtype=np.int64)
    # identical logits everywhere: ties resolve to class 0
    assert accuracy(net, feats, labels) == 100.0
    labels_mixed = np.array([0, 0, 1, 2, 0, 1, 0, 0, 2, 0])
    assert accuracy(net, feats, labels_mixed) == pytest.approx(60.0)


def test_error_accuracy_complement():
    assert 100.0 - 1.12 == pytest.approx(98.88)


def test_accuracy_empty_rejected():
    net = build_network(small_arch(), 0)
    with pytest.raises(ValueError):
        accuracy(net, np.zeros((0, 5)), np.zeros(0, dtype=np.int64))


# --- training sanity --------------------------------------------------------

def test_loss_drops_on_separable_task():
    # Linearly separable 2-class blobs: 50 epochs cut the loss to <10%
    # of its start (median over seeds).
    ratios = []
    for seed in (0, 1, 2):
        ds = gen_gaussians(2, 8, 60, sep=10.0, label_noise=0.0, seed=seed)
        arch = ArchSpec("res", (StageSpec(8, 1),), input_dim=8, num_classes=2)
        net = build_network(arch, seed)
        opt = OptState.for_network(net, momentum=0.9, weight_decay=0.0)
        first, _ = loss_and_grads(net, ds.features, ds.labels)
        for _ in range(50):
            loss, grads = loss_and_grads(net, ds.features, ds.labels)
            sgd_step(net, grads, opt, lr=0.05)
        final, _ = loss_and_grads(net, ds.features, ds.labels)
        ratios.append(final / first)
    assert sorted(ratios)[1] < 0.1

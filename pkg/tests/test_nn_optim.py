import numpy as np
import pytest

from corridor_tsc import tensor as T
from corridor_tsc.nn import GRUCell, Linear, MLP, ParamSet, categorical_sample_st, one_hot, unimix_logits
from corridor_tsc.optim import adam_step, global_norm
from corridor_tsc.tensor import Tensor, grad

from gradcheck import check_gradients


def test_mlp_identity_single_linear_layer():
    ps = ParamSet()
    net = MLP("net", 3, 3, 3, depth=0, norm=False)
    net.init(ps, np.random.default_rng(0))
    ps["net/out/w"].data = np.eye(3, dtype=np.float32)
    x = np.random.default_rng(1).standard_normal((5, 3)).astype(np.float32)
    np.testing.assert_allclose(net(ps, Tensor(x)).data, x, rtol=1e-6)


def test_mlp_zero_weights_output_is_bias():
    ps = ParamSet()
    net = MLP("net", 4, 6, 2, depth=1, norm=True)
    net.init(ps, np.random.default_rng(0))
    for name in ps.names():
        if name.endswith("/w"):
            ps[name].data[:] = 0.0
    ps["net/out/b"].data = np.array([1.5, -2.0], dtype=np.float32)
    x = Tensor(np.random.default_rng(2).standard_normal((7, 4)))
    out = net(ps, x)
    np.testing.assert_allclose(out.data, np.tile([1.5, -2.0], (7, 1)), atol=1e-6)


def test_mlp_input_width_mismatch_raises():
    ps = ParamSet()
    net = MLP("net", 4, 6, 2, depth=1)
    net.init(ps, np.random.default_rng(0))
    with pytest.raises(ValueError):
        net(ps, Tensor(np.zeros((3, 5))))


def test_gru_update_gate_zero_keeps_state():
    rng = np.random.default_rng(3)
    ps = ParamSet()
    cell = GRUCell("gru", 4, 6)
    cell.init(ps, rng)
    ps["gru/b_u"].data[:] = -1e9  # sigmoid -> exactly 0
    h = rng.standard_normal((2, 6)).astype(np.float32)
    x = rng.standard_normal((2, 4)).astype(np.float32)
    out = cell(ps, Tensor(h), Tensor(x))
    np.testing.assert_array_equal(out.data, h)


def test_gru_zero_candidate_zero_state_stays_zero():
    rng = np.random.default_rng(4)
    ps = ParamSet()
    cell = GRUCell("gru", 4, 6)
    cell.init(ps, rng)
    ps["gru/wx_c/w"].data[:] = 0.0
    ps["gru/wh_c/w"].data[:] = 0.0
    h = np.zeros((3, 6), dtype=np.float32)
    x = rng.standard_normal((3, 4)).astype(np.float32)
    out = cell(ps, Tensor(h), Tensor(x))
    np.testing.assert_array_equal(out.data, np.zeros((3, 6)))


def test_gru_width_mismatch_raises():
    ps = ParamSet()
    cell = GRUCell("gru", 4, 6)
    cell.init(ps, np.random.default_rng(0))
    with pytest.raises(ValueError):
        cell(ps, Tensor(np.zeros((2, 6))), Tensor(np.zeros((2, 5))))


def test_gru_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    ps = ParamSet()
    cell = GRUCell("gru", 3, 5)
    cell.init(ps, rng, dtype=np.float64)
    h0 = ps.add("h0", rng.standard_normal((2, 5)))
    x0 = ps.add("x0", rng.standard_normal((2, 3)))
    coef = rng.standard_normal((2, 5))

    def loss_fn():
        return T.tsum(T.mul(cell(ps, h0, x0), coef))

    g = grad(loss_fn(), ps)
    check_gradients(loss_fn, ps, g, rng, coords_per_tensor=3, tol=1e-4)


def test_categorical_deterministic_at_huge_logit():
    logits = np.zeros((1, 1, 6), dtype=np.float32)
    logits[0, 0, 4] = 1e9
    for seed in range(5):
        s = categorical_sample_st(Tensor(logits), np.random.default_rng(seed))
        assert s.data.argmax(-1)[0, 0] == 4


def test_categorical_uniform_frequencies_within_3_sigma():
    k = 10
    n = 100_000
    rng = np.random.default_rng(11)
    logits = Tensor(np.zeros((n, 1, k), dtype=np.float32))
    with T.no_grad():
        s = categorical_sample_st(logits, rng)
    counts = s.data.sum(axis=(0, 1))
    p = 1.0 / k
    sigma = np.sqrt(n * p * (1 - p))
    assert (np.abs(counts - n * p) < 3 * sigma).all(), counts


def test_categorical_same_seed_bit_identical():
    rng_a = np.random.default_rng(12)
    rng_b = np.random.default_rng(12)
    logits = Tensor(np.random.default_rng(1).standard_normal((4, 3, 5)).astype(np.float32))
    a = categorical_sample_st(logits, rng_a)
    b = categorical_sample_st(logits, rng_b)
    np.testing.assert_array_equal(a.data, b.data)


def test_categorical_rejects_nan_logits():
    logits = Tensor(np.array([[[np.nan, 0.0]]]))
    with pytest.raises(FloatingPointError):
        categorical_sample_st(logits, np.random.default_rng(0))


def test_unimix_mixes_uniform_mass():
    logits = Tensor(np.array([[1000.0, 0.0, 0.0]], dtype=np.float32))
    mixed = unimix_logits(logits, 0.01)
    probs = np.exp(mixed.data)
    np.testing.assert_allclose(probs, [[0.99 + 0.01 / 3, 0.01 / 3, 0.01 / 3]], rtol=1e-5)


def test_one_hot_layout():
    out = one_hot(np.array([2, 0]), 3)
    np.testing.assert_array_equal(out, [[0, 0, 1], [1, 0, 0]])


# -- Adam --------------------------------------------------------------------


def test_adam_zero_gradients_leave_params_untouched():
    ps = ParamSet()
    ps.add("w", np.array([1.0, 2.0], dtype=np.float32))
    before = ps["w"].data.copy()
    adam_step(ps, {"w": np.zeros(2, dtype=np.float32)}, lr=0.1)
    np.testing.assert_array_equal(ps["w"].data, before)
    assert ps.steps["w"] == 1


def test_adam_first_step_magnitude():
    # bias-corrected Adam with g=1: first step is lr / (1 + eps) ~= lr
    ps = ParamSet()
    ps.add("w", np.array([0.0], dtype=np.float64))
    adam_step(ps, {"w": np.array([1.0])}, lr=0.1)
    assert ps["w"].data[0] == pytest.approx(-0.1, rel=1e-6)


def test_adam_matches_hand_evaluated_recurrence_two_steps():
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    g1, g2 = 1.0, -0.5
    m = v = 0.0
    w = 0.3
    for t, g in enumerate((g1, g2), start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    ps = ParamSet()
    ps.add("w", np.array([0.3], dtype=np.float64))
    adam_step(ps, {"w": np.array([g1])}, lr=lr)
    adam_step(ps, {"w": np.array([g2])}, lr=lr)
    assert ps["w"].data[0] == pytest.approx(w, rel=1e-12)


def test_global_norm_clip_scales_effective_gradient():
    ps = ParamSet()
    ps.add("a", np.zeros(16, dtype=np.float64))
    grads = {"a": np.full(16, 2.5)}  # norm = 10
    assert global_norm(grads) == pytest.approx(10.0)
    adam_step(ps, grads, lr=1.0, clip=1.0)
    # effective gradient 0.25 everywhere -> identical bias-corrected step per coord
    ps2 = ParamSet()
    ps2.add("a", np.zeros(16, dtype=np.float64))
    adam_step(ps2, {"a": np.full(16, 0.25)}, lr=1.0)
    np.testing.assert_allclose(ps["a"].data, ps2["a"].data, rtol=1e-12)


def test_adam_shape_mismatch_raises():
    ps = ParamSet()
    ps.add("w", np.zeros(3, dtype=np.float32))
    with pytest.raises(ValueError):
        adam_step(ps, {"w": np.zeros(4, dtype=np.float32)}, lr=0.1)


def test_adam_nan_gradient_raises():
    ps = ParamSet()
    ps.add("w", np.zeros(2, dtype=np.float32))
    with pytest.raises(FloatingPointError):
        adam_step(ps, {"w": np.array([np.nan, 0.0])}, lr=0.1)

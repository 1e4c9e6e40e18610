import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liveness import layers
from liveness.errors import DegenerateBatchError, LabelError, ShapeError
from liveness.gradcheck import max_relative_error, numeric_grad
from liveness.layers import INFER, TRAIN, BatchNormParams, ConvParams, DenseParams

GRAD_TOL = 1e-6


def away_from_zero(rng, shape, gap=1e-2):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < gap, np.sign(x + 1e-300) * gap + x, x)


def upstream(rng, shape):
    # magnitudes in [0.5, 1.5]: tiny upstream entries would push true gradients
    # below the ~1e-11 noise floor of the finite-difference oracle
    return rng.choice([-1.0, 1.0], shape) * rng.uniform(0.5, 1.5, shape)


def dot(out, r):
    return math.fsum((out * r).ravel())


def distinct_values(rng, shape):
    # a shuffled grid with spacing 0.05 keeps every 2x2 window free of near-ties
    return rng.permutation(np.arange(math.prod(shape)) * 0.05 - 1.0).reshape(shape)


# -- conv2d --------------------------------------------------------------------

def test_conv_identity_kernel():
    x = np.ones((1, 3, 3, 1))
    k = np.zeros((3, 3, 1, 1))
    k[1, 1, 0, 0] = 1.0
    out, _ = layers.conv2d(x, ConvParams(k, np.zeros(1)))
    np.testing.assert_array_equal(out, x)


def test_conv_all_ones_kernel_counts_neighbours():
    out, _ = layers.conv2d(np.ones((1, 3, 3, 1)), ConvParams(np.ones((3, 3, 1, 1)), np.zeros(1)))
    np.testing.assert_array_equal(out[0, :, :, 0], [[4, 6, 4], [6, 9, 6], [4, 6, 4]])


def test_conv_zero_kernel_gives_bias(rng):
    out, _ = layers.conv2d(rng.standard_normal((2, 4, 5, 3)),
                           ConvParams(np.zeros((3, 3, 3, 2)), np.array([0.5, -2.0])))
    assert np.all(out[..., 0] == 0.5) and np.all(out[..., 1] == -2.0)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        layers.conv2d(np.ones((1, 3, 3, 2)), ConvParams(np.ones((3, 3, 1, 1)), np.zeros(1)))


@pytest.mark.parametrize("h,w", [(1, 1), (2, 3), (5, 5), (6, 4), (7, 2)])
def test_conv_preserves_spatial_dims(h, w):
    out, _ = layers.conv2d(np.ones((1, h, w, 2)), ConvParams(np.ones((3, 3, 2, 3)), np.zeros(3)))
    assert out.shape == (1, h, w, 3)


def test_conv_gradients(backend, rng):
    x = rng.standard_normal((2, 6, 6, 3))
    p = ConvParams(rng.standard_normal((3, 3, 3, 4)), rng.standard_normal(4))
    r = upstream(rng, (2, 6, 6, 4))
    g = layers.conv2d_backward(r, layers.conv2d(x, p)[1])

    def loss_x(v):
        return dot(layers.conv2d(v, p)[0], r)

    def loss_k(v):
        return dot(layers.conv2d(x, ConvParams(v, p.bias))[0], r)

    def loss_b(v):
        return dot(layers.conv2d(x, ConvParams(p.kernels, v))[0], r)

    assert max_relative_error(g.input_grad, numeric_grad(loss_x, x.copy())) <= GRAD_TOL
    assert max_relative_error(g.param_grads["kernels"],
                              numeric_grad(loss_k, p.kernels.copy())) <= GRAD_TOL
    assert max_relative_error(g.param_grads["bias"], numeric_grad(loss_b, p.bias.copy())) <= GRAD_TOL


# -- activations ---------------------------------------------------------------

def test_leaky_relu_examples():
    out, _ = layers.leaky_relu(np.array([1.0, -1.0, 0.0]), 0.2)
    np.testing.assert_array_equal(out, [1.0, -0.2, 0.0])


def test_leaky_relu_gradient(rng):
    x = away_from_zero(rng, (2, 6, 6, 3))
    r = upstream(rng, x.shape)
    g = layers.leaky_relu_backward(r, layers.leaky_relu(x, 0.2)[1])
    num = numeric_grad(lambda v: dot(layers.leaky_relu(v, 0.2)[0], r), x.copy())
    assert max_relative_error(g.input_grad, num) <= GRAD_TOL


def test_tanh_examples():
    out, _ = layers.tanh_activation(np.array([0.0, 50.0, 1.0]))
    assert out[0] == 0.0
    assert -1.0 < out[1] <= 1.0 and out[1] > 0.999
    assert out[2] == pytest.approx(0.7615941559557649, abs=1e-12)


def test_tanh_gradient(rng):
    x = rng.standard_normal((2, 5))
    r = upstream(rng, x.shape)
    g = layers.tanh_backward(r, layers.tanh_activation(x)[1])
    num = numeric_grad(lambda v: dot(np.tanh(v), r), x.copy())
    assert max_relative_error(g.input_grad, num) <= GRAD_TOL


# -- batch norm ----------------------------------------------------------------

def _bn(c, gamma=None, beta=None, eps=1e-5):
    p = BatchNormParams.fresh(c, epsilon=eps)
    if gamma is not None:
        p = BatchNormParams(np.full(c, gamma), np.full(c, beta), p.running_mean, p.running_var,
                            p.momentum, p.epsilon)
    return p


def test_batch_norm_two_values():
    x = np.array([1.0, 3.0]).reshape(2, 1, 1, 1)
    out, _, _ = layers.batch_norm(x, _bn(1, 1.0, 0.0, 1e-8), TRAIN)
    np.testing.assert_allclose(out.ravel(), [-1, 1], atol=1e-6)
    out, _, _ = layers.batch_norm(x, _bn(1, 2.0, 1.0, 1e-8), TRAIN)
    np.testing.assert_allclose(out.ravel(), [-1, 3], atol=1e-6)


def test_batch_norm_infer_standard_identity(rng):
    x = rng.standard_normal((3, 2, 2, 4))
    p = _bn(4)
    out, new_p, _ = layers.batch_norm(x, p, INFER)
    np.testing.assert_allclose(out, x, rtol=1e-5)
    assert new_p is p


def test_batch_norm_updates_running_stats_without_mutation(rng):
    x = rng.standard_normal((4, 3, 3, 2)) * 3 + 1
    p = _bn(2)
    _, new_p, _ = layers.batch_norm(x, p, TRAIN)
    assert np.array_equal(p.running_mean, np.zeros(2))
    m = p.momentum
    np.testing.assert_allclose(new_p.running_mean, (1 - m) * x.mean(axis=(0, 1, 2)))
    np.testing.assert_allclose(new_p.running_var, m + (1 - m) * x.var(axis=(0, 1, 2)))


def test_batch_norm_degenerate_batch():
    with pytest.raises(DegenerateBatchError):
        layers.batch_norm(np.ones((1, 1, 1, 3)), _bn(3), TRAIN)


@pytest.mark.parametrize("mode", [TRAIN, INFER])
def test_batch_norm_gradients(rng, mode):
    x = rng.standard_normal((2, 6, 6, 3)) * 2 + 0.5
    gamma, beta = upstream(rng, 3), rng.standard_normal(3)
    rm, rv = rng.standard_normal(3), rng.uniform(0.5, 2, 3)

    def params(g=gamma, b=beta):
        return BatchNormParams(g, b, rm, rv)

    r = upstream(rng, x.shape)
    g = layers.batch_norm_backward(r, layers.batch_norm(x, params(), mode)[2])
    f_x = lambda v: dot(layers.batch_norm(v, params(), mode)[0], r)
    f_g = lambda v: dot(layers.batch_norm(x, params(g=v), mode)[0], r)
    f_b = lambda v: dot(layers.batch_norm(x, params(b=v), mode)[0], r)
    assert max_relative_error(g.input_grad, numeric_grad(f_x, x.copy())) <= GRAD_TOL
    assert max_relative_error(g.param_grads["gamma"], numeric_grad(f_g, gamma.copy())) <= GRAD_TOL
    assert max_relative_error(g.param_grads["beta"], numeric_grad(f_b, beta.copy())) <= GRAD_TOL


# -- pooling -------------------------------------------------------------------

def test_max_pool_examples():
    out, _ = layers.max_pool_2x2(np.array([[1.0, 2], [3, 4]]).reshape(1, 2, 2, 1))
    assert out.ravel().tolist() == [4.0]
    out, _ = layers.max_pool_2x2(np.array([[-1.0, -2], [-3, -4]]).reshape(1, 2, 2, 1))
    assert out.ravel().tolist() == [-1.0]
    out, cache = layers.max_pool_2x2(np.full((1, 4, 4, 2), 2.5))
    assert np.all(out == 2.5)
    dx = layers.max_pool_2x2_backward(np.ones(out.shape), cache).input_grad
    np.testing.assert_array_equal(dx[0, :, :, 0], [[1, 0, 1, 0], [0, 0, 0, 0],
                                                   [1, 0, 1, 0], [0, 0, 0, 0]])


@pytest.mark.parametrize("shape", [(1, 3, 4, 1), (1, 4, 5, 1)])
def test_max_pool_rejects_odd(shape):
    with pytest.raises(ShapeError):
        layers.max_pool_2x2(np.zeros(shape))


def test_max_pool_gradient(backend, rng):
    x = distinct_values(rng, (2, 6, 6, 3))
    r = upstream(rng, (2, 3, 3, 3))
    g = layers.max_pool_2x2_backward(r, layers.max_pool_2x2(x)[1])
    num = numeric_grad(lambda v: dot(layers.max_pool_2x2(v)[0], r), x.copy())
    assert max_relative_error(g.input_grad, num) <= GRAD_TOL


# -- dropout -------------------------------------------------------------------

def test_dropout_infer_and_zero_rate_are_identity(rng):
    x = rng.standard_normal((3, 4))
    out, _ = layers.dropout(x, 0.5, INFER, rng)
    assert out is x
    out, _ = layers.dropout(x, 0.0, TRAIN, rng)
    np.testing.assert_array_equal(out, x)


def test_dropout_preserves_mean():
    out, _ = layers.dropout(np.ones(100_000), 0.25, TRAIN, np.random.default_rng(0))
    assert abs(out.mean() - 1.0) < 0.02
    assert set(np.unique(out)) <= {0.0, 1.0 / 0.75}


def test_dropout_gradient_uses_same_mask(rng):
    x = rng.standard_normal((2, 6, 6, 3))
    r = upstream(rng, x.shape)

    def fwd(v):
        return layers.dropout(v, 0.25, TRAIN, np.random.default_rng(5))

    g = layers.dropout_backward(r, fwd(x)[1])
    num = numeric_grad(lambda v: dot(fwd(v)[0], r), x.copy())
    assert max_relative_error(g.input_grad, num) <= GRAD_TOL


# -- dense / softmax / loss ----------------------------------------------------

def test_dense_examples(rng):
    x = rng.standard_normal((3, 4))
    np.testing.assert_array_equal(layers.dense(x, DenseParams(np.eye(4), np.zeros(4)))[0], x)
    out, _ = layers.dense(np.array([[1.0, 2.0]]), DenseParams(np.ones((2, 1)), np.array([0.5])))
    np.testing.assert_array_equal(out, [[3.5]])
    out, _ = layers.dense(np.zeros((2, 3)), DenseParams(np.ones((3, 2)), np.array([1.0, -1.0])))
    np.testing.assert_array_equal(out, [[1, -1], [1, -1]])
    with pytest.raises(ShapeError):
        layers.dense(np.zeros((2, 5)), DenseParams(np.ones((3, 2)), np.zeros(2)))


def test_dense_gradients(backend, rng):
    x = rng.standard_normal((2, 7))
    p = DenseParams(rng.standard_normal((7, 4)), rng.standard_normal(4))
    r = upstream(rng, (2, 4))
    g = layers.dense_backward(r, layers.dense(x, p)[1])
    f_x = lambda v: dot(layers.dense(v, p)[0], r)
    f_w = lambda v: dot(layers.dense(x, DenseParams(v, p.bias))[0], r)
    f_b = lambda v: dot(layers.dense(x, DenseParams(p.weights, v))[0], r)
    assert max_relative_error(g.input_grad, numeric_grad(f_x, x.copy())) <= GRAD_TOL
    assert max_relative_error(g.param_grads["weights"], numeric_grad(f_w, p.weights.copy())) <= GRAD_TOL
    assert max_relative_error(g.param_grads["bias"], numeric_grad(f_b, p.bias.copy())) <= GRAD_TOL


def test_softmax_examples():
    np.testing.assert_array_equal(layers.softmax(np.zeros((1, 2))), [[0.5, 0.5]])
    np.testing.assert_allclose(layers.softmax(np.array([[math.log(2), 0.0]])), [[2 / 3, 1 / 3]],
                               atol=1e-12)
    big = layers.softmax(np.array([[1000.0, 0.0]]))
    assert np.all(np.isfinite(big)) and big[0, 0] == pytest.approx(1.0)
    with pytest.raises(ShapeError):
        layers.softmax(np.zeros((1, 3)))


def test_cross_entropy_examples():
    loss, _ = layers.cross_entropy_with_grad(np.array([[1 - 1e-15, 1e-15]]), [0])
    assert loss == pytest.approx(0.0, abs=1e-12)
    for label in (0, 1):
        loss, _ = layers.cross_entropy_with_grad(np.array([[0.5, 0.5]]), [label])
        assert loss == pytest.approx(0.6931471805599453, abs=1e-12)
    _, grad = layers.cross_entropy_with_grad(np.array([[0.5, 0.5]]), [0])
    np.testing.assert_array_equal(grad, [[-0.5, 0.5]])
    with pytest.raises(LabelError):
        layers.cross_entropy_with_grad(np.array([[0.5, 0.5]]), [2])


def test_cross_entropy_logit_gradient(rng):
    logits = rng.standard_normal((4, 2)) * 2
    labels = np.array([0, 1, 1, 0])
    _, grad = layers.cross_entropy_with_grad(layers.softmax(logits), labels)
    num = numeric_grad(
        lambda v: layers.cross_entropy_with_grad(layers.softmax(v), labels)[0], logits.copy())
    assert max_relative_error(grad, num) <= GRAD_TOL


def test_residual_add():
    z, y = np.array([1.0, -2.0]), np.array([0.5, 0.5])
    np.testing.assert_array_equal(layers.residual_add(z, np.zeros(2)), z)
    np.testing.assert_array_equal(layers.residual_add(np.zeros(2), y), y)
    d = np.array([3.0, 4.0])
    a, b = layers.residual_add_backward(d)
    assert a is d and b is d
    with pytest.raises(ShapeError):
        layers.residual_add(np.zeros(2), np.zeros(3))


# -- invariant suites (hypothesis) --------------------------------------------

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=150, deadline=None)
@given(seed=seeds, n=st.integers(1, 8), scale=st.floats(1e-3, 1e3))
def test_softmax_rows_normalised_and_shift_invariant(seed, n, scale):
    r = np.random.default_rng(seed)
    logits = r.standard_normal((n, 2)) * scale
    p = layers.softmax(logits)
    assert np.all(np.abs(p.sum(axis=1) - 1.0) <= 1e-12)
    shift = r.uniform(-50, 50, (n, 1))
    assert np.max(np.abs(layers.softmax(logits + shift) - p)) <= 1e-12


@settings(max_examples=150, deadline=None)
@given(seed=seeds, n=st.integers(1, 3), h=st.integers(1, 5), c=st.integers(1, 4),
       loc=st.floats(-10, 10), scale=st.floats(0.5, 20))
def test_batch_norm_standardises(seed, n, h, c, loc, scale):
    r = np.random.default_rng(seed)
    x = r.standard_normal((n + 1, h + 1, h + 1, c)) * scale + loc
    out, _, _ = layers.batch_norm(x, BatchNormParams.fresh(c), TRAIN)
    mean, var = out.mean(axis=(0, 1, 2)), out.var(axis=(0, 1, 2))
    batch_var = x.var(axis=(0, 1, 2))
    assert np.all(np.abs(mean) <= 1e-9)
    # the 1e-6 bound needs epsilon to be negligible next to the batch variance
    expected = batch_var / (batch_var + layers.BN_EPSILON)
    assert np.all(np.abs(var - 1.0) <= 1e-6 + np.abs(expected - 1.0))


@settings(max_examples=150, deadline=None)
@given(seed=seeds, shape=st.lists(st.integers(1, 5), min_size=1, max_size=4),
       rate=st.floats(0.0, 0.99))
def test_dropout_infer_bit_identity(seed, shape, rate):
    r = np.random.default_rng(seed)
    x = r.standard_normal(shape)
    before = x.copy()
    out, _ = layers.dropout(x, rate, INFER, r)
    assert out.tobytes() == before.tobytes()


@settings(max_examples=150, deadline=None)
@given(seed=seeds, n=st.integers(1, 3), h=st.integers(1, 4), w=st.integers(1, 4),
       c=st.integers(1, 3), ties=st.booleans())
def test_max_pool_gradient_conservation(seed, n, h, w, c, ties):
    r = np.random.default_rng(seed)
    shape = (n, 2 * h, 2 * w, c)
    x = r.integers(0, 3, shape).astype(float) if ties else r.standard_normal(shape)
    out, cache = layers.max_pool_2x2(x)
    # integer-valued upstream gradients make the float sums exact
    d = r.integers(-1000, 1000, out.shape).astype(float)
    dx = layers.max_pool_2x2_backward(d, cache).input_grad
    assert dx.sum() == d.sum()
    assert np.count_nonzero(dx) == np.count_nonzero(d)

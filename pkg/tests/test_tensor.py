"""Autodiff core: forward values, shape errors, and gradients vs finite
differences on randomized shapes."""

import numpy as np
import pytest

from gnp import tensor as T
from gnp.linalg import PositiveDefiniteError

from _utils import finite_diff, gradcheck, rel_err


def test_matmul_identity():
    out = T.matmul(T.tensor([[1.0, 0.0], [0.0, 1.0]]), T.tensor([[3.0], [4.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [4.0]])


def test_softplus_at_zero():
    out = T.softplus(T.tensor(np.zeros(1)))
    np.testing.assert_allclose(out.data, np.log(2.0), rtol=1e-15)


def test_sum_over_axis():
    out = T.tsum(T.tensor([[1.0, 2.0], [3.0, 4.0]]), axis=0)
    np.testing.assert_array_equal(out.data, [4.0, 6.0])


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    out = T.softmax(T.tensor(rng.standard_normal((4, 7)) * 10), axis=1)
    np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(out.data > 0)


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(T.ShapeError) as err:
        T.add(T.tensor(np.zeros((2, 3))), T.tensor(np.zeros((4, 5))))
    assert "(2, 3)" in str(err.value) and "(4, 5)" in str(err.value)
    with pytest.raises(T.ShapeError) as err:
        T.matmul(T.tensor(np.zeros((2, 3))), T.tensor(np.zeros((4, 5))))
    assert "(2, 3)" in str(err.value) and "(4, 5)" in str(err.value)


def test_broadcast_result_shape_associative():
    rng = np.random.default_rng(1)
    shapes = [(3, 4), (1, 4), (3, 1), (4,), (1, 1)]
    for _ in range(20):
        sa, sb, sc = (shapes[i] for i in rng.integers(0, len(shapes), 3))
        a, b, c = (T.tensor(rng.standard_normal(s)) for s in (sa, sb, sc))
        left = T.add(a, T.add(b, c)).data.shape
        right = T.add(T.add(a, b), c).data.shape
        assert left == right


def test_square_gradient():
    tape = T.Tape()
    x = tape.watch(T.Tensor(np.array(3.0)))
    y = T.mul(x, x)
    grads = T.backward(y)
    assert grads[x.node_id] == pytest.approx(6.0)


def test_softplus_gradient_at_zero():
    tape = T.Tape()
    x = tape.watch(T.Tensor(np.array(0.0)))
    y = T.softplus(x)
    grads = T.backward(y)
    assert grads[x.node_id] == pytest.approx(0.5)


def test_reused_tensor_accumulates_gradient():
    # x appears twice: d/dx (x*x + x) = 2x + 1
    tape = T.Tape()
    x = tape.watch(T.Tensor(np.array(2.0)))
    y = T.add(T.mul(x, x), x)
    grads = T.backward(y)
    assert grads[x.node_id] == pytest.approx(5.0)


def test_backward_rejects_nonscalar_root():
    tape = T.Tape()
    x = tape.watch(T.Tensor(np.ones(3)))
    with pytest.raises(T.ShapeError):
        T.backward(T.mul(x, 2.0))


def test_backward_rejects_detached_root():
    with pytest.raises(ValueError):
        T.backward(T.tensor(1.0))


def test_root_gradient_is_one():
    tape = T.Tape()
    x = tape.watch(T.Tensor(np.array(1.5)))
    y = T.mul(x, 3.0)
    grads = T.backward(y)
    assert grads[y.node_id] == pytest.approx(1.0)


def test_finiteness_check_flag():
    old = T.CHECK_FINITE
    T.CHECK_FINITE = True
    try:
        with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
            T.exp(T.tensor(1e4))
    finally:
        T.CHECK_FINITE = old


# ---------------------------------------------------------------------------
# gradients vs central finite differences, randomized shapes, many seeds
# ---------------------------------------------------------------------------

def _rand(rng, *shape):
    return rng.standard_normal(shape)


@pytest.mark.parametrize("seed", range(50))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    m = int(rng.integers(2, 5))
    k = int(rng.integers(2, 5))

    # elementwise with broadcasting
    gradcheck(lambda ts: T.add(ts[0], ts[1]), [_rand(rng, n, m), _rand(rng, 1, m)], seed)
    gradcheck(lambda ts: T.sub(ts[0], ts[1]), [_rand(rng, n, m), _rand(rng, n, 1)], seed)
    gradcheck(lambda ts: T.mul(ts[0], ts[1]), [_rand(rng, n, m), _rand(rng, m)], seed)
    gradcheck(
        lambda ts: T.div(ts[0], ts[1]),
        [_rand(rng, n, m), 1.5 + 0.3 * np.abs(_rand(rng, n, m))],
        seed,
    )
    gradcheck(lambda ts: T.neg(ts[0]), [_rand(rng, n, m)], seed)

    # nonlinearities (relu inputs nudged off the kink)
    gradcheck(lambda ts: T.exp(ts[0]), [_rand(rng, n, m)], seed)
    gradcheck(lambda ts: T.log(ts[0]), [0.5 + np.abs(_rand(rng, n, m))], seed)
    gradcheck(lambda ts: T.tanh(ts[0]), [_rand(rng, n, m)], seed)
    x = _rand(rng, n, m)
    x = np.where(np.abs(x) < 0.1, x + 0.2, x)
    gradcheck(lambda ts: T.relu(ts[0]), [x], seed)
    gradcheck(lambda ts: T.softplus(ts[0]), [_rand(rng, n, m)], seed)
    gradcheck(lambda ts: T.sigmoid(ts[0]), [_rand(rng, n, m)], seed)

    # reductions and shape ops
    gradcheck(lambda ts: T.tsum(ts[0]), [_rand(rng, n, m)], seed)
    gradcheck(lambda ts: T.tsum(ts[0], axis=0), [_rand(rng, n, m)], seed)
    gradcheck(lambda ts: T.tsum(ts[0], axis=1, keepdims=True), [_rand(rng, n, m)], seed)
    gradcheck(lambda ts: T.tmean(ts[0], axis=0, keepdims=True), [_rand(rng, n, m)], seed)
    gradcheck(lambda ts: T.transpose(ts[0]), [_rand(rng, n, m)], seed)
    gradcheck(lambda ts: T.reshape(ts[0], (m, n)), [_rand(rng, n, m)], seed)
    gradcheck(
        lambda ts: T.concat([ts[0], ts[1]], axis=1),
        [_rand(rng, n, m), _rand(rng, n, k)],
        seed,
    )
    gradcheck(lambda ts: T.narrow(ts[0], 1, 1, m - 1), [_rand(rng, n, m)], seed)
    gradcheck(lambda ts: T.softmax(ts[0], axis=1), [_rand(rng, n, m)], seed)
    gradcheck(lambda ts: T.diagonal(ts[0]), [_rand(rng, n, n)], seed)

    # linear algebra
    gradcheck(
        lambda ts: T.matmul(ts[0], ts[1]), [_rand(rng, n, k), _rand(rng, k, m)], seed
    )
    gradcheck(lambda ts: T.sqdist(ts[0], ts[1]), [_rand(rng, n, k), _rand(rng, m, k)], seed)

    def chol_chain(ts):
        a = T.add(T.matmul(ts[0], T.transpose(ts[0])), T.tensor(np.eye(n)))
        return T.cholesky(a)

    gradcheck(chol_chain, [_rand(rng, n, n)], seed)

    def trisolve_chain(ts):
        a = T.add(T.matmul(ts[0], T.transpose(ts[0])), T.tensor(np.eye(n)))
        return T.trisolve(T.cholesky(a), ts[1])

    gradcheck(trisolve_chain, [_rand(rng, n, n), _rand(rng, n, 2)], seed)

    # conv1d: 2 input channels, 3 output channels, kernel size 3
    c_in, c_out, ksz, g_len = 2, 3, 3, 6
    gradcheck(
        lambda ts: T.conv1d(ts[0], ts[1], ts[2]),
        [
            _rand(rng, c_in, g_len),
            _rand(rng, c_out, ksz * c_in),
            _rand(rng, c_out, 1),
        ],
        seed,
    )


@pytest.mark.parametrize("seed", range(10))
def test_conv1d_dilation_gradients(seed):
    rng = np.random.default_rng(seed)
    gradcheck(
        lambda ts: T.conv1d(ts[0], ts[1], ts[2], dilation=2),
        [
            rng.standard_normal((2, 8)),
            rng.standard_normal((3, 3 * 2)),
            rng.standard_normal((3, 1)),
        ],
        seed,
    )


def test_conv1d_matches_direct_convolution():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((1, 9))
    w = rng.standard_normal((1, 3))
    out = T.conv1d(T.tensor(x), T.tensor(w), T.tensor(np.zeros((1, 1)))).data
    expected = np.convolve(x[0], w[0][::-1], mode="same")
    np.testing.assert_allclose(out[0], expected, atol=1e-12)


def test_sqdist_matches_direct():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((5, 3))
    b = rng.standard_normal((4, 3))
    out = T.sqdist(T.tensor(a), T.tensor(b)).data
    expected = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    np.testing.assert_allclose(out, expected, atol=1e-12)
    assert np.all(out >= 0.0)


# ---------------------------------------------------------------------------
# cholesky
# ---------------------------------------------------------------------------

def test_cholesky_diagonal_case():
    out = T.cholesky(T.tensor([[4.0, 0.0], [0.0, 9.0]]))
    np.testing.assert_allclose(out.data, [[2.0, 0.0], [0.0, 3.0]], atol=1e-14)


def test_cholesky_identity():
    out = T.cholesky(T.tensor(np.eye(5)))
    np.testing.assert_allclose(out.data, np.eye(5), atol=1e-14)


def test_cholesky_reconstruction_random_gram():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((10, 10))
    a = x @ x.T + np.eye(10)
    l = T.cholesky(T.tensor(a)).data
    err = np.linalg.norm(l @ l.T - a) / np.linalg.norm(a)
    assert err < 1e-10
    assert np.all(np.diagonal(l) > 0)


def test_cholesky_idempotent_up_to_sign():
    rng = np.random.default_rng(13)
    x = rng.standard_normal((6, 6))
    l = np.linalg.cholesky(x @ x.T + np.eye(6))
    l2 = T.cholesky(T.tensor(l @ l.T)).data
    np.testing.assert_allclose(l2, l, rtol=1e-9, atol=1e-9)


def test_cholesky_failure_reports_pivot():
    a = np.diag([1.0, -1.0])
    with pytest.raises(PositiveDefiniteError) as err:
        T.cholesky(T.tensor(a))
    assert err.value.pivot == 1


def test_cholesky_jitter_recovers_semidefinite():
    # rank-1 PSD matrix: strict Cholesky fails, jitter policy succeeds
    v = np.array([[1.0], [2.0], [3.0]])
    a = v @ v.T
    out = T.cholesky(T.tensor(a)).data
    np.testing.assert_allclose(out @ out.T, a, atol=1e-6)

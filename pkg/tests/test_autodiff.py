import zlib

import numpy as np
import pytest

from socialpec import autodiff as ad
from socialpec.autodiff import Parameter, Tensor
from socialpec.errors import ContractError, DimensionError, InvalidLengthError


# -- dense ------------------------------------------------------------------------------

def test_dense_identity():
    y = ad.dense(Tensor([1.0, 2.0]), Tensor(np.eye(2)), Tensor([0.0, 0.0]))
    assert y.data.tolist() == [1.0, 2.0]


def test_dense_row():
    y = ad.dense(Tensor([1.0, 1.0]), Tensor([[2.0, 3.0]]), Tensor([1.0]))
    assert y.data.tolist() == [6.0]


def test_dense_mlp_width():
    rng = np.random.default_rng(0)
    y = ad.dense(Tensor(rng.normal(size=720)), Tensor(rng.normal(size=(300, 720))),
                 Tensor(np.zeros(300)))
    assert y.shape == (300,)


def test_dense_shape_error_names_shapes():
    with pytest.raises(DimensionError, match=r"\(3,\).*\(2, 2\)"):
        ad.dense(Tensor(np.ones(3)), Tensor(np.eye(2)), Tensor(np.zeros(2)))


def test_dense_batched_rows_do_not_depend_on_batch_position():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(7, 30))
    W, b = rng.normal(size=(11, 30)), rng.normal(size=11)
    full = ad.dense(Tensor(x), Tensor(W), Tensor(b)).data
    perm = rng.permutation(7)
    permuted = ad.dense(Tensor(x[perm]), Tensor(W), Tensor(b)).data
    assert np.array_equal(full[perm], permuted)


# -- conv1d -----------------------------------------------------------------------------

def test_conv1d_trajectory_fixture():
    x = Tensor([[10.0, 20.0], [1.0, 1.0]])
    p0 = Tensor([[[10.0, 20.0], [0.0, 0.0]]])
    p1 = Tensor([[[50.0, 60.0], [0.0, 0.0]]])
    assert ad.conv1d(x, p0, Tensor([0.0])).data.tolist() == [[500.0]]
    assert ad.conv1d(x, p1, Tensor([0.0])).data.tolist() == [[1700.0]]


def test_conv1d_identity_kernel():
    y = ad.conv1d(Tensor([[1.0, 2.0, 3.0]]), Tensor([[[1.0]]]), Tensor([0.0]))
    assert y.data.tolist() == [[1.0, 2.0, 3.0]]


def test_conv1d_too_short():
    with pytest.raises(InvalidLengthError):
        ad.conv1d(Tensor(np.ones((2, 1))), Tensor(np.ones((3, 2, 2))), Tensor(np.zeros(3)))


def test_conv1d_matches_direct_sum():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, 3, 9))
    K = rng.normal(size=(5, 3, 3))
    b = rng.normal(size=5)
    y = ad.conv1d(Tensor(x), Tensor(K), Tensor(b)).data
    ref = np.zeros((4, 5, 7))
    for n in range(4):
        for o in range(5):
            for t in range(7):
                ref[n, o, t] = b[o] + sum(K[o, c, k] * x[n, c, t + k]
                                          for c in range(3) for k in range(3))
    np.testing.assert_allclose(y, ref, rtol=0, atol=1e-12)


def test_conv1d_and_maxpool_match_torch():
    torch = pytest.importorskip("torch")
    rng = np.random.default_rng(3)
    x = rng.normal(size=(3, 6, 7))
    K, b = rng.normal(size=(4, 6, 2)), rng.normal(size=4)
    g = rng.normal(size=(3, 4, 3))
    xt = Parameter(x)
    Kt, bt = Parameter(K), Parameter(b)
    out = ad.conv1d(ad.maxpool1d(xt, 2, 2, True), Kt, bt)
    ad.backward(ad.sum(out * g))

    tx = torch.tensor(x, requires_grad=True)
    tK = torch.tensor(K, requires_grad=True)
    tb = torch.tensor(b, requires_grad=True)
    pooled = torch.nn.functional.max_pool1d(tx, 2, 2, ceil_mode=True)
    tout = torch.nn.functional.conv1d(pooled, tK, tb)
    (tout * torch.tensor(g)).sum().backward()
    np.testing.assert_allclose(out.data, tout.detach().numpy(), atol=1e-12)
    np.testing.assert_allclose(xt.grad, tx.grad.numpy(), atol=1e-12)
    np.testing.assert_allclose(Kt.grad, tK.grad.numpy(), atol=1e-12)
    np.testing.assert_allclose(bt.grad, tb.grad.numpy(), atol=1e-12)


# -- activations ----------------------------------------------------------------------

def test_tanh_zero():
    assert ad.activation(Tensor(0.0), "tanh").item() == 0.0


def test_leaky_relu_negative():
    assert ad.activation(Tensor(-1.0), "leaky_relu", 0.01).item() == pytest.approx(-0.01)


def test_tanh_large_stays_below_one():
    assert ad.tanh(Tensor(20.0)).item() < 1.0
    assert ad.tanh(Tensor(-20.0)).item() > -1.0


def test_unknown_activation():
    with pytest.raises(ValueError):
        ad.activation(Tensor(1.0), "relu6")


# -- max pooling ----------------------------------------------------------------------

def test_maxpool_ceil():
    y = ad.maxpool1d(Tensor([1.0, 3, 2, 5, 4, 0, 6]), 2, 2, ceil=True)
    assert y.data.tolist() == [3.0, 5.0, 4.0, 6.0]


def test_maxpool_floor():
    y = ad.maxpool1d(Tensor([1.0, 3, 2, 5, 4, 0, 6]), 2, 2, ceil=False)
    assert y.data.tolist() == [3.0, 5.0, 4.0]


def test_maxpool_length_seven_ceil_gives_four():
    assert ad.maxpool1d(Tensor(np.zeros((5, 7))), 2, 2, True).shape == (5, 4)


def test_maxpool_empty_input():
    with pytest.raises(InvalidLengthError):
        ad.maxpool1d(Tensor(np.zeros(0)), 2, 2)


def test_maxpool_routes_gradient_to_argmax_only():
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = Parameter(rng.normal(size=(3, 9)))
        g = rng.normal(size=(3, 5))
        y = ad.maxpool1d(x, 2, 2, True)
        ad.backward(ad.sum(y * g))
        assert np.count_nonzero(x.grad) == np.count_nonzero(g)
        np.testing.assert_allclose(x.grad.sum(axis=-1), g.sum(axis=-1), atol=1e-12)
        for r in range(3):
            for i in range(5):
                win = x.data[r, 2 * i:2 * i + 2]
                assert x.grad[r, 2 * i + int(np.argmax(win))] == g[r, i]


def test_maxpool_tie_goes_to_first():
    x = Parameter([2.0, 2.0, 1.0])
    ad.backward(ad.sum(ad.maxpool1d(x, 2, 2, True)))
    assert x.grad.tolist() == [1.0, 0.0, 1.0]


# -- backward contract ------------------------------------------------------------------

def test_square_gradient():
    x = Parameter(3.0)
    ad.backward(ad.square(x))
    assert x.grad == 6.0


def test_tanh_gradient_at_zero():
    x = Parameter(0.0)
    ad.backward(ad.tanh(x))
    assert x.grad == 1.0


def test_two_uses_accumulate():
    x = Parameter(1.7)
    ad.backward(x * x)
    assert x.grad == pytest.approx(3.4, abs=1e-15)


def test_leaf_gradients_accumulate_across_calls():
    x = Parameter(2.0)
    ad.backward(x * 3.0)
    ad.backward(x * 3.0)
    assert x.grad == 6.0


def test_backward_needs_scalar():
    x = Parameter(np.ones(3))
    with pytest.raises(ContractError):
        ad.backward(x * 2.0)


def test_tape_is_topological_and_visits_once():
    x = Parameter(1.5)
    a = x * x
    b = ad.exp(a)
    c = a + b
    tape = ad.Tape.from_output(c)
    pos = {id(n): i for i, n in enumerate(tape.nodes)}
    assert len(pos) == len(tape.nodes)
    for node in tape.nodes:
        for parent in node._parents:
            if parent.requires_grad:
                assert pos[id(parent)] < pos[id(node)]
    ad.backward(c, tape)
    assert x.grad == pytest.approx(2 * 1.5 + np.exp(1.5 ** 2) * 2 * 1.5, rel=1e-14)


def test_no_grad_records_nothing():
    x = Parameter(1.0)
    with ad.no_grad():
        y = x * 2.0
    assert not y.requires_grad


def test_forward_outputs_finite_for_large_inputs():
    rng = np.random.default_rng(5)
    x = Tensor(rng.uniform(-1e6, 1e6, size=(4, 3, 9)))
    outs = [ad.tanh(x), ad.leaky_relu(x), ad.maxpool1d(x), ad.dense(x, Tensor(np.ones((2, 9))),
                                                                       Tensor(np.zeros(2))),
            ad.conv1d(x, Tensor(np.ones((2, 3, 2))), Tensor(np.zeros(2))),
            ad.segment_max(x, [0, 0, 1, 2], 4)]
    for out in outs:
        assert np.isfinite(out.data).all()


# -- segment max --------------------------------------------------------------------------

def test_segment_max_and_fill():
    x = Parameter([[1.0, 5.0], [3.0, 2.0], [0.0, 0.0]])
    y = ad.segment_max(x, [0, 0, 2], 3, fill=-1.0)
    assert y.data.tolist() == [[3.0, 5.0], [-1.0, -1.0], [0.0, 0.0]]
    ad.backward(ad.sum(y))
    assert x.grad.tolist() == [[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]


def test_segment_max_shape_error():
    with pytest.raises(DimensionError):
        ad.segment_max(Tensor(np.ones((3, 2))), [0, 1], 2)


# -- finite differences ---------------------------------------------------------------------

def test_finite_diff_quadratic():
    rng = np.random.default_rng(6)
    A = rng.normal(size=(4, 4))
    x = Parameter(rng.normal(size=4), name="x")

    def f():
        return ad.sum(x * ad.dense(x, Tensor(A), Tensor(np.zeros(4))))

    err, _ = ad.finite_diff_check(f, [x])
    assert err < 1e-9


def test_finite_diff_reports_wrong_gradient():
    x = Parameter([0.3, -0.2], name="x")

    def bad_square(t):
        return ad.record(t.data ** 2, (t,), lambda g: (3.0 * g * t.data,))

    err, worst = ad.finite_diff_check(lambda: ad.sum(bad_square(x)), [x])
    assert err > 0.1
    assert worst[0] == "x"


PRIMITIVES = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / (ad.exp(b) + 0.5),
    "exp": lambda a, b: ad.exp(a),
    "log": lambda a, b: ad.log(ad.square(a) + 0.1),
    "tanh": lambda a, b: ad.tanh(a),
    "leaky_relu": lambda a, b: ad.leaky_relu(a, 0.01),
    "clip": lambda a, b: ad.clip(a, -5.0, 5.0),
    "reshape_swap": lambda a, b: ad.swapaxes(ad.reshape(a, (3, 2, 2)), 0, 2),
    "concat": lambda a, b: ad.concat([a, b], axis=0),
    "getitem": lambda a, b: a[1:, ::2] * b[0, :2],
    "mean": lambda a, b: ad.mean(a * b, axis=1),
    "dense": lambda a, b: ad.dense(a, b, b[:, 0]),
    "conv1d": lambda a, b: ad.conv1d(a, ad.reshape(b, (2, 3, 2)), b[0, :2]),
    "maxpool": lambda a, b: ad.maxpool1d(a, 2, 2, True),
    "segment_max": lambda a, b: ad.segment_max(ad.concat([a, b], axis=0), [0, 2, 0, 1, 1, 0], 3),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients_match_finite_differences(name):
    op = PRIMITIVES[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for trial in range(100):
        a = Parameter(rng.normal(size=(3, 4)), name="a")
        b = Parameter(rng.normal(size=(3, 4)), name="b")
        w = rng.normal(size=op(a, b).shape)
        err, worst = ad.finite_diff_check(lambda: ad.sum(op(a, b) * w), [a, b])
        assert err < 1e-4, (trial, worst)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from coldstart import tensor as T
from coldstart.tensor import DomainError, NotScalar, ShapeMismatch, Tensor, grad_check, no_grad

from oracles import matmul_loops

rng = np.random.default_rng(7)


def _t(*shape, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, size=shape))


# each entry: (name, f(*inputs) -> scalar tensor, input factory)
UNARY = [
    ("exp", T.exp, lambda: _t(3, 4)),
    ("log", T.log, lambda: _t(3, 4, lo=0.5, hi=2.0)),
    ("sqrt", T.sqrt, lambda: _t(3, 4, lo=0.5, hi=2.0)),
    ("pow", lambda x: T.pow_(x, 3.0), lambda: _t(3, 4)),
    ("tanh", T.tanh, lambda: _t(3, 4)),
    ("relu", T.relu, lambda: Tensor(np.array([[-0.7, 0.3], [0.9, -0.2]]))),
    ("gelu", T.gelu, lambda: _t(3, 4, lo=-3, hi=3)),
    ("sigmoid", T.sigmoid, lambda: _t(3, 4, lo=-4, hi=4)),
    ("softplus", T.softplus, lambda: _t(3, 4, lo=-4, hi=4)),
    ("lgamma", T.lgamma, lambda: _t(3, 4, lo=0.5, hi=5.0)),
    ("neg", T.neg, lambda: _t(2, 3)),
    ("scale", lambda x: T.scale(x, -2.5), lambda: _t(2, 3)),
    ("softmax", lambda x: T.softmax(x, axis=-1), lambda: _t(3, 5)),
    ("softmax_axis0", lambda x: T.softmax(x, axis=0), lambda: _t(3, 5)),
    ("sum_axis", lambda x: T.sum_(x, axis=1), lambda: _t(3, 4)),
    ("mean_keepdims", lambda x: T.mean(x, axis=0, keepdims=True), lambda: _t(3, 4)),
    ("reshape", lambda x: T.reshape(x, (4, 3)), lambda: _t(3, 4)),
    ("transpose", lambda x: T.transpose(x, (2, 0, 1)), lambda: _t(2, 3, 4)),
    ("swap_last", T.swap_last, lambda: _t(2, 3, 4)),
    ("slice_basic", lambda x: x[1:, ::2], lambda: _t(3, 4)),
    ("slice_fancy", lambda x: x[np.array([0, 2, 0])], lambda: _t(3, 4)),
]

BINARY = [
    ("add", T.add, lambda: (_t(3, 4), _t(3, 4))),
    ("add_broadcast", T.add, lambda: (_t(2, 3, 4), _t(4))),
    ("sub", T.sub, lambda: (_t(3, 4), _t(3, 4))),
    ("mul", T.mul, lambda: (_t(3, 4), _t(3, 4))),
    ("mul_broadcast", T.mul, lambda: (_t(2, 3, 4), _t(3, 4))),
    ("div", T.div, lambda: (_t(3, 4), _t(3, 4, lo=0.5, hi=2.0))),
    ("matmul", T.matmul, lambda: (_t(3, 4), _t(4, 2))),
    ("matmul_batched", T.matmul, lambda: (_t(2, 3, 4), _t(2, 4, 5))),
    ("matmul_shared_weight", T.matmul, lambda: (_t(2, 3, 4), _t(4, 5))),
    ("concat", lambda a, b: T.concat([a, b], axis=-1), lambda: (_t(2, 3), _t(2, 2))),
    ("stack", lambda a, b: T.stack([a, b], axis=1), lambda: (_t(2, 3), _t(2, 3))),
]


def _weighted_sum(y):
    # a fixed random projection so every output coordinate matters
    w = np.random.default_rng(99).normal(size=y.shape)
    return T.sum_(y * Tensor(w))


@pytest.mark.parametrize("name,fn,make", UNARY, ids=[u[0] for u in UNARY])
def test_unary_gradients(name, fn, make):
    x = make()
    rep = grad_check(lambda a: _weighted_sum(fn(a)), [x])
    assert rep.passed, (name, rep)


@pytest.mark.parametrize("name,fn,make", BINARY, ids=[b[0] for b in BINARY])
def test_binary_gradients(name, fn, make):
    a, b = make()
    rep = grad_check(lambda x, y: _weighted_sum(fn(x, y)), [a, b])
    assert rep.passed, (name, rep)


def test_layer_norm_gradient():
    x, g, b = _t(2, 3, 5), _t(5, lo=0.5, hi=1.5), _t(5)
    rep = grad_check(lambda x, g, b: _weighted_sum(T.layer_norm(x, g, b)), [x, g, b])
    assert rep.passed, rep


def test_embedding_gradient_accumulates_repeats():
    table = _t(4, 3)
    idx = np.array([[0, 2], [2, 2]])
    rep = grad_check(lambda w: _weighted_sum(T.embedding_lookup(w, idx)), [table])
    assert rep.passed, rep
    table.grad = None
    T.sum_(T.embedding_lookup(table, idx)).backward()
    np.testing.assert_array_equal(table.grad[:, 0], [1, 0, 3, 0])


def test_matmul_matches_triple_loop():
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
    out = (Tensor(a) @ Tensor(b)).data
    np.testing.assert_allclose(out, matmul_loops(a.tolist(), b.tolist()), rtol=0, atol=1e-12)


def test_gradient_accumulates_over_reuse():
    x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    y = T.sum_(x * x + x)
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_gelu_matches_erf_form():
    from math import erf, sqrt

    xs = np.linspace(-4, 4, 17)
    expect = [v * 0.5 * (1 + erf(v / sqrt(2))) for v in xs]
    np.testing.assert_allclose(T.gelu(Tensor(xs)).data, expect, atol=1e-14)


def test_errors():
    with pytest.raises(ShapeMismatch):
        T.add(_t(2, 3), _t(3, 2))
    with pytest.raises(ShapeMismatch):
        T.matmul(_t(2, 3), _t(2, 3))
    with pytest.raises(DomainError):
        T.log(Tensor(np.array([1.0, 0.0])))
    with pytest.raises(DomainError):
        T.div(_t(2), Tensor(np.array([1.0, 0.0])))
    with pytest.raises(NotScalar):
        _t(2, 2).backward()


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = T.sum_(x * x)
    assert y._parents == () and not y.requires_grad


def test_dropout_identity_without_rng_and_scaled_with():
    x = Tensor(np.ones((200, 50)))
    assert T.dropout(x, 0.5, None) is x or np.array_equal(T.dropout(x, 0.5, None).data, x.data)
    y = T.dropout(x, 0.5, np.random.default_rng(0)).data
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert abs(y.mean() - 1.0) < 0.05


def test_grad_check_detects_wrong_gradient():
    x = _t(3)

    def bad(a):
        out = T.sum_(a * a)
        orig = out._backward
        out._backward = lambda g: tuple(2.0 * pg for pg in orig(g))
        return out

    assert not grad_check(bad, [x]).passed


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)),
                  elements=st.floats(-50, 50, allow_nan=False)))
def test_softmax_rows_sum_to_one(x):
    s = T.softmax(Tensor(x), axis=-1).data
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(s >= 0)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 8), elements=st.floats(-5, 5, allow_nan=False)),
       hnp.arrays(np.float64, st.integers(1, 8), elements=st.floats(-5, 5, allow_nan=False)))
def test_sum_of_products_gradient_is_other_factor(a, b):
    n = min(len(a), len(b))
    x, y = Tensor(a[:n], requires_grad=True), Tensor(b[:n], requires_grad=True)
    T.sum_(x * y).backward()
    np.testing.assert_array_equal(x.grad, b[:n])
    np.testing.assert_array_equal(y.grad, a[:n])

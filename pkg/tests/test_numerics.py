import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from strnn.numerics import (NonFiniteError, ShapeError, activation, as_matrix, as_vector,
                            finite_diff_grad, make_rng, matvec, ordered_map, sigmoid)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_matvec_examples():
    assert np.array_equal(matvec(np.eye(2), as_vector([3, 4])), [3, 4])
    assert np.array_equal(matvec(np.ones((1, 3)), as_vector([1, 2, 3])), [6])
    assert np.array_equal(matvec(as_matrix([[1, 2], [3, 4]]), as_vector([1, 1])), [3, 7])


def test_matvec_shape_error_reports_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2,\)"):
        matvec(np.ones((2, 3)), np.ones(2))


def test_matvec_rejects_non_finite():
    with pytest.raises(NonFiniteError):
        matvec(np.array([[1e308, 1e308]]), np.array([1e308, 1e308]))


@settings(max_examples=50)
@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, 4, elements=finite),
       arrays(np.float64, 4, elements=finite), finite, finite)
def test_matvec_is_linear(m, u, v, a, b):
    lhs = matvec(m, a * u + b * v)
    rhs = a * matvec(m, u) + b * matvec(m, v)
    scale = np.abs(m) @ (np.abs(a * u) + np.abs(b * v)) + 1e-300
    assert np.all(np.abs(lhs - rhs) <= 1e-12 * scale + 1e-300)


def test_activation_examples():
    assert np.array_equal(activation(np.array([-1.0, 0, 2]), "relu"), [0, 0, 2])
    assert activation(np.array([0.0]), "sigmoid")[0] == 0.5
    with np.errstate(over="raise"):
        assert activation(np.array([1000.0]), "sigmoid")[0] == 1.0
        assert activation(np.array([-1000.0]), "sigmoid")[0] == 0.0
    with pytest.raises(ValueError):
        activation(np.zeros(1), "tanh")


@given(arrays(np.float64, 6, elements=finite))
def test_relu_idempotent_and_sigmoid_range(x):
    r = activation(x, "relu")
    assert np.array_equal(activation(r, "relu"), r)
    s = sigmoid(np.clip(x, -30, 30))
    assert np.all((s > 0) & (s < 1))


def test_finite_diff_examples():
    g = finite_diff_grad(lambda p: float(p @ p), np.array([3.0]), 1e-4)
    assert g == pytest.approx([6.0], abs=1e-6)
    assert np.array_equal(finite_diff_grad(lambda p: 7.0, np.zeros(3)), np.zeros(3))
    p = np.array([0.0, 1.0])
    s = sigmoid(p)
    expected = s * (1 - s)  # analytic derivative
    g = finite_diff_grad(lambda q: float(sigmoid(q).sum()), p, 1e-4)
    assert np.allclose(g, expected, atol=1e-6)
    assert expected[1] == pytest.approx(0.19661193324148185)


def test_finite_diff_errors():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda p: 0.0, np.zeros(1), 0.0)
    with pytest.raises(NonFiniteError, match="coordinate 1"):
        finite_diff_grad(lambda p: np.inf if p[1] > 0.5 else 0.0, np.array([0.0, 0.5]))


def test_rng_reproducible():
    a = make_rng(42).normal(size=100)
    b = make_rng(42).normal(size=100)
    assert a.tobytes() == b.tobytes()
    assert make_rng(43).normal(size=100).tobytes() != a.tobytes()


def test_ordered_map_keeps_order(monkeypatch):
    monkeypatch.setenv("STRNN_THREADS", "3")
    assert ordered_map(lambda x: x * x, list(range(10))) == [x * x for x in range(10)]

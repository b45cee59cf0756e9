import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikerules import numerics as nx
from spikerules.numerics import (
    NonFiniteError,
    PseudoDerivative,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    finite_difference_gradient,
    heaviside_with_pseudo,
)


def test_identity_matmul():
    x = np.arange(6.0).reshape(2, 3)
    out = nx.matmul(np.eye(2), x)
    np.testing.assert_array_equal(out.data, x)


def test_softmax_symmetric():
    np.testing.assert_allclose(nx.softmax([0.0, 0.0]).data, [0.5, 0.5])


def test_sum():
    assert nx.tsum([1.0, 2.0, 3.0]).item() == 6.0


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        nx.matmul(np.ones((2, 3)), np.ones((4, 5)))
    with pytest.raises(ShapeError, match="expand"):
        nx.add(np.ones((2, 3)), np.ones(3))


def test_scalar_broadcast_allowed():
    out = nx.mul(np.ones((2, 2)), 3.0)
    np.testing.assert_array_equal(out.data, np.full((2, 2), 3.0))


def test_non_finite_is_an_error():
    with pytest.raises(NonFiniteError):
        nx.log([0.0, 1.0])
    with pytest.raises(NonFiniteError):
        Tensor([np.nan])


def test_tensors_are_immutable():
    t = Tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        t.data[0] = 5.0


def test_backward_linear():
    tape = Tape()
    w = tape.watch([1.5], "w")
    loss = (w * Tensor([2.0])).sum()
    grads = nx.backward(tape, loss)
    np.testing.assert_allclose(grads["w"], [2.0])


def test_untouched_parameter_has_zero_gradient():
    tape = Tape()
    w = tape.watch([1.0, 2.0], "w")
    tape.watch(np.ones((2, 2)), "p")
    grads = tape.backward((w * w).sum())
    np.testing.assert_array_equal(grads["p"], np.zeros((2, 2)))


def test_sigmoid_gradient_at_zero():
    tape = Tape()
    w = tape.watch(np.zeros(4), "w")
    grads = tape.backward(nx.sigmoid(w).sum())
    np.testing.assert_allclose(grads["w"], 0.25)


def test_backward_errors():
    tape = Tape()
    w = tape.watch(np.ones(3), "w")
    with pytest.raises(TapeError, match="scalar"):
        tape.backward(w * 2.0)
    tape.backward((w * 2.0).sum())
    with pytest.raises(TapeError, match="consumed"):
        tape.backward((w * 2.0).sum())


def test_mixed_tapes_rejected():
    a = Tape().watch([1.0], "a")
    b = Tape().watch([1.0], "b")
    with pytest.raises(TapeError):
        a + b


def test_replay_order_is_reverse_of_execution():
    tape = Tape()
    w = tape.watch([2.0], "w")
    seen = []
    for i in range(4):
        x = w * float(i + 1)
        fn = tape._ops[-1][2]
        tape._ops[-1] = (tape._ops[-1][0], tape._ops[-1][1],
                         (lambda f, k: lambda g: (seen.append(k), f(g))[1])(fn, i))
        w = x
    tape.backward(w.sum())
    assert seen == [3, 2, 1, 0]


@pytest.mark.parametrize("x, value, mult", [
    (0.0, 1.0, 0.3),
    (-2.0, 0.0, 0.0),
    (0.5, 1.0, 0.15),
])
def test_heaviside_with_pseudo(x, value, mult):
    pd = PseudoDerivative(gamma=0.3)
    tape = Tape()
    v = tape.watch([x], "v")
    z = heaviside_with_pseudo(v, pd, v_th=1.0)
    assert z.data[0] == value
    grads = tape.backward(z.sum())
    np.testing.assert_allclose(grads["v"], [mult])


def test_heaviside_rejects_bad_threshold():
    with pytest.raises(ValueError):
        heaviside_with_pseudo([0.0], PseudoDerivative(), v_th=0.0)


def test_pseudo_shape():
    pd = PseudoDerivative(gamma=0.3)
    x = np.linspace(-3, 3, 601)
    psi = pd(x, 1.5)
    assert psi.min() >= 0 and psi.max() <= 0.3 + 1e-15
    assert psi[np.abs(x) >= 1.5].max() == 0.0
    assert psi[300] == pytest.approx(0.3)
    # continuous and piecewise linear: second differences vanish away from kinks
    d2 = np.diff(psi, 2)
    kinks = np.isclose(np.abs(x[1:-1]), 1.5) | np.isclose(x[1:-1], 0.0)
    np.testing.assert_allclose(d2[~kinks], 0.0, atol=1e-12)
    assert np.abs(np.diff(psi)).max() <= 0.3 / 1.5 * 0.01 + 1e-12


def test_unknown_pseudo_kind():
    with pytest.raises(ValueError, match="triangular"):
        PseudoDerivative(kind="gaussian")


def test_finite_difference_examples():
    g = finite_difference_gradient(lambda p: float(p["w"][0] ** 2), {"w": np.array([3.0])})
    assert abs(g["w"][0] - 6.0) < 1e-6
    g = finite_difference_gradient(lambda p: 7.0, {"w": np.ones(3)})
    np.testing.assert_array_equal(g["w"], 0.0)
    g = finite_difference_gradient(lambda p: float(p["w"].sum()), {"w": np.ones((2, 3))})
    np.testing.assert_allclose(g["w"], 1.0)
    with pytest.raises(ValueError):
        finite_difference_gradient(lambda p: 0.0, {"w": np.ones(1)}, eps=0)
    with pytest.raises(NonFiniteError):
        finite_difference_gradient(lambda p: float("nan"), {"w": np.ones(1)})


def test_softmax_cross_entropy_gradient_identity():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(5, 4))
    onehot = np.eye(4)[rng.integers(0, 4, 5)]
    tape = Tape()
    y = tape.watch(logits, "y")
    loss = -(nx.log_softmax(y) * Tensor(onehot)).sum()
    grads = tape.backward(loss)
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(grads["y"], p - onehot, atol=1e-10)


def _composite(params, tape=None):
    """Smooth composition exercising every differentiable primitive."""
    if tape is None:
        w, b, u = (Tensor(params[k]) for k in ("w", "b", "u"))
    else:
        w, b, u = (tape.watch(params[k], k) for k in ("w", "b", "u"))
    x = Tensor(params["x"])
    h = nx.tanh(x @ w + nx.expand(b, (x.shape[0], w.shape[1])))
    h2 = nx.sigmoid(h) * nx.exp(h * 0.3) - nx.square(h) / 3.0
    cat = nx.concat([h2, nx.relu(h2 + 0.1)], axis=1)
    part = cat[:, 1:] @ nx.transpose(cat[:, 1:]) * 0.2
    s = nx.softmax(part) * nx.log(nx.exp(part) + 1.0)
    r = nx.reshape(s, (-1,))
    return (r.mean() + (u * u).sum() * 0.5 + (nx.log_softmax(part).sum(axis=0) * 0.01).sum())


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 8), d=st.integers(1, 8), k=st.integers(2, 8), seed=st.integers(0, 10_000))
def test_backward_matches_finite_differences(n, d, k, seed):
    rng = np.random.default_rng(seed)
    params = {
        "w": rng.normal(size=(d, k)),
        "b": rng.normal(size=(k,)),
        "u": rng.normal(size=(2, 2)),
        "x": rng.normal(size=(n, d)),
    }
    tape = Tape()
    grads = tape.backward(_composite(params, tape))
    fd = finite_difference_gradient(lambda p: _composite(p).item(), params, eps=1e-5, only={"w", "b", "u"})
    for key in ("w", "b", "u"):
        # relu kinks are measure-zero; fall back to absolute tolerance near zero
        np.testing.assert_allclose(grads[key], fd[key], rtol=1e-5, atol=1e-8)

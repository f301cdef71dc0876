"""Engine-level gradient and op checks."""

import numpy as np
import pytest

from sketchmotion import nn
from sketchmotion.autodiff import (Tensor, concatenate, conv1d_same, flop_meter,
                                   matmul, no_grad, scatter_rows, softmax,
                                   take_rows, tanh)

rng = np.random.default_rng(0)


def leaf(*shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def check(fn, *leaves, tol=1e-6):
    params = {f"p{i}": l for i, l in enumerate(leaves)}
    worst = nn.fd_check_params(lambda: fn(*leaves), params, entries_per_param=8)
    assert worst < tol, worst


def test_arithmetic_grads():
    check(lambda a, b: ((a * b + a / (b * b + 2.0) - 3.0 * b) ** 2).sum(),
          leaf(4, 5), leaf(4, 5))


def test_broadcast_grads():
    check(lambda a, b: (a * b + b).mean(), leaf(4, 5), leaf(5))


def test_matmul_grads():
    check(lambda a, b: (matmul(a, b) ** 2).sum(), leaf(3, 4), leaf(4, 6))
    check(lambda a, b: (matmul(a, b) ** 2).sum(), leaf(2, 3, 4), leaf(2, 4, 5))
    check(lambda a, b: (matmul(a, b) ** 2).sum(), leaf(2, 3, 4), leaf(4, 5))


def test_softmax_axes_and_grads():
    x = leaf(4, 5)
    s_last = softmax(x, axis=-1)
    s_first = softmax(x, axis=0)
    assert np.allclose(s_last.data.sum(axis=-1), 1.0)
    assert np.allclose(s_first.data.sum(axis=0), 1.0)
    check(lambda a: (softmax(a, axis=-1) * softmax(a, axis=0)).sum(), leaf(4, 5))


def test_conv_and_concat_grads():
    check(lambda x, w, b: (conv1d_same(x, w, b) ** 2).sum(),
          leaf(2, 7, 3), leaf(3, 3, 4), leaf(4))
    check(lambda a, b: (concatenate([a, b], axis=0) ** 2).sum(), leaf(2, 3), leaf(4, 3))


def test_gather_scatter_grads():
    t = leaf(7, 4)
    check(lambda a: (take_rows(a, np.array([0, 2, 2, 6])) ** 2).sum(), t)
    s = leaf(3, 4)
    check(lambda a: (scatter_rows(a, np.array([1, 4, 2]), 6) ** 2).sum(), s)


def test_slice_grads():
    check(lambda a: (a[1:3, :2] ** 2).sum(), leaf(4, 5))
    check(lambda a: (a[np.array([0, 2])] ** 2).sum(), leaf(4, 5))


def test_tanh_chain():
    check(lambda a, b: tanh(matmul(a, b)).mean(), leaf(3, 4), leaf(4, 2))


def test_numpy_interop_defers_to_tensor():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    y = np.full((2, 2), 3.0) - x
    assert isinstance(y, Tensor)
    assert np.allclose(y.data, 2.0)


def test_no_grad_blocks_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_flop_meter_counts_matmul_madds():
    with flop_meter() as fm:
        matmul(Tensor(np.zeros((3, 4))), Tensor(np.zeros((4, 5))))
    assert fm["madds"] == 3 * 4 * 5
    with flop_meter() as fm:
        conv1d_same(Tensor(np.zeros((1, 6, 2))), Tensor(np.zeros((3, 2, 4))))
    assert fm["madds"] == 6 * 4 * 3 * 2


def test_layernorm_attention_grads():
    ln = nn.LayerNorm(6)
    att = nn.DotProductSelfAttention(np.random.default_rng(1), 6)
    x = leaf(5, 6)
    params = {"x": x, **att.named_params(), **ln.named_params()}
    worst = nn.fd_check_params(lambda: (att(ln(x)) ** 2).sum(), params,
                               entries_per_param=4)
    assert worst < 1e-5


def test_checkpoint_roundtrip(tmp_path):
    arrays = {"a.w": rng.normal(size=(3, 2)), "b": np.arange(4.0)}
    nn.save_checkpoint(tmp_path / "c.npz", arrays, {"kind": "test", "x": 1})
    loaded, meta = nn.load_checkpoint(tmp_path / "c.npz")
    assert meta == {"kind": "test", "x": 1}
    assert set(loaded) == set(arrays)
    for k in arrays:
        assert np.array_equal(loaded[k], arrays[k])

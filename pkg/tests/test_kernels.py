"""Backend parity: the compiled kernels and the numpy fallback must agree."""

import numpy as np
import pytest

from dtadyn.kernels import BACKEND, numpy_backend

try:
    from dtadyn.kernels import _ckernels
except ImportError:
    _ckernels = None

needs_extension = pytest.mark.skipif(
    _ckernels is None, reason="compiled kernel extension not built"
)


def test_a_backend_was_selected():
    assert BACKEND in ("mixed", "cython", "numpy")
    if _ckernels is not None:
        assert BACKEND == "mixed"  # default: best of both


@needs_extension
@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("dilation", [1, 2, 4])
def test_conv_forward_parity(seed, dilation):
    r = np.random.default_rng(seed)
    seq = r.normal(size=(3, 24))
    weights = r.normal(size=(4, 3, 5))
    bias = r.normal(size=4)
    got = _ckernels.conv1d_dilated_forward(seq, weights, bias, dilation)
    want = numpy_backend.conv1d_dilated_forward(seq, weights, bias, dilation)
    assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


@needs_extension
@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("dilation", [1, 3])
def test_conv_backward_parity(seed, dilation):
    r = np.random.default_rng(seed)
    seq = r.normal(size=(2, 20))
    weights = r.normal(size=(3, 2, 4))
    n_out = 20 - 3 * dilation
    grad_out = r.normal(size=(3, n_out))
    got = _ckernels.conv1d_dilated_backward(seq, weights, dilation, grad_out)
    want = numpy_backend.conv1d_dilated_backward(seq, weights, dilation, grad_out)
    for g, w in zip(got, want):
        assert np.allclose(g, w, rtol=1e-12, atol=1e-12)


@needs_extension
def test_scatter_add_parity():
    r = np.random.default_rng(0)
    ids = np.array([0, 2, 2, 1, 2], dtype=np.int64)
    rows = r.normal(size=(5, 3))
    t1 = np.zeros((4, 3))
    t2 = np.zeros((4, 3))
    _ckernels.scatter_add_rows(t1, ids, rows)
    numpy_backend.scatter_add_rows(t2, ids, rows)
    assert np.allclose(t1, t2, atol=1e-15)
    assert np.allclose(t1[2], rows[[1, 2, 4]].sum(axis=0), atol=1e-15)


@needs_extension
def test_column_max_parity_and_tie_break():
    x = np.array([[1.0, 5.0, 2.0], [3.0, 5.0, 2.0], [3.0, 1.0, 7.0]])
    cv, ci = _ckernels.column_max(x)
    nv, ni = numpy_backend.column_max(x)
    assert np.array_equal(cv, nv)
    assert np.array_equal(ci, ni)
    # ties resolve to the lowest row index in both backends
    assert ci.tolist() == [1, 0, 2]

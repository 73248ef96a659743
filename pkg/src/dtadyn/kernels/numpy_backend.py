"""Pure-numpy implementations of the hot kernels.

Fallback used when the compiled extension is unavailable (or forced via
DTADYN_KERNELS=numpy).  Must stay semantically identical to _ckernels.
"""

import numpy as np


def _tap_index(kernel_size, dilation, n_out):
    # (K, N_out) gather index: position i + j*dilation for tap j
    return dilation * np.arange(kernel_size)[:, None] + np.arange(n_out)[None, :]


def conv1d_dilated_forward(seq, weights, bias, dilation):
    """Valid dilated 1D convolution.

    seq: (C_in, N), weights: (C_out, C_in, K), bias: (C_out,)
    returns (C_out, N - (K-1)*dilation).
    """
    c_out, c_in, k = weights.shape
    n_out = seq.shape[1] - (k - 1) * dilation
    gathered = seq[:, _tap_index(k, dilation, n_out)]  # (C_in, K, N_out)
    out = np.einsum("oik,ikn->on", weights, gathered, optimize=True)
    out += bias[:, None]
    return out


def conv1d_dilated_backward(seq, weights, dilation, grad_out):
    """Gradients of conv1d_dilated_forward wrt seq, weights, bias."""
    c_out, c_in, k = weights.shape
    n_out = grad_out.shape[1]
    idx = _tap_index(k, dilation, n_out)
    gathered = seq[:, idx]  # (C_in, K, N_out)
    grad_w = np.einsum("on,ikn->oik", grad_out, gathered, optimize=True)
    grad_b = grad_out.sum(axis=1)
    grad_gathered = np.einsum("on,oik->ikn", grad_out, weights, optimize=True)
    grad_seq = np.zeros_like(seq)
    np.add.at(
        grad_seq,
        (np.arange(c_in)[:, None, None], idx[None, :, :]),
        grad_gathered,
    )
    return grad_seq, grad_w, grad_b


def scatter_add_rows(table, ids, rows):
    """table[ids[i]] += rows[i] with repeated ids accumulating. In place."""
    np.add.at(table, ids, rows)


def column_max(x):
    """Columnwise max of (N, d): returns (values (d,), first argmax (d,))."""
    return x.max(axis=0), x.argmax(axis=0)

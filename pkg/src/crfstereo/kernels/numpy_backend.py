"""Pure-numpy implementations of the hot kernels.

Chain dynamic programming is vectorized across chains; the dual averaging
sweep keeps an explicit pixel loop because each update feeds the messages
of the next pixel.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_raw(inp, kernel, off_h, off_w):
    """Same-size 2-D convolution with zero padding and explicit anchor.

    out[r, c, o] = sum_{i,a,b} kernel[o, i, a, b] * inp[r+a-off_h, c+b-off_w, i]
    with out-of-range input treated as zero.
    """
    H, W, Ci = inp.shape
    Co, _, kh, kw = kernel.shape
    padded = np.zeros((H + kh - 1, W + kw - 1, Ci), dtype=inp.dtype)
    padded[off_h:off_h + H, off_w:off_w + W] = inp
    win = sliding_window_view(padded, (kh, kw), axis=(0, 1))  # (H, W, Ci, kh, kw)
    return np.einsum("hwiab,oiab->hwo", win, kernel, optimize=True)


def conv2d_grad_kernel(inp, grad_pre, kh, kw, off_h, off_w):
    """Gradient of sum(grad_pre * conv2d_raw(inp, kernel)) w.r.t. the kernel."""
    H, W, Ci = inp.shape
    padded = np.zeros((H + kh - 1, W + kw - 1, Ci), dtype=inp.dtype)
    padded[off_h:off_h + H, off_w:off_w + W] = inp
    win = sliding_window_view(padded, (kh, kw), axis=(0, 1))
    return np.einsum("hwo,hwiab->oiab", grad_pre, win, optimize=True)


def _pass_messages(costs, weights, wp1_all, wp2_all):
    """Forward DP over a batch of chains: F[b, v] = costs[b, v] + msg(F[b, v-1])."""
    B, n, L = costs.shape
    F = np.empty_like(costs)
    F[:, 0] = costs[:, 0]
    for v in range(1, n):
        m = F[:, v - 1]
        msg = np.minimum(m, m.min(axis=1, keepdims=True) + wp2_all[:, v - 1:v])
        if L > 1:
            wp1 = wp1_all[:, v - 1:v]
            msg[:, :-1] = np.minimum(msg[:, :-1], m[:, 1:] + wp1)
            msg[:, 1:] = np.minimum(msg[:, 1:], m[:, :-1] + wp1)
        F[:, v] = costs[:, v] + msg
    return F


def batch_chain_min_marginals(costs, weights, P1, P2):
    """Exact min-marginals for a batch of chains with the truncated penalty.

    costs: (B, n, L), weights: (B, n-1). Returns (B, n, L) where entry
    [b, v, k] is the minimum chain energy subject to node v taking label k.
    """
    wp1 = weights * P1
    wp2 = weights * P2
    F = _pass_messages(costs, weights, wp1, wp2)
    Bk = _pass_messages(costs[:, ::-1], weights[:, ::-1], wp1[:, ::-1], wp2[:, ::-1])
    return F + Bk[:, ::-1] - costs


def batch_chain_min(costs, weights, P1, P2):
    """Minimum energy of each chain in a batch; forward pass only."""
    F = _pass_messages(costs, weights, weights * P1, weights * P2)
    return F[:, -1].min(axis=1)


def _tmsg(m, wp1, wp2):
    out = np.minimum(m, m.min() + wp2)
    if m.shape[0] > 1:
        out[:-1] = np.minimum(out[:-1], m[1:] + wp1)
        out[1:] = np.minimum(out[1:], m[:-1] + wp1)
    return out


def mm_sweep(unary, lam, wh, wv, P1, P2):
    """One monotone min-marginal averaging sweep over the grid.

    Row-chain and column-chain min-marginals are equalized pixel by pixel
    in scanline order; forward messages are rebuilt from the already
    updated multipliers while the precomputed backward messages stay valid
    because they only depend on pixels not yet visited.
    """
    H, W, L = unary.shape
    lam = lam.copy()

    # Backward (right-to-left) row messages into each pixel.
    rb = np.zeros((H, W, L))
    for c in range(W - 2, -1, -1):
        m = rb[:, c + 1] + unary[:, c + 1] + lam[:, c + 1]
        w = wh[:, c:c + 1]
        msg = np.minimum(m, m.min(axis=1, keepdims=True) + w * P2)
        if L > 1:
            msg[:, :-1] = np.minimum(msg[:, :-1], m[:, 1:] + w * P1)
            msg[:, 1:] = np.minimum(msg[:, 1:], m[:, :-1] + w * P1)
        rb[:, c] = msg

    # Backward (bottom-to-top) column messages.
    cb = np.zeros((H, W, L))
    for r in range(H - 2, -1, -1):
        m = cb[r + 1] - lam[r + 1]
        w = wv[r][:, None]
        msg = np.minimum(m, m.min(axis=1, keepdims=True) + w * P2)
        if L > 1:
            msg[:, :-1] = np.minimum(msg[:, :-1], m[:, 1:] + w * P1)
            msg[:, 1:] = np.minimum(msg[:, 1:], m[:, :-1] + w * P1)
        cb[r] = msg

    rf = np.zeros((H, W, L))
    cf = np.zeros((H, W, L))
    for r in range(H):
        for c in range(W):
            m1 = unary[r, c] + lam[r, c] + rf[r, c] + rb[r, c]
            m2 = -lam[r, c] + cf[r, c] + cb[r, c]
            lam[r, c] += 0.5 * ((m2 - m2.min()) - (m1 - m1.min()))
            if c + 1 < W:
                rf[r, c + 1] = _tmsg(rf[r, c] + unary[r, c] + lam[r, c],
                                     wh[r, c] * P1, wh[r, c] * P2)
            if r + 1 < H:
                cf[r + 1, c] = _tmsg(cf[r, c] - lam[r, c],
                                     wv[r, c] * P1, wv[r, c] * P2)
    return lam

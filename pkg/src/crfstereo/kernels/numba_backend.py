"""Jitted implementations of the hot kernels. Arithmetic mirrors numpy_backend."""

import numpy as np
from numba import njit


@njit(cache=True)
def conv2d_raw(inp, kernel, off_h, off_w):
    H, W, Ci = inp.shape
    Co, _, kh, kw = kernel.shape
    # (a, b, i, o) layout keeps the inner accumulation contiguous
    kt = np.empty((kh, kw, Ci, Co))
    for o in range(Co):
        for i in range(Ci):
            for a in range(kh):
                for b in range(kw):
                    kt[a, b, i, o] = kernel[o, i, a, b]
    out = np.zeros((H, W, Co))
    for r in range(H):
        for c in range(W):
            for a in range(kh):
                rr = r + a - off_h
                if rr < 0 or rr >= H:
                    continue
                for b in range(kw):
                    cc = c + b - off_w
                    if cc < 0 or cc >= W:
                        continue
                    for i in range(Ci):
                        v = inp[rr, cc, i]
                        for o in range(Co):
                            out[r, c, o] += v * kt[a, b, i, o]
    return out


@njit(cache=True)
def conv2d_grad_kernel(inp, grad_pre, kh, kw, off_h, off_w):
    H, W, Ci = inp.shape
    Co = grad_pre.shape[2]
    acc = np.zeros((kh, kw, Ci, Co))
    for r in range(H):
        for c in range(W):
            for a in range(kh):
                rr = r + a - off_h
                if rr < 0 or rr >= H:
                    continue
                for b in range(kw):
                    cc = c + b - off_w
                    if cc < 0 or cc >= W:
                        continue
                    for i in range(Ci):
                        v = inp[rr, cc, i]
                        for o in range(Co):
                            acc[a, b, i, o] += v * grad_pre[r, c, o]
    grad = np.empty((Co, Ci, kh, kw))
    for o in range(Co):
        for i in range(Ci):
            for a in range(kh):
                for b in range(kw):
                    grad[o, i, a, b] = acc[a, b, i, o]
    return grad


@njit(cache=True, inline="always")
def _tmsg_into(m, wp1, wp2, out):
    """out[k] = min_l m[l] + w*rho(|k-l|), exploiting the truncated penalty."""
    L = m.shape[0]
    lo = m[0]
    for k in range(1, L):
        if m[k] < lo:
            lo = m[k]
    lo += wp2
    for k in range(L):
        best = m[k]
        if k > 0 and m[k - 1] + wp1 < best:
            best = m[k - 1] + wp1
        if k + 1 < L and m[k + 1] + wp1 < best:
            best = m[k + 1] + wp1
        if lo < best:
            best = lo
        out[k] = best


@njit(cache=True)
def batch_chain_min_marginals(costs, weights, P1, P2):
    B, n, L = costs.shape
    out = np.empty((B, n, L))
    F = np.empty((n, L))
    Bw = np.empty((n, L))
    msg = np.empty(L)
    for b in range(B):
        for k in range(L):
            F[0, k] = costs[b, 0, k]
        for v in range(1, n):
            w = weights[b, v - 1]
            _tmsg_into(F[v - 1], w * P1, w * P2, msg)
            for k in range(L):
                F[v, k] = costs[b, v, k] + msg[k]
        for k in range(L):
            Bw[n - 1, k] = costs[b, n - 1, k]
        for v in range(n - 2, -1, -1):
            w = weights[b, v]
            _tmsg_into(Bw[v + 1], w * P1, w * P2, msg)
            for k in range(L):
                Bw[v, k] = costs[b, v, k] + msg[k]
        for v in range(n):
            for k in range(L):
                out[b, v, k] = F[v, k] + Bw[v, k] - costs[b, v, k]
    return out


@njit(cache=True)
def batch_chain_min(costs, weights, P1, P2):
    B, n, L = costs.shape
    out = np.empty(B)
    F = np.empty(L)
    msg = np.empty(L)
    for b in range(B):
        for k in range(L):
            F[k] = costs[b, 0, k]
        for v in range(1, n):
            w = weights[b, v - 1]
            _tmsg_into(F, w * P1, w * P2, msg)
            for k in range(L):
                F[k] = costs[b, v, k] + msg[k]
        best = F[0]
        for k in range(1, L):
            if F[k] < best:
                best = F[k]
        out[b] = best
    return out


@njit(cache=True)
def mm_sweep(unary, lam, wh, wv, P1, P2):
    H, W, L = unary.shape
    out = lam.copy()

    rb = np.zeros((H, W, L))
    cb = np.zeros((H, W, L))
    tmp = np.empty(L)
    for r in range(H):
        for c in range(W - 2, -1, -1):
            for k in range(L):
                tmp[k] = rb[r, c + 1, k] + unary[r, c + 1, k] + out[r, c + 1, k]
            _tmsg_into(tmp, wh[r, c] * P1, wh[r, c] * P2, rb[r, c])
    for c in range(W):
        for r in range(H - 2, -1, -1):
            for k in range(L):
                tmp[k] = cb[r + 1, c, k] - out[r + 1, c, k]
            _tmsg_into(tmp, wv[r, c] * P1, wv[r, c] * P2, cb[r, c])

    rf = np.zeros((H, W, L))
    cf = np.zeros((H, W, L))
    m1 = np.empty(L)
    m2 = np.empty(L)
    for r in range(H):
        for c in range(W):
            min1 = np.inf
            min2 = np.inf
            for k in range(L):
                m1[k] = unary[r, c, k] + out[r, c, k] + rf[r, c, k] + rb[r, c, k]
                m2[k] = -out[r, c, k] + cf[r, c, k] + cb[r, c, k]
                if m1[k] < min1:
                    min1 = m1[k]
                if m2[k] < min2:
                    min2 = m2[k]
            for k in range(L):
                out[r, c, k] += 0.5 * ((m2[k] - min2) - (m1[k] - min1))
            if c + 1 < W:
                for k in range(L):
                    tmp[k] = rf[r, c, k] + unary[r, c, k] + out[r, c, k]
                _tmsg_into(tmp, wh[r, c] * P1, wh[r, c] * P2, rf[r, c + 1])
            if r + 1 < H:
                for k in range(L):
                    tmp[k] = cf[r, c, k] - out[r, c, k]
                _tmsg_into(tmp, wv[r, c] * P1, wv[r, c] * P2, cf[r + 1, c])
    return out

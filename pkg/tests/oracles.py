"""Independent reference implementations used to pin expected values.

Everything here is deliberately naive (loops, enumeration) and shares no
code with the library's computation paths.
"""

import itertools

import numpy as np


def rho_scalar(delta, P1, P2):
    if delta == 0:
        return 0.0
    if delta == 1:
        return P1
    return P2


def naive_conv2d(inp, kernel, bias, off_h, off_w):
    """Direct dot-product convolution with zero padding."""
    H, W, _ = inp.shape
    Co, Ci, kh, kw = kernel.shape
    out = np.zeros((H, W, Co))
    for r in range(H):
        for c in range(W):
            for o in range(Co):
                acc = bias[o]
                for i in range(Ci):
                    for a in range(kh):
                        for b in range(kw):
                            rr = r + a - off_h
                            cc = c + b - off_w
                            if 0 <= rr < H and 0 <= cc < W:
                                acc += kernel[o, i, a, b] * inp[rr, cc, i]
                out[r, c, o] = acc
    return out


def chain_energy_naive(costs, weights, P1, P2, labels):
    e = 0.0
    n = len(labels)
    for v in range(n):
        e += costs[v, labels[v]]
    for v in range(n - 1):
        e += weights[v] * rho_scalar(abs(labels[v] - labels[v + 1]), P1, P2)
    return e


def enumerate_chain_min_marginals(costs, weights, P1, P2):
    """Min-marginals by enumerating every labeling of the chain."""
    n, L = costs.shape
    mm = np.full((n, L), np.inf)
    for labels in itertools.product(range(L), repeat=n):
        e = chain_energy_naive(costs, weights, P1, P2, labels)
        for v in range(n):
            if e < mm[v, labels[v]]:
                mm[v, labels[v]] = e
    return mm


def enumerate_chain_min(costs, weights, P1, P2):
    return enumerate_chain_min_marginals(costs, weights, P1, P2).min()


def naive_min_plus_message(m, w, P1, P2):
    """Dense O(L^2) min-plus product with the truncated penalty."""
    L = m.shape[0]
    out = np.empty(L)
    for k in range(L):
        out[k] = min(m[l] + w * rho_scalar(abs(k - l), P1, P2) for l in range(L))
    return out


def grid_energy_naive(unary, wh, wv, P1, P2, x):
    """Independent re-summation of the 4-connected grid energy.

    wh[r, c] prices edge (r,c)-(r,c+1); wv[r, c] prices (r,c)-(r+1,c)."""
    H, W, _ = unary.shape
    e = 0.0
    for r in range(H):
        for c in range(W):
            e += unary[r, c, x[r, c]]
    for r in range(H):
        for c in range(W - 1):
            e += wh[r, c] * rho_scalar(abs(int(x[r, c]) - int(x[r, c + 1])), P1, P2)
    for r in range(H - 1):
        for c in range(W):
            e += wv[r, c] * rho_scalar(abs(int(x[r, c]) - int(x[r + 1, c])), P1, P2)
    return e


def brute_force_map(unary, wh, wv, P1, P2):
    """Exhaustive MAP labeling; only usable for tiny grids."""
    H, W, L = unary.shape
    best = None
    best_e = np.inf
    for flat in itertools.product(range(L), repeat=H * W):
        x = np.asarray(flat, dtype=np.int64).reshape(H, W)
        e = grid_energy_naive(unary, wh, wv, P1, P2, x)
        if e < best_e:
            best_e = e
            best = x
    return best, best_e


def count_brute_force_minimizers(unary, wh, wv, P1, P2, tol=0.0):
    _, best_e = brute_force_map(unary, wh, wv, P1, P2)
    H, W, L = unary.shape
    count = 0
    for flat in itertools.product(range(L), repeat=H * W):
        x = np.asarray(flat, dtype=np.int64).reshape(H, W)
        if grid_energy_naive(unary, wh, wv, P1, P2, x) <= best_e + tol:
            count += 1
    return count


def central_difference(fn, array, index, eps=1e-4):
    """Symmetric finite difference of a scalar function in one array entry."""
    old = array[index]
    array[index] = old + eps
    fp = fn()
    array[index] = old - eps
    fm = fn()
    array[index] = old
    return (fp - fm) / (2.0 * eps)


def relative_error(a, b, floor=1e-3):
    """Guarded relative error: |a-b| / max(|a|, |b|, floor)."""
    return abs(a - b) / max(abs(a), abs(b), floor)


def random_grid_problem(rng, H, W, L, w_hi=2.0, p_hi=3.0, unary_lo=-1.0, unary_hi=1.0):
    """Random instance in the acceptance-suite distribution. Returns plain
    arrays (unary, wh_plane, wv_plane, P1, P2) with zeroed boundary rows."""
    unary = rng.uniform(unary_lo, unary_hi, (H, W, L))
    wh = np.zeros((H, W))
    wv = np.zeros((H, W))
    wh[:, :W - 1] = rng.uniform(0.0, w_hi, (H, W - 1))
    wv[:H - 1] = rng.uniform(0.0, w_hi, (H - 1, W))
    P1 = rng.uniform(0.0, p_hi)
    P2 = P1 + rng.uniform(0.0, p_hi - P1)
    return unary, wh, wv, P1, P2

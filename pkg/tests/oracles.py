"""Slow, implementation-free reference functions the test suite checks against.

Everything here is written as directly as possible (nested loops, exhaustive
sweeps) so that agreement with the library is evidence, not tautology.  Keep
these independent: no imports from twoview.
"""

from __future__ import annotations

import numpy as np


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max absolute difference relative to the larger array's magnitude."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(1e-12, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) / scale


# -- layer forward references -------------------------------------------------


def conv2d_ref(x, k, b, stride=1, pad=0):
    """Six-nested-loop cross-correlation."""
    x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    n, c, h, w = x.shape
    o, _, kh, kw = k.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for bi in range(n):
        for oi in range(o):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += x[bi, ci, i * stride + u, j * stride + v] * k[oi, ci, u, v]
                    out[bi, oi, i, j] = acc + b[oi]
    return out


def depthwise_ref(x, k, pad=0):
    x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    n, c, h, w = x.shape
    _, kh, kw = k.shape
    ho = h - kh + 1
    wo = w - kw + 1
    out = np.zeros((n, c, ho, wo))
    for bi in range(n):
        for ci in range(c):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for u in range(kh):
                        for v in range(kw):
                            acc += x[bi, ci, i + u, j + v] * k[ci, u, v]
                    out[bi, ci, i, j] = acc
    return out


def dense_ref(x, w, b):
    n, din = x.shape
    dout = w.shape[0]
    out = np.zeros((n, dout))
    for bi in range(n):
        for i in range(dout):
            acc = 0.0
            for j in range(din):
                acc += w[i, j] * x[bi, j]
            out[bi, i] = acc + b[i]
    return out


def avg_pool2_ref(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c, h // 2, w // 2))
    for bi in range(n):
        for ci in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    out[bi, ci, i, j] = x[bi, ci, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].mean()
    return out


def global_avg_pool_ref(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c))
    for bi in range(n):
        for ci in range(c):
            out[bi, ci] = x[bi, ci].mean()
    return out


def cam_ref(maps, weight_row):
    """Double-loop weighted channel sum, no normalization."""
    d, s1, s2 = maps.shape
    out = np.zeros((s1, s2))
    for i in range(s1):
        for j in range(s2):
            acc = 0.0
            for kk in range(d):
                acc += weight_row[kk] * maps[kk, i, j]
            out[i, j] = acc
    return out


# -- optimizer reference -------------------------------------------------------


def adam_scalar_ref(theta0, grads, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """Published Adam recurrence on a scalar parameter; returns theta after each step."""
    theta = float(theta0)
    m = 0.0
    v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
        out.append(theta)
    return out


# -- metric references ---------------------------------------------------------


def auc_pair_count(scores, labels):
    """O(P*N) Mann-Whitney: fraction of (pos, neg) pairs won, ties at half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def tdr_exhaustive(scores, labels, fdr_target):
    """Try every score as a threshold (plus +inf); keep the best feasible TDR."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    best = 0.0
    for tau in list(scores) + [np.inf]:
        fdr = np.mean(neg >= tau)
        if fdr <= fdr_target:
            best = max(best, float(np.mean(pos >= tau)))
    return best


def trapezoid_area(points):
    """Trapezoid rule over (x, y) points sorted by x."""
    pts = sorted(points)
    area = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


# -- hashing reference ---------------------------------------------------------

# Known FNV-1a 64-bit digests, from the reference vectors published with the
# algorithm.
FNV1A_VECTORS = {
    b"": 0xCBF29CE484222325,
    b"a": 0xAF63DC4C8601EC8C,
    b"foobar": 0x85944171F73967E8,
}


def fnv1a_ref(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) % (1 << 64)
    return h

"""Slow, obviously-correct reference implementations used as test oracles."""

import math

import numpy as np


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def gat_edge_loop(H, A, W, a, activation=sigmoid, slope=0.2):
    """Per-edge graph attention on ``H [T, N, D]``: scores, masked softmax, head mean."""
    T, N, D = H.shape
    K = W.shape[0]
    out = np.zeros_like(H)
    att = np.zeros((T, K, N, N))
    for t in range(T):
        for i in range(N):
            acc = np.zeros(D)
            for k in range(K):
                wh_i = H[t, i] @ W[k]
                nbrs = [j for j in range(N) if A[i, j] > 0]
                scores = []
                for j in nbrs:
                    e = float(a[k] @ np.concatenate([wh_i, H[t, j] @ W[k]]))
                    scores.append(e if e > 0 else slope * e)
                top = max(scores)
                ex = [math.exp(s - top) for s in scores]
                total = sum(ex)
                for j, v in zip(nbrs, ex):
                    att[t, k, i, j] = v / total
                    acc += (v / total) * (H[t, j] @ W[k])
            out[t, i] = [activation(v) for v in acc / K]
    return out, att


def window_indices(S, q, T, M, L_D, L_W):
    """Every anchor with full history, each with its raw index lists."""
    out = []
    for t in range(S):
        recent = list(range(t - T + 1, t + 1))
        daily = [list(range(t - ld * q + 1, t - ld * q + T + 1)) for ld in range(1, L_D + 1)]
        weekly = [list(range(t - 7 * lw * q + 1, t - 7 * lw * q + T + 1)) for lw in range(1, L_W + 1)]
        target = list(range(t + 1, t + M + 1))
        every = recent + sum(daily, []) + sum(weekly, []) + target
        if min(every) >= 0 and max(every) < S:
            out.append((t, recent, daily, weekly, target))
    return out


def ha_naive(series, q, first_slot=0):
    """Slot-of-week means by explicit grouping."""
    week = 7 * q
    groups = {}
    for s in range(series.shape[0]):
        groups.setdefault((first_slot + s) % week, []).append(series[s])
    fallback = series.mean(axis=0)
    return np.stack([np.mean(groups[k], axis=0) if k in groups else fallback for k in range(week)])

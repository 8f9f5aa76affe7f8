"""Shared independent oracles for tests: brute-force counterparts of the
fast paths they verify."""

import numpy as np


def brute_force_matching(gt: np.ndarray, pred: np.ndarray):
    """Exhaustive pair enumeration for the bidirectional transform matching."""
    n, m = len(gt), len(pred)
    dist = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            dist[i, j] = np.sqrt(((gt[i] - pred[j]) ** 2).sum())
    recall_idx = np.array([int(np.argmin(dist[i])) for i in range(n)])
    precision_idx = np.array([int(np.argmin(dist[:, j])) for j in range(m)])
    loss = dist[np.arange(n), recall_idx].mean() + dist[precision_idx, np.arange(m)].mean()
    return loss, recall_idx, precision_idx


def central_difference(fn, x0: float, h: float = 1e-6) -> float:
    return (fn(x0 + h) - fn(x0 - h)) / (2 * h)


def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)

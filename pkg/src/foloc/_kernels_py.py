"""Pure-numpy correlation-stack kernel, used when the compiled one is absent."""
import numpy as np


def correlation_stack(x, m, tau, n, d_max):
    x = np.ascontiguousarray(x, dtype=np.float64)
    R = len(x) - (m - 1) * tau
    C = R - n
    G = np.zeros((d_max, C))
    degenerate = 0
    lag = np.arange(m) * tau
    for d in range(1, d_max + 1):
        L = R - n * d
        if L <= 0:
            continue
        offsets = (np.arange(n)[:, None] * d + lag[None, :]).ravel()
        idx = np.arange(L)[:, None] + offsets[None, :]
        A = x[idx]
        B = x[idx + d]
        flat = (A.max(axis=1) == A.min(axis=1)) | (B.max(axis=1) == B.min(axis=1))
        A = A - A.mean(axis=1, keepdims=True)
        B = B - B.mean(axis=1, keepdims=True)
        # product of roots rather than root of product: the product underflows first
        den = np.sqrt((A * A).sum(axis=1)) * np.sqrt((B * B).sum(axis=1))
        bad = flat | ~(den > 0)
        degenerate += int(bad.sum())
        with np.errstate(divide="ignore", invalid="ignore"):
            r = (A * B).sum(axis=1) / den
        G[d - 1, :L] = np.where(bad, 0.0, r)
    return G, degenerate

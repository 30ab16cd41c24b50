"""Pure-Python reference kernels, used when the compiled module is absent.

Floating-point operations are performed in the same order as in
``_kernels.pyx`` so both backends produce identical draws.
"""

import math

import numpy as np
from scipy.special import ndtri

SMALL_RATE = 30.0


def _poisson_inverse(lam, u):
    if lam <= 0.0:
        return 0
    if lam < SMALL_RATE:
        k = 0
        pk = math.exp(-lam)
        cdf = pk
        while u > cdf and k < 1000:
            k += 1
            pk = pk * lam / k
            cdf = cdf + pk
        return k
    draw = math.floor(lam + math.sqrt(lam) * float(ndtri(u)) + 0.5)
    return max(int(draw), 0)


def simulate_counts(history_beta, base_theta, uniforms, max_rate):
    history_beta = [float(b) for b in history_beta]
    base_theta = np.asarray(base_theta, dtype=float)
    uniforms = np.asarray(uniforms, dtype=float)
    n = base_theta.shape[0]
    p = len(history_beta)
    counts = np.zeros(n, dtype=np.int64)
    # recent nonzero bins, most recent first; only these can contribute
    recent = []
    neg_inf = -math.inf
    for t in range(n):
        if recent and t - recent[0][0] > p:
            recent = [(s, c) for s, c in recent if t - s <= p]
        theta = float(base_theta[t])
        if theta == neg_inf:
            continue
        for s, c in reversed(recent):
            b = history_beta[t - s - 1]
            if b == neg_inf:
                theta = neg_inf
                break
            theta = theta + b * c
        if theta == neg_inf:
            continue
        if not math.isfinite(theta):
            return counts, t
        lam = math.exp(theta)
        if not lam <= max_rate:
            return counts, t
        c = _poisson_inverse(lam, float(uniforms[t]))
        if c:
            counts[t] = c
            recent.append((t, c))
    return counts, -1

"""Compiled inner loops of the Monte Carlo sweep."""

from __future__ import annotations

import numpy as np
from numba import njit

from .scheme import EXP_CLAMP

# Deep out of the money exp(x) < r * 2^-54, so a == r in double precision and
# the target -lam / r is off by a relative r * 2^-54 * |v| / lam; the branch
# skips two transcendental calls.
_LOG_HALF_ULP = 54.0 * np.log(2.0)


@njit(cache=True)
def project_update(U, coef, P, v, lam, r, dt, out):
    """out[i] = c_i + omw_i (target_i - c_i) with c = U @ coef.

    Returns the index of the first non-finite output, or -1.
    """
    M, rank = U.shape
    deep_ok = r > 0.0
    x_deep = np.log(r) - _LOG_HALF_ULP if deep_ok else -np.inf
    omw_deep = -np.expm1(-r * dt)
    tgt_deep = -lam / r if r > 0.0 else 0.0
    for i in range(M):
        c = 0.0
        for j in range(rank):
            c += U[i, j] * coef[j]
        x = (P[i] - v[i]) / lam
        if x < x_deep:
            res = c + omw_deep * (tgt_deep - c)
        else:
            if x > EXP_CLAMP:
                x = EXP_CLAMP
            elif x < -EXP_CLAMP:
                x = -EXP_CLAMP
            if x > 0.0:
                q = np.exp(-x)
                a = 1.0 / q + r
                tgt = (v[i] + lam * (1.0 - q)) / (1.0 + r * q)
            else:
                q = np.exp(x)
                a = q + r
                tgt = (q * v[i] + lam * (q - 1.0)) / a
            omw = -np.expm1(-a * dt)
            res = c + omw * (tgt - c)
        if not np.isfinite(res):
            return i
        out[i] = res
    return -1

"""Pointwise kernels of the entropy-regularized scheme.

All functions are vectorized over numpy arrays. The policy exponent
``(P - v) / lam`` is clamped at ``EXP_CLAMP``; for exponents that large the
updates reduce to ``v + lam`` instead of overflowing.
"""

from __future__ import annotations

import numpy as np

EXP_CLAMP = 700.0


class NumericalError(ArithmeticError):
    """A numerical routine produced non-finite values or failed to converge."""


def exponent(P, v, lam):
    return np.minimum((np.asarray(P, dtype=float) - v) / lam, EXP_CLAMP)


def policy(P, v, lam):
    """Optimal stopping intensity exp((P - v) / lam)."""
    return np.exp(exponent(P, v, lam))


def driver(P, v, lam):
    """Entropy-regularized generator lam * (exp((P - v) / lam) - 1)."""
    return lam * np.expm1(exponent(P, v, lam))


def intensity(P, v, lam):
    """lam / (P - v) * (exp((P - v) / lam) - 1), equal to 1 at P = v."""
    x = np.asarray(exponent(P, v, lam))
    safe = np.where(x == 0.0, 1.0, x)
    out = np.where(x == 0.0, 1.0, np.expm1(safe) / safe)
    return out if out.ndim else float(out)


def _phi(z):
    # (1 - exp(-z)) / z with phi(0) = 1
    z = np.asarray(z, dtype=float)
    safe = np.where(z == 0.0, 1.0, z)
    return np.where(np.abs(z) < 1e-12, 1.0 - 0.5 * z, -np.expm1(-safe) / safe)


def exponential_step(a, b, c, dt):
    """e^{-a dt} c + (b / a)(1 - e^{-a dt}), with the a -> 0 limit b * dt."""
    a = np.asarray(a, dtype=float)
    return np.exp(-a * dt) * c + b * dt * _phi(a * dt)


def policy_coefficients(P, v, lam, r):
    """Linear-driver coefficients (a, b) of the policy built from ``v``.

    a = pi + r and b = pi * v + lam * (pi - 1) with pi = exp((P - v) / lam).
    """
    pi = policy(P, v, lam)
    return pi + r, pi * v + lam * (pi - 1.0)


def exponential_update(P, v, c, lam, r, dt):
    """One exponential-integrator policy-evaluation step at fixed policy.

    ``v`` is the previous iterate at the node, ``c`` the conditional expectation
    of the new iterate one step ahead. Overflow-free rewrite of
    ``exponential_step(*policy_coefficients(P, v, lam, r), c, dt)``.
    """
    P, v, c = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (P, v, c)))
    x = exponent(P, v, lam)
    big = x > 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        # x > 0: divide numerator and denominator of b / a by pi
        q = np.exp(-np.where(big, x, 0.0))
        a_big = np.exp(np.where(big, x, 0.0)) + r
        ratio = (v + lam * (1.0 - q)) / (1.0 + r * q)
        out_big = np.exp(-a_big * dt) * c - ratio * np.expm1(-a_big * dt)
        pi = np.exp(np.where(big, 0.0, x))
        a = pi + r
        b = pi * v + lam * (pi - 1.0)
        out_small = np.exp(-a * dt) * c + b * dt * _phi(a * dt)
    return np.where(big, out_big, out_small)


def implicit_update(P, v, c, lam, r, dt):
    """Backward-Euler policy-evaluation step (c + dt b) / (1 + dt a).

    Its fixed point in ``v`` solves v = c + dt (lam (e^{(P-v)/lam} - 1) - r v),
    the node equation of :func:`solve_node`.
    """
    P, v, c = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (P, v, c)))
    x = exponent(P, v, lam)
    big = x > 0.0
    with np.errstate(over="ignore"):
        q = np.exp(-np.where(big, x, 0.0))
        out_big = (c * q + dt * (v + lam * (1.0 - q))) / (q + dt * (1.0 + r * q))
        pi = np.exp(np.where(big, 0.0, x))
        out_small = (c + dt * (pi * v + lam * (pi - 1.0))) / (1.0 + dt * (pi + r))
    return np.where(big, out_big, out_small)


def solve_node(P, c, lam, r, dt, tol=1e-12, max_iter=100):
    """Solve v = c + dt * (lam * (exp((P - v)/lam) - 1) - r * v) for v, per entry.

    With x = (P - v)/lam the equation becomes exp(x) + B x = A, B > 0, which is
    convex and increasing in x. Newton started to the right of the root
    decreases monotonically to it.
    """
    P, c = np.broadcast_arrays(np.asarray(P, dtype=float), np.asarray(c, dtype=float))
    B = (1.0 + r * dt) / dt
    A = (P * (1.0 + r * dt) - c) / (dt * lam) + 1.0
    x = A / B
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(A > 1.0, np.minimum(x, np.log(np.where(A > 1.0, A, 1.0))), x)
    # A == 1 means x = 0 solves exactly (e.g. P = c = 0)
    x = np.where(A == 1.0, 0.0, x)
    for _ in range(max_iter):
        ex = np.exp(np.minimum(x, EXP_CLAMP))
        step = (ex + B * x - A) / (ex + B)
        x = x - step
        if np.all(np.abs(step) <= 1e-13 * np.maximum(1.0, np.abs(x))):
            break
    else:
        raise NumericalError(f"node solve did not converge in {max_iter} iterations")
    v = P - lam * x
    res = v - c - dt * (lam * np.expm1(np.minimum(x, EXP_CLAMP)) - r * v)
    scale = np.maximum(1.0, np.maximum(np.abs(c), np.abs(P)))
    if not np.all(np.abs(res) <= tol * scale):
        raise NumericalError(f"node solve residual {np.max(np.abs(res) / scale):.3e} above {tol}")
    return v


def classical_node(P, c, n, r, dt):
    """Solve v = c + dt * (n (P - v)^+ - r v) in closed form."""
    P, c = np.broadcast_arrays(np.asarray(P, dtype=float), np.asarray(c, dtype=float))
    w = c / (1.0 + r * dt)
    pen = (c + n * dt * P) / (1.0 + r * dt + n * dt)
    out = np.where(w >= P, w, pen)
    return out if out.ndim else float(out)

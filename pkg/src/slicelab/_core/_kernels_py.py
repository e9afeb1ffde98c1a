"""Pure-numpy time stepper for the flat fast path.

The hot loop advances a state vector under a polynomial interface flux with
unit density weights and an optional linear diffusion term.  The compiled
backend mirrors this function operation for operation, so results agree
bitwise; keep any change here in sync with ``_kernels.pyx``.
"""

import numpy as np

BACKEND = "python"


def horner(coeffs, u):
    """Evaluate an ascending-coefficient polynomial, Horner order."""
    u = np.asarray(u, dtype=float)
    val = np.full_like(u, coeffs[-1])
    for k in range(len(coeffs) - 2, -1, -1):
        val = val * u + coeffs[k]
    return val


def poly_derivative(coeffs):
    if len(coeffs) <= 1:
        return (0.0,)
    return tuple((k + 1) * coeffs[k + 1] for k in range(len(coeffs) - 1))


def abs_derivative_tables(coeffs):
    """Piecewise closed form of I(u) = integral from 0 to u of |P'(s)| ds.

    Returns (breaks, seg_sign, seg_offset) with I(u) = s_k P(u) + b_k on the
    k-th segment of the sign partition of P', anchored so that I(0) = 0.
    """
    coeffs = tuple(float(c) for c in coeffs)
    dp = poly_derivative(coeffs)
    if max(abs(c) for c in dp) == 0.0:
        return np.empty(0), np.zeros(1), np.zeros(1)
    roots = np.roots(dp[::-1]) if len(dp) > 1 else np.empty(0)
    real = np.sort(np.unique(np.round(
        roots[np.abs(roots.imag) <= 1e-10].real, 12)))
    breaks = real.astype(float)
    m = len(breaks)
    # representative point in each segment
    probes = []
    lo = breaks[0] - 1.0 if m else -1.0
    hi = breaks[-1] + 1.0 if m else 1.0
    edges = np.concatenate(([lo], breaks, [hi]))
    for k in range(m + 1):
        probes.append(0.5 * (edges[k] + edges[k + 1]))
    sign = np.sign(horner(dp, np.asarray(probes)))
    # anchor the offsets so that I is continuous and I(0) = 0
    offset = np.zeros(m + 1)
    k0 = int(np.searchsorted(breaks, 0.0, side="right"))
    offset[k0] = -sign[k0] * float(horner(coeffs, np.asarray([0.0]))[0])
    for k in range(k0, m):
        p_r = float(horner(coeffs, np.asarray([breaks[k]]))[0])
        offset[k + 1] = offset[k] + (sign[k] - sign[k + 1]) * p_r
    for k in range(k0, 0, -1):
        p_l = float(horner(coeffs, np.asarray([breaks[k - 1]]))[0])
        offset[k - 1] = offset[k] + (sign[k] - sign[k - 1]) * p_l
    return breaks, sign.astype(float), offset


def abs_integral(p_vals, u, breaks, seg_sign, seg_offset):
    """I(u) given precomputed P(u) values and the sign-partition tables."""
    if len(breaks) == 0:
        return seg_sign[0] * p_vals + seg_offset[0]
    idx = np.searchsorted(breaks, u, side="right")
    return seg_sign[idx] * p_vals + seg_offset[idx]


def run_flat_poly_block(u, n_steps, dt, dx, px, breaks, seg_sign, seg_offset,
                        eps, c0):
    """Advance ``n_steps`` of the unit-density polynomial-flux scheme.

    Interface flux: F(a, b) = (P(a) + P(b))/2 + (I(a) - I(b))/2 with
    I the absolute-derivative antiderivative from the tables.  When
    ``eps`` is nonzero a centered eps*u diffusion sub-step follows each
    transport sub-step.  States are clipped to [-c0, c0]; the number of
    clipped cell-steps is returned alongside the final state.
    """
    u = np.array(u, dtype=float)
    px = np.asarray(px, dtype=float)
    nu = dt / dx
    mu = dt * eps / (dx * dx)
    clip_count = 0
    for _ in range(int(n_steps)):
        p = horner(px, u)
        iv = abs_integral(p, u, breaks, seg_sign, seg_offset)
        p_r = np.roll(p, -1)
        iv_r = np.roll(iv, -1)
        face = 0.5 * (p + p_r) + 0.5 * (iv - iv_r)
        un = u - nu * (face - np.roll(face, 1))
        if eps != 0.0:
            un = un + mu * ((np.roll(un, -1) - 2.0 * un) + np.roll(un, 1))
        over = un > c0
        under = un < -c0
        n_bad = int(np.count_nonzero(over)) + int(np.count_nonzero(under))
        if n_bad:
            clip_count += n_bad
            un = np.clip(un, -c0, c0)
        u = un
    return u, clip_count

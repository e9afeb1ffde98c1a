# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled time stepper for the flat fast path.

Mirror of ``_kernels_py.run_flat_poly_block`` with identical operation
order (and FMA contraction disabled at compile time), so both backends
produce bitwise-equal states.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def run_flat_poly_block(u_in, n_steps, double dt, double dx, px_in,
                        breaks_in, seg_sign_in, seg_offset_in,
                        double eps, double c0):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u_arr = np.array(u_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] px = np.ascontiguousarray(px_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] breaks = np.ascontiguousarray(breaks_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] seg_sign = np.ascontiguousarray(seg_sign_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] seg_offset = np.ascontiguousarray(seg_offset_in, dtype=np.float64)

    cdef Py_ssize_t n = u_arr.shape[0]
    cdef Py_ssize_t nc = px.shape[0]
    cdef Py_ssize_t nb = breaks.shape[0]
    cdef long steps = int(n_steps)

    cdef cnp.ndarray[cnp.float64_t, ndim=1] p = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] iv = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] face = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] un = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u2 = np.empty(n, dtype=np.float64)

    cdef double[::1] u = u_arr
    cdef double[::1] pv = p
    cdef double[::1] ivv = iv
    cdef double[::1] fv = face
    cdef double[::1] uv = un
    cdef double[::1] u2v = u2
    cdef double[::1] cx = px
    cdef double[::1] br = breaks
    cdef double[::1] sg = seg_sign
    cdef double[::1] so = seg_offset

    cdef double nu = dt / dx
    cdef double mu = dt * eps / (dx * dx)
    cdef long clip_count = 0
    cdef Py_ssize_t s, j, k, jp, jm, idx
    cdef double val, uj, x

    for s in range(steps):
        for j in range(n):
            uj = u[j]
            val = cx[nc - 1]
            for k in range(nc - 2, -1, -1):
                val = val * uj + cx[k]
            pv[j] = val
            idx = 0
            while idx < nb and br[idx] <= uj:
                idx += 1
            ivv[j] = sg[idx] * val + so[idx]
        for j in range(n):
            jp = j + 1 if j + 1 < n else 0
            fv[j] = 0.5 * (pv[j] + pv[jp]) + 0.5 * (ivv[j] - ivv[jp])
        for j in range(n):
            jm = j - 1 if j > 0 else n - 1
            uv[j] = u[j] - nu * (fv[j] - fv[jm])
        if eps != 0.0:
            for j in range(n):
                jp = j + 1 if j + 1 < n else 0
                jm = j - 1 if j > 0 else n - 1
                u2v[j] = uv[j] + mu * ((uv[jp] - 2.0 * uv[j]) + uv[jm])
            for j in range(n):
                uv[j] = u2v[j]
        for j in range(n):
            x = uv[j]
            if x > c0:
                x = c0
                clip_count += 1
            elif x < -c0:
                x = -c0
                clip_count += 1
            u[j] = x
    return u_arr, clip_count

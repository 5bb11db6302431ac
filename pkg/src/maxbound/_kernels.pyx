# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled kernel for the block-based stopping-rule walk simulator.

Mirrors the pure-python kernel operation for operation: the same per-path
random streams, block layout, and interpolation arithmetic, so both backends
produce identical stop indices and values.
"""

import numpy as np

from libc.math cimport INFINITY, exp, isfinite, sqrt

BLOCK = 4096

_EMPTY = np.zeros(1, dtype=np.float64)


cdef inline double _interp_flat(const double[::1] tm, const double[::1] tx,
                                Py_ssize_t lo, Py_ssize_t hi, double M,
                                Py_ssize_t* hint) noexcept nogil:
    # Piecewise-linear table lookup matching np.interp arithmetic, with -inf
    # below the table and linear continuation of the last segment above it.
    # The hint caches the segment index; the query sequence per (path, label)
    # is non-decreasing, so the cache only ever advances.
    cdef Py_ssize_t n = hi - lo
    cdef Py_ssize_t j
    cdef double slope
    if M < tm[lo]:
        return -INFINITY
    if M > tm[hi - 1]:
        slope = (tx[hi - 1] - tx[hi - 2]) / (tm[hi - 1] - tm[hi - 2])
        return tx[hi - 1] + slope * (M - tm[hi - 1])
    j = hint[0]
    while j + 1 < n and tm[lo + j + 1] <= M:
        j += 1
    hint[0] = j
    if j == n - 1:
        return tx[hi - 1]
    slope = (tx[lo + j + 1] - tx[lo + j]) / (tm[lo + j + 1] - tm[lo + j])
    return slope * (M - tm[lo + j]) + tx[lo + j]


def simulate_paths(const double[::1] mcat, const double[::1] xicat,
                   const long long[::1] offsets,
                   double dt, long long cap, object seed,
                   long long path_lo, long long path_hi,
                   int n_labels, int block, bint antithetic, bint bridge,
                   double[:, ::1] out_vals, double[:, ::1] out_maxs,
                   long long[:, ::1] out_taus, unsigned char[::1] out_trunc):
    """Compiled twin of the python kernel; see its docstring for semantics."""
    cdef double sqdt = sqrt(dt)
    cdef Py_ssize_t p, i, nuse
    cdef int k, kk
    cdef long long step, p_eff
    cdef double w, M, w2, Mprev_s, acc, base, sign, L, ph, xi, dw, peak
    cdef object gen, zarr, uarr, larr
    cdef const double[::1] zv = _EMPTY
    cdef const double[::1] uv = _EMPTY
    cdef const double[::1] lv = _EMPTY
    hints_arr = np.zeros(n_labels, dtype=np.intp)
    cdef Py_ssize_t[::1] hints = hints_arr

    for p in range(path_lo, path_hi):
        p_eff = (p >> 1) if antithetic else p
        gen = np.random.Generator(
            np.random.Philox(key=np.array([seed, p_eff], dtype=np.uint64))
        )
        sign = -1.0 if (antithetic and (p & 1)) else 1.0
        w = 0.0
        M = 0.0
        step = 0
        k = 0
        for kk in range(n_labels):
            hints[kk] = 0
        while k < n_labels:
            xi = _interp_flat(mcat, xicat, offsets[k], offsets[k + 1], M, &hints[k])
            if w <= xi:
                out_vals[p, k] = w
                out_maxs[p, k] = M
                out_taus[p, k] = 0
                k += 1
            else:
                break
        while k < n_labels and step < cap:
            zarr = gen.standard_normal(block)
            zv = zarr
            if bridge:
                uarr = gen.random(block)
                uv = uarr
                # The log runs through numpy in both backends: sqrt and max
                # are exact under IEEE, but log is not guaranteed to round
                # identically between numpy's vector path and libm.
                larr = np.log(np.maximum(gen.random(block), 1e-300))
                lv = larr
            nuse = block if (cap - step) > block else <Py_ssize_t> (cap - step)
            base = w
            acc = 0.0
            with nogil:
                for i in range(nuse):
                    acc = acc + (sign * sqdt) * zv[i]
                    w2 = base + acc
                    Mprev_s = M
                    if bridge:
                        dw = w2 - w
                        peak = 0.5 * (w + w2 + sqrt(dw * dw - (2.0 * dt) * lv[i]))
                        if peak > M:
                            M = peak
                    elif w2 > M:
                        M = w2
                    if bridge:
                        L = _interp_flat(mcat, xicat, offsets[k], offsets[k + 1],
                                         Mprev_s, &hints[k])
                        if isfinite(L) and w > L and w2 > L:
                            ph = exp(-2.0 * (w - L) * (w2 - L) / dt)
                            if uv[i] < ph:
                                out_vals[p, k] = L
                                out_maxs[p, k] = M
                                out_taus[p, k] = step + i + 1
                                k += 1
                    while k < n_labels:
                        xi = _interp_flat(mcat, xicat, offsets[k], offsets[k + 1],
                                          M, &hints[k])
                        if w2 <= xi:
                            out_vals[p, k] = w2
                            out_maxs[p, k] = M
                            out_taus[p, k] = step + i + 1
                            k += 1
                        else:
                            break
                    w = w2
                    if k >= n_labels:
                        break
            if k >= n_labels:
                break
            step += nuse
        if k < n_labels:
            # Settle still-running labels on their boundary at the final max;
            # carrying the unstopped walk value would inflate upper-tail
            # statistics of the recorded marginals.
            out_trunc[p] = 1
            while k < n_labels:
                L = _interp_flat(mcat, xicat, offsets[k], offsets[k + 1], M, &hints[k])
                if not isfinite(L) or L > w:
                    L = w
                out_vals[p, k] = L
                out_maxs[p, k] = M
                out_taus[p, k] = step
                k += 1
        else:
            out_trunc[p] = 0

# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: log-domain Bessel I0 and the per-particle
time-frequency bin likelihood sum that dominates filter and planner runtime."""
import numpy as np

from libc.math cimport log, M_PI


cdef double _log_i0(double x) noexcept nogil:
    # Power series below the crossover, asymptotic expansion above; both
    # truncated well past 1e-12 relative accuracy on [0, inf).
    cdef double t, s, q
    cdef int k
    if x < 0.0:
        x = -x
    if x <= 50.0:
        t = 1.0
        s = 1.0
        q = 0.25 * x * x
        for k in range(1, 200):
            t *= q / (<double> k * <double> k)
            s += t
            if t <= 1e-17 * s:
                break
        return log(s)
    s = 1.0
    t = 1.0
    for k in range(1, 16):
        t *= (2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * k * x)
        s += t
    return x - 0.5 * log(2.0 * M_PI * x) + log(s)


def log_i0(x):
    """log I0(x), elementwise."""
    arr = np.ascontiguousarray(np.asarray(x, dtype=np.float64).ravel())
    out = np.empty(arr.shape[0], dtype=np.float64)
    cdef double[::1] xv = arr
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = _log_i0(xv[i])
    return out.reshape(np.shape(x))


def bin_log_ratio_sum(double[:, ::1] z, long[::1] frame0, double[::1] gamma,
                      long[::1] cols, double[::1] wmag, double sigma_z2):
    """Sum of log I0(z*nu/s2) - nu^2/(2 s2) over a particle's influence
    region: frames {m, m+1} (wrapped into the frame count) times the fixed
    bin set, with nu = gamma * wmag per bin.  Returns one value per particle.
    """
    cdef Py_ssize_t n = gamma.shape[0]
    cdef Py_ssize_t b = cols.shape[0]
    cdef Py_ssize_t nm = z.shape[0]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j
    cdef long m0, m1
    cdef double nu, acc, inv
    inv = 1.0 / sigma_z2
    with nogil:
        for i in range(n):
            m0 = frame0[i] % nm
            m1 = (frame0[i] + 1) % nm
            acc = 0.0
            for j in range(b):
                nu = gamma[i] * wmag[j]
                acc += _log_i0(z[m0, cols[j]] * nu * inv)
                acc += _log_i0(z[m1, cols[j]] * nu * inv)
                acc -= nu * nu * inv
            ov[i] = acc
    return out

"""Pure-numpy fallback for the compiled kernels (same contracts)."""
import numpy as np

_SERIES_CUT = 50.0
_ASYM_TERMS = 15


def log_i0(x):
    """log I0(x), elementwise: power series up to the crossover, asymptotic
    expansion beyond it."""
    shape = np.shape(x)
    x = np.abs(np.asarray(x, dtype=np.float64)).ravel()
    out = np.empty_like(x)

    for lo, hi, terms in ((0.0, 8.0, 30), (8.0, _SERIES_CUT, 130)):
        sel = (x > lo) & (x <= hi) if lo else (x <= hi)
        xs = x[sel]
        if xs.size:
            q = 0.25 * xs * xs
            term = np.ones_like(xs)
            acc = np.ones_like(xs)
            for k in range(1, terms + 1):
                term = term * q / (k * k)
                acc += term
            out[sel] = np.log(acc)

    big = x > _SERIES_CUT
    xl = x[big]
    if xl.size:
        t = np.ones_like(xl)
        s = np.ones_like(xl)
        for k in range(1, _ASYM_TERMS + 1):
            t = t * (2 * k - 1) ** 2 / (8.0 * k * xl)
            s += t
        out[big] = xl - 0.5 * np.log(2.0 * np.pi * xl) + np.log(s)
    return out.reshape(shape)


def bin_log_ratio_sum(z, frame0, gamma, cols, wmag, sigma_z2):
    """Per-particle sum of log I0(z*nu/s2) - nu^2/(2 s2) over frames
    {m, m+1} (wrapped) times the fixed bin set, nu = gamma * wmag."""
    gamma = np.asarray(gamma, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.int64)
    if cols.size == 0:
        return np.zeros(gamma.shape[0])
    n_frames = z.shape[0]
    m0 = np.asarray(frame0, dtype=np.int64) % n_frames
    m1 = (m0 + 1) % n_frames
    nu = gamma[:, None] * np.asarray(wmag, dtype=np.float64)[None, :]
    inv = 1.0 / sigma_z2
    z0 = z[m0[:, None], cols[None, :]]
    z1 = z[m1[:, None], cols[None, :]]
    terms = log_i0(z0 * nu * inv) + log_i0(z1 * nu * inv) - nu * nu * inv
    return terms.sum(axis=1)

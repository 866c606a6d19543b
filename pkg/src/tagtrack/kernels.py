"""Kernel dispatch: compiled extension when available, numpy fallback otherwise.

Set TAGTRACK_PURE=1 to force the fallback (used by the benchmark and the
parity tests).
"""
import os

import numpy as np

if os.environ.get("TAGTRACK_PURE") == "1":
    from tagtrack import _kernels_py as _impl

    USING_COMPILED = False
else:
    try:
        from tagtrack import _kernels as _impl  # type: ignore[attr-defined]

        USING_COMPILED = True
    except ImportError:
        from tagtrack import _kernels_py as _impl

        USING_COMPILED = False


def log_i0(x):
    """Elementwise log of the modified Bessel function I0."""
    return _impl.log_i0(np.asarray(x, dtype=np.float64))


def bin_log_ratio_sum(z, frame0, gamma, cols, wmag, sigma_z2):
    """Per-particle influence-region sum of per-bin log likelihood ratios."""
    return _impl.bin_log_ratio_sum(
        np.ascontiguousarray(z, dtype=np.float64),
        np.ascontiguousarray(frame0, dtype=np.int64),
        np.ascontiguousarray(gamma, dtype=np.float64),
        np.ascontiguousarray(cols, dtype=np.int64),
        np.ascontiguousarray(wmag, dtype=np.float64),
        float(sigma_z2),
    )

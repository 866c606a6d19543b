"""Separable measurement likelihood on spectrogram magnitudes.

Each object influences a small time-frequency region: two adjacent frames
(set by its pulse offset) times a contiguous bin set around its carrier bin.
Inside the region the magnitude is Ricean around the expected signal level;
everywhere else it is Rayleigh receiver noise, so the per-object likelihood
ratio only ever touches the region's bins and the multi-object likelihood
factorises over objects with disjoint regions.  All products are accumulated
in the log domain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tagtrack import kernels
from tagtrack.rf_signal import (
    ReceiverParams,
    Spectrogram,
    TransmitterParams,
    UavState,
    bearing_to,
    frame_indices,
    freq_bin,
    time_frame,
    window_coefficients,
)


def noise_freq_cov(rx: ReceiverParams) -> float:
    """Receiver noise covariance per STFT bin quadrature: E_w * noise_cov / 2."""
    _, _, e_w = window_coefficients(rx.window_kind, rx.window_width)
    out = e_w * rx.noise_cov / 2.0
    if out <= 0:
        raise ValueError("noise covariance must be positive")
    return out


def bin_offsets(n_m: int) -> np.ndarray:
    """Bin offsets of the influence region: n_m bins centred on the carrier
    bin, half-open on the right for even n_m."""
    return np.arange(-(n_m // 2), n_m - n_m // 2)


@dataclass(frozen=True)
class InfluenceRegion:
    """Frames x bins touched by one object's pulse."""
    frames: tuple
    bins: np.ndarray

    def cells(self):
        return {(m, int(l)) for m in self.frames for l in self.bins}

    @property
    def empty(self) -> bool:
        return self.bins.size == 0


def influence_region(obj, rx: ReceiverParams, tx_table: dict,
                     n_frames: int) -> InfluenceRegion:
    """Influence region of an object state (empty for out-of-band carriers)."""
    tx = tx_table[obj.label]
    try:
        centre = freq_bin(tx.baseband_freq, rx)
    except ValueError:
        return InfluenceRegion((), np.empty(0, dtype=np.int64))
    _, n_m, _ = window_coefficients(rx.window_kind, rx.window_width)
    cols = centre + bin_offsets(n_m)
    cols = cols[(cols >= 0) & (cols < rx.fft_len)].astype(np.int64)
    m0 = time_frame(float(obj.tau) % tx.pulse_period, rx) % n_frames
    return InfluenceRegion((m0, (m0 + 1) % n_frames), cols)


def log_ricean_pdf(z, nu, sigma2):
    """Log Rice density log[(z/s2) exp(-(z^2+nu^2)/(2 s2)) I0(z nu / s2)]."""
    z = np.asarray(z, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if sigma2 <= 0 or np.any(~np.isfinite(z)) or np.any(~np.isfinite(nu)):
        raise ValueError("require finite z, nu and sigma2 > 0")
    if np.any(z < 0) or np.any(nu < 0):
        raise ValueError("z and nu must be nonnegative")
    with np.errstate(divide="ignore"):
        out = (np.log(z) - np.log(sigma2)
               - (z * z + nu * nu) / (2.0 * sigma2)
               + kernels.log_i0(z * nu / sigma2))
    return out


def ricean_pdf(z, nu, sigma2):
    return np.exp(log_ricean_pdf(z, nu, sigma2))


def log_rayleigh_pdf(z, sigma2):
    """Log Rayleigh density log[(z/s2) exp(-z^2/(2 s2))] (the nu=0 Rice)."""
    return log_ricean_pdf(z, np.zeros_like(np.asarray(z, dtype=np.float64)), sigma2)


def rayleigh_pdf(z, sigma2):
    return np.exp(log_rayleigh_pdf(z, sigma2))


class LikelihoodContext:
    """Pre-resolved per-label geometry shared by filter updates and planner
    rollouts: carrier bins, window DFT magnitudes over the region, and the
    frequency-domain noise covariance."""

    def __init__(self, rx: ReceiverParams, tx_table: dict, target_altitude: float = 1.0):
        self.rx = rx
        self.tx_table = dict(tx_table)
        self.target_altitude = target_altitude
        w, n_m, e_w = window_coefficients(rx.window_kind, rx.window_width)
        self.n_m = n_m
        self.e_w = e_w
        self.sigma_z2 = e_w * rx.noise_cov / 2.0
        n = np.arange(rx.window_width)
        self._labels = {}
        for label, tx in self.tx_table.items():
            try:
                centre = freq_bin(tx.baseband_freq, rx)
            except ValueError:
                self._labels[label] = (np.empty(0, np.int64), np.empty(0), tx)
                continue
            offs = bin_offsets(n_m)
            cols = centre + offs
            keep = (cols >= 0) & (cols < rx.fft_len)
            wdft = np.exp(-2j * np.pi * np.outer(n, offs[keep]) / rx.fft_len)
            wmag = np.abs(w @ wdft)
            self._labels[label] = (cols[keep].astype(np.int64), wmag, tx)

    def labels(self):
        return self._labels.keys()

    def region_cols(self, label):
        cols, wmag, _ = self._labels[label]
        return cols, wmag

    def gamma(self, label, positions, uav: UavState):
        """Received amplitude for particle ground positions (N, 2)."""
        _, _, tx = self._labels[label]
        positions = np.asarray(positions, dtype=np.float64)
        dx = positions[:, 0] - uav.x
        dy = positions[:, 1] - uav.y
        dz = self.target_altitude - uav.alt
        d = np.sqrt(dx * dx + dy * dy + dz * dz)
        # particles inside the reference sphere are clipped, not rejected
        d = np.maximum(d, self.rx.ref_distance)
        beta = np.arctan2(dy, dx) - uav.heading
        g_a = self.rx.antenna.gain(beta)
        return tx.amplitude * self.rx.gain * g_a * (self.rx.ref_distance / d) ** self.rx.path_loss

    def log_likelihood(self, label, z: np.ndarray, uav: UavState, positions, taus):
        """Per-particle log g_z over the label's influence region."""
        cols, wmag, tx = self._labels[label]
        taus = np.asarray(taus, dtype=np.float64) % tx.pulse_period
        if cols.size == 0:
            return np.zeros(len(taus))
        gam = self.gamma(label, positions, uav)
        frames0 = frame_indices(taus, self.rx)
        return kernels.bin_log_ratio_sum(z, frames0, gam, cols, wmag, self.sigma_z2)


def expected_bin_magnitude(obj, uav: UavState, m: int, l: int, rx: ReceiverParams,
                           tx_table: dict, n_frames: int,
                           ctx: LikelihoodContext | None = None) -> float:
    """Expected magnitude gamma * |W[l - l_carrier]| inside the object's
    influence region, zero outside."""
    ctx = ctx or LikelihoodContext(rx, tx_table, getattr(obj, "altitude", 1.0))
    region = influence_region(obj, rx, tx_table, n_frames)
    if region.empty or m not in region.frames or l not in region.bins:
        return 0.0
    cols, wmag = ctx.region_cols(obj.label)
    gam = ctx.gamma(obj.label, np.array([[obj.x[0], obj.x[2]]]), uav)[0]
    return float(gam * wmag[list(cols).index(l)])


def _as_matrix(z):
    return z.mag if isinstance(z, Spectrogram) else np.asarray(z, dtype=np.float64)


def single_object_log_likelihood(obj, z, uav: UavState, rx: ReceiverParams,
                                 tx_table: dict,
                                 ctx: LikelihoodContext | None = None) -> float:
    """Log of the object's Rice/Rayleigh likelihood ratio product over its
    influence region (log 0.0 when the region is empty)."""
    mat = _as_matrix(z)
    ctx = ctx or LikelihoodContext(rx, tx_table, getattr(obj, "altitude", 1.0))
    out = ctx.log_likelihood(obj.label, mat, uav,
                             np.array([[obj.x[0], obj.x[2]]]), np.array([obj.tau]))
    return float(out[0])


def multi_object_log_likelihood(objects, z, uav: UavState, rx: ReceiverParams,
                                tx_table: dict,
                                ctx: LikelihoodContext | None = None) -> float:
    """Sum of single-object log ratios; requires pairwise-disjoint regions."""
    mat = _as_matrix(z)
    seen = {}
    for obj in objects:
        region = influence_region(obj, rx, tx_table, mat.shape[0])
        for cell in region.cells():
            if cell in seen:
                raise ValueError(
                    f"influence regions of labels {seen[cell]} and {obj.label} overlap "
                    f"at frame/bin {cell}; the separable likelihood does not apply")
            seen[cell] = obj.label
    return sum(single_object_log_likelihood(o, mat, uav, rx, tx_table, ctx)
               for o in objects)


def ideal_spectrogram(estimates, uav: UavState, ctx: LikelihoodContext,
                      n_frames: int, interval_index: int = 0) -> np.ndarray:
    """Noiseless expected-magnitude measurement for a set of point estimates:
    the planner's hypothesised observation at a candidate pose."""
    z = np.zeros((n_frames, ctx.rx.fft_len))
    for est in estimates:
        cols, wmag, tx = ctx._labels[est.label]
        if cols.size == 0:
            continue
        gam = ctx.gamma(est.label, np.array([[est.x[0], est.x[2]]]), uav)[0]
        m0 = time_frame(float(est.tau) % tx.pulse_period, ctx.rx) % n_frames
        z[m0, cols] += gam * wmag
        z[(m0 + 1) % n_frames, cols] += gam * wmag
    return z

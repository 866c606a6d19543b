"""Received-signal synthesis and time-frequency measurement formation.

Models pulsed (on-off keyed) transmitters observed by a moving directional
receiver: per-object received magnitude with path loss and antenna pattern,
complex baseband synthesis with circular receiver noise, and the windowed
STFT that turns one measurement interval into an M x L magnitude matrix.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

C_LIGHT = 3.0e8

WINDOW_KINDS = ("rectangular", "hamming", "blackman", "blackmanharris4")

# main-lobe width in bins per window family
_MAIN_LOBE_BINS = {"rectangular": 2, "hamming": 4, "blackman": 6, "blackmanharris4": 8}

# 4-term Blackman-Harris, -92 dB side lobes
_BH4 = (0.35875, 0.48829, 0.14128, 0.01168)

# guards against float noise flipping floor/ceil at exact lattice points
_IDX_EPS = 1e-9


def db_to_linear(db: float) -> float:
    """Amplitude ratio for a dB figure (10^(db/20))."""
    return 10.0 ** (db / 20.0)


def wrap_angle(theta):
    """Wrap angle(s) into (-pi, pi]."""
    out = np.mod(-np.asarray(theta) + np.pi, 2.0 * np.pi)
    out = np.pi - out
    return out if out.ndim else float(out)


def window_coefficients(kind: str, n_w: int):
    """Window coefficients plus its main-lobe width in bins and energy.

    Returns (w, n_m, e_w) with w of length n_w, n_m the main-lobe
    width-in-bins for the family, and e_w = sum w[n]^2.
    """
    if n_w < 2:
        raise ValueError(f"window width must be >= 2, got {n_w}")
    kind = kind.lower()
    if kind not in WINDOW_KINDS:
        raise ValueError(f"unsupported window kind {kind!r}, expected one of {WINDOW_KINDS}")
    n = np.arange(n_w)
    if kind == "rectangular":
        w = np.ones(n_w)
    elif kind == "hamming":
        w = 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (n_w - 1))
    elif kind == "blackman":
        w = 0.42 - 0.5 * np.cos(2.0 * np.pi * n / (n_w - 1)) \
            + 0.08 * np.cos(4.0 * np.pi * n / (n_w - 1))
    else:
        a0, a1, a2, a3 = _BH4
        w = a0 - a1 * np.cos(2.0 * np.pi * n / (n_w - 1)) \
            + a2 * np.cos(4.0 * np.pi * n / (n_w - 1)) \
            - a3 * np.cos(6.0 * np.pi * n / (n_w - 1))
    return w, _MAIN_LOBE_BINS[kind], float(np.sum(w * w))


@dataclass(frozen=True)
class AntennaPattern:
    """Parametric forward-lobe pattern over relative bearing beta:
    g(beta) = g_max * (back_lobe + (1 - back_lobe) * ((1 + cos beta)/2)^exponent).

    g_max default approximates a small two-element Yagi forward gain
    (~5 dB, amplitude scale). kind="isotropic" gives unit gain everywhere.
    """
    kind: str = "cardioid"
    g_max: float = 1.78
    back_lobe: float = 0.1
    exponent: float = 2.0

    def gain(self, bearing):
        if self.kind == "isotropic":
            return np.ones_like(np.asarray(bearing, dtype=float)) if np.ndim(bearing) else 1.0
        lobe = (1.0 + np.cos(bearing)) / 2.0
        return self.g_max * (self.back_lobe + (1.0 - self.back_lobe) * lobe ** self.exponent)


@dataclass(frozen=True)
class TransmitterParams:
    """Per-tag pulse train: a truncated sine of width pulse_width once per
    pulse_period, starting at the (estimated, drifting) offset."""
    amplitude: float            # volts at the reference distance
    baseband_freq: float        # Hz
    phase: float = 0.0          # radians
    pulse_period: float = 1.0   # seconds
    pulse_width: float = 0.018  # seconds
    offset: float = 0.0         # seconds, in [0, pulse_period)

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if not 0 < self.pulse_width < self.pulse_period:
            raise ValueError("pulse width must satisfy 0 < Pw < T0")
        if not 0 <= self.offset < self.pulse_period:
            raise ValueError("offset must lie in [0, T0)")


@dataclass(frozen=True)
class ReceiverParams:
    """Receiver chain and STFT configuration (gain stored linear)."""
    center_freq: float          # Hz
    sample_rate: float          # Hz
    gain: float                 # linear amplitude gain
    ref_distance: float         # meters
    path_loss: float            # dimensionless exponent, typically 2..4
    noise_cov: float            # volts^2 (complex noise variance)
    window_kind: str = "blackmanharris4"
    window_width: int = 256     # samples
    fft_len: int = 256          # bins
    hop: int = 18000            # samples
    antenna: AntennaPattern = field(default_factory=AntennaPattern)
    n_frames_override: int | None = None

    def n_frames(self, n_samples: int) -> int:
        """Number of complete STFT frames in an interval of n_samples."""
        if self.n_frames_override is not None:
            return self.n_frames_override
        if n_samples < self.window_width:
            raise ValueError("interval shorter than one window")
        return (n_samples - self.window_width) // self.hop + 1


@dataclass
class UavState:
    """Receiver platform pose: planar position, fixed altitude, heading."""
    x: float
    y: float
    alt: float = 30.0
    heading: float = 0.0

    def __post_init__(self):
        self.heading = wrap_angle(self.heading)

    @property
    def position(self):
        return np.array([self.x, self.y, self.alt])


@dataclass
class Spectrogram:
    """One measurement interval of nonnegative STFT magnitudes (M x L)."""
    mag: np.ndarray
    interval_index: int = 0

    def __post_init__(self):
        self.mag = np.asarray(self.mag, dtype=np.float64)
        if self.mag.ndim != 2:
            raise ValueError("spectrogram must be a 2-D matrix")
        if np.any(self.mag < 0):
            raise ValueError("spectrogram magnitudes must be nonnegative")


def bearing_to(obj_x, obj_y, uav: UavState):
    """Relative bearing of a ground point from the UAV boresight."""
    return wrap_angle(np.arctan2(np.asarray(obj_y) - uav.y, np.asarray(obj_x) - uav.x)
                      - uav.heading)


def antenna_gain(obj, uav: UavState, pattern: AntennaPattern | None = None) -> float:
    """Directional gain toward an object (uses the UAV's pattern geometry)."""
    ox, oy, oz = _object_xyz(obj)
    if ox == uav.x and oy == uav.y:
        if oz == uav.alt:
            raise ValueError("object and UAV positions coincide")
        beta = 0.0  # directly underneath: boresight by convention
    else:
        beta = bearing_to(ox, oy, uav)
    pattern = pattern if pattern is not None else AntennaPattern()
    return float(pattern.gain(beta))


def _object_xyz(obj):
    # accepts ObjectState-likes (x 4-vector + altitude) or plain 3-sequences
    if hasattr(obj, "x") and hasattr(obj, "tau"):
        return float(obj.x[0]), float(obj.x[2]), float(getattr(obj, "altitude", 1.0))
    ox, oy, oz = obj
    return float(ox), float(oy), float(oz)


def received_magnitude(obj, uav: UavState, rx: ReceiverParams,
                       tx: TransmitterParams) -> float:
    """Received amplitude A * G_r * G_a * (d0/d)^kappa at the current geometry."""
    ox, oy, oz = _object_xyz(obj)
    d = math.sqrt((ox - uav.x) ** 2 + (oy - uav.y) ** 2 + (oz - uav.alt) ** 2)
    if d < rx.ref_distance:
        raise ValueError(f"distance {d:.3g} m inside reference distance {rx.ref_distance} m")
    g_a = antenna_gain((ox, oy, oz), uav, rx.antenna)
    return tx.amplitude * rx.gain * g_a * (rx.ref_distance / d) ** rx.path_loss


def received_phase(obj, uav: UavState, rx: ReceiverParams, tx: TransmitterParams) -> float:
    """Propagation phase phi - (f_c + f) d / c."""
    ox, oy, oz = _object_xyz(obj)
    d = math.sqrt((ox - uav.x) ** 2 + (oy - uav.y) ** 2 + (oz - uav.alt) ** 2)
    return tx.phase - (rx.center_freq + tx.baseband_freq) * d / C_LIGHT


def freq_bin(f: float, rx: ReceiverParams) -> int:
    """Bin index floor(L f / f_s) of a baseband frequency."""
    if not 0 <= f < rx.sample_rate:
        raise ValueError(f"frequency {f} outside [0, {rx.sample_rate})")
    return int(math.floor(rx.fft_len * f / rx.sample_rate + _IDX_EPS))


def time_frame(tau: float, rx: ReceiverParams, pulse_period: float | None = None) -> int:
    """Frame index ceil(tau f_s / R) of a pulse offset."""
    if tau < 0 or (pulse_period is not None and tau >= pulse_period):
        raise ValueError(f"offset {tau} outside [0, T0)")
    return int(math.ceil(tau * rx.sample_rate / rx.hop - _IDX_EPS))


def frame_indices(taus, rx: ReceiverParams):
    """Vectorised time_frame for particle offset arrays."""
    v = np.asarray(taus, dtype=np.float64) * rx.sample_rate / rx.hop
    return np.ceil(v - _IDX_EPS).astype(np.int64)


def synth_baseband(objects: Sequence, uav: UavState, duration: float,
                   rx: ReceiverParams, tx_table: dict, rng) -> np.ndarray:
    """Complex baseband samples over one measurement interval.

    Each live object contributes gamma * e^{j psi} * e^{j 2 pi f n/f_s} on the
    samples where its pulse train is active; receiver noise is circular
    complex Gaussian with total variance noise_cov (I and Q each half).
    """
    if duration <= 0:
        raise ValueError("interval duration must be positive")
    n = int(math.ceil(duration * rx.sample_rate))
    if rx.noise_cov > 0:
        flat = rng.standard_normal(2 * n)
        flat *= math.sqrt(rx.noise_cov / 2.0)
        y = flat.view(np.complex128)
    else:
        y = np.zeros(n, dtype=np.complex128)
    for obj in objects:
        tx = tx_table[obj.label]
        gamma = received_magnitude(obj, uav, rx, tx)
        if not math.isfinite(gamma):
            raise ValueError("non-finite received magnitude")
        psi = received_phase(obj, uav, rx, tx)
        amp = gamma * np.exp(1j * psi)
        omega = 2.0 * np.pi * tx.baseband_freq / rx.sample_rate
        tau = float(obj.tau) % tx.pulse_period
        # pulse windows of the periodic train that intersect [0, duration)
        start = tau - tx.pulse_period
        while start < duration:
            a = max(0, int(math.ceil(start * rx.sample_rate - _IDX_EPS)))
            b = min(n, int(math.ceil((start + tx.pulse_width) * rx.sample_rate - _IDX_EPS)))
            if b > a:
                idx = np.arange(a, b)
                y[a:b] += amp * np.exp(1j * omega * idx)
            start += tx.pulse_period
    return y


def stft(samples: np.ndarray, rx: ReceiverParams) -> np.ndarray:
    """L-point windowed STFT with the absolute-time phase convention
    Y[m, l] = sum_n y[mR+n] w[n] exp(-j (n + mR) 2 pi l / L)."""
    samples = np.asarray(samples)
    n_w, hop, n_fft = rx.window_width, rx.hop, rx.fft_len
    m = rx.n_frames(len(samples))
    if len(samples) < (m - 1) * hop + n_w:
        raise ValueError("sample vector shorter than the frame layout requires")
    w, _, _ = window_coefficients(rx.window_kind, n_w)
    frames = np.lib.stride_tricks.sliding_window_view(samples, n_w)[::hop][:m] * w
    if n_w <= n_fft:
        out = np.fft.fft(frames, n=n_fft, axis=1)
    else:
        pad = (-n_w) % n_fft
        folded = np.pad(frames, ((0, 0), (0, pad))).reshape(m, -1, n_fft).sum(axis=1)
        out = np.fft.fft(folded, axis=1)
    phase = np.exp(-2j * np.pi * (np.arange(m)[:, None] * hop)
                   * np.arange(n_fft)[None, :] / n_fft)
    return out * phase


def spectrogram(samples: np.ndarray, rx: ReceiverParams,
                interval_index: int = 0) -> Spectrogram:
    """Elementwise magnitude of the STFT."""
    return Spectrogram(np.abs(stft(samples, rx)), interval_index)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str


@dataclass(frozen=True)
class ResolvabilityReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self):
        return "\n".join(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}"
                         for c in self.checks)


def check_resolvability(tx_table: dict, rx: ReceiverParams) -> ResolvabilityReport:
    """Diagnostics for the window/hop/frequency-separation design rules."""
    if not tx_table:
        raise ValueError("at least one transmitter required")
    txs = list(tx_table.values())
    freqs = np.array([t.baseband_freq for t in txs])
    _, n_m, _ = window_coefficients(rx.window_kind, rx.window_width)
    checks = []

    fmax = float(freqs.max())
    checks.append(CheckResult(
        "nyquist", rx.sample_rate > 2 * fmax, rx.sample_rate - 2 * fmax,
        f"f_s = {rx.sample_rate:g} Hz vs 2 max f = {2 * fmax:g} Hz"))

    distinct = len(set(freqs.tolist())) == len(freqs)
    checks.append(CheckResult(
        "distinct_frequencies", distinct, 0.0,
        "all baseband frequencies distinct" if distinct else "duplicate baseband frequency"))

    if len(freqs) > 1:
        df = float(np.min(np.diff(np.sort(freqs))))
        lobe_hz = n_m * rx.sample_rate / rx.window_width
        need = int(math.ceil(n_m * rx.sample_rate / df))
        checks.append(CheckResult(
            "main_lobe_separation", rx.window_width >= need, df - lobe_hz,
            f"main lobe {lobe_hz:.2f} Hz vs separation {df:g} Hz "
            f"(N_w = {rx.window_width} vs required {need})"))

    cycles_ok = bool(np.all(rx.sample_rate / freqs <= rx.window_width))
    worst = float(np.max(rx.sample_rate / freqs))
    checks.append(CheckResult(
        "carrier_cycle_per_window", cycles_ok, rx.window_width - worst,
        f"longest carrier period {worst:.1f} samples vs N_w = {rx.window_width}"))

    checks.append(CheckResult(
        "window_shorter_than_hop", rx.window_width < rx.hop,
        rx.hop - rx.window_width,
        f"N_w = {rx.window_width} vs R = {rx.hop}"))

    widths = {t.pulse_width for t in txs}
    periods = {t.pulse_period for t in txs}
    uniform = len(widths) == 1 and len(periods) == 1
    checks.append(CheckResult(
        "uniform_pulse_timing", uniform, 0.0,
        "shared pulse period and width" if uniform else "mixed pulse periods or widths"))
    if uniform:
        want_hop = next(iter(widths)) * rx.sample_rate / 2.0
        checks.append(CheckResult(
            "hop_is_half_pulse", abs(rx.hop - want_hop) < 0.5, rx.hop - want_hop,
            f"R = {rx.hop} vs P_w f_s / 2 = {want_hop:g}"))
    return ResolvabilityReport(tuple(checks))


_SPEC_MAGIC = b"SPEC"


def write_spectrogram(path, spec: Spectrogram) -> None:
    """Binary dump: 16-byte header (magic, u32 M, u32 L, u32 k) then
    row-major little-endian float64 magnitudes."""
    m, n_fft = spec.mag.shape
    with open(path, "wb") as fh:
        fh.write(_SPEC_MAGIC)
        fh.write(struct.pack("<III", m, n_fft, spec.interval_index))
        fh.write(np.ascontiguousarray(spec.mag, dtype="<f8").tobytes())


def read_spectrogram(path) -> Spectrogram:
    with open(path, "rb") as fh:
        if fh.read(4) != _SPEC_MAGIC:
            raise ValueError("not a spectrogram dump (bad magic)")
        m, n_fft, k = struct.unpack("<III", fh.read(12))
        data = np.frombuffer(fh.read(m * n_fft * 8), dtype="<f8").reshape(m, n_fft)
    return Spectrogram(data.astype(np.float64), k)


def write_spectrogram_csv(path, spec: Spectrogram) -> None:
    """Debug-friendly CSV alternative (one row per frame)."""
    np.savetxt(path, spec.mag, delimiter=",",
               header=f"interval={spec.interval_index}")

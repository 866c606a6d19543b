"""Signal layer: windows, propagation geometry, baseband synthesis, STFT."""
import math

import numpy as np
import pytest
from scipy import stats

from tagtrack import rf_signal as rf
from tests.conftest import rng, small_receiver, small_transmitters


class TestWindows:
    def test_rectangular_4(self):
        w, n_m, e_w = rf.window_coefficients("rectangular", 4)
        np.testing.assert_array_equal(w, [1, 1, 1, 1])
        assert e_w == 4.0
        assert n_m == 2

    def test_blackmanharris_main_lobe(self):
        _, n_m, _ = rf.window_coefficients("blackmanharris4", 128)
        assert n_m == 8

    def test_hamming_energy_direct_sum(self):
        # independent oracle: scalar loop over the standard coefficients
        n_w = 256
        expect = 0.0
        for n in range(n_w):
            c = 0.54 - 0.46 * math.cos(2 * math.pi * n / (n_w - 1))
            expect += c * c
        _, n_m, e_w = rf.window_coefficients("hamming", n_w)
        assert abs(e_w - expect) < 1e-9
        assert n_m == 4

    def test_unsupported_kind(self):
        with pytest.raises(ValueError, match="unsupported"):
            rf.window_coefficients("kaiser", 64)
        with pytest.raises(ValueError):
            rf.window_coefficients("hamming", 1)


class TestAntenna:
    def test_boresight_max(self):
        pat = rf.AntennaPattern()
        uav = rf.UavState(0, 0, 30, heading=0.0)
        assert abs(rf.antenna_gain((100.0, 0.0, 30.0), uav, pat) - pat.g_max) < 1e-12

    def test_back_lobe(self):
        pat = rf.AntennaPattern()
        uav = rf.UavState(0, 0, 30, heading=0.0)
        g = rf.antenna_gain((-50.0, 0.0, 30.0), uav, pat)
        assert abs(g - pat.g_max * pat.back_lobe) < 1e-12

    def test_isotropic(self):
        pat = rf.AntennaPattern(kind="isotropic")
        uav = rf.UavState(3, -7, 30, heading=1.1)
        for pos in ((40, 2, 1), (-5, -5, 1), (3, 200, 1)):
            assert rf.antenna_gain(pos, uav, pat) == 1.0

    def test_coincident_positions(self):
        uav = rf.UavState(1, 2, 30, heading=0.0)
        with pytest.raises(ValueError, match="coincide"):
            rf.antenna_gain((1.0, 2.0, 30.0), uav, rf.AntennaPattern())

    def test_continuous_in_bearing(self):
        pat = rf.AntennaPattern()
        betas = np.linspace(-np.pi, np.pi, 2001)
        g = pat.gain(betas)
        assert np.all(g > 0)
        assert np.max(np.abs(np.diff(g))) < 0.02


class TestReceivedMagnitude:
    def test_reference_distance(self):
        rx = small_receiver()
        tx = rf.TransmitterParams(amplitude=2.5, baseband_freq=1e3)
        uav = rf.UavState(0, 0, 0, heading=0.0)
        got = rf.received_magnitude((1.0, 0.0, 0.0), uav, rx, tx)
        assert abs(got - 2.5) < 1e-12

    def test_inverse_square(self):
        rx = small_receiver()
        tx = rf.TransmitterParams(amplitude=2.5, baseband_freq=1e3)
        uav = rf.UavState(0, 0, 0, heading=0.0)
        got = rf.received_magnitude((2.0, 0.0, 0.0), uav, rx, tx)
        assert abs(got - 2.5 / 4.0) < 1e-12

    def test_table_values_direct_formula(self, table_receiver, table_transmitters):
        # scalar oracle: A * G_r * (d0/d)^kappa evaluated independently
        assert abs(rf.db_to_linear(72.0) - 3981.0717055349733) < 1e-9
        uav = rf.UavState(0, 0, 0, heading=0.0)
        d = 120.0
        got = rf.received_magnitude((d, 0.0, 0.0), uav, table_receiver,
                                    table_transmitters[1])
        expect = (0.0059 * 3981.071705534972 * table_receiver.antenna.gain(0.0)
                  * (1.0 / d) ** 3.1068)
        assert abs(got - expect) < 1e-15

    def test_monotone_in_distance(self, table_receiver, table_transmitters):
        uav = rf.UavState(0, 0, 0, heading=0.0)
        vals = [rf.received_magnitude((d, 0.0, 0.0), uav, table_receiver,
                                      table_transmitters[1])
                for d in np.linspace(5, 2000, 80)]
        assert np.all(np.diff(vals) < 0)

    def test_inside_reference_sphere(self, table_receiver, table_transmitters):
        uav = rf.UavState(0, 0, 0, heading=0.0)
        with pytest.raises(ValueError, match="reference"):
            rf.received_magnitude((0.5, 0.0, 0.0), uav, table_receiver,
                                  table_transmitters[1])


class _Obj:
    def __init__(self, x, tau, label, altitude=1.0):
        self.x = np.asarray(x, dtype=float)
        self.tau = tau
        self.label = label
        self.altitude = altitude


class TestSynth:
    def test_no_objects_no_noise(self):
        rx = small_receiver(noise_cov=0.0)
        y = rf.synth_baseband([], rf.UavState(0, 0, 30), 1.0, rx, {}, rng())
        assert y.shape == (20000,)
        assert np.all(y == 0)

    def test_single_tone_modulus(self):
        rx = small_receiver(noise_cov=0.0)
        txs = small_transmitters()
        obj = _Obj([100.0, 0, 0.0, 0], tau=0.1, label=1)
        uav = rf.UavState(0, 0, 0, heading=0.0)
        gamma = rf.received_magnitude(obj, uav, rx, txs[1])
        y = rf.synth_baseband([obj], uav, 1.0, rx, txs, rng())
        n0 = int(0.1 * rx.sample_rate)
        n1 = int((0.1 + txs[1].pulse_width) * rx.sample_rate)
        np.testing.assert_allclose(np.abs(y[n0:n1]), gamma, rtol=1e-12)
        assert np.all(y[:n0] == 0)
        assert np.all(y[n1 + 1:] == 0)

    def test_noise_power(self):
        rx = small_receiver(noise_cov=0.025 ** 2, fs=1e6)
        y = rf.synth_baseband([], rf.UavState(0, 0, 30), 1.0, rx, {}, rng(5))
        assert y.size == 1_000_000
        assert abs(np.mean(np.abs(y) ** 2) - rx.noise_cov) < 0.02 * rx.noise_cov

    def test_pulse_wraps_at_interval_edge(self):
        rx = small_receiver(noise_cov=0.0)
        txs = small_transmitters()
        obj = _Obj([100.0, 0, 0.0, 0], tau=0.995, label=1)
        y = rf.synth_baseband([obj], rf.UavState(0, 0, 0), 1.0, rx, txs, rng())
        wrap_len = int((0.995 + txs[1].pulse_width - 1.0) * rx.sample_rate)
        assert np.all(np.abs(y[:wrap_len]) > 0)
        assert np.all(np.abs(y[int(0.995 * rx.sample_rate):]) > 0)


def brute_stft(samples, w, hop, n_fft, m):
    out = np.zeros((m, n_fft), dtype=complex)
    for mm in range(m):
        for ll in range(n_fft):
            acc = 0.0 + 0.0j
            for n in range(len(w)):
                acc += (samples[mm * hop + n] * w[n]
                        * np.exp(-1j * (n + mm * hop) * 2 * np.pi * ll / n_fft))
            out[mm, ll] = acc
    return out


class TestStft:
    def test_zero_input(self):
        rx = small_receiver()
        out = rf.stft(np.zeros(20000, dtype=complex), rx)
        assert out.shape == (rx.n_frames(20000), rx.fft_len)
        assert np.all(out == 0)

    def test_bin_centered_tone_rectangular(self):
        rx = small_receiver(window="rectangular", n_w=32, fft_len=32, hop=64)
        gamma = 1.7
        k_bin = 5
        f = k_bin * rx.sample_rate / rx.fft_len
        n = np.arange(4 * 64 + 32)
        y = gamma * np.exp(2j * np.pi * f * n / rx.sample_rate)
        out = np.abs(rf.stft(y, rx))
        np.testing.assert_allclose(out[:, k_bin], gamma * 32, rtol=1e-9)
        mask = np.ones(32, dtype=bool)
        mask[k_bin] = False
        assert np.max(out[:, mask]) < 1e-8

    def test_matches_brute_force(self):
        g = rng(3)
        rx = small_receiver(window="hamming", n_w=12, fft_len=16, hop=20)
        samples = g.normal(size=100) + 1j * g.normal(size=100)
        w, _, _ = rf.window_coefficients("hamming", 12)
        m = rx.n_frames(100)
        expect = brute_stft(samples, w, 20, 16, m)
        got = rf.stft(samples, rx)
        np.testing.assert_allclose(got, expect, rtol=1e-9, atol=1e-9)

    def test_window_longer_than_fft_folds(self):
        g = rng(4)
        rx = small_receiver(window="hamming", n_w=24, fft_len=16, hop=30)
        samples = g.normal(size=90) + 1j * g.normal(size=90)
        w, _, _ = rf.window_coefficients("hamming", 24)
        expect = brute_stft(samples, w, 30, 16, rx.n_frames(90))
        np.testing.assert_allclose(rf.stft(samples, rx), expect, rtol=1e-9, atol=1e-9)

    def test_linearity(self):
        g = rng(9)
        rx = small_receiver(n_w=16, fft_len=16, hop=24)
        x = g.normal(size=80) + 1j * g.normal(size=80)
        y = g.normal(size=80) + 1j * g.normal(size=80)
        a, b = 1.3 - 0.2j, -0.7 + 2.1j
        lhs = rf.stft(a * x + b * y, rx)
        rhs = a * rf.stft(x, rx) + b * rf.stft(y, rx)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)

    def test_short_input_rejected(self):
        rx = small_receiver(n_w=64, fft_len=64, hop=180)
        with pytest.raises(ValueError):
            rf.stft(np.zeros(10, dtype=complex), rx)


class TestSpectrogram:
    def test_zero_input(self):
        rx = small_receiver()
        spec = rf.spectrogram(np.zeros(20000, dtype=complex), rx, 3)
        assert np.all(spec.mag == 0)
        assert spec.interval_index == 3

    def test_noise_bins_rayleigh(self):
        # Rayleigh magnitudes with scale^2 = E_w * noise_cov / 2 (KS, 1%)
        rx = small_receiver(noise_cov=0.02 ** 2, fs=1e5, n_w=64, fft_len=128, hop=70)
        y = rf.synth_baseband([], rf.UavState(0, 0, 30), 1.0, rx, {}, rng(21))
        spec = rf.spectrogram(y, rx)
        _, _, e_w = rf.window_coefficients(rx.window_kind, rx.window_width)
        scale = math.sqrt(e_w * rx.noise_cov / 2.0)
        bins = spec.mag.ravel()
        assert bins.size >= 10_000
        res = stats.kstest(bins, lambda z: 1.0 - np.exp(-z ** 2 / (2 * scale ** 2)))
        assert res.pvalue > 0.01

    def test_table_config_shape(self, table_receiver, table_transmitters):
        # the reference configuration yields an M x 256 matrix
        y = rf.synth_baseband([], rf.UavState(0, 0, 30), 1.0, table_receiver,
                              table_transmitters, rng(2))
        spec = rf.spectrogram(y, table_receiver)
        assert spec.mag.shape[1] == 256
        assert spec.mag.shape[0] == (2_000_000 - 256) // 18000 + 1

    def test_stft_noise_quadrature_variance(self):
        # I and Q components each carry variance E_w * noise_cov / 2 (5%)
        rx = small_receiver(noise_cov=0.03 ** 2, fs=1e5, n_w=64, fft_len=128, hop=70)
        vals = []
        g = rng(31)
        while len(vals) * 128 < 100_000:
            y = rf.synth_baseband([], rf.UavState(0, 0, 30), 1.0, rx, {}, g)
            vals.append(rf.stft(y, rx))
        z = np.concatenate([v.ravel() for v in vals])[:100_000]
        _, _, e_w = rf.window_coefficients(rx.window_kind, rx.window_width)
        target = e_w * rx.noise_cov / 2.0
        assert abs(np.var(z.real) - target) < 0.05 * target
        assert abs(np.var(z.imag) - target) < 0.05 * target


class TestIndices:
    def test_freq_bin(self, table_receiver):
        assert rf.freq_bin(131e3, table_receiver) == 16

    def test_freq_bin_exact_lattice(self):
        rx = small_receiver(n_w=64, fft_len=64, hop=180)
        assert rf.freq_bin(5 * rx.sample_rate / 64, rx) == 5

    def test_time_frame_zero(self, table_receiver):
        assert rf.time_frame(0.0, table_receiver) == 0

    def test_hop_matches_half_pulse(self, table_receiver, table_transmitters):
        # R = Pw fs / 2 = 18000 for the reference parameters
        assert 0.018 * table_receiver.sample_rate / 2 == table_receiver.hop

    def test_range_errors(self, table_receiver):
        with pytest.raises(ValueError):
            rf.freq_bin(-1.0, table_receiver)
        with pytest.raises(ValueError):
            rf.freq_bin(2e6, table_receiver)
        with pytest.raises(ValueError):
            rf.time_frame(-0.1, table_receiver)
        with pytest.raises(ValueError):
            rf.time_frame(1.5, table_receiver, pulse_period=1.0)

    def test_pulse_contains_both_frames(self, table_receiver):
        # for offsets on a 1 ms grid, frames {m, m+1} sit inside the pulse
        fs, hop, n_w = 2e6, 18000, 256
        pw = 0.018
        for tau in np.arange(0.0, 1.0 - pw, 1e-3):
            m = rf.time_frame(tau, table_receiver)
            start, end = tau * fs, (tau + pw) * fs
            assert m * hop >= start - 1e-6
            assert (m + 1) * hop + n_w <= end + 1e-6


class TestResolvability:
    def _tx_pair(self, f1, f2, fs):
        pw = 0.4
        return {1: rf.TransmitterParams(amplitude=1.0, baseband_freq=f1,
                                        pulse_period=1.0, pulse_width=pw),
                2: rf.TransmitterParams(amplitude=1.0, baseband_freq=f2,
                                        pulse_period=1.0, pulse_width=pw)}

    def test_fig_example_pass(self):
        rx = small_receiver(fs=1e3, n_w=150, fft_len=256, hop=200)
        report = rf.check_resolvability(self._tx_pair(100.0, 160.0, 1e3), rx)
        sep = next(c for c in report.checks if c.name == "main_lobe_separation")
        assert sep.passed
        assert "53.33" in sep.detail

    def test_fig_example_fail(self):
        rx = small_receiver(fs=1e3, n_w=42, fft_len=256, hop=200)
        report = rf.check_resolvability(self._tx_pair(100.0, 160.0, 1e3), rx)
        sep = next(c for c in report.checks if c.name == "main_lobe_separation")
        assert not sep.passed
        assert not report.passed
        assert "190.4" in sep.detail

    def test_table_config_margin(self, table_receiver, table_transmitters):
        report = rf.check_resolvability(table_transmitters, table_receiver)
        sep = next(c for c in report.checks if c.name == "main_lobe_separation")
        assert sep.passed
        assert "229" in sep.detail  # ceil(8 * 2e6 / 70e3)
        assert report.passed

    def test_empty_table(self, table_receiver):
        with pytest.raises(ValueError):
            rf.check_resolvability({}, table_receiver)


class TestSpectrogramIO:
    def test_binary_roundtrip(self, tmp_path):
        g = rng(12)
        spec = rf.Spectrogram(np.abs(g.normal(size=(7, 9))), 42)
        path = tmp_path / "dump.spec"
        rf.write_spectrogram(path, spec)
        raw = path.read_bytes()
        assert raw[:4] == b"SPEC"
        assert len(raw) == 16 + 7 * 9 * 8
        back = rf.read_spectrogram(path)
        assert back.interval_index == 42
        np.testing.assert_array_equal(back.mag, spec.mag)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.spec"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(ValueError, match="magic"):
            rf.read_spectrogram(path)

    def test_csv(self, tmp_path):
        spec = rf.Spectrogram(np.ones((3, 4)), 1)
        path = tmp_path / "dump.csv"
        rf.write_spectrogram_csv(path, spec)
        data = np.loadtxt(path, delimiter=",")
        np.testing.assert_array_equal(data, spec.mag)


class TestAngles:
    def test_wrap(self):
        assert rf.wrap_angle(np.pi) == pytest.approx(np.pi)
        assert rf.wrap_angle(-np.pi) == pytest.approx(np.pi)
        assert rf.wrap_angle(3 * np.pi / 2) == pytest.approx(-np.pi / 2)
        vals = rf.wrap_angle(np.linspace(-20, 20, 400))
        assert np.all(vals > -np.pi - 1e-12)
        assert np.all(vals <= np.pi + 1e-12)

    def test_uav_heading_normalised(self):
        u = rf.UavState(0, 0, 30, heading=7.0)
        assert -np.pi < u.heading <= np.pi

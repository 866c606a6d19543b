import math

import numpy as np
import pytest

from tagtrack.rf_signal import AntennaPattern, ReceiverParams, TransmitterParams
from tagtrack.scenario import (
    FilterConfig,
    ObjectSpec,
    PlannerSpec,
    ScenarioConfig,
    UavConfig,
)


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


@pytest.fixture
def table_receiver():
    """Reference-scale receiver (2 MHz sampling, 256-sample BH4 window)."""
    return ReceiverParams(center_freq=150e6, sample_rate=2e6, gain=3981.071705534972,
                          ref_distance=1.0, path_loss=3.1068, noise_cov=0.025 ** 2,
                          window_kind="blackmanharris4", window_width=256,
                          fft_len=256, hop=18000)


@pytest.fixture
def table_transmitters():
    freqs = (131e3, 201e3, 401e3, 841e3)
    offsets = (0.1, 0.2, 0.3, 0.4)
    return {i + 1: TransmitterParams(amplitude=0.0059, baseband_freq=freqs[i],
                                     pulse_period=1.0, pulse_width=0.018,
                                     offset=offsets[i])
            for i in range(4)}


def small_receiver(noise_cov=0.02 ** 2, window="blackmanharris4", n_w=64,
                   fft_len=64, hop=180, fs=2e4, isotropic=True):
    """Desk-scale receiver: 20 kHz sampling keeps whole-interval synthesis
    cheap while preserving the frame geometry (R = Pw fs / 2 with Pw=18ms)."""
    ant = AntennaPattern(kind="isotropic") if isotropic else AntennaPattern()
    return ReceiverParams(center_freq=150e6, sample_rate=fs, gain=1.0,
                          ref_distance=1.0, path_loss=2.0, noise_cov=noise_cov,
                          window_kind=window, window_width=n_w,
                          fft_len=fft_len, hop=hop, antenna=ant)


def small_transmitters(freqs=(2500.0, 5000.0), amplitude=1000.0):
    return {i + 1: TransmitterParams(amplitude=amplitude, baseband_freq=f,
                                     pulse_period=1.0, pulse_width=0.018,
                                     offset=0.1 * (i + 1))
            for i, f in enumerate(freqs)}


def tiny_scenario(duration=10.0, n_particles=200, planner="renyi", seed=0,
                  noise_cov=4e-4):
    """Fast end-to-end scenario for harness and CLI tests."""
    rx = small_receiver(noise_cov=noise_cov)
    txs = small_transmitters(amplitude=4.0)
    objects = [
        ObjectSpec(label=1, birth=1.0, death=duration + 1.0,
                   initial_state=(120.0, 0.5, 120.0, 0.3),
                   mode_schedule=[("wd", 0.0), ("cv", 1.0)],
                   birth_mean=(120.0, 0.0, 120.0, 0.0)),
        ObjectSpec(label=2, birth=3.0, death=duration + 1.0,
                   initial_state=(60.0, -0.4, 180.0, 0.2),
                   mode_schedule=[("wd", 0.0)],
                   birth_mean=(60.0, 0.0, 180.0, 0.0)),
    ]
    return ScenarioConfig(
        region=(0.0, 250.0, 0.0, 250.0), duration=duration,
        receiver=rx, transmitters=txs, objects=objects,
        uav=UavConfig(start=(10.0, 10.0), altitude=30.0, heading=math.pi / 4,
                      speed=10.0, max_turn_rate=math.pi / 3, plan_interval=2.0),
        filter=FilterConfig(n_particles=n_particles, birth_prob=1e-3,
                            birth_cov=(64.0, 1.0, 64.0, 1.0)),
        planner=PlannerSpec(kind=planner, horizon=2, void_radius=15.0),
        seed=seed)

"""Scenario configuration (JSON round-trip, validation) and ground-truth
simulation with scripted or Markov mode switching."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from tagtrack.dynamics import MODE_NAMES, BirthSite, JmsModel, ObjectState, step_kinematics
from tagtrack.metrics import OspaParams
from tagtrack.planner import PlannerConfig
from tagtrack.rf_signal import (
    AntennaPattern,
    ReceiverParams,
    TransmitterParams,
    UavState,
    check_resolvability,
    db_to_linear,
)


@dataclass
class UavConfig:
    start: tuple = (0.0, 0.0)
    altitude: float = 30.0
    heading: float = math.pi / 4
    speed: float = 20.0
    max_turn_rate: float = math.pi / 3
    plan_interval: float = 5.0

    def initial_state(self) -> UavState:
        return UavState(self.start[0], self.start[1], self.altitude, self.heading)


@dataclass
class ObjectSpec:
    """One radio-tagged object: lifetime, initial kinematics, the scripted
    mode schedule (offsets from birth; None samples the Markov chain), and
    the filter's Gaussian birth-site prior mean."""
    label: int
    birth: float
    death: float
    initial_state: tuple
    mode_schedule: list | None = field(default_factory=lambda: [("wd", 0.0)])
    birth_mean: tuple | None = None

    def mode_at(self, t: float) -> int | None:
        if self.mode_schedule is None:
            return None
        mode = self.mode_schedule[0][0]
        for name, offset in self.mode_schedule:
            if self.birth + offset <= t:
                mode = name
        return MODE_NAMES.index(mode)


@dataclass
class FilterConfig:
    n_particles: int = 2000
    survival: float = 0.99
    birth_prob: float = 1e-6
    birth_cov: tuple = (100.0, 4.0, 100.0, 4.0)
    mode_transition: tuple = ((0.99, 0.01), (0.01, 0.99))
    initial_mode_probs: tuple = (0.5, 0.5)
    cv_sigma: float = 0.05
    wd_cov: tuple = (0.25, 2.25, 0.25, 2.25)
    tau_sigma: float = 0.002
    resample_threshold: float = 0.5
    extract_threshold: float = 0.5
    roughening: float = 1.0
    prune_threshold: float = 1e-7
    # re-seed prior around the last estimate when a lost track re-enters
    # the birth space (position variance, velocity variance, offset sigma)
    reacquire_pos_var: float = 2500.0
    reacquire_vel_var: float = 4.0
    reacquire_tau_sigma: float = 0.02


@dataclass
class PlannerSpec:
    kind: str = "renyi"              # "renyi", "cauchy" or "straight"
    alpha: float = 0.5
    cs_k: float = 1.0
    horizon: int = 3
    discount: float = 1.0
    void_radius: float = 50.0
    void_threshold: float = 0.9
    grid_size: int = 5
    pims_sample: bool = False


@dataclass
class ScenarioConfig:
    region: tuple
    duration: float
    receiver: ReceiverParams
    transmitters: dict
    objects: list
    uav: UavConfig = field(default_factory=UavConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    planner: PlannerSpec = field(default_factory=PlannerSpec)
    ospa: OspaParams = field(default_factory=OspaParams)
    object_altitude: float = 1.0
    seed: int = 0

    @property
    def t0(self) -> float:
        return next(iter(self.transmitters.values())).pulse_period

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.t0))

    def jms_model(self) -> JmsModel:
        f = self.filter
        return JmsModel(t0=self.t0, mode_trans=np.asarray(f.mode_transition),
                        tau_sigma=f.tau_sigma, survival=f.survival,
                        sigma_cv=f.cv_sigma, wd_cov=tuple(f.wd_cov))

    def birth_sites(self) -> list:
        sites = []
        for spec in self.objects:
            mean = spec.birth_mean
            if mean is None:
                s = spec.initial_state
                mean = (s[0], 0.0, s[2], 0.0)
            sites.append(BirthSite(spec.label, self.filter.birth_prob,
                                   tuple(mean), tuple(self.filter.birth_cov)))
        return sites

    def planner_config(self) -> PlannerConfig:
        p, u = self.planner, self.uav
        kind = "renyi" if p.kind == "straight" else p.kind
        return PlannerConfig(divergence=kind, alpha=p.alpha, cs_k=p.cs_k,
                             horizon=p.horizon, plan_interval=u.plan_interval,
                             discount=p.discount, void_radius=p.void_radius,
                             void_threshold=p.void_threshold, grid_size=p.grid_size,
                             speed=u.speed, max_turn_rate=u.max_turn_rate,
                             region=tuple(self.region),
                             extract_threshold=self.filter.extract_threshold,
                             pims_sample=p.pims_sample)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    rx = cfg.receiver
    return {
        "region": list(cfg.region),
        "duration": cfg.duration,
        "seed": cfg.seed,
        "object_altitude": cfg.object_altitude,
        "uav": {
            "start": list(cfg.uav.start), "altitude": cfg.uav.altitude,
            "heading": cfg.uav.heading, "speed": cfg.uav.speed,
            "max_turn_rate": cfg.uav.max_turn_rate,
            "plan_interval": cfg.uav.plan_interval,
        },
        "receiver": {
            "center_freq": rx.center_freq, "sample_rate": rx.sample_rate,
            "gain_db": 20.0 * math.log10(rx.gain),
            "ref_distance": rx.ref_distance, "path_loss": rx.path_loss,
            "noise_cov": rx.noise_cov, "window_kind": rx.window_kind,
            "window_width": rx.window_width, "fft_len": rx.fft_len,
            "hop": rx.hop,
            "antenna": {
                "kind": rx.antenna.kind,
                "g_max_db": 20.0 * math.log10(rx.antenna.g_max),
                "back_lobe": rx.antenna.back_lobe,
                "exponent": rx.antenna.exponent,
            },
        },
        "transmitters": [
            {"label": lab, "amplitude": tx.amplitude,
             "baseband_freq": tx.baseband_freq, "phase": tx.phase,
             "pulse_period": tx.pulse_period, "pulse_width": tx.pulse_width,
             "offset": tx.offset}
            for lab, tx in cfg.transmitters.items()
        ],
        "objects": [
            {"label": o.label, "birth": o.birth, "death": o.death,
             "initial_state": list(o.initial_state),
             "mode_schedule": ([[m, dt] for m, dt in o.mode_schedule]
                               if o.mode_schedule is not None else None),
             "birth_mean": list(o.birth_mean) if o.birth_mean is not None else None}
            for o in cfg.objects
        ],
        "filter": {
            "n_particles": cfg.filter.n_particles,
            "survival": cfg.filter.survival,
            "birth_prob": cfg.filter.birth_prob,
            "birth_cov": list(cfg.filter.birth_cov),
            "mode_transition": [list(r) for r in cfg.filter.mode_transition],
            "initial_mode_probs": list(cfg.filter.initial_mode_probs),
            "cv_sigma": cfg.filter.cv_sigma,
            "wd_cov": list(cfg.filter.wd_cov),
            "tau_sigma": cfg.filter.tau_sigma,
            "resample_threshold": cfg.filter.resample_threshold,
            "extract_threshold": cfg.filter.extract_threshold,
        },
        "planner": {
            "kind": cfg.planner.kind, "alpha": cfg.planner.alpha,
            "cs_k": cfg.planner.cs_k, "horizon": cfg.planner.horizon,
            "discount": cfg.planner.discount,
            "void_radius": cfg.planner.void_radius,
            "void_threshold": cfg.planner.void_threshold,
            "grid_size": cfg.planner.grid_size,
            "pims_sample": cfg.planner.pims_sample,
        },
        "ospa": {"order": cfg.ospa.order, "cutoff": cfg.ospa.cutoff},
    }


def config_from_dict(doc: dict) -> ScenarioConfig:
    rxd = doc["receiver"]
    ant = rxd.get("antenna", {})
    receiver = ReceiverParams(
        center_freq=rxd["center_freq"], sample_rate=rxd["sample_rate"],
        gain=db_to_linear(rxd["gain_db"]) if "gain_db" in rxd else rxd["gain"],
        ref_distance=rxd["ref_distance"], path_loss=rxd["path_loss"],
        noise_cov=rxd["noise_cov"], window_kind=rxd.get("window_kind", "blackmanharris4"),
        window_width=rxd["window_width"], fft_len=rxd["fft_len"], hop=rxd["hop"],
        antenna=AntennaPattern(
            kind=ant.get("kind", "cardioid"),
            g_max=db_to_linear(ant["g_max_db"]) if "g_max_db" in ant else ant.get("g_max", 1.78),
            back_lobe=ant.get("back_lobe", 0.1),
            exponent=ant.get("exponent", 2.0)),
    )
    transmitters = {
        t["label"]: TransmitterParams(
            amplitude=t["amplitude"], baseband_freq=t["baseband_freq"],
            phase=t.get("phase", 0.0), pulse_period=t["pulse_period"],
            pulse_width=t["pulse_width"], offset=t.get("offset", 0.0))
        for t in doc["transmitters"]
    }
    objects = [
        ObjectSpec(label=o["label"], birth=o["birth"], death=o["death"],
                   initial_state=tuple(o["initial_state"]),
                   mode_schedule=([(m, dt) for m, dt in o["mode_schedule"]]
                                  if o.get("mode_schedule") is not None else None),
                   birth_mean=tuple(o["birth_mean"]) if o.get("birth_mean") else None)
        for o in doc["objects"]
    ]
    fd = doc.get("filter", {})
    pd = doc.get("planner", {})
    od = doc.get("ospa", {})
    ud = doc.get("uav", {})
    return ScenarioConfig(
        region=tuple(doc["region"]), duration=doc["duration"],
        receiver=receiver, transmitters=transmitters, objects=objects,
        uav=UavConfig(start=tuple(ud.get("start", (0, 0))),
                      altitude=ud.get("altitude", 30.0),
                      heading=ud.get("heading", math.pi / 4),
                      speed=ud.get("speed", 20.0),
                      max_turn_rate=ud.get("max_turn_rate", math.pi / 3),
                      plan_interval=ud.get("plan_interval", 5.0)),
        filter=FilterConfig(**fd) if fd else FilterConfig(),
        planner=PlannerSpec(**pd) if pd else PlannerSpec(),
        ospa=OspaParams(order=od.get("order", 1.0), cutoff=od.get("cutoff", 100.0)),
        object_altitude=doc.get("object_altitude", 1.0),
        seed=doc.get("seed", 0),
    )


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(cfg: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")


def validate_config(cfg: ScenarioConfig) -> list:
    """Schema- and physics-level problems (empty list when clean)."""
    problems = []
    xmin, xmax, ymin, ymax = cfg.region
    if xmin >= xmax or ymin >= ymax:
        problems.append("empty region")
    for o in cfg.objects:
        if not o.birth < o.death <= cfg.duration + cfg.t0:
            problems.append(f"object {o.label}: need birth < death <= duration")
        if o.label not in cfg.transmitters:
            problems.append(f"object {o.label}: no transmitter entry")
        if o.mode_schedule is not None:
            for name, _ in o.mode_schedule:
                if name not in MODE_NAMES:
                    problems.append(f"object {o.label}: unknown mode {name!r}")
    labels = [o.label for o in cfg.objects]
    if len(set(labels)) != len(labels):
        problems.append("duplicate object labels")
    periods = {tx.pulse_period for tx in cfg.transmitters.values()}
    if len(periods) != 1:
        problems.append("transmitters must share one pulse period")
    report = check_resolvability(cfg.transmitters, cfg.receiver)
    for c in report.checks:
        if not c.passed:
            problems.append(f"resolvability {c.name}: {c.detail}")
    return problems


@dataclass
class TruthTrack:
    label: int
    first_step: int
    states: np.ndarray    # (n, 4)
    modes: np.ndarray     # (n,)
    taus: np.ndarray      # (n,)

    def at(self, k: int):
        i = k - self.first_step
        if i < 0 or i >= len(self.states):
            return None
        return self.states[i], int(self.modes[i]), float(self.taus[i])


@dataclass
class TruthLog:
    tracks: dict
    t0: float
    object_altitude: float = 1.0

    def live_at(self, k: int) -> list:
        out = []
        for tr in self.tracks.values():
            got = tr.at(k)
            if got is not None:
                x, mode, tau = got
                out.append(ObjectState(x.copy(), mode, tau, tr.label,
                                       self.object_altitude))
        return out

    def positions_at(self, k: int) -> np.ndarray:
        live = self.live_at(k)
        if not live:
            return np.empty((0, 2))
        return np.array([o.position for o in live])


def _reflect(x, lo, hi):
    span = hi - lo
    y = (x - lo) % (2 * span)
    return lo + (span - abs(y - span)), y > span


def simulate_truth(cfg: ScenarioConfig, rng) -> TruthLog:
    """Ground-truth trajectories honouring birth/death times and scripted
    (or Markov) mode switches, reflected at the region boundary.  An object
    is live at interval k when birth <= k*T0 < death."""
    model = cfg.jms_model()
    xmin, xmax, ymin, ymax = cfg.region
    tracks = {}
    for spec in cfg.objects:
        first = None
        states, modes, taus = [], [], []
        x = np.asarray(spec.initial_state, dtype=np.float64).copy()
        tau = cfg.transmitters[spec.label].offset
        mode = spec.mode_at(spec.birth) if spec.mode_schedule is not None else int(
            rng.choice(len(cfg.filter.initial_mode_probs),
                       p=cfg.filter.initial_mode_probs))
        for k in range(1, cfg.n_steps + 1):
            t = k * cfg.t0
            if not spec.birth <= t < spec.death:
                continue
            if first is None:
                first = k
            else:
                x = step_kinematics(x[None, :], np.array([mode]), model, rng)[0]
                x[0], flip_x = _reflect(x[0], xmin, xmax)
                x[2], flip_y = _reflect(x[2], ymin, ymax)
                if flip_x:
                    x[1] = -x[1]
                if flip_y:
                    x[3] = -x[3]
                if model.tau_step_std > 0:
                    tau = (tau + model.tau_step_std * rng.standard_normal()) % cfg.t0
                if spec.mode_schedule is None:
                    mode = int(rng.choice(model.n_modes, p=model.mode_trans[mode]))
            if spec.mode_schedule is not None:
                mode = spec.mode_at(t)
            states.append(x.copy())
            modes.append(mode)
            taus.append(tau)
        if first is not None:
            tracks[spec.label] = TruthTrack(spec.label, first, np.array(states),
                                            np.array(modes), np.array(taus))
    return TruthLog(tracks, cfg.t0, cfg.object_altitude)


def four_object_scenario(noise_cov: float = 0.025 ** 2, duration: float = 200.0,
                         n_particles: int = 2000, planner: str = "renyi",
                         seed: int = 0) -> ScenarioConfig:
    """Reduced-scale four-object experiment: staggered births/deaths, two
    scripted wandering-to-CV switches, receiver and kinematic parameters at
    reference scale (receiver gain expressed on the amplitude-dB scale)."""
    freqs = (131e3, 201e3, 401e3, 841e3)
    offsets = (0.1, 0.2, 0.3, 0.4)
    initials = ((800, 0.13, 300, -1.44), (200, 0.18, 700, -2.17),
                (1200, -1.94, 1000, 0.42), (900, 1.91, 1300, -2.04))
    births = (1.0, 50.0, 100.0, 150.0)
    deaths = (250.0, 300.0, 350.0, 400.0)
    cv_at = (1.0, 65.0, 1.0, 65.0)
    transmitters = {
        i + 1: TransmitterParams(amplitude=0.0059, baseband_freq=freqs[i],
                                 phase=0.0, pulse_period=1.0, pulse_width=0.018,
                                 offset=offsets[i])
        for i in range(4)
    }
    objects = [
        ObjectSpec(label=i + 1, birth=births[i],
                   death=min(deaths[i], duration + 1.0),
                   initial_state=initials[i],
                   mode_schedule=[("wd", 0.0), ("cv", cv_at[i])],
                   birth_mean=(initials[i][0], 0.0, initials[i][2], 0.0))
        for i in range(4)
    ]
    receiver = ReceiverParams(
        center_freq=150e6, sample_rate=2e6, gain=db_to_linear(164.0),
        ref_distance=1.0, path_loss=3.1068, noise_cov=noise_cov,
        window_kind="blackmanharris4", window_width=256, fft_len=256, hop=18000)
    return ScenarioConfig(
        region=(0.0, 1500.0, 0.0, 1500.0), duration=duration,
        receiver=receiver, transmitters=transmitters, objects=objects,
        uav=UavConfig(start=(0.0, 0.0), altitude=30.0, heading=math.pi / 4,
                      speed=20.0, max_turn_rate=math.pi / 3, plan_interval=5.0),
        filter=FilterConfig(n_particles=n_particles, birth_prob=1e-3),
        planner=PlannerSpec(kind=planner),
        seed=seed)


def single_object_scenario(noise_cov: float = 0.015 ** 2, duration: float = 100.0,
                           n_particles: int = 2000, planner: str = "renyi",
                           seed: int = 0) -> ScenarioConfig:
    """One object switching to constant velocity shortly after birth, with
    the receiver starting a few hundred meters from the birth site."""
    transmitters = {
        1: TransmitterParams(amplitude=0.0059, baseband_freq=131e3, phase=0.0,
                             pulse_period=1.0, pulse_width=0.018, offset=0.3)
    }
    objects = [
        ObjectSpec(label=1, birth=1.0, death=duration + 1.0,
                   initial_state=(400.0, 1.2, 400.0, 0.9),
                   mode_schedule=[("wd", 0.0), ("cv", 1.0)],
                   birth_mean=(400.0, 0.0, 400.0, 0.0))
    ]
    receiver = ReceiverParams(
        center_freq=150e6, sample_rate=2e6, gain=db_to_linear(144.0),
        ref_distance=1.0, path_loss=3.1068, noise_cov=noise_cov,
        window_kind="blackmanharris4", window_width=256, fft_len=256, hop=18000)
    return ScenarioConfig(
        region=(0.0, 800.0, 0.0, 800.0), duration=duration,
        receiver=receiver, transmitters=transmitters, objects=objects,
        uav=UavConfig(start=(50.0, 50.0), altitude=30.0, heading=math.pi / 4,
                      speed=20.0, max_turn_rate=math.pi / 3, plan_interval=5.0),
        filter=FilterConfig(n_particles=n_particles),
        planner=PlannerSpec(kind=planner),
        seed=seed)

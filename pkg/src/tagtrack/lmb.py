"""Particle labeled multi-Bernoulli track-before-detect filter.

Each labeled Bernoulli component carries an existence probability and a
weighted particle cloud over (kinematics, mode, pulse offset).  Prediction
scales existence by survival and pushes particles through the jump-Markov
kernel; the update reweights each component by its separable spectrogram
likelihood and maps existence through the Bernoulli Bayes rule, all in the
log domain.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit, logsumexp

from tagtrack.dynamics import BirthSite, JmsModel, propagate
from tagtrack.likelihood import LikelihoodContext, _as_matrix
from tagtrack.rf_signal import UavState

R_CLAMP = 1e-12


def _clamp_r(r: float) -> float:
    return min(max(r, R_CLAMP), 1.0 - R_CLAMP)


@dataclass
class ParticleCloud:
    """Weighted samples of (x, mode, tau); log-weights normalised to sum 1."""
    x: np.ndarray        # (N, 4)
    mode: np.ndarray     # (N,)
    tau: np.ndarray      # (N,)
    logw: np.ndarray     # (N,)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.mode = np.asarray(self.mode, dtype=np.int64)
        self.tau = np.asarray(self.tau, dtype=np.float64)
        self.logw = np.asarray(self.logw, dtype=np.float64)

    def __len__(self):
        return len(self.logw)

    @property
    def weights(self):
        return np.exp(self.logw)

    @property
    def positions(self):
        return self.x[:, [0, 2]]

    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights ** 2))

    def copy(self) -> "ParticleCloud":
        return ParticleCloud(self.x.copy(), self.mode.copy(),
                             self.tau.copy(), self.logw.copy())


@dataclass
class BernoulliComponent:
    label: int
    r: float
    cloud: ParticleCloud

    def copy(self) -> "BernoulliComponent":
        return BernoulliComponent(self.label, self.r, self.cloud.copy())


@dataclass
class LmbBelief:
    """Label-keyed set of Bernoulli components."""
    components: dict = field(default_factory=dict)

    @property
    def labels(self):
        return list(self.components.keys())

    def __len__(self):
        return len(self.components)

    def __getitem__(self, label) -> BernoulliComponent:
        return self.components[label]

    def add(self, comp: BernoulliComponent):
        if comp.label in self.components:
            raise ValueError(f"label {comp.label} already present in belief")
        self.components[comp.label] = comp

    def copy(self) -> "LmbBelief":
        return LmbBelief({k: c.copy() for k, c in self.components.items()})


def spawn_births(sites, live_labels, n_particles: int, mode_probs,
                 t0: float, rng) -> list:
    """Instantiate Bernoulli components for birth sites (labels must not be
    live).  Kinematics from the site Gaussian, offsets uniform over [0, T0)
    unless the site pins a Gaussian offset prior, modes from the initial
    mode distribution, uniform weights."""
    live = set(live_labels)
    out = []
    mode_probs = np.asarray(mode_probs, dtype=np.float64)
    for site in sites:
        if site.label in live:
            raise ValueError(f"birth label {site.label} is already live")
        mean = np.asarray(site.mean, dtype=np.float64)
        std = np.sqrt(np.asarray(site.cov_diag, dtype=np.float64))
        x = mean + rng.standard_normal((n_particles, 4)) * std
        if site.tau_mean is None:
            tau = rng.random(n_particles) * t0
        else:
            tau = np.mod(site.tau_mean + site.tau_sigma
                         * rng.standard_normal(n_particles), t0)
        mode = rng.choice(len(mode_probs), size=n_particles, p=mode_probs)
        logw = np.full(n_particles, -np.log(n_particles))
        out.append(BernoulliComponent(site.label, _clamp_r(site.r),
                                      ParticleCloud(x, mode, tau, logw)))
    return out


def predict(belief: LmbBelief, model: JmsModel, births, dt: float, rng,
            motion_only: bool = False) -> LmbBelief:
    """LMB prediction: survivors keep their label with existence scaled by
    the survival probability and particles propagated through the JMS
    kernel; birth components are appended.  motion_only skips both the
    survival scaling and births (the planner's rollout propagation)."""
    out = LmbBelief()
    for comp in belief.components.values():
        cloud = comp.cloud
        x, mode, tau = propagate(cloud.x, cloud.mode, cloud.tau, dt, model, rng)
        r = comp.r if motion_only else _clamp_r(comp.r * model.survival)
        out.add(BernoulliComponent(comp.label, r,
                                   ParticleCloud(x, mode, tau, cloud.logw.copy())))
    if not motion_only:
        for comp in births:
            out.add(comp)
    return out


def update(belief: LmbBelief, z, uav: UavState, rx=None, tx_table=None,
           ctx: LikelihoodContext | None = None) -> LmbBelief:
    """Separable-likelihood LMB update: per component, reweight particles by
    g_z and push existence through r' = r<p,g> / (1 - r + r<p,g>)."""
    if ctx is None:
        ctx = LikelihoodContext(rx, tx_table)
    mat = _as_matrix(z)
    if mat.shape[1] != ctx.rx.fft_len:
        raise ValueError(f"measurement has {mat.shape[1]} bins, receiver expects "
                         f"{ctx.rx.fft_len}")
    out = LmbBelief()
    for comp in belief.components.values():
        cloud = comp.cloud
        logg = ctx.log_likelihood(comp.label, mat, uav, cloud.positions, cloud.tau)
        logpsi = float(logsumexp(cloud.logw + logg))
        if not np.isfinite(logpsi):
            warnings.warn(f"degenerate likelihood for label {comp.label}; "
                          "keeping prior component")
            out.add(comp.copy())
            continue
        r = _clamp_r(float(expit(logit(comp.r) + logpsi)))
        logw = cloud.logw + logg - logpsi
        out.add(BernoulliComponent(comp.label, r,
                                   ParticleCloud(cloud.x.copy(), cloud.mode.copy(),
                                                 cloud.tau.copy(), logw)))
    return out


def resample(comp: BernoulliComponent, rng, scheme: str = "systematic") -> BernoulliComponent:
    """Resample a component back to equal weights."""
    w = comp.cloud.weights
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        raise ValueError("cannot resample degenerate weights")
    w = w / total
    n = len(w)
    if scheme == "systematic":
        pts = (rng.random() + np.arange(n)) / n
        idx = np.searchsorted(np.cumsum(w), pts)
    elif scheme == "multinomial":
        idx = rng.choice(n, size=n, p=w)
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    idx = np.minimum(idx, n - 1)
    cloud = comp.cloud
    return BernoulliComponent(
        comp.label, comp.r,
        ParticleCloud(cloud.x[idx], cloud.mode[idx], cloud.tau[idx],
                      np.full(n, -np.log(n))))


def roughen(comp: BernoulliComponent, rng, coeff: float = 1.0,
            ref: ParticleCloud | None = None,
            tau_period: float | None = None) -> BernoulliComponent:
    """Kernel jitter after resampling (regularised particle filter step).

    Bandwidth scales with the unweighted spread of the reference support
    (by default the pre-resample cloud): a resample that collapses onto few
    ancestors then re-explores a fraction of the support it came from
    instead of dying at a point.
    """
    cloud = comp.cloud
    ref = ref if ref is not None else cloud
    n = len(cloud)
    if coeff <= 0 or n < 2:
        return comp
    h = coeff * n ** (-1.0 / 9.0)  # d = 5 continuous dims
    cov = np.cov(ref.x, rowvar=False)
    vals, vecs = np.linalg.eigh(cov)
    fac = vecs * np.sqrt(np.clip(vals, 0.0, None))
    x = cloud.x + h * rng.standard_normal((n, 4)) @ fac.T
    tau = cloud.tau + h * ref.tau.std() * rng.standard_normal(n)
    if tau_period is not None:
        tau = np.mod(tau, tau_period)
    return BernoulliComponent(comp.label, comp.r,
                              ParticleCloud(x, cloud.mode.copy(), tau,
                                            cloud.logw.copy()))


def maybe_resample(belief: LmbBelief, rng, threshold: float = 0.5,
                   min_r: float = 0.05, roughening: float = 1.0,
                   tau_period: float | None = None) -> LmbBelief:
    """Systematic resampling (plus roughening) of any component whose ESS
    dropped below the threshold fraction of its particle count.

    Components still near their birth existence are left alone: their weight
    spread is receiver-noise churn, and resampling on it collapses the
    offset-support diversity a later detection needs.  Once evidence lifts r
    the update dwarfs any accumulated churn and focusing is correct.
    """
    out = LmbBelief()
    for comp in belief.components.values():
        if comp.r >= min_r and comp.cloud.ess() < threshold * len(comp.cloud):
            out.add(roughen(resample(comp, rng), rng, roughening,
                            ref=comp.cloud, tau_period=tau_period))
        else:
            out.add(comp)
    return out


def prune(belief: LmbBelief, r_min: float) -> LmbBelief:
    """Drop components whose existence collapsed below r_min.  Their labels
    leave the live set, so the birth model re-proposes them with a fresh
    prior cloud on the next prediction."""
    return LmbBelief({lab: c for lab, c in belief.components.items()
                      if c.r >= r_min})


def cardinality_pmf(belief: LmbBelief) -> np.ndarray:
    """Cardinality distribution of the multi-Bernoulli by iterated
    convolution of the per-component (1-r, r) laws."""
    pmf = np.array([1.0])
    for comp in belief.components.values():
        pmf = np.convolve(pmf, [1.0 - comp.r, comp.r])
    return pmf


@dataclass
class Estimate:
    """Extracted labeled point estimate with per-mode probabilities."""
    label: int
    x: np.ndarray
    tau: float
    mode_probs: np.ndarray
    r: float

    @property
    def position(self):
        return self.x[[0, 2]]


def extract_estimate(belief: LmbBelief, r_threshold: float = 0.5) -> list:
    """Labels with existence above the threshold, each reported at its
    weighted particle mean with mode probabilities from summed weights."""
    out = []
    for comp in belief.components.values():
        if comp.r <= r_threshold:
            continue
        w = comp.cloud.weights
        x = w @ comp.cloud.x
        tau = float(w @ comp.cloud.tau)
        n_modes = int(comp.cloud.mode.max(initial=1)) + 1
        mode_probs = np.bincount(comp.cloud.mode, weights=w, minlength=max(n_modes, 2))
        out.append(Estimate(comp.label, x, tau, mode_probs, comp.r))
    return out


def map_cardinality(belief: LmbBelief) -> int:
    return int(np.argmax(cardinality_pmf(belief)))


def belief_snapshot(belief: LmbBelief) -> dict:
    """JSON-ready summary: per label, existence, weighted mean, covariance
    diagonal and mode probabilities."""
    snap = {}
    for comp in belief.components.values():
        w = comp.cloud.weights
        mean = w @ comp.cloud.x
        var = w @ (comp.cloud.x - mean) ** 2
        n_modes = int(comp.cloud.mode.max(initial=1)) + 1
        probs = np.bincount(comp.cloud.mode, weights=w, minlength=max(n_modes, 2))
        snap[str(comp.label)] = {
            "r": float(comp.r),
            "mean": [float(v) for v in mean],
            "cov_diag": [float(v) for v in var],
            "tau_mean": float(w @ comp.cloud.tau),
            "mode_probs": [float(p) for p in probs],
            "ess": comp.cloud.ess(),
        }
    return snap

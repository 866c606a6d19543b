"""Receding-horizon pose planner on the filter belief.

Candidate actions are heading-delta sequences over an H-step horizon.  Each
is scored by an information divergence between the prediction-only belief
and a pseudo-posterior updated with the predicted ideal measurement (a
noiseless spectrogram synthesised from the extracted estimates at the
candidate pose).  A void-probability constraint keeps the platform away
from probable object locations.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit, logsumexp

from tagtrack.dynamics import JmsModel
from tagtrack.likelihood import LikelihoodContext, ideal_spectrogram
from tagtrack.lmb import (
    BernoulliComponent,
    Estimate,
    LmbBelief,
    ParticleCloud,
    _clamp_r,
    predict,
)
from tagtrack.rf_signal import UavState, wrap_angle


@dataclass(frozen=True)
class PlannerConfig:
    divergence: str = "renyi"        # "renyi" or "cauchy"
    alpha: float = 0.5               # Renyi order (alpha = 1 is the KL limit)
    cs_k: float = 1.0                # Cauchy-Schwarz hyper-volume unit
    horizon: int = 3
    plan_interval: float = 5.0       # seconds per planning step
    discount: float = 1.0
    void_radius: float = 50.0        # meters
    void_threshold: float = 0.9
    grid_size: int = 5
    speed: float = 20.0              # m/s
    max_turn_rate: float = np.pi / 3  # rad/s
    region: tuple = (0.0, 1500.0, 0.0, 1500.0)
    extract_threshold: float = 0.5
    pims_sample: bool = False        # sample the rollout state instead of the mean

    def __post_init__(self):
        if not 0 < self.discount <= 1:
            raise ValueError("discount must lie in (0, 1]")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass(frozen=True)
class ActionSequence:
    """Per-step heading deltas with the induced headings and waypoints."""
    deltas: tuple
    headings: tuple
    waypoints: np.ndarray

    @property
    def turn_total(self) -> float:
        return float(sum(abs(d) for d in self.deltas))


@dataclass(frozen=True)
class VoidRegion:
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("void radius must be positive")


def heading_grid(cfg: PlannerConfig) -> np.ndarray:
    if cfg.grid_size == 1:
        return np.array([0.0])
    bound = cfg.max_turn_rate * cfg.plan_interval
    return np.linspace(-bound, bound, cfg.grid_size)


def _advance(x, y, heading, cfg: PlannerConfig):
    nx = x + cfg.speed * cfg.plan_interval * np.cos(heading)
    ny = y + cfg.speed * cfg.plan_interval * np.sin(heading)
    xmin, xmax, ymin, ymax = cfg.region
    return min(max(nx, xmin), xmax), min(max(ny, ymin), ymax)


def enumerate_actions(u: UavState, cfg: PlannerConfig) -> list:
    """All delta sequences on the symmetric per-step grid, with waypoints
    advanced at constant speed and clipped into the region."""
    grid = heading_grid(cfg)
    actions = []
    for deltas in itertools.product(grid, repeat=cfg.horizon):
        heading = u.heading
        x, y = u.x, u.y
        headings, waypoints = [], []
        for d in deltas:
            heading = wrap_angle(heading + d)
            x, y = _advance(x, y, heading, cfg)
            headings.append(heading)
            waypoints.append((x, y))
        actions.append(ActionSequence(tuple(float(d) for d in deltas),
                                      tuple(headings), np.array(waypoints)))
    return actions


def void_probability(belief: LmbBelief, region: VoidRegion) -> float:
    """Probability that no object lies within the region (ground-plane
    distance), via the multi-Bernoulli factorisation prod(1 - r q)."""
    cx, cy = region.center
    out = 1.0
    for comp in belief.components.values():
        pos = comp.cloud.positions
        inside = (pos[:, 0] - cx) ** 2 + (pos[:, 1] - cy) ** 2 < region.radius ** 2
        q = float(comp.cloud.weights @ inside)
        out *= 1.0 - comp.r * q
    return out


def _check_compatible(b2: LmbBelief, b1: LmbBelief):
    if set(b2.labels) != set(b1.labels):
        raise ValueError("beliefs have different label spaces")
    for label in b1.labels:
        if len(b2[label].cloud) != len(b1[label].cloud):
            raise ValueError(f"label {label}: particle supports differ in size")


def _pow_pair(p2, p1, alpha):
    # p2^a * p1^(1-a) with the 0^a * 0^(1-a) = 0 convention
    p2 = np.asarray(p2, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(p2 == 0.0, 0.0, p2 ** alpha * p1 ** (1.0 - alpha))
    return out


def renyi_divergence(b2: LmbBelief, b1: LmbBelief, alpha: float = 0.5) -> float:
    """Renyi divergence between two multi-Bernoulli beliefs sharing particle
    supports; the label-subset sum factorises exactly per label."""
    _check_compatible(b2, b1)
    if alpha == 1.0:
        return _kl_divergence(b2, b1)
    total = 0.0
    for label in b1.labels:
        c2, c1 = b2[label], b1[label]
        w2, w1 = c2.cloud.weights, c1.cloud.weights
        if c2.r == c1.r and np.array_equal(w2, w1):
            continue  # ratio product telescopes to sum(w) = 1
        s = float(np.sum(_pow_pair(w2, w1, alpha)))
        a = float(_pow_pair(c2.r, c1.r, alpha))
        b = float(_pow_pair(1.0 - c2.r, 1.0 - c1.r, alpha))
        with np.errstate(divide="ignore"):
            total += np.log(b + a * s)
    return float(total / (alpha - 1.0))


def _kl_divergence(b2: LmbBelief, b1: LmbBelief) -> float:
    total = 0.0
    for label in b1.labels:
        c2, c1 = b2[label], b1[label]
        w2, w1 = c2.cloud.weights, c1.cloud.weights
        with np.errstate(divide="ignore", invalid="ignore"):
            wterm = float(np.sum(np.where(w2 == 0.0, 0.0, w2 * np.log(w2 / w1))))
            for p2, p1 in ((c2.r, c1.r), (1.0 - c2.r, 1.0 - c1.r)):
                if p2 > 0:
                    total += p2 * np.log(p2 / p1)
        total += c2.r * wterm
    return float(total)


def cauchy_schwarz_divergence(b2: LmbBelief, b1: LmbBelief, k: float = 1.0) -> float:
    """Cauchy-Schwarz divergence -log(<pi2, pi1> / sqrt(<pi2, pi2><pi1, pi1>))
    with per-label factorised inner products."""
    _check_compatible(b2, b1)

    def log_inner(ba, bb):
        acc = 0.0
        for label in b1.labels:
            ca, cb = ba[label], bb[label]
            term = ((1.0 - ca.r) * (1.0 - cb.r)
                    + ca.r * cb.r * k * float(ca.cloud.weights @ cb.cloud.weights))
            if term <= 0.0:
                raise ValueError(f"label {label}: degenerate supports give a "
                                 "nonpositive inner product")
            acc += np.log(term)
        return acc

    cross = log_inner(b2, b1)
    return float(-(cross - 0.5 * log_inner(b2, b2) - 0.5 * log_inner(b1, b1)))


def divergence(b2: LmbBelief, b1: LmbBelief, cfg: PlannerConfig) -> float:
    if cfg.divergence == "renyi":
        return renyi_divergence(b2, b1, cfg.alpha)
    if cfg.divergence == "cauchy":
        return cauchy_schwarz_divergence(b2, b1, cfg.cs_k)
    raise ValueError(f"unknown divergence kind {cfg.divergence!r}")


class _RolloutSupport:
    """Shared machinery for the planning rollouts.

    Propagates the particle supports once per horizon step (motion only, so
    the prediction chain is action independent), extracts the per-step point
    estimates used to synthesise ideal measurements, and reweights the
    pseudo-posterior chain per candidate pose.  Both chains reference the
    same propagated samples, which the divergence approximations require.
    """

    def __init__(self, belief: LmbBelief, model: JmsModel, cfg: PlannerConfig,
                 ctx: LikelihoodContext, n_frames: int, rng):
        self.cfg = cfg
        self.ctx = ctx
        self.n_frames = n_frames
        self.labels = belief.labels
        self.r1 = {lab: belief[lab].r for lab in self.labels}
        self.logw1 = {lab: belief[lab].cloud.logw.copy() for lab in self.labels}
        self.chain = []
        self.estimates = []
        sample_idx = {}
        if cfg.pims_sample and self.labels:
            sample_idx = {lab: int(rng.choice(len(belief[lab].cloud),
                                              p=belief[lab].cloud.weights))
                          for lab in self.labels}
        b = belief
        for _ in range(cfg.horizon):
            b = predict(b, model, (), model.t0, rng, motion_only=True)
            step = {lab: b[lab].cloud for lab in self.labels}
            self.chain.append(step)
            ests = []
            for lab in self.labels:
                if self.r1[lab] <= cfg.extract_threshold:
                    continue
                cloud = step[lab]
                w = np.exp(self.logw1[lab])
                if cfg.pims_sample:
                    i = sample_idx[lab]
                    x, tau = cloud.x[i], float(cloud.tau[i])
                else:
                    x, tau = w @ cloud.x, float(w @ cloud.tau)
                probs = np.bincount(cloud.mode, weights=w, minlength=2)
                ests.append(Estimate(lab, x, tau, probs, self.r1[lab]))
            self.estimates.append(ests)

    def pred_belief(self, j: int) -> LmbBelief:
        """Prediction-only belief at horizon step j (1-based)."""
        return self._view(j, self.r1, self.logw1)

    def _view(self, j, r_by_label, logw_by_label) -> LmbBelief:
        out = LmbBelief()
        for lab in self.labels:
            cloud = self.chain[j - 1][lab]
            out.add(BernoulliComponent(lab, r_by_label[lab],
                                       ParticleCloud(cloud.x, cloud.mode, cloud.tau,
                                                     logw_by_label[lab])))
        return out

    def pseudo_step(self, j: int, pose: UavState, r2, logw2):
        """One pseudo-update at horizon step j against the ideal measurement
        for the candidate pose; returns the updated (r2, logw2) maps."""
        z = ideal_spectrogram(self.estimates[j - 1], pose, self.ctx, self.n_frames)
        new_r, new_w = {}, {}
        for lab in self.labels:
            cloud = self.chain[j - 1][lab]
            logg = self.ctx.log_likelihood(lab, z, pose, cloud.positions, cloud.tau)
            logpsi = float(logsumexp(logw2[lab] + logg))
            new_w[lab] = logw2[lab] + logg - logpsi
            new_r[lab] = _clamp_r(float(expit(logit(r2[lab]) + logpsi)))
        return new_r, new_w


def pims_rollout(belief: LmbBelief, action: ActionSequence, uav: UavState,
                 rx, tx_table, model: JmsModel, cfg: PlannerConfig, rng,
                 ctx: LikelihoodContext | None = None,
                 n_frames: int | None = None):
    """Roll one action forward: returns (prediction-only beliefs, pseudo
    posterior beliefs), one pair per horizon step, on shared supports."""
    if not belief.labels:
        raise ValueError("rollout requires a nonempty label set")
    ctx = ctx or LikelihoodContext(rx, tx_table)
    if n_frames is None:
        n_frames = _default_frames(ctx)
    support = _RolloutSupport(belief, model, cfg, ctx, n_frames, rng)
    r2 = dict(support.r1)
    logw2 = {lab: w.copy() for lab, w in support.logw1.items()}
    preds, pseudos = [], []
    for j in range(1, cfg.horizon + 1):
        pose = UavState(action.waypoints[j - 1][0], action.waypoints[j - 1][1],
                        uav.alt, action.headings[j - 1])
        r2, logw2 = support.pseudo_step(j, pose, r2, logw2)
        preds.append(support.pred_belief(j))
        pseudos.append(support._view(j, r2, logw2))
    return preds, pseudos


def _default_frames(ctx: LikelihoodContext) -> int:
    t0 = next(iter(ctx.tx_table.values())).pulse_period
    return ctx.rx.n_frames(int(np.ceil(t0 * ctx.rx.sample_rate)))


@dataclass
class PlanResult:
    action: ActionSequence
    index: int
    rewards: np.ndarray
    min_voids: np.ndarray
    feasible: np.ndarray
    fallback: bool
    actions: list = field(repr=False, default_factory=list)


def plan(belief: LmbBelief, u: UavState, rx, tx_table, model: JmsModel,
         cfg: PlannerConfig, rng, ctx: LikelihoodContext | None = None,
         n_frames: int | None = None) -> PlanResult:
    """Pick the feasible action maximising the discounted divergence reward.

    Candidate prefixes share their rollout work (the prediction chain and
    every common pseudo-update), so the grid^H sweep costs grid + grid^2 +
    ... + grid^H updates.  Ties break toward the smallest total heading
    change, then enumeration order; if no action meets the void constraint
    the safest action is returned and flagged.
    """
    ctx = ctx or LikelihoodContext(rx, tx_table)
    if n_frames is None:
        n_frames = _default_frames(ctx)
    actions = enumerate_actions(u, cfg)
    n_actions = len(actions)
    rewards = np.zeros(n_actions)
    min_voids = np.ones(n_actions)

    if belief.labels:
        support = _RolloutSupport(belief, model, cfg, ctx, n_frames, rng)
        pred_views = [support.pred_belief(j) for j in range(1, cfg.horizon + 1)]
        grid = heading_grid(cfg)
        g = len(grid)

        def recurse(depth, x, y, heading, r2, logw2, reward_acc, void_acc, base):
            stride = g ** (cfg.horizon - depth - 1)
            for i, d in enumerate(grid):
                h = wrap_angle(heading + d)
                wx, wy = _advance(x, y, h, cfg)
                pose = UavState(wx, wy, u.alt, h)
                nr, nw = support.pseudo_step(depth + 1, pose, r2, logw2)
                gain = divergence(support._view(depth + 1, nr, nw),
                                  pred_views[depth], cfg)
                rew = reward_acc + cfg.discount ** depth * gain
                void = min(void_acc, void_probability(
                    pred_views[depth], VoidRegion((wx, wy), cfg.void_radius)))
                lo = base + i * stride
                if depth + 1 == cfg.horizon:
                    rewards[lo] = rew
                    min_voids[lo] = void
                else:
                    recurse(depth + 1, wx, wy, h, nr, nw, rew, void, lo)

        recurse(0, u.x, u.y, u.heading, dict(support.r1),
                {lab: w.copy() for lab, w in support.logw1.items()}, 0.0, np.inf, 0)

    feasible = min_voids > cfg.void_threshold
    order = sorted(range(n_actions),
                   key=lambda i: (-rewards[i], actions[i].turn_total, i))
    chosen = next((i for i in order if feasible[i]), None)
    fallback = chosen is None
    if fallback:
        chosen = int(max(range(n_actions),
                         key=lambda i: (min_voids[i], -actions[i].turn_total, -i)))
    return PlanResult(actions[chosen], int(chosen), rewards, min_voids,
                      feasible, fallback, actions)

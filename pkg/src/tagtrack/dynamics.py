"""Jump-Markov single-object dynamics: wandering / constant-velocity modes,
pulse-offset random walk, static frequency label, survival and birth models.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MODE_WD = 0
MODE_CV = 1
MODE_NAMES = ("wd", "cv")

# paper-scale wandering noise: positions jitter ~0.5 m, velocities are
# redrawn at ~1.5 m/s so a switch into CV starts at a plausible speed
DEFAULT_WD_COV = (0.25, 2.25, 0.25, 2.25)


@dataclass
class ObjectState:
    """Labeled single-object state: planar kinematics [px, vx, py, vy],
    dynamic mode, pulse offset and the static frequency label."""
    x: np.ndarray
    mode: int
    tau: float
    label: int
    altitude: float = 1.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).reshape(4)

    @property
    def position(self):
        return self.x[[0, 2]]


def cv_transition(t0: float) -> np.ndarray:
    """Constant-velocity transition for state layout [px, vx, py, vy]."""
    return np.kron(np.eye(2), np.array([[1.0, t0], [0.0, 1.0]]))


def cv_process_cov(sigma_cv: float, t0: float) -> np.ndarray:
    """White-noise-acceleration covariance sigma^2 [[T^3/3, T^2/2], [T^2/2, T]]
    per axis."""
    if sigma_cv <= 0:
        raise ValueError("sigma_cv must be positive")
    block = np.array([[t0 ** 3 / 3.0, t0 ** 2 / 2.0], [t0 ** 2 / 2.0, t0]])
    return sigma_cv ** 2 * np.kron(np.eye(2), block)


def wd_transition() -> np.ndarray:
    """Wandering transition: positions persist, velocities are forgotten."""
    return np.diag([1.0, 0.0, 1.0, 0.0])


def _noise_factor(q: np.ndarray):
    if not np.any(q):
        return None
    if np.allclose(q, np.diag(np.diagonal(q))):
        return np.diag(np.sqrt(np.diagonal(q)))
    return np.linalg.cholesky(q)


@dataclass
class JmsModel:
    """Per-mode linear-Gaussian kinematics plus a first-order Markov mode
    chain, offset random walk and constant survival probability."""
    t0: float = 1.0
    transition: tuple = ()          # per-mode F, built in __post_init__ if empty
    process_cov: tuple = ()         # per-mode Q
    mode_trans: np.ndarray = field(
        default_factory=lambda: np.array([[0.99, 0.01], [0.01, 0.99]]))
    tau_sigma: float = 0.002        # offset walk scale, fraction of t0 per step
    survival: float = 0.99
    sigma_cv: float = 0.05
    wd_cov: tuple = DEFAULT_WD_COV

    def __post_init__(self):
        if not self.transition:
            self.transition = (wd_transition(), cv_transition(self.t0))
        if not self.process_cov:
            self.process_cov = (np.diag(self.wd_cov),
                                cv_process_cov(self.sigma_cv, self.t0))
        self.mode_trans = np.asarray(self.mode_trans, dtype=np.float64)
        if not np.allclose(self.mode_trans.sum(axis=1), 1.0):
            raise ValueError("mode transition rows must sum to 1")
        if not 0 < self.survival <= 1:
            raise ValueError("survival probability must lie in (0, 1]")
        self._noise = tuple(_noise_factor(q) for q in self.process_cov)
        self._trans_cum = np.cumsum(self.mode_trans, axis=1)

    @property
    def n_modes(self) -> int:
        return self.mode_trans.shape[0]

    @property
    def tau_step_std(self) -> float:
        # Q_tau = (sigma_tau * T0)^2
        return self.tau_sigma * self.t0


def sample_modes(modes: np.ndarray, model: JmsModel, rng) -> np.ndarray:
    """Draw successor modes from the Markov chain, one per particle."""
    u = rng.random(len(modes))
    cum = model._trans_cum[modes]
    return (u[:, None] > cum).sum(axis=1).astype(np.int64)


def step_kinematics(x: np.ndarray, modes: np.ndarray, model: JmsModel, rng):
    """Push a particle block through the kernels matched to its current
    modes (a wandering step redraws the velocity that then seeds any switch
    into constant velocity)."""
    out = np.empty_like(x)
    for s in range(model.n_modes):
        sel = np.asarray(modes) == s
        if not np.any(sel):
            continue
        out[sel] = x[sel] @ model.transition[s].T
        fac = model._noise[s]
        if fac is not None:
            out[sel] += rng.standard_normal((int(sel.sum()), 4)) @ fac.T
    return out


def propagate(x: np.ndarray, modes: np.ndarray, taus: np.ndarray,
              dt: float, model: JmsModel, rng):
    """One prediction step for a particle block: kinematics under the
    current mode, then the Markov mode transition, then the offset walk."""
    if abs(dt - model.t0) > 1e-12:
        raise ValueError(f"dynamics are discretised at dt = {model.t0}, got {dt}")
    modes = np.asarray(modes)
    if np.any(modes < 0) or np.any(modes >= model.n_modes):
        raise ValueError("unknown dynamic mode index")
    out = step_kinematics(x, modes, model, rng)
    new_modes = sample_modes(modes, model, rng)
    if model.tau_step_std > 0:
        taus = taus + model.tau_step_std * rng.standard_normal(len(taus))
    new_taus = np.mod(taus, model.t0)
    return out, new_modes, new_taus


def propagate_particle(p: ObjectState, dt: float, model: JmsModel, rng) -> ObjectState:
    """Single-sample convenience wrapper around propagate()."""
    x, modes, taus = propagate(p.x[None, :], np.array([p.mode]),
                               np.array([p.tau]), dt, model, rng)
    return ObjectState(x[0], int(modes[0]), float(taus[0]), p.label, p.altitude)


@dataclass(frozen=True)
class BirthSite:
    """One candidate appearance: label, birth existence probability and the
    Gaussian kinematic prior.  The pulse offset is unknown at birth and is
    drawn uniformly over [0, T0) unless a Gaussian prior is configured."""
    label: int
    r: float
    mean: tuple
    cov_diag: tuple
    tau_mean: float | None = None
    tau_sigma: float | None = None

    def __post_init__(self):
        if not 0 < self.r < 1:
            raise ValueError("birth probability must lie in (0, 1)")

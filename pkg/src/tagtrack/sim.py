"""Closed-loop runs (sense, filter, plan, move) and Monte Carlo sweeps."""
from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tagtrack.likelihood import LikelihoodContext
from tagtrack.lmb import (
    LmbBelief,
    belief_snapshot,
    extract_estimate,
    maybe_resample,
    predict,
    prune,
    spawn_births,
    update,
)
from tagtrack.metrics import aggregate_runs, ospa
from tagtrack.planner import plan
from tagtrack.rf_signal import spectrogram, synth_baseband, wrap_angle
from tagtrack.scenario import ScenarioConfig, simulate_truth


@dataclass
class StepRecord:
    step: int
    t: float
    uav_x: float
    uav_y: float
    uav_heading: float
    ospa_total: float
    ospa_loc: float
    ospa_card: float
    true_n: int
    est_n: int
    existence: dict
    cv_prob: dict
    truth: list       # (label, x, y)
    estimates: list   # (label, x, y)


@dataclass
class DecisionRecord:
    step: int
    t: float
    chosen: int
    deltas: tuple
    reward: float
    min_void: float
    feasible_any: bool
    fallback: bool
    rewards: np.ndarray
    min_voids: np.ndarray
    feasible: np.ndarray
    all_deltas: list


@dataclass
class RunLog:
    seed: int
    planner_kind: str
    t0: float
    steps: list = field(default_factory=list)
    decisions: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.steps])


class _StraightPath:
    """Back-and-forth motion along the region diagonal (planner baseline);
    reverses instantly at the corners."""

    def __init__(self, region, start, speed):
        self.lo = np.array([region[0], region[2]], dtype=np.float64)
        self.hi = np.array([region[1], region[3]], dtype=np.float64)
        diag = self.hi - self.lo
        self.length = float(np.hypot(*diag))
        self.angle = math.atan2(diag[1], diag[0])
        rel = np.asarray(start, dtype=np.float64) - self.lo
        self.s = float(np.dot(rel, diag) / self.length)
        self.direction = 1.0
        self.speed = speed

    def advance(self, dt: float):
        nxt = self.s + self.direction * self.speed * dt
        span_pos = nxt % (2 * self.length)
        self.s = self.length - abs(span_pos - self.length)
        if span_pos > self.length:
            self.direction = -1.0
        elif nxt < 0:
            self.direction = 1.0
        frac = self.s / self.length
        pos = self.lo + frac * (self.hi - self.lo)
        heading = self.angle if self.direction > 0 else wrap_angle(self.angle + math.pi)
        return float(pos[0]), float(pos[1]), float(heading)


def run_closed_loop(cfg: ScenarioConfig, seed: int | None = None,
                    record_beliefs: bool = False) -> RunLog:
    """One full scenario: per interval, synthesise the received signal at the
    current pose, form the spectrogram, run the filter, log OSPA against the
    truth, and (on planning epochs) pick the next heading."""
    seed = cfg.seed if seed is None else seed
    streams = np.random.SeedSequence(seed).spawn(4)
    rng_truth, rng_noise, rng_filter, rng_plan = (
        np.random.Generator(np.random.Philox(s)) for s in streams)

    started = time.perf_counter()
    truth = simulate_truth(cfg, rng_truth)
    ctx = LikelihoodContext(cfg.receiver, cfg.transmitters, cfg.object_altitude)
    model = cfg.jms_model()
    pcfg = cfg.planner_config()
    sites = cfg.birth_sites()
    n_interval = int(math.ceil(cfg.t0 * cfg.receiver.sample_rate))
    n_frames = cfg.receiver.n_frames(n_interval)
    plan_every = max(1, int(round(cfg.uav.plan_interval / cfg.t0)))
    straight = cfg.planner.kind == "straight"

    belief = LmbBelief()
    uav = cfg.uav.initial_state()
    path = _StraightPath(cfg.region, cfg.uav.start, cfg.uav.speed) if straight else None
    if straight:
        uav.heading = path.angle
    log = RunLog(seed=seed, planner_kind=cfg.planner.kind, t0=cfg.t0)
    last_seen = {}

    for k in range(1, cfg.n_steps + 1):
        t = k * cfg.t0
        objs = truth.live_at(k)
        samples = synth_baseband(objs, uav, cfg.t0, cfg.receiver,
                                 cfg.transmitters, rng_noise)
        z = spectrogram(samples, cfg.receiver, k)

        # lost tracks re-enter the birth space around their last estimate
        proposals = [last_seen.get(s.label, s) for s in sites
                     if s.label not in belief.components]
        births = spawn_births(proposals, belief.labels, cfg.filter.n_particles,
                              cfg.filter.initial_mode_probs, cfg.t0, rng_filter)
        belief = predict(belief, model, births, cfg.t0, rng_filter)
        belief = update(belief, z, uav, ctx=ctx)
        belief = maybe_resample(belief, rng_filter, cfg.filter.resample_threshold,
                                roughening=cfg.filter.roughening,
                                tau_period=cfg.t0)
        belief = prune(belief, cfg.filter.prune_threshold)

        ests = extract_estimate(belief, cfg.filter.extract_threshold)
        for e in ests:
            last_seen[e.label] = BirthSite(
                e.label, cfg.filter.birth_prob,
                tuple(e.x),
                (cfg.filter.reacquire_pos_var, cfg.filter.reacquire_vel_var,
                 cfg.filter.reacquire_pos_var, cfg.filter.reacquire_vel_var),
                tau_mean=e.tau, tau_sigma=cfg.filter.reacquire_tau_sigma)
        truth_pos = truth.positions_at(k)
        est_pos = (np.array([e.position for e in ests])
                   if ests else np.empty((0, 2)))
        res = ospa(truth_pos, est_pos, cfg.ospa)
        log.steps.append(StepRecord(
            step=k, t=t, uav_x=uav.x, uav_y=uav.y, uav_heading=uav.heading,
            ospa_total=res.total, ospa_loc=res.localization,
            ospa_card=res.cardinality, true_n=len(truth_pos), est_n=len(ests),
            existence={c.label: c.r for c in belief.components.values()},
            cv_prob={str(lab): _cv_prob(belief[lab]) for lab in belief.labels},
            truth=[(o.label, float(o.x[0]), float(o.x[2])) for o in objs],
            estimates=[(e.label, float(e.x[0]), float(e.x[2])) for e in ests]))
        if record_beliefs:
            log.snapshots[k] = belief_snapshot(belief)

        if straight:
            uav.x, uav.y, uav.heading = path.advance(cfg.t0)
            continue
        if k % plan_every == 0 and k < cfg.n_steps:
            result = plan(belief, uav, cfg.receiver, cfg.transmitters, model,
                          pcfg, rng_plan, ctx, n_frames)
            uav.heading = result.action.headings[0]
            log.decisions.append(DecisionRecord(
                step=k, t=t, chosen=result.index,
                deltas=result.action.deltas,
                reward=float(result.rewards[result.index]),
                min_void=float(result.min_voids[result.index]),
                feasible_any=bool(result.feasible.any()),
                fallback=result.fallback,
                rewards=result.rewards, min_voids=result.min_voids,
                feasible=result.feasible,
                all_deltas=[a.deltas for a in result.actions]))
        uav.x = min(max(uav.x + cfg.uav.speed * cfg.t0 * math.cos(uav.heading),
                        cfg.region[0]), cfg.region[1])
        uav.y = min(max(uav.y + cfg.uav.speed * cfg.t0 * math.sin(uav.heading),
                        cfg.region[2]), cfg.region[3])

    log.runtime_s = time.perf_counter() - started
    return log


def _cv_prob(comp) -> float:
    w = comp.cloud.weights
    return float(w[comp.cloud.mode == 1].sum())


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_run_outputs(log: RunLog, out_dir) -> None:
    """metrics.csv, trajectory.csv, decisions.csv, belief/<k>.json and
    summary.json under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "metrics.csv", "w") as fh:
        fh.write("step,ospa_total,ospa_loc,ospa_card,true_n,est_n\n")
        for s in log.steps:
            fh.write(",".join(_fmt(v) for v in (
                s.step, s.ospa_total, s.ospa_loc, s.ospa_card,
                s.true_n, s.est_n)) + "\n")

    with open(out / "trajectory.csv", "w") as fh:
        fh.write("step,time,entity,x,y,heading\n")
        for s in log.steps:
            fh.write(f"{s.step},{_fmt(s.t)},uav,{_fmt(s.uav_x)},{_fmt(s.uav_y)},"
                     f"{_fmt(s.uav_heading)}\n")
            for lab, x, y in s.truth:
                fh.write(f"{s.step},{_fmt(s.t)},truth:{lab},{_fmt(x)},{_fmt(y)},\n")
            for lab, x, y in s.estimates:
                fh.write(f"{s.step},{_fmt(s.t)},est:{lab},{_fmt(x)},{_fmt(y)},\n")

    with open(out / "decisions.csv", "w") as fh:
        fh.write("step,time,candidate,deltas,reward,min_void,feasible,chosen\n")
        for d in log.decisions:
            for i in range(len(d.rewards)):
                deltas = ";".join(_fmt(x) for x in d.all_deltas[i])
                fh.write(",".join((
                    str(d.step), _fmt(d.t), str(i), deltas,
                    _fmt(float(d.rewards[i])), _fmt(float(d.min_voids[i])),
                    str(int(d.feasible[i])), str(int(i == d.chosen)))) + "\n")

    if log.snapshots:
        bdir = out / "belief"
        bdir.mkdir(exist_ok=True)
        for k, snap in log.snapshots.items():
            with open(bdir / f"{k}.json", "w") as fh:
                json.dump(snap, fh, indent=1, sort_keys=True)

    ospa_series = log.series("ospa_total")
    card_err = log.series("est_n") - log.series("true_n")
    summary = {
        "seed": log.seed,
        "planner": log.planner_kind,
        "steps": len(log.steps),
        "mean_ospa": float(ospa_series.mean()) if len(log.steps) else None,
        "mean_ospa_loc": float(log.series("ospa_loc").mean()) if len(log.steps) else None,
        "mean_ospa_card": float(log.series("ospa_card").mean()) if len(log.steps) else None,
        "mean_abs_card_error": float(np.abs(card_err).mean()) if len(log.steps) else None,
        "frac_card_within_1": float((np.abs(card_err) <= 1).mean()) if len(log.steps) else None,
        "planning_epochs": len(log.decisions),
        "fallback_epochs": sum(1 for d in log.decisions if d.fallback),
        "runtime_s": log.runtime_s,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _mc_one(args):
    cfg_doc, variant, noise_cov, seed = args
    from tagtrack.scenario import config_from_dict

    cfg = config_from_dict(cfg_doc)
    cfg = dataclasses.replace(
        cfg,
        receiver=dataclasses.replace(cfg.receiver, noise_cov=noise_cov),
        planner=dataclasses.replace(cfg.planner, kind=variant))
    return run_closed_loop(cfg, seed=seed)


@dataclass
class McResult:
    rows: list                 # per-run summaries
    aggregates: list           # per (variant, noise) means
    logs: dict                 # (variant, noise, run) -> RunLog


def monte_carlo(cfg: ScenarioConfig, n_runs: int, noise_grid, variants,
                base_seed: int | None = None, jobs: int = 1,
                keep_logs: bool = True) -> McResult:
    """Seeded sweep over planner variants and receiver noise levels; run i
    of every case uses seed base_seed + i, so cases pair by seed."""
    if n_runs < 1:
        raise ValueError("need at least one run")
    base_seed = cfg.seed if base_seed is None else base_seed
    from tagtrack.scenario import config_to_dict

    doc = config_to_dict(cfg)
    tasks = [(doc, variant, float(noise), base_seed + i)
             for variant in variants for noise in noise_grid
             for i in range(n_runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            logs = list(pool.map(_mc_one, tasks))
    else:
        logs = [_mc_one(t) for t in tasks]

    rows, log_map = [], {}
    for (_, variant, noise, seed), log in zip(tasks, logs):
        run = seed - base_seed
        if keep_logs:
            log_map[(variant, noise, run)] = log
        card_err = np.abs(log.series("est_n") - log.series("true_n"))
        rows.append({
            "variant": variant, "noise_cov": noise, "run": run, "seed": seed,
            "mean_ospa": float(log.series("ospa_total").mean()),
            "mean_ospa_loc": float(log.series("ospa_loc").mean()),
            "mean_ospa_card": float(log.series("ospa_card").mean()),
            "mean_abs_card_error": float(card_err.mean()),
            "frac_card_within_1": float((card_err <= 1).mean()),
        })

    aggregates = []
    for variant in variants:
        for noise in noise_grid:
            sel = [r for r in rows
                   if r["variant"] == variant and r["noise_cov"] == float(noise)]
            series = [log_map[(variant, float(noise), r["run"])].series("ospa_total")
                      for r in sel] if keep_logs else None
            agg = {
                "variant": variant, "noise_cov": float(noise), "runs": len(sel),
                "mean_ospa": float(np.mean([r["mean_ospa"] for r in sel])),
                "mean_ospa_card": float(np.mean([r["mean_ospa_card"] for r in sel])),
                "mean_abs_card_error": float(np.mean([r["mean_abs_card_error"]
                                                      for r in sel])),
            }
            if series is not None:
                agg["ospa_curve_mean"] = aggregate_runs(series).mean
            aggregates.append(agg)
    return McResult(rows, aggregates, log_map)


def write_sweep_outputs(result: McResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["variant", "noise_cov", "run", "seed", "mean_ospa", "mean_ospa_loc",
            "mean_ospa_card", "mean_abs_card_error", "frac_card_within_1"]
    with open(out / "sweep_runs.csv", "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in result.rows:
            fh.write(",".join(_fmt(r[c]) for c in cols) + "\n")
    agg_cols = ["variant", "noise_cov", "runs", "mean_ospa", "mean_ospa_card",
                "mean_abs_card_error"]
    with open(out / "sweep_summary.csv", "w") as fh:
        fh.write(",".join(agg_cols) + "\n")
        for r in result.aggregates:
            fh.write(",".join(_fmt(r[c]) for c in agg_cols) + "\n")

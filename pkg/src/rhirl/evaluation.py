"""Scoring and experiment protocols.

Evaluation re-optimizes control under a (learned or ground-truth) cost and
scores the resulting episodes with the ground-truth cost.  Scores are
reported as normalized ratios anchored between a random-policy floor and the
recorded expert mean, so 1.0 means expert parity and 0.0 means no better
than random; negative values are clipped to 0.  The harness also covers the
noise-transfer protocol, the horizon ablation, and the empirical check that
the expert/learner state-marginal gap grows no worse than linearly with the
task duration.
"""

from __future__ import annotations

import dataclasses
import math
import statistics
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import rng as rngs
from .controller import ControllerConfig, run_episode
from .demos import DemoSet, exec_noise_spec
from .envs import make_env
from .errors import UsageError
from .trainer import TrainConfig, train

REPORT_FIELDS = ["env", "noise_level", "episodes", "mean_return", "std_return",
                 "expert_mean_return", "floor_return", "ratio", "seed"]


@dataclass(frozen=True)
class EvalReport:
    env: str
    noise_level: float
    episodes: int
    mean_return: float
    std_return: float
    expert_mean_return: float
    floor_return: float
    ratio: float
    seed: int
    wall_clock: float = 0.0   # stdout only; kept out of report files

    def to_row(self) -> dict:
        row = dataclasses.asdict(self)
        row.pop("wall_clock")
        return row


def score_ratio(mean_return: float, expert_mean: float, floor: float) -> float:
    """Normalized score: 1 at expert parity, 0 at the random floor, clipped at 0."""
    span = expert_mean - floor
    if not span > 0:
        raise UsageError("expert mean must exceed the random-policy floor")
    return max(0.0, (mean_return - floor) / span)


def evaluate_policy(cost, env_name: str, noise_level: float, episodes: int,
                    cfg: ControllerConfig, seed: int, expert_mean: float,
                    floor: float, *, context: int = 0,
                    workers: int = 1) -> EvalReport:
    """Score the policy induced by `cost` against the ground-truth cost."""
    if episodes < 1:
        raise UsageError("episodes must be >= 1")
    model, spec, gt_cost = make_env(env_name)
    noise = exec_noise_spec(noise_level, spec.m)
    started = time.perf_counter()

    def one(i: int) -> float:
        x0 = model.sample_initial(
            rngs.stream(seed, rngs.EVAL, context, i, rngs.EPISODE_START))
        states, executed = run_episode(model, cost, cfg, spec.horizon, x0, noise,
                                       seed, (rngs.EVAL, context, i))
        return gt_cost.trajectory_return(states, executed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            returns = list(pool.map(one, range(episodes)))
    else:
        returns = [one(i) for i in range(episodes)]
    mean = statistics.fmean(returns)
    std = statistics.pstdev(returns) if episodes > 1 else 0.0
    return EvalReport(env=env_name, noise_level=float(noise_level), episodes=episodes,
                      mean_return=mean, std_return=std, expert_mean_return=expert_mean,
                      floor_return=floor, ratio=score_ratio(mean, expert_mean, floor),
                      seed=seed, wall_clock=time.perf_counter() - started)


def transfer_eval(cost, env_name: str, noise_levels: list[float], episodes: int,
                  cfg: ControllerConfig, seed: int, expert_mean: float,
                  floor: float, workers: int = 1) -> list[EvalReport]:
    """Re-optimize under a fixed cost at each test noise level and score it.

    The expert reference stays the noise-free one, mirroring the transfer
    protocol: a robust cost should keep its score as execution noise grows.
    """
    return [
        evaluate_policy(cost, env_name, level, episodes, cfg, seed, expert_mean,
                        floor, context=100 + idx, workers=workers)
        for idx, level in enumerate(noise_levels)
    ]


def ablate_horizon(demos: DemoSet, base_cfg: TrainConfig, k_values: list[int],
                   budget_env_steps: int, seeds: list[int]
                   ) -> dict[tuple[int, int], list[dict]]:
    """Train one model per (horizon, seed) under a common env-step budget.

    Returns learning curves keyed by (K, seed): rows of
    {env_steps, mean_return, std} taken from the periodic evaluations.
    """
    if len(k_values) < 2:
        raise UsageError("need at least two horizon values to ablate")
    model, spec, _ = make_env(base_cfg.env)
    curves: dict[tuple[int, int], list[dict]] = {}
    for k in k_values:
        ctrl = replace(base_cfg.controller, horizon=k)
        steps_per_t = ctrl.samples * k * (ctrl.ms if model.stochastic else 1) + 1
        episodes = max(1, budget_env_steps // (spec.horizon * steps_per_t))
        for seed in seeds:
            cfg = replace(base_cfg, controller=ctrl, episodes=episodes,
                          seed=seed, eval_every=1)
            _, metrics, _ = train(cfg, demos)
            curves[(k, seed)] = [
                {"env_steps": row["env_steps"], "mean_return": row["eval_return"],
                 "std": row["eval_std"]}
                for row in metrics if row["eval_return"] is not None
            ]
    return curves


def steps_to_plateau(curve: list[dict], fraction: float = 0.9) -> int:
    """First env-step count whose smoothed return reaches `fraction` of the
    curve's final smoothed return (span-relative, from the curve's start)."""
    if not curve:
        raise UsageError("empty learning curve")
    returns = _smooth([row["mean_return"] for row in curve])
    lo, hi = returns[0], returns[-1]
    target = lo + fraction * (hi - lo)
    for row, value in zip(curve, returns):
        if value >= target:
            return int(row["env_steps"])
    return int(curve[-1]["env_steps"])


def final_smoothed_return(curve: list[dict], window: int = 5) -> float:
    returns = [row["mean_return"] for row in curve]
    tail = returns[-window:]
    return statistics.fmean(tail)


def _smooth(values: list[float], window: int = 3) -> list[float]:
    out = []
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out.append(statistics.fmean(values[lo:i + 1]))
    return out


@dataclass(frozen=True)
class MarginalEstimate:
    """Histogram over a low-dimensional state projection."""

    masses: np.ndarray
    edges: list[np.ndarray]
    count: int

    def __post_init__(self):
        total = float(self.masses.sum())
        if abs(total - 1.0) > 1e-9:
            raise UsageError(f"histogram masses sum to {total}, expected 1")


def estimate_marginals(p_samples: np.ndarray, q_samples: np.ndarray,
                       bins: int | None = None,
                       min_per_bin: float = 4.0
                       ) -> tuple[MarginalEstimate, MarginalEstimate]:
    """Histograms of two sample sets over shared edges.

    Bin count per dimension defaults to the cube root of the smaller sample
    count; bins are widened (halved in count) when average occupancy would
    fall below `min_per_bin`.
    """
    p = np.atleast_2d(np.asarray(p_samples, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q_samples, dtype=np.float64))
    if p.shape[1] != q.shape[1]:
        raise UsageError("sample sets must share dimensionality")
    d = p.shape[1]
    n = min(p.shape[0], q.shape[0])
    if bins is None:
        bins = max(2, math.ceil(n ** (1.0 / 3.0)))
    while bins > 2 and n / bins ** d < min_per_bin:
        bins = max(2, bins // 2)
        warnings.warn("widened histogram bins: insufficient samples per bin",
                      stacklevel=2)
    pooled = np.vstack([p, q])
    edges = []
    for j in range(d):
        lo, hi = pooled[:, j].min(), pooled[:, j].max()
        pad = 1e-9 * max(1.0, abs(lo), abs(hi))
        edges.append(np.linspace(lo - pad, hi + pad, bins + 1))
    hp, _ = np.histogramdd(p, bins=edges)
    hq, _ = np.histogramdd(q, bins=edges)
    return (MarginalEstimate(hp / hp.sum(), edges, p.shape[0]),
            MarginalEstimate(hq / hq.sum(), edges, q.shape[0]))


def tv_distance(a: MarginalEstimate, b: MarginalEstimate) -> float:
    """Half the L1 distance between binned masses; lies in [0, 1]."""
    return float(0.5 * np.abs(a.masses - b.masses).sum())


def tv_trend(cost, expert_cfg: ControllerConfig, learner_cfg: ControllerConfig,
             t_values: list[int], episodes_per_t: int, noise_level: float,
             seed: int, env_name: str = "double_integrator",
             projection: tuple[int, ...] = (0, 1)) -> tuple[float, list[dict]]:
    """State-marginal gap between expert and learned policy as T grows.

    For each task duration T, both policies run `episodes_per_t` episodes of
    length T from shared initial-state draws; all visited states are pooled
    and the total-variation distance between the two marginal histograms is
    estimated.  Returns the fitted log-log growth exponent and the per-T
    points.  A linear error accumulation shows up as an exponent near or
    below 1; quadratic accumulation would push it toward 2.
    """
    if len(t_values) < 2:
        raise UsageError("need at least two task durations")
    model, spec, gt_cost = make_env(env_name)
    noise = exec_noise_spec(noise_level, spec.m)
    points = []
    for ti, T in enumerate(sorted(t_values)):
        expert_states, learned_states = [], []
        for i in range(episodes_per_t):
            x0 = model.sample_initial(
                rngs.stream(seed, rngs.EVAL, 200 + ti, i, rngs.EPISODE_START))
            e_states, _ = run_episode(model, gt_cost, expert_cfg, T, x0, noise,
                                      seed, (rngs.EVAL, 210 + ti, i))
            l_states, _ = run_episode(model, cost, learner_cfg, T, x0, noise,
                                      seed, (rngs.EVAL, 220 + ti, i))
            expert_states.append(e_states)
            learned_states.append(l_states)
        p = np.vstack(expert_states)[:, list(projection)]
        q = np.vstack(learned_states)[:, list(projection)]
        mp, mq = estimate_marginals(p, q)
        points.append({"T": T, "dtv": tv_distance(mp, mq),
                       "samples": min(p.shape[0], q.shape[0]),
                       "bins": len(mp.edges[0]) - 1})
    xs = np.log([pt["T"] for pt in points])
    ys = np.log([max(pt["dtv"], 1e-3) for pt in points])
    exponent = float(np.polyfit(xs, ys, 1)[0])
    return exponent, points

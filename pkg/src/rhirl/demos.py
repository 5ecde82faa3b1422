"""Expert demonstration generation and state-only demo files.

The expert is the sampling controller run on the ground-truth cost; its
commanded controls are corrupted with the configured execution noise before
they reach the dynamics, and only the visited states are recorded.  Demo
files also record the achieved expert return and a random-policy baseline
return, which later anchor the evaluation ratios.
"""

from __future__ import annotations

import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngs
from .controller import ControllerConfig, run_episode
from .dynamics import NoiseSpec, step
from .envs import make_env
from .errors import FormatError, GenerationError, UsageError
from .serial import read_container, write_container, write_json

_DEMO_MAGIC = b"RHIRLDEM"
_BASELINE_EPISODES = 20


@dataclass
class DemoSet:
    env: str
    T: int
    n: int
    m: int
    dt: float
    noise_level: float          # true control-noise covariance factor (metadata only)
    states: np.ndarray          # (count, T, n); no controls are ever stored
    seed: int
    expert_mean_return: float
    expert_std_return: float
    floor_return: float         # random-policy mean return, anchors ratio scoring
    controller: dict            # expert controller settings, for the record

    @property
    def count(self) -> int:
        return self.states.shape[0]


def exec_noise_spec(level: float, m: int) -> NoiseSpec:
    return NoiseSpec.true_sigma(float(level) * np.eye(m))


def _random_policy_return(model, spec, cost, noise: NoiseSpec, seed: int,
                          episodes: int = _BASELINE_EPISODES) -> float:
    """Mean ground-truth return of uniform random controls; the score floor."""
    totals = []
    for i in range(episodes):
        rng = rngs.stream(seed, rngs.DEMO, 1, i)
        x = model.sample_initial(rng)
        states = np.empty((spec.horizon, spec.n))
        executed = np.empty((spec.horizon, spec.m))
        for t in range(spec.horizon):
            states[t] = x
            u = model.box.uniform(rng, ())
            v = model.box.clamp(noise.sample(u, rng))
            x = step(model, x, v)
            executed[t] = v
        totals.append(cost.trajectory_return(states, executed))
    return statistics.fmean(totals)


def generate_demos(env_name: str, noise_level: float, count: int,
                   expert_cfg: ControllerConfig, seed: int,
                   workers: int = 1) -> DemoSet:
    """Run the ground-truth-cost expert and collect state-only trajectories."""
    if count < 1:
        raise UsageError("count must be >= 1")
    model, spec, cost = make_env(env_name)
    noise = exec_noise_spec(noise_level, spec.m)

    def one(i: int):
        x0 = model.sample_initial(rngs.stream(seed, rngs.DEMO, 0, i, rngs.EPISODE_START))
        states, executed = run_episode(model, cost, expert_cfg, spec.horizon, x0,
                                       noise, seed, (rngs.DEMO, 0, i))
        return states, cost.trajectory_return(states, executed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(count)))
    else:
        results = [one(i) for i in range(count)]

    states = np.stack([r[0] for r in results])
    returns = [r[1] for r in results]
    mean_ret = statistics.fmean(returns)
    std_ret = statistics.pstdev(returns) if count > 1 else 0.0
    if mean_ret < spec.expert_return_floor:
        raise GenerationError(
            f"expert mean return {mean_ret:.2f} below sanity floor "
            f"{spec.expert_return_floor:.2f} for {env_name}")
    floor = _random_policy_return(model, spec, cost, noise, seed)
    return DemoSet(env=env_name, T=spec.horizon, n=spec.n, m=spec.m, dt=spec.dt,
                   noise_level=float(noise_level), states=states, seed=seed,
                   expert_mean_return=mean_ret, expert_std_return=std_ret,
                   floor_return=floor, controller=_cfg_dict(expert_cfg))


def _cfg_dict(cfg: ControllerConfig) -> dict:
    noise = {"kind": cfg.noise.kind}
    if cfg.noise.kind == "beta-identity":
        noise["beta"] = cfg.noise.beta
    else:
        noise["sigma"] = cfg.noise.sigma.tolist()
    return {
        "horizon": cfg.horizon, "samples": cfg.samples,
        "temperature": cfg.temperature, "noise": noise,
        "explore_prob": cfg.explore_prob,
        "smoothing": list(cfg.smoothing) if cfg.smoothing else None,
        "ms": cfg.ms,
    }


def save_demos(demos: DemoSet, path: str | Path) -> None:
    header = {
        "kind": "demo-set",
        "env": demos.env, "n": demos.n, "m": demos.m, "T": demos.T, "dt": demos.dt,
        "noise_level": demos.noise_level, "count": demos.count, "seed": demos.seed,
        "expert_mean_return": demos.expert_mean_return,
        "expert_std_return": demos.expert_std_return,
        "floor_return": demos.floor_return,
        "controller": demos.controller,
    }
    write_container(path, _DEMO_MAGIC, header, {"states": demos.states})
    write_json(str(path) + ".json", header)


def load_demos(path: str | Path, expect_env: str | None = None) -> DemoSet:
    header, arrays = read_container(path, _DEMO_MAGIC)
    if header.get("kind") != "demo-set":
        raise FormatError(f"{path}: not a demo file")
    states = arrays.get("states")
    if states is None:
        raise FormatError(f"{path}: missing state payload")
    try:
        demos = DemoSet(
            env=header["env"], T=int(header["T"]), n=int(header["n"]),
            m=int(header["m"]), dt=float(header["dt"]),
            noise_level=float(header["noise_level"]), states=states,
            seed=int(header["seed"]),
            expert_mean_return=float(header["expert_mean_return"]),
            expert_std_return=float(header["expert_std_return"]),
            floor_return=float(header["floor_return"]),
            controller=header.get("controller", {}),
        )
    except KeyError as exc:
        raise FormatError(f"{path}: header missing field {exc}") from exc
    if states.shape != (header["count"], demos.T, demos.n):
        raise FormatError(f"{path}: payload shape {states.shape} disagrees with header")
    if expect_env is not None:
        _check_against_env(demos, expect_env, path)
    return demos


def _check_against_env(demos: DemoSet, env_name: str, path) -> None:
    if demos.env != env_name:
        raise FormatError(f"{path}: demos are for {demos.env!r}, expected {env_name!r}")
    _, spec, _ = make_env(env_name)
    if demos.T != spec.horizon or demos.n != spec.n or demos.m != spec.m:
        raise FormatError(
            f"{path}: demo geometry (T={demos.T}, n={demos.n}, m={demos.m}) does not "
            f"match {env_name} (T={spec.horizon}, n={spec.n}, m={spec.m})")

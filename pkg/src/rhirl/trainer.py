"""Outer training loop: interleaved cost learning and receding-horizon control.

Each episode starts from a fresh initial state with a zero nominal sequence.
At every time step the controller samples and weights rollouts under the
current cost, a batch of expert windows anchored at the same time index is
drawn, the loss gradient is estimated by importance sampling, the parameters
take one optimizer step, and only then is the nominal updated, the first
control executed, and the horizon shifted.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngs
from .controller import (ControllerConfig, RolloutBatch, compute_weights,
                         evaluate_rollouts, execute_control, receding_step,
                         run_episode, update_nominal)
from .costnet import CostNet, save_params
from .demos import DemoSet, exec_noise_spec
from .envs import make_env
from .errors import NumericError, UsageError

_GRAD_WEIGHTINGS = ("self-normalized", "as-printed")
_OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    env: str
    seed: int
    controller: ControllerConfig
    lr: float = 1e-4
    weight_decay: float = 8e-5
    batch_size: int = 50          # expert windows per gradient step
    episodes: int = 10
    grad_weighting: str = "self-normalized"
    optimizer: str = "adam"
    hidden: tuple[int, int] | None = None   # None -> (32,32) pendulum, (64,64) others
    eval_every: int = 1           # episodes between periodic evaluations (0 = off)
    eval_episodes: int = 5
    exec_noise_level: float | None = None   # None -> the demo set's noise level

    def __post_init__(self):
        if not self.lr > 0:
            raise UsageError("lr must be > 0")
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")
        if self.episodes < 0 or self.weight_decay < 0:
            raise UsageError("episodes and weight_decay must be >= 0")
        if self.grad_weighting not in _GRAD_WEIGHTINGS:
            raise UsageError(f"grad_weighting must be one of {_GRAD_WEIGHTINGS}")
        if self.optimizer not in _OPTIMIZERS:
            raise UsageError(f"optimizer must be one of {_OPTIMIZERS}")

    def hidden_sizes(self) -> tuple[int, int]:
        if self.hidden is not None:
            return tuple(self.hidden)
        return (32, 32) if self.env == "pendulum" else (64, 64)


def extract_windows(demos: DemoSet, t: int, horizon: int, batch_size: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Expert sub-trajectories starting at time index t, up to horizon+1 states.

    Sampling is with replacement when the demo set is smaller than the batch.
    Windows near the end of the demonstrations are truncated to the states
    that remain, so the returned array has shape (batch, L, n) with
    L = min(horizon + 1, T - t).
    """
    if demos.count < 1:
        raise UsageError("demo set is empty")
    if not 0 <= t < demos.T:
        raise UsageError(f"window start {t} outside demo duration {demos.T}")
    length = min(horizon + 1, demos.T - t)
    idx = rng.choice(demos.count, size=batch_size, replace=demos.count < batch_size)
    return demos.states[idx, t:t + length]


def estimate_gradient(net: CostNet, windows: np.ndarray, batch: RolloutBatch,
                      temperature: float,
                      weighting: str = "self-normalized") -> np.ndarray:
    """Importance-sampled loss gradient from expert windows and weighted rollouts.

    Expert and rollout contributions are each one batched backward pass over
    all their states; when windows are truncated near the episode end, the
    rollout states entering the gradient are truncated to the same length so
    both terms cover a common horizon.  With "as-printed" weighting the
    rollout term carries an extra 1/M.
    """
    if batch.weights is None:
        raise UsageError("compute_weights must run before estimate_gradient")
    if weighting not in _GRAD_WEIGHTINGS:
        raise UsageError(f"weighting must be one of {_GRAD_WEIGHTINGS}")
    windows = np.asarray(windows, dtype=np.float64)
    n_win, length = windows.shape[0], windows.shape[1]
    M, ms, steps, n = batch.trajectories.shape
    length = min(length, steps)

    coef_expert = np.full(n_win, 1.0 / n_win)
    alpha_expert = np.repeat(coef_expert, length) / temperature
    expert_grad = net.grad_weighted_sum(windows[:, :length].reshape(-1, n), alpha_expert)

    coef_roll = batch.weights if weighting == "self-normalized" else batch.weights / M
    alpha_roll = np.repeat(coef_roll, ms * length) / (temperature * ms)
    roll_states = batch.trajectories[:, :, :length, :].reshape(-1, n)
    roll_grad = net.grad_weighted_sum(roll_states, alpha_roll)

    grad = expert_grad - roll_grad
    if not np.all(np.isfinite(grad)):
        bad = int(np.argmax(~np.isfinite(grad)))
        raise NumericError(f"non-finite gradient component {bad}")
    return grad


@dataclass
class OptState:
    """Optimizer moments, carried between updates."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @staticmethod
    def zeros(n: int) -> "OptState":
        return OptState(m=np.zeros(n), v=np.zeros(n))


def apply_update(params: np.ndarray, grad: np.ndarray, state: OptState,
                 lr: float, weight_decay: float, optimizer: str = "adam",
                 beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8) -> np.ndarray:
    """One optimizer step with decoupled weight decay; returns new parameters."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape:
        raise UsageError("gradient length does not match parameters")
    decayed = params * (1.0 - lr * weight_decay)
    if optimizer == "sgd":
        return decayed - lr * grad
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.step)
    v_hat = state.v / (1.0 - beta2 ** state.step)
    return decayed - lr * m_hat / (np.sqrt(v_hat) + eps)


METRIC_FIELDS = ["episode", "t", "env_steps", "loss_surrogate", "grad_norm",
                 "s_min", "weight_entropy", "eval_return", "eval_std"]


def _weight_entropy(w: np.ndarray) -> float:
    nz = w[w > 0]
    return float(-np.sum(nz * np.log(nz)))


@dataclass
class TrainResult:
    net: CostNet
    metrics: list[dict]
    env_steps: int
    opt: OptState
    episodes_done: int

    def __iter__(self):  # (net, metrics, env_steps) unpacking stays convenient
        return iter((self.net, self.metrics, self.env_steps))


def train(cfg: TrainConfig, demos: DemoSet, *,
          checkpoint_path: str | None = None,
          resume: dict | None = None) -> TrainResult:
    """Run the full training loop.

    `resume` carries {net, opt, episode, env_steps} from a checkpoint; RNG
    streams are derived per (episode, t), so a resumed run retraces exactly
    the computation an uninterrupted run would have performed.  On a numeric
    failure the current parameters are checkpointed (if a path was given)
    before the error propagates with its (episode, t) location.
    """
    if demos.env != cfg.env:
        raise UsageError(f"demo set is for {demos.env!r}, config says {cfg.env!r}")
    model, spec, gt_cost = make_env(cfg.env)
    exec_level = cfg.exec_noise_level if cfg.exec_noise_level is not None else demos.noise_level
    exec_noise = exec_noise_spec(exec_level, spec.m)
    ctrl = cfg.controller

    if resume:
        net: CostNet = resume["net"]
        opt: OptState = resume["opt"]
        start_episode = int(resume["episode"])
        env_steps = int(resume["env_steps"])
    else:
        net = CostNet(spec.n, cfg.hidden_sizes(),
                      rng=rngs.stream(cfg.seed, rngs.INIT), env_name=cfg.env)
        opt = OptState.zeros(net.n_params)
        start_episode = 0
        env_steps = 0

    steps_per_t = ctrl.samples * ctrl.horizon * (ctrl.ms if model.stochastic else 1) + 1
    metrics: list[dict] = []
    episode = t = 0
    try:
        for episode in range(start_episode, cfg.episodes):
            x = model.sample_initial(rngs.stream(cfg.seed, episode, 0, rngs.EPISODE_START))
            U = np.zeros((ctrl.horizon, spec.m))
            for t in range(spec.horizon):
                batch = evaluate_rollouts(model, x, U, net, ctrl,
                                          rngs.stream(cfg.seed, episode, t, rngs.ROLLOUTS))
                compute_weights(batch, ctrl)
                windows = extract_windows(demos, t, ctrl.horizon, cfg.batch_size,
                                          rngs.stream(cfg.seed, episode, t, rngs.WINDOWS))
                grad = estimate_gradient(net, windows, batch, ctrl.temperature,
                                         cfg.grad_weighting)
                net.set_params(apply_update(net.params, grad, opt, cfg.lr,
                                            cfg.weight_decay, cfg.optimizer))
                U = update_nominal(batch, ctrl, model.box)
                u, U = receding_step(U)
                x, _ = execute_control(model, x, u, exec_noise,
                                       rngs.stream(cfg.seed, episode, t, rngs.EXECUTE))
                env_steps += steps_per_t
                metrics.append({
                    "episode": episode, "t": t, "env_steps": env_steps,
                    "loss_surrogate": _loss_surrogate(net, windows, batch, ctrl.temperature),
                    "grad_norm": float(np.linalg.norm(grad)),
                    "s_min": float(np.min(batch.state_costs)),
                    "weight_entropy": _weight_entropy(batch.weights),
                    "eval_return": None, "eval_std": None,
                })
            if cfg.eval_every and (episode + 1) % cfg.eval_every == 0:
                mean, std = _periodic_eval(model, spec, gt_cost, net, ctrl,
                                           exec_noise, cfg, episode)
                metrics[-1]["eval_return"] = mean
                metrics[-1]["eval_std"] = std
    except NumericError as exc:
        exc.episode, exc.step = episode, t
        if checkpoint_path is not None:
            save_params(net, checkpoint_path, step=opt.step, seed=cfg.seed,
                        extra_arrays=_opt_arrays(opt, episode, env_steps),
                        extra_header={"aborted": True})
        raise
    return TrainResult(net=net, metrics=metrics, env_steps=env_steps, opt=opt,
                       episodes_done=cfg.episodes)


def _loss_surrogate(net: CostNet, windows: np.ndarray, batch: RolloutBatch,
                    temperature: float) -> float:
    length = min(windows.shape[1], batch.trajectories.shape[2])
    vals = net.values(windows[:, :length].reshape(-1, net.input_dim))
    expert = math.fsum(vals.tolist()) / windows.shape[0]
    roll = float(np.dot(batch.weights, batch.state_costs))
    return (expert - roll) / temperature


def _periodic_eval(model, spec, gt_cost, net, ctrl, exec_noise, cfg, episode):
    returns = []
    for i in range(cfg.eval_episodes):
        x0 = model.sample_initial(
            rngs.stream(cfg.seed, rngs.EVAL, episode, i, rngs.EPISODE_START))
        states, executed = run_episode(model, net, ctrl, spec.horizon, x0,
                                       exec_noise, cfg.seed, (rngs.EVAL, episode, i))
        returns.append(gt_cost.trajectory_return(states, executed))
    std = statistics.pstdev(returns) if len(returns) > 1 else 0.0
    return statistics.fmean(returns), std


def _opt_arrays(opt: OptState, episode: int, env_steps: int) -> dict[str, np.ndarray]:
    return {"adam_m": opt.m, "adam_v": opt.v,
            "counters": np.array([float(opt.step), float(episode), float(env_steps)])}


def save_training_checkpoint(net: CostNet, opt: OptState, episode: int,
                             env_steps: int, cfg: TrainConfig, path: str) -> None:
    save_params(net, path, step=opt.step, seed=cfg.seed,
                extra_arrays=_opt_arrays(opt, episode, env_steps))


def load_training_state(path: str, expect_env: str | None = None):
    """Rebuild (net, resume dict) from a checkpoint written by the trainer."""
    from .costnet import load_params
    net, header, arrays = load_params(path, expect_env=expect_env)
    resume = None
    if "counters" in arrays:
        step, episode, env_steps = arrays["counters"]
        resume = {"net": net,
                  "opt": OptState(m=arrays["adam_m"], v=arrays["adam_v"], step=int(step)),
                  "episode": int(episode), "env_steps": int(env_steps)}
    return net, header, resume

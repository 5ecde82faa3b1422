"""Sampling-based receding-horizon control.

At each time step M control sequences are sampled around the nominal,
rolled through the dynamics, scored by the current state cost, and combined
by exponentiated-cost importance weights into the next nominal sequence.
Only the first control is executed; the sequence shifts left with a zero
appended and the loop repeats.  Stabilisers: per-batch minimum-cost
subtraction inside the weight exponent, uniform exploration mixing, and an
optional Savitzky-Golay smoothing pass over the time axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import savgol_filter

from . import rng as rngs
from .costnet import state_cost_batch
from .dynamics import (ControlBox, DynamicsModel, NoiseSpec, rollout,
                       sample_control_sequence, step)
from .errors import NumericError, UsageError


@dataclass(frozen=True)
class ControllerConfig:
    horizon: int                      # K, planning steps
    samples: int                      # M, sampled sequences per step
    temperature: float                # relative weight of state vs control cost
    noise: NoiseSpec                  # sampling covariance (beta * I unless known)
    explore_prob: float = 0.5         # share of sequences drawn uniformly from the box
    smoothing: tuple[int, int] | None = (5, 2)   # (window, order) or None
    ms: int = 1                       # sub-rollouts per sequence, stochastic dynamics only

    def __post_init__(self):
        if self.horizon < 1:
            raise UsageError("horizon must be >= 1")
        if self.samples < 2:
            raise UsageError("need at least 2 sampled sequences")
        if not self.temperature > 0:
            raise UsageError("temperature must be > 0")
        if not 0.0 <= self.explore_prob <= 1.0:
            raise UsageError("explore_prob must be in [0, 1]")
        if self.ms < 1:
            raise UsageError("ms must be >= 1")
        if self.smoothing is not None:
            window, order = self.smoothing
            if self.horizon < 5:
                object.__setattr__(self, "smoothing", None)
            elif window % 2 == 0 or window > self.horizon or order >= window:
                raise UsageError("smoothing needs an odd window <= horizon and order < window")


@dataclass
class RolloutBatch:
    """Co-indexed results of one sampling round."""

    sequences: np.ndarray       # (M, K, m) clamped sampled controls
    trajectories: np.ndarray    # (M, ms, K+1, n) visited states
    state_costs: np.ndarray     # (M,) trajectory state cost (averaged over ms)
    control_terms: np.ndarray   # (M,) sum_k u_k' Sigma^-1 v_k against the nominal
    weights: np.ndarray | None = None


def evaluate_rollouts(model: DynamicsModel, x_t: np.ndarray, nominal: np.ndarray,
                      cost, cfg: ControllerConfig, rng: np.random.Generator
                      ) -> RolloutBatch:
    """Sample, roll out, and score M control sequences from state x_t."""
    nominal = np.asarray(nominal, dtype=np.float64)
    if nominal.shape != (cfg.horizon, model.m):
        raise UsageError(f"nominal must have shape ({cfg.horizon}, {model.m})")
    seqs = sample_control_sequence(nominal, cfg.noise, cfg.explore_prob, rng,
                                   model.box, count=cfg.samples)
    M, K = cfg.samples, cfg.horizon
    ms = cfg.ms if model.stochastic else 1
    x0 = np.broadcast_to(np.asarray(x_t, dtype=np.float64), (M * ms, model.n))
    ctrl = np.repeat(seqs, ms, axis=0)
    trajs = rollout(model, x0, ctrl, rng=rng if model.stochastic else None)
    trajs = trajs.reshape(M, ms, K + 1, model.n)
    per_traj = state_cost_batch(cost, trajs.reshape(M * ms, K + 1, model.n))
    state_costs = per_traj.reshape(M, ms).mean(axis=1)
    control_terms = np.array([
        math.fsum(cfg.noise.quad_cross(nominal, seqs[j]).tolist()) for j in range(M)
    ])
    return RolloutBatch(sequences=seqs, trajectories=trajs,
                        state_costs=state_costs, control_terms=control_terms)


def compute_weights(batch: RolloutBatch, cfg: ControllerConfig) -> RolloutBatch:
    """Fill normalized importance weights from costs and control terms.

    w_j is proportional to exp(-(S_j - S_min)/temperature - control_term_j);
    the batch minimum state cost is subtracted (and the whole exponent
    re-centred) so the exponentials stay representable for any cost scale.
    """
    s = batch.state_costs
    if not np.all(np.isfinite(s)) or not np.all(np.isfinite(batch.control_terms)):
        raise NumericError("non-finite rollout costs in weight computation")
    s_min = float(np.min(s))
    arg = (s - s_min) / cfg.temperature + batch.control_terms
    w = np.exp(-(arg - np.min(arg)))
    total = w.sum()
    if not (np.isfinite(total) and total > 0.0):
        raise NumericError("all importance weights vanished")
    w /= total
    assert abs(w.sum() - 1.0) <= 1e-12, "weights must normalize to one"
    batch.weights = w
    return batch


def update_nominal(batch: RolloutBatch, cfg: ControllerConfig,
                   box: ControlBox) -> np.ndarray:
    """Weighted average of the sampled sequences, smoothed, clamped."""
    if batch.weights is None:
        raise UsageError("compute_weights must run before update_nominal")
    U = np.einsum("j,jkm->km", batch.weights, batch.sequences)
    if cfg.smoothing is not None:
        window, order = cfg.smoothing
        U = savgol_filter(U, window, order, axis=0, mode="interp")
    return box.clamp(U)


def receding_step(U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First control plus the left-shifted sequence with a zero appended."""
    U = np.asarray(U, dtype=np.float64)
    nxt = np.empty_like(U)
    nxt[:-1] = U[1:]
    nxt[-1] = 0.0
    return U[0].copy(), nxt


def execute_control(model: DynamicsModel, x_t: np.ndarray, u: np.ndarray,
                    noise: NoiseSpec, rng: np.random.Generator
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Corrupt the commanded control with the true noise, clamp, and step.

    Returns (next state, executed control).
    """
    if noise.kind != "true-sigma":
        raise UsageError("execution noise must be a true-sigma spec")
    v = model.box.clamp(noise.sample(np.asarray(u, dtype=np.float64), rng))
    return step(model, x_t, v), v


def plan_step(model: DynamicsModel, x_t: np.ndarray, nominal: np.ndarray, cost,
              cfg: ControllerConfig, rng: np.random.Generator
              ) -> tuple[np.ndarray, RolloutBatch]:
    """One full planning round: sample, weight, average. Returns (U, batch)."""
    batch = evaluate_rollouts(model, x_t, nominal, cost, cfg, rng)
    compute_weights(batch, cfg)
    return update_nominal(batch, cfg, model.box), batch


def run_episode(model: DynamicsModel, cost, cfg: ControllerConfig, T: int,
                x0: np.ndarray, exec_noise: NoiseSpec, seed: int,
                stream_prefix: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Closed-loop receding-horizon episode.

    RNG paths are (seed, *stream_prefix, t, purpose), so callers in different
    contexts (demo generation, evaluation) stay on disjoint streams.  Returns
    (states, executed) with states of shape (T, n) holding the T visited
    states and executed of shape (T, m) holding the applied controls.
    """
    states = np.empty((T, model.n), dtype=np.float64)
    executed = np.empty((T, model.m), dtype=np.float64)
    x = np.asarray(x0, dtype=np.float64)
    U = np.zeros((cfg.horizon, model.m))
    for t in range(T):
        states[t] = x
        U, _ = plan_step(model, x, U, cost, cfg,
                         rngs.stream(seed, *stream_prefix, t, rngs.ROLLOUTS))
        u, U = receding_step(U)
        x, v = execute_control(model, x, u, exec_noise,
                               rngs.stream(seed, *stream_prefix, t, rngs.EXECUTE))
        executed[t] = v
    return states, executed

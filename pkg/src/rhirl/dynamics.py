"""Core abstractions: states, controls, control noise, black-box dynamics.

States are plain float64 arrays of shape (n,), controls of shape (m,), and
control sequences of shape (K, m).  All stepping functions also accept a
leading batch axis so a whole bank of rollouts can advance in lockstep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, UsageError


@dataclass(frozen=True)
class ControlBox:
    """Admissible per-dimension control interval [low, high]."""

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low = np.asarray(self.low, dtype=np.float64)
        high = np.asarray(self.high, dtype=np.float64)
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)
        if low.shape != high.shape or np.any(low >= high):
            raise UsageError("control box requires low < high per dimension")

    def clamp(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.low, self.high)

    def uniform(self, rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
        return rng.uniform(self.low, self.high, size=shape + self.low.shape)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.low + self.high)


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian control-noise description.

    kind="beta-identity": covariance beta * I, the learner's stand-in when the
    true covariance is unknown.  kind="true-sigma": a full PSD covariance
    matrix (possibly zero), used when simulating actual execution noise.
    """

    kind: str
    beta: float = 0.0
    sigma: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "beta-identity":
            if not self.beta > 0:
                raise UsageError("beta must be > 0 for beta-identity noise")
        elif self.kind == "true-sigma":
            sigma = np.asarray(self.sigma, dtype=np.float64)
            if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
                raise UsageError("sigma must be a square matrix")
            if not np.allclose(sigma, sigma.T, atol=1e-12):
                raise UsageError("sigma must be symmetric")
            eigs = np.linalg.eigvalsh(sigma)
            if np.min(eigs) < -1e-12:
                raise UsageError("sigma must be positive semi-definite")
            object.__setattr__(self, "sigma", sigma)
        else:
            raise UsageError(f"unknown noise kind {self.kind!r}")

    @staticmethod
    def beta_identity(beta: float) -> "NoiseSpec":
        return NoiseSpec(kind="beta-identity", beta=float(beta))

    @staticmethod
    def true_sigma(sigma: np.ndarray | float, m: int | None = None) -> "NoiseSpec":
        sigma = np.asarray(sigma, dtype=np.float64)
        if sigma.ndim == 0:
            if m is None:
                raise UsageError("scalar sigma level needs the control dimension m")
            sigma = float(sigma) * np.eye(m)
        return NoiseSpec(kind="true-sigma", sigma=sigma)

    def covariance(self, m: int) -> np.ndarray:
        if self.kind == "beta-identity":
            return self.beta * np.eye(m)
        return self.sigma

    def sample(self, mean: np.ndarray, rng: np.random.Generator,
               shape: tuple[int, ...] = ()) -> np.ndarray:
        """Draw from N(mean, cov); `shape` prepends extra sample axes."""
        m = mean.shape[-1]
        if self.kind == "beta-identity":
            std = np.sqrt(self.beta)
            return mean + std * rng.standard_normal(shape + mean.shape)
        chol = np.linalg.cholesky(self.sigma + 1e-300 * np.eye(m)) if np.any(self.sigma) else None
        if chol is None:
            return np.broadcast_to(mean, shape + mean.shape).copy()
        z = rng.standard_normal(shape + mean.shape)
        return mean + z @ chol.T

    def quad_cross(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """u^T Sigma^-1 v, batched over all leading axes."""
        if self.kind == "beta-identity":
            return np.sum(u * v, axis=-1) / self.beta
        try:
            sol = np.linalg.solve(self.sigma, np.swapaxes(np.atleast_2d(v), -1, -2))
        except np.linalg.LinAlgError as exc:
            raise UsageError("singular noise covariance in control cost") from exc
        sol = np.swapaxes(sol, -1, -2).reshape(v.shape)
        return np.sum(u * sol, axis=-1)


class DynamicsModel:
    """Black-box resettable dynamics.

    Subclasses implement `_step` vectorised over a leading batch axis and set
    n, m, dt, the control box, and the `stochastic` flag.  Stepping must be a
    pure function of (state, control[, noise draw]); instances carry no
    mutable state and may be shared across workers.
    """

    n: int
    m: int
    dt: float
    box: ControlBox
    stochastic: bool = False

    def _step(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _step_noise(self, x: np.ndarray, v: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
        raise UsageError(f"{type(self).__name__} has no stochastic transition")

    def _check(self, x: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if x.shape[-1] != self.n:
            raise UsageError(f"state dimension {x.shape[-1]} != {self.n}")
        if v.shape[-1] != self.m:
            raise UsageError(f"control dimension {v.shape[-1]} != {self.m}")
        return x, v


def step(model: DynamicsModel, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Deterministic successor state(s); controls must already be clamped."""
    x, v = model._check(x, v)
    nxt = model._step(x, v)
    if not np.all(np.isfinite(nxt)):
        bad = int(np.argwhere(~np.isfinite(nxt).all(axis=-1)).ravel()[0]) if nxt.ndim > 1 else 0
        raise NumericError("non-finite state produced by dynamics step", rollout_index=bad)
    return nxt


def step_stochastic(model: DynamicsModel, x: np.ndarray, v: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    """Successor drawn from the model's transition noise distribution."""
    if not model.stochastic:
        raise UsageError("step_stochastic called on a deterministic model")
    x, v = model._check(x, v)
    nxt = model._step_noise(x, v, rng)
    if not np.all(np.isfinite(nxt)):
        bad = int(np.argwhere(~np.isfinite(nxt).all(axis=-1)).ravel()[0]) if nxt.ndim > 1 else 0
        raise NumericError("non-finite state produced by stochastic step", rollout_index=bad)
    return nxt


def sample_control_sequence(nominal: np.ndarray, noise: NoiseSpec, explore_prob: float,
                            rng: np.random.Generator, box: ControlBox,
                            count: int | None = None) -> np.ndarray:
    """Sample control sequences around the nominal.

    Each sequence is, with probability 1 - explore_prob, a Gaussian
    perturbation of the nominal (covariance from `noise`), and with
    probability explore_prob drawn uniformly from the control box; either way
    the result is clamped to the box.  With `count` given, returns a stack of
    shape (count, K, m); otherwise a single (K, m) sequence.
    """
    if not 0.0 <= explore_prob <= 1.0:
        raise UsageError(f"explore_prob must be in [0, 1], got {explore_prob}")
    nominal = np.asarray(nominal, dtype=np.float64)
    squeeze = count is None
    n_seq = 1 if squeeze else count
    gaussian = noise.sample(nominal, rng, shape=(n_seq,))
    # Uniform draws are consumed from the stream even when unused so the
    # Gaussian draws do not depend on the explore coin flips.
    uniform = box.uniform(rng, (n_seq,) + nominal.shape[:-1])
    explore = rng.random(n_seq) < explore_prob
    out = np.where(explore[:, None, None], uniform, gaussian)
    out = box.clamp(out)
    return out[0] if squeeze else out


def rollout(model: DynamicsModel, x0: np.ndarray, controls: np.ndarray,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Roll control sequences through the dynamics.

    x0: (n,) or (B, n); controls: (K, m) or (B, K, m).  Returns the visited
    states including the start, shape (K+1, n) or (B, K+1, n).  If the model
    is stochastic an rng must be supplied and each step draws fresh noise.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    controls = np.asarray(controls, dtype=np.float64)
    squeeze = x0.ndim == 1
    if squeeze:
        x0 = x0[None]
        controls = controls[None] if controls.ndim == 2 else controls
    K = controls.shape[-2]
    traj = np.empty((x0.shape[0], K + 1, model.n), dtype=np.float64)
    traj[:, 0] = x0
    x = x0
    for k in range(K):
        if model.stochastic:
            if rng is None:
                raise UsageError("stochastic rollout requires an rng")
            x = step_stochastic(model, x, controls[:, k], rng)
        else:
            x = step(model, x, controls[:, k])
        traj[:, k + 1] = x
    return traj[0] if squeeze else traj

"""Learnable state cost: a small fully-connected network with explicit
forward and parameter-gradient passes, plus the composite trajectory costs.

The network is two rectified hidden layers and a scalar linear output,
stored as one flat float64 parameter vector (layer matrices are views into
it).  Gradients with respect to the parameters are computed by hand so the
package has no autodiff dependency; `grad_weighted_sum` backpropagates a
whole batch of states with per-state output weights in a handful of matrix
products, which is what keeps training fast.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .dynamics import DynamicsModel, NoiseSpec, rollout
from .errors import FormatError, NumericError, UsageError
from .serial import read_container, write_container

_CKPT_MAGIC = b"RHIRLCKP"


class CostNet:
    """State cost g(x) with parameters theta, shared flat storage."""

    def __init__(self, input_dim: int, hidden: tuple[int, int] = (32, 32),
                 params: np.ndarray | None = None,
                 rng: np.random.Generator | None = None,
                 env_name: str = ""):
        if input_dim < 1 or len(hidden) != 2 or min(hidden) < 1:
            raise UsageError("need input_dim >= 1 and two positive hidden sizes")
        self.input_dim = int(input_dim)
        self.hidden = (int(hidden[0]), int(hidden[1]))
        self.env_name = env_name
        h1, h2 = self.hidden
        self._shapes = [(h1, input_dim), (h1,), (h2, h1), (h2,), (1, h2), (1,)]
        self.n_params = sum(int(np.prod(s)) for s in self._shapes)
        if params is not None:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (self.n_params,):
                raise UsageError(f"expected {self.n_params} parameters, got {params.shape}")
            self._flat = params.copy()
        else:
            rng = rng or np.random.default_rng(0)
            self._flat = np.empty(self.n_params, dtype=np.float64)
            offset = 0
            fan_in = 1
            for shape in self._shapes:
                size = int(np.prod(shape))
                if len(shape) == 2:  # biases reuse the fan-in of their layer
                    fan_in = shape[1]
                bound = 1.0 / math.sqrt(fan_in)
                self._flat[offset:offset + size] = rng.uniform(-bound, bound, size)
                offset += size
        self._rebind_views()

    def _rebind_views(self):
        views, offset = [], 0
        for shape in self._shapes:
            size = int(np.prod(shape))
            views.append(self._flat[offset:offset + size].reshape(shape))
            offset += size
        self.W1, self.b1, self.W2, self.b2, self.W3, self.b3 = views

    @property
    def params(self) -> np.ndarray:
        """Copy of the flat parameter vector."""
        return self._flat.copy()

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise UsageError(f"expected {self.n_params} parameters, got {flat.shape}")
        self._flat = flat.copy()
        self._rebind_views()

    def clone(self) -> "CostNet":
        return CostNet(self.input_dim, self.hidden, params=self._flat, env_name=self.env_name)

    # -- forward ---------------------------------------------------------

    def _forward(self, X: np.ndarray):
        Z1 = X @ self.W1.T + self.b1
        A1 = np.maximum(Z1, 0.0)
        Z2 = A1 @ self.W2.T + self.b2
        A2 = np.maximum(Z2, 0.0)
        out = (A2 @ self.W3.T + self.b3)[..., 0]
        return out, (X, Z1, A1, Z2, A2)

    def values(self, X: np.ndarray) -> np.ndarray:
        """g over a batch of states, shape (..., input_dim) -> (...,)."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.input_dim:
            raise UsageError(f"state dimension {X.shape[-1]} != {self.input_dim}")
        out, _ = self._forward(X)
        if not np.all(np.isfinite(out)):
            raise NumericError("non-finite cost value")
        return out

    def value(self, x: np.ndarray) -> float:
        return float(self.values(np.asarray(x, dtype=np.float64)[None])[0])

    # -- backward --------------------------------------------------------

    def grad_weighted_sum(self, X: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        """sum_b alpha_b * dg(x_b)/dtheta as one flat vector.

        A single batched backward pass; with alpha = e_b it reduces to the
        per-state parameter gradient.
        """
        X = np.asarray(X, dtype=np.float64)
        alpha = np.asarray(alpha, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise UsageError("expected states of shape (batch, input_dim)")
        out, (X, Z1, A1, Z2, A2) = self._forward(X)
        d_out = alpha[:, None]
        gW3 = d_out.T @ A2
        gb3 = np.array([alpha.sum()])
        dZ2 = (d_out @ self.W3) * (Z2 > 0.0)
        gW2 = dZ2.T @ A1
        gb2 = dZ2.sum(axis=0)
        dZ1 = (dZ2 @ self.W2) * (Z1 > 0.0)
        gW1 = dZ1.T @ X
        gb1 = dZ1.sum(axis=0)
        grad = np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2, gW3.ravel(), gb3])
        if not np.all(np.isfinite(grad)):
            raise NumericError("non-finite parameter gradient")
        return grad

    def value_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """g(x) and dg/dtheta for a single state."""
        x = np.asarray(x, dtype=np.float64)[None]
        out, _ = self._forward(x)
        if not np.isfinite(out[0]):
            raise NumericError("non-finite cost value")
        return float(out[0]), self.grad_weighted_sum(x, np.ones(1))


def state_cost(cost, trajectory: np.ndarray, length: int | None = None) -> float:
    """Sum of the per-state cost over a trajectory (compensated summation).

    `cost` is anything with a batched `values`; `length` restricts the sum to
    the first states (used when demo windows are truncated near episode end).
    """
    trajectory = np.asarray(trajectory, dtype=np.float64)
    if trajectory.ndim != 2:
        raise UsageError("trajectory must have shape (steps, n)")
    if length is not None:
        trajectory = trajectory[:length]
    return math.fsum(cost.values(trajectory).tolist())


def state_cost_batch(cost, trajectories: np.ndarray) -> np.ndarray:
    """state_cost over a stack of equal-length trajectories, shape (B, L, n)."""
    vals = cost.values(trajectories)
    return np.array([math.fsum(row.tolist()) for row in vals])


def total_cost(cost, trajectory: np.ndarray, controls: np.ndarray,
               noise: NoiseSpec, temperature: float) -> float:
    """State cost plus the quadratic control penalty (temperature/2) u' S^-1 u."""
    if temperature < 0:
        raise UsageError("temperature must be >= 0")
    controls = np.asarray(controls, dtype=np.float64)
    penalty = 0.5 * temperature * math.fsum(noise.quad_cross(controls, controls).tolist())
    return state_cost(cost, trajectory) + penalty


def expected_state_cost(cost, model: DynamicsModel, x0: np.ndarray,
                        controls: np.ndarray, ms: int,
                        rng: np.random.Generator) -> float:
    """Average state cost over ms stochastic rollouts of one control sequence.

    For a deterministic model this is exactly the single rollout's cost.
    """
    if ms < 1:
        raise UsageError("ms must be >= 1")
    if not model.stochastic:
        return state_cost(cost, rollout(model, x0, controls))
    x0 = np.asarray(x0, dtype=np.float64)
    reps = np.broadcast_to(x0, (ms,) + x0.shape)
    ctrl = np.broadcast_to(controls, (ms,) + np.asarray(controls).shape)
    trajs = rollout(model, reps, ctrl, rng=rng)
    return math.fsum(state_cost_batch(cost, trajs).tolist()) / ms


def save_params(net: CostNet, path: str | Path, *, step: int = 0, seed: int = 0,
                extra_arrays: dict[str, np.ndarray] | None = None,
                extra_header: dict | None = None) -> None:
    header = {
        "kind": "cost-checkpoint",
        "env": net.env_name,
        "input_dim": net.input_dim,
        "hidden": list(net.hidden),
        "step": step,
        "seed": seed,
    }
    if extra_header:
        header.update(extra_header)
    arrays = {"params": net.params}
    if extra_arrays:
        arrays.update(extra_arrays)
    write_container(path, _CKPT_MAGIC, header, arrays)


def load_params(path: str | Path, expect_env: str | None = None
                ) -> tuple[CostNet, dict, dict[str, np.ndarray]]:
    """Load a checkpoint; returns (net, header, extra arrays)."""
    header, arrays = read_container(path, _CKPT_MAGIC)
    if header.get("kind") != "cost-checkpoint":
        raise FormatError(f"{path}: not a cost checkpoint")
    if expect_env is not None and header.get("env") != expect_env:
        raise FormatError(
            f"{path}: checkpoint for environment {header.get('env')!r}, expected {expect_env!r}")
    params = arrays.pop("params", None)
    if params is None:
        raise FormatError(f"{path}: missing parameter array")
    try:
        net = CostNet(int(header["input_dim"]), tuple(header["hidden"]),
                      params=params, env_name=header.get("env", ""))
    except (KeyError, UsageError) as exc:
        raise FormatError(f"{path}: inconsistent layer shapes") from exc
    return net, header, arrays


class QuadraticCost:
    """x' Q x + c; exact moment propagation makes it a handy test probe."""

    def __init__(self, Q: np.ndarray, offset: float = 0.0):
        self.Q = np.asarray(Q, dtype=np.float64)
        self.offset = float(offset)

    def values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.einsum("...i,ij,...j->...", x, self.Q, x) + self.offset

"""Benchmark environments with ground-truth costs.

Three desk-scale systems: a torque-limited pendulum swing-up matching the
classic Gym conventions (so published hyperparameters transfer), a linear
double integrator (its quadratic cost admits an exact Riccati solution, and
its 2-D state makes marginal histograms cheap), and a cart-pole swing-up as
the harder task for horizon ablations.  A linear-Gaussian model is included
for exercising the stochastic-dynamics path; it is not a benchmark.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import ControlBox, DynamicsModel
from .errors import UsageError


@dataclass(frozen=True)
class EnvSpec:
    name: str
    n: int
    m: int
    dt: float
    horizon: int
    box: ControlBox
    init_ranges: dict = field(default_factory=dict)
    # Demo generation refuses experts whose mean return falls below this.
    expert_return_floor: float = -np.inf

    def __post_init__(self):
        if self.horizon < 1:
            raise UsageError("horizon must be >= 1")


@dataclass(frozen=True)
class GroundTruthCost:
    """Per-state cost closure plus the quadratic control-cost weight."""

    state_values: Callable[[np.ndarray], np.ndarray]
    control_weight: float

    def values(self, x: np.ndarray) -> np.ndarray:
        """Batched state cost; x of shape (..., n)."""
        return np.asarray(self.state_values(np.asarray(x, dtype=np.float64)))

    def trajectory_return(self, states: np.ndarray, executed: np.ndarray) -> float:
        """Negated total cost of one episode (higher is better)."""
        state_part = math.fsum(self.values(states).tolist())
        ctrl_part = self.control_weight * math.fsum(
            np.sum(np.asarray(executed) ** 2, axis=-1).tolist())
        return -(state_part + ctrl_part)


def _angle(obs_cos: np.ndarray, obs_sin: np.ndarray) -> np.ndarray:
    return np.arctan2(obs_sin, obs_cos)


class PendulumModel(DynamicsModel):
    """Torque-limited pendulum, observed as (cos th, sin th, th_dot).

    Semi-implicit Euler with g=10, m=1, l=1, dt=0.05, speed clamp 8,
    torque box [-2, 2]; angle zero is upright.
    """

    gravity = 10.0
    mass = 1.0
    length = 1.0
    max_speed = 8.0

    def __init__(self):
        self.n = 3
        self.m = 1
        self.dt = 0.05
        self.box = ControlBox(np.array([-2.0]), np.array([2.0]))

    def _step(self, x, v):
        th = _angle(x[..., 0], x[..., 1])
        thdot = x[..., 2]
        u = v[..., 0]
        g, ml, l = self.gravity, self.mass, self.length
        acc = 3.0 * g / (2.0 * l) * np.sin(th) + 3.0 / (ml * l * l) * u
        thdot = np.clip(thdot + acc * self.dt, -self.max_speed, self.max_speed)
        th = th + thdot * self.dt
        return np.stack([np.cos(th), np.sin(th), thdot], axis=-1)

    def sample_initial(self, rng: np.random.Generator, count: int | None = None):
        shape = () if count is None else (count,)
        th = rng.uniform(-np.pi, np.pi, size=shape)
        thdot = rng.uniform(-1.0, 1.0, size=shape)
        return np.stack([np.cos(th), np.sin(th), thdot], axis=-1)


def make_pendulum() -> tuple[DynamicsModel, EnvSpec, GroundTruthCost]:
    model = PendulumModel()
    spec = EnvSpec(
        name="pendulum", n=3, m=1, dt=model.dt, horizon=100, box=model.box,
        init_ranges={"angle": (-np.pi, np.pi), "angular_velocity": (-1.0, 1.0)},
        expert_return_floor=-500.0,
    )

    def state_cost(x):
        th = _angle(x[..., 0], x[..., 1])
        return th * th + 0.1 * x[..., 2] ** 2

    return model, spec, GroundTruthCost(state_cost, control_weight=0.001)


class DoubleIntegratorModel(DynamicsModel):
    """Point mass on a line: state (position, velocity), control acceleration."""

    def __init__(self):
        self.n = 2
        self.m = 1
        self.dt = 0.05
        self.box = ControlBox(np.array([-10.0]), np.array([10.0]))

    def _step(self, x, v):
        vel = x[..., 1] + v[..., 0] * self.dt
        pos = x[..., 0] + vel * self.dt
        return np.stack([pos, vel], axis=-1)

    def sample_initial(self, rng: np.random.Generator, count: int | None = None):
        shape = () if count is None else (count,)
        pos = rng.uniform(-2.0, 2.0, size=shape)
        vel = rng.uniform(-1.0, 1.0, size=shape)
        return np.stack([pos, vel], axis=-1)

    def linearization(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact (A, B) of the discrete update, for Riccati-based checks."""
        dt = self.dt
        return np.array([[1.0, dt], [0.0, 1.0]]), np.array([[dt * dt], [dt]])


def make_double_integrator() -> tuple[DynamicsModel, EnvSpec, GroundTruthCost]:
    model = DoubleIntegratorModel()
    spec = EnvSpec(
        name="double_integrator", n=2, m=1, dt=model.dt, horizon=100, box=model.box,
        init_ranges={"position": (-2.0, 2.0), "velocity": (-1.0, 1.0)},
        expert_return_floor=-60.0,
    )

    def state_cost(x):
        return x[..., 0] ** 2 + 0.1 * x[..., 1] ** 2

    # Control weight matches the controller's implied penalty at the default
    # lambda=0.1, beta=1.0 so the sampled optimum and the LQR optimum agree.
    return model, spec, GroundTruthCost(state_cost, control_weight=0.05)


class CartpoleModel(DynamicsModel):
    """Cart-pole swing-up with a point-mass pole, force-controlled cart.

    State observed as (x, x_dot, cos th, sin th, th_dot) with the angle zero
    upright.  Frictionless; semi-implicit Euler.
    """

    mass_cart = 1.0
    mass_pole = 0.1
    length = 0.5
    gravity = 9.8

    def __init__(self):
        self.n = 5
        self.m = 1
        self.dt = 0.05
        self.box = ControlBox(np.array([-10.0]), np.array([10.0]))

    def _step(self, x, v):
        pos, posdot = x[..., 0], x[..., 1]
        th = _angle(x[..., 2], x[..., 3])
        thdot = x[..., 4]
        force = v[..., 0]
        mc, mp, l, g = self.mass_cart, self.mass_pole, self.length, self.gravity
        sin, cos = np.sin(th), np.cos(th)
        xacc = (force + mp * sin * (l * thdot * thdot - g * cos)) / (mc + mp * sin * sin)
        thacc = (g * sin - xacc * cos) / l
        posdot = posdot + xacc * self.dt
        thdot = thdot + thacc * self.dt
        pos = pos + posdot * self.dt
        th = th + thdot * self.dt
        return np.stack([pos, posdot, np.cos(th), np.sin(th), thdot], axis=-1)

    def sample_initial(self, rng: np.random.Generator, count: int | None = None):
        shape = () if count is None else (count,)
        pos = rng.uniform(-0.05, 0.05, size=shape)
        posdot = rng.uniform(-0.05, 0.05, size=shape)
        th = np.pi + rng.uniform(-0.1, 0.1, size=shape)
        thdot = rng.uniform(-0.05, 0.05, size=shape)
        return np.stack([pos, posdot, np.cos(th), np.sin(th), thdot], axis=-1)


def make_cartpole_swingup() -> tuple[DynamicsModel, EnvSpec, GroundTruthCost]:
    model = CartpoleModel()
    spec = EnvSpec(
        name="cartpole", n=5, m=1, dt=model.dt, horizon=100, box=model.box,
        init_ranges={"position": (-0.05, 0.05), "angle_offset_from_down": (-0.1, 0.1)},
        expert_return_floor=-800.0,
    )

    def state_cost(x):
        upness = 1.0 - x[..., 2]  # 0 when the pole is upright
        return 4.0 * upness + 0.05 * x[..., 0] ** 2 + 0.05 * x[..., 1] ** 2 + 0.1 * x[..., 4] ** 2

    return model, spec, GroundTruthCost(state_cost, control_weight=0.05)


class LinearGaussianModel(DynamicsModel):
    """x' = A x + B v + scale * xi with xi ~ N(0, I); artifact-only.

    Declared stochastic regardless of scale so the stochastic code path can
    be exercised with scale exactly zero.
    """

    def __init__(self, A: np.ndarray, B: np.ndarray, noise_scale: float = 0.0,
                 stochastic: bool = True,
                 box: ControlBox | None = None):
        self.A = np.asarray(A, dtype=np.float64)
        self.B = np.asarray(B, dtype=np.float64)
        self.noise_scale = float(noise_scale)
        self.n = self.A.shape[0]
        self.m = self.B.shape[1]
        self.dt = 1.0
        self.stochastic = stochastic
        self.box = box or ControlBox(-1e6 * np.ones(self.m), 1e6 * np.ones(self.m))

    def _step(self, x, v):
        return x @ self.A.T + v @ self.B.T

    def _step_noise(self, x, v, rng):
        mean = self._step(x, v)
        if self.noise_scale == 0.0:
            return mean
        return mean + self.noise_scale * rng.standard_normal(mean.shape)


_REGISTRY = {
    "pendulum": make_pendulum,
    "double_integrator": make_double_integrator,
    "cartpole": make_cartpole_swingup,
}


def env_names() -> list[str]:
    return sorted(_REGISTRY)


def make_env(name: str) -> tuple[DynamicsModel, EnvSpec, GroundTruthCost]:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UsageError(f"unknown environment {name!r}; choose from {env_names()}") from None
    return factory()

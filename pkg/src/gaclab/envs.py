"""Desk-scale continuous-control environments and normalization wrappers.

``step`` follows the (next_state, reward, terminated, truncated) convention:
``terminated`` marks a true terminal state (no bootstrapping), ``truncated``
marks the time limit. An episode is done when either is set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    action_low: tuple[float, ...]
    action_high: tuple[float, ...]
    max_steps: int
    reward_scale: float = 1.0

    def __post_init__(self):
        if len(self.action_low) != self.action_dim or len(self.action_high) != self.action_dim:
            raise ValueError("action bounds must have action_dim entries")
        if not all(lo < hi for lo, hi in zip(self.action_low, self.action_high)):
            raise ValueError("action_low must be < action_high elementwise")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not (self.reward_scale > 0 and math.isfinite(self.reward_scale)):
            raise ValueError(f"reward_scale must be a positive finite number, got {self.reward_scale}")

    @property
    def low(self) -> np.ndarray:
        return np.asarray(self.action_low, dtype=np.float64)

    @property
    def high(self) -> np.ndarray:
        return np.asarray(self.action_high, dtype=np.float64)


class Env:
    spec: EnvSpec

    def __init__(self, reward_scale: float | None = None):
        if reward_scale is not None:
            self.spec = replace(self.spec, reward_scale=reward_scale)
        self.t = 0
        self.clipped_actions = 0
        self._state = np.zeros(self._internal_dim)

    _internal_dim = 1

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.t = 0
        self._state = self._initial(rng)
        return self.observe()

    def step(self, action) -> tuple[np.ndarray, float, bool, bool]:
        a = np.asarray(action, dtype=np.float64).reshape(self.spec.action_dim)
        clipped = np.clip(a, self.spec.low, self.spec.high)
        if np.any(clipped != a):
            self.clipped_actions += 1
        self.t += 1
        reward, terminated = self._advance(clipped)
        truncated = (not terminated) and self.t >= self.spec.max_steps
        return self.observe(), float(reward), bool(terminated), bool(truncated)

    def observe(self) -> np.ndarray:
        return self._state.copy()

    # checkpoint support
    def get_state(self) -> np.ndarray:
        return np.concatenate([self._state, [self.t, self.clipped_actions]])

    def set_state(self, arr: np.ndarray) -> None:
        arr = np.asarray(arr, dtype=np.float64)
        self._state = arr[:-2].copy()
        self.t = int(arr[-2])
        self.clipped_actions = int(arr[-1])

    def _initial(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _advance(self, a: np.ndarray) -> tuple[float, bool]:
        raise NotImplementedError


class BimodalBandit1D(Env):
    """One-step bandit with two equal reward peaks at a = +-0.7."""

    spec = EnvSpec("bimodal_bandit", 1, 1, (-1.0,), (1.0,), 1)
    PEAKS = (0.7, -0.7)
    WIDTH = 0.01

    @staticmethod
    def reward(a: float) -> float:
        # Sum the two bumps ordered by distance so that r(a) == r(-a) exactly.
        near, far = sorted((abs(a - 0.7), abs(a + 0.7)))
        return math.exp(-(near ** 2) / 0.01) + math.exp(-(far ** 2) / 0.01)

    def _initial(self, rng):
        return np.zeros(1)

    def _advance(self, a):
        return self.reward(float(a[0])), True


class MultiGoalPointMass2D(Env):
    """Velocity-controlled point on [-2, 2]^2 with four goals on the unit circle."""

    spec = EnvSpec("multigoal", 2, 2, (-0.2, -0.2), (0.2, 0.2), 40)
    GOALS = np.array([[math.cos(t), math.sin(t)] for t in (math.pi / 4, 3 * math.pi / 4,
                                                            5 * math.pi / 4, 7 * math.pi / 4)])
    GOAL_RADIUS = 0.05
    _internal_dim = 2

    def _initial(self, rng):
        return rng.uniform(-0.1, 0.1, size=2)

    def goal_distance(self, p: np.ndarray) -> float:
        return float(np.min(np.linalg.norm(self.GOALS - p, axis=1)))

    def _advance(self, a):
        self._state = np.clip(self._state + a, -2.0, 2.0)
        d = self.goal_distance(self._state)
        return -d, d < self.GOAL_RADIUS


class PendulumSwingup(Env):
    """Torque-limited pendulum; theta = 0 is upright. Observation (cos, sin, theta_dot)."""

    spec = EnvSpec("pendulum", 3, 1, (-2.0,), (2.0,), 200)
    G, M, L, DT, MAX_SPEED = 9.8, 1.0, 1.0, 0.05, 8.0
    _internal_dim = 2  # theta, theta_dot

    def _initial(self, rng):
        return np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-1.0, 1.0)])

    def observe(self):
        th, thdot = self._state
        return np.array([math.cos(th), math.sin(th), thdot])

    @staticmethod
    def wrap(th: float) -> float:
        return ((th + math.pi) % (2 * math.pi)) - math.pi

    def _advance(self, a):
        th, thdot = self._state
        u = float(a[0])
        cost = self.wrap(th) ** 2 + 0.1 * thdot ** 2 + 0.001 * u ** 2
        thdot = thdot + (3 * self.G / (2 * self.L) * math.sin(th) + 3.0 * u / (self.M * self.L ** 2)) * self.DT
        thdot = min(max(thdot, -self.MAX_SPEED), self.MAX_SPEED)
        th = th + thdot * self.DT
        self._state = np.array([th, thdot])
        return -cost, False


ENVIRONMENTS = {
    "bimodal_bandit": BimodalBandit1D,
    "multigoal": MultiGoalPointMass2D,
    "pendulum": PendulumSwingup,
}


def make_env(name: str, reward_scale: float | None = None) -> Env:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls(reward_scale)


# -- normalization -----------------------------------------------------------

OBS_CLIP = 5.0
STD_FLOOR = 1e-6


class RunningNormalizer:
    """Per-dimension running mean/std (Welford) with clipping to [-5, 5]."""

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, s: np.ndarray) -> None:
        s = np.asarray(s, dtype=np.float64).reshape(self.dim)
        self.count += 1
        delta = s - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (s - self.mean)

    @property
    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros(self.dim)
        return np.sqrt(np.maximum(self.m2, 0.0) / (self.count - 1))

    def normalize(self, s: np.ndarray, update: bool = False) -> np.ndarray:
        if update:
            self.update(s)
        s = np.asarray(s, dtype=np.float64)
        if self.count == 0:
            return np.clip(s, -OBS_CLIP, OBS_CLIP)
        return np.clip((s - self.mean) / np.maximum(self.std, STD_FLOOR), -OBS_CLIP, OBS_CLIP)


def normalize_obs(norm: RunningNormalizer, s: np.ndarray, training: bool = True) -> np.ndarray:
    return norm.normalize(s, update=training)


def normalize_action(spec: EnvSpec, a_raw) -> np.ndarray:
    a = np.asarray(a_raw, dtype=np.float64)
    return (2.0 * a - spec.high - spec.low) / (spec.high - spec.low)


def denormalize_action(spec: EnvSpec, a_norm) -> np.ndarray:
    a = np.asarray(a_norm, dtype=np.float64)
    return (a * (spec.high - spec.low) + spec.high + spec.low) / 2.0


def scale_reward(spec: EnvSpec, r: float) -> float:
    return r * spec.reward_scale

"""Actor and critic networks.

The actor is a push-forward map: ``a = tanh(MLP([s, z]))`` with ``z`` drawn
from an isotropic normal. Critics map ``[s, a]`` to a scalar. Four critics
are kept: an online pair (1A, 1B) trained by Adam and a target pair
(2A, 2B) that only tracks the online pair through :func:`target_update`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .diffcore import (
    ParamSet,
    ShapeError,
    Tensor,
    as_tensor,
    bias_add,
    concat,
    copy_params,
    frozen,
    gd_step,
    init_params,
    minimum,
    relu,
    tanh,
)


class MLP:
    """Fully connected relu network with an optional tanh head."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, tanh_out: bool = False):
        self.sizes = list(sizes)
        self.tanh_out = tanh_out
        self.params: ParamSet = init_params(self.sizes, rng)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def __call__(self, x, params: Mapping[str, Tensor] | None = None) -> Tensor:
        p = self.params if params is None else params
        h = as_tensor(x)
        if h.ndim != 2 or h.shape[1] != self.sizes[0]:
            raise ShapeError(f"MLP input: expected (N, {self.sizes[0]}), got {h.shape}")
        for i in range(self.n_layers):
            h = bias_add(h @ p[f"w{i}"], p[f"b{i}"])
            if i < self.n_layers - 1:
                h = relu(h)
        return tanh(h) if self.tanh_out else h

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Graph-free forward pass; bit-identical to ``__call__``."""
        h = np.asarray(x, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != self.sizes[0]:
            raise ShapeError(f"MLP input: expected (N, {self.sizes[0]}), got {h.shape}")
        for i in range(self.n_layers):
            h = h @ self.params[f"w{i}"].data + self.params[f"b{i}"].data
            if i < self.n_layers - 1:
                h = np.where(h > 0, h, 0.0)
        return np.tanh(h) if self.tanh_out else h


@dataclass
class LatentSpec:
    """Isotropic normal latent distribution for the actor's noise input."""

    noise_dim: int
    train_sigma: float = 1.0
    test_sigma: float = 0.5

    def __post_init__(self):
        if self.noise_dim < 1:
            raise ValueError("noise_dim must be >= 1")
        if not (self.train_sigma > 0 and self.test_sigma >= 0):
            raise ValueError("latent standard deviations must be positive")

    def sample(self, rng: np.random.Generator, shape: Sequence[int], sigma: float | None = None) -> np.ndarray:
        s = self.train_sigma if sigma is None else sigma
        return s * rng.standard_normal((*shape, self.noise_dim))


class ActorNet:
    """Push-forward policy G(s, z)."""

    def __init__(self, state_dim: int, action_dim: int, noise_dim: int,
                 hidden: Sequence[int], rng: np.random.Generator):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.noise_dim = noise_dim
        self.net = MLP([state_dim + noise_dim, *hidden, action_dim], rng, tanh_out=True)

    @property
    def params(self) -> ParamSet:
        return self.net.params

    def _check(self, s, z):
        if s.shape[0] != z.shape[0]:
            raise ShapeError(f"actor: batch sizes differ, states {s.shape} vs noise {z.shape}")
        if s.shape[-1] != self.state_dim or z.shape[-1] != self.noise_dim:
            raise ShapeError(
                f"actor: expected state dim {self.state_dim} and noise dim {self.noise_dim}, "
                f"got {s.shape} and {z.shape}"
            )

    def __call__(self, s, z) -> Tensor:
        s, z = as_tensor(s), as_tensor(z)
        self._check(s, z)
        return self.net(concat([s, z], axis=1))

    def predict(self, s: np.ndarray, z: np.ndarray) -> np.ndarray:
        s, z = np.asarray(s, dtype=np.float64), np.asarray(z, dtype=np.float64)
        self._check(s, z)
        return self.net.predict(np.concatenate([s, z], axis=1))


class Critic:
    """Q(s, a) -> scalar per row."""

    def __init__(self, state_dim: int, action_dim: int, hidden: Sequence[int], rng: np.random.Generator):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.net = MLP([state_dim + action_dim, *hidden, 1], rng)

    @property
    def params(self) -> ParamSet:
        return self.net.params

    def __call__(self, s, a, params: Mapping[str, Tensor] | None = None) -> Tensor:
        out = self.net(concat([as_tensor(s), as_tensor(a)], axis=1), params)
        return out.reshape(out.shape[0])

    def predict(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        return self.net.predict(np.concatenate([s, a], axis=1))[:, 0]


class QEnsemble:
    """Online critics q1a/q1b and their targets q2a/q2b."""

    NAMES = ("q1a", "q1b", "q2a", "q2b")

    def __init__(self, state_dim: int, action_dim: int, hidden: Sequence[int], rng: np.random.Generator):
        self.q1a = Critic(state_dim, action_dim, hidden, rng)
        self.q1b = Critic(state_dim, action_dim, hidden, rng)
        # Targets start as exact copies of the online critics.
        self.q2a = Critic(state_dim, action_dim, hidden, rng)
        self.q2b = Critic(state_dim, action_dim, hidden, rng)
        self.q2a.net.params = copy_params(self.q1a.params)
        self.q2b.net.params = copy_params(self.q1b.params)

    def pair(self, which: str) -> tuple[Critic, Critic]:
        if which == "online":
            return self.q1a, self.q1b
        if which == "target":
            return self.q2a, self.q2b
        raise ValueError(f"which must be 'online' or 'target', got {which!r}")

    def online_params(self) -> ParamSet:
        out = {f"q1a/{k}": v for k, v in self.q1a.params.items()}
        out.update({f"q1b/{k}": v for k, v in self.q1b.params.items()})
        return out

    def all_params(self) -> dict[str, ParamSet]:
        return {name: getattr(self, name).params for name in self.NAMES}


def min_q(ensemble: QEnsemble, s, a, which: str = "online", block: bool = False) -> Tensor:
    """Elementwise min of the selected critic pair.

    With ``block=True`` the critic parameters enter as constants, so gradients
    flow only into ``a`` (and whatever produced it).
    """
    qa, qb = ensemble.pair(which)
    pa = frozen(qa.params) if block else None
    pb = frozen(qb.params) if block else None
    return minimum(qa(s, a, pa), qb(s, a, pb))


def min_q_predict(ensemble: QEnsemble, s: np.ndarray, a: np.ndarray, which: str = "online") -> np.ndarray:
    qa, qb = ensemble.pair(which)
    return np.minimum(qa.predict(s, a), qb.predict(s, a))


def target_update(ensemble: QEnsemble, step: float) -> None:
    """One GD step on 0.5*||theta2 - theta1||^2 for each (target, online) pair."""
    if not 0.0 < step <= 1.0:
        raise ValueError(f"target update step must lie in (0, 1], got {step}")
    for target, online in ((ensemble.q2a, ensemble.q1a), (ensemble.q2b, ensemble.q1b)):
        grads = {k: target.params[k].data - online.params[k].data for k in target.params}
        gd_step(target.params, grads, step)

"""Kernel MMD estimator and the MMD entropy of a push-forward policy.

The estimator is the biased V-statistic

    MMD(X, Y) = [ mean k(x, x') + mean k(y, y') - 2 mean k(x, y) ] ** 0.5

with the bracket clamped at ``EPS_MMD`` before the root. Sample sets may
carry leading batch axes, in which case one estimate is returned per batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import EPS_MMD, ShapeError, Tensor, as_tensor, exp, mean, sqrt_clamped, sqrt_norm, tsum

KERNELS = ("energy_squared", "energy", "gaussian")


@dataclass(frozen=True)
class KernelSpec:
    """``energy_squared``: -|x-y|^2, ``energy``: -|x-y|, ``gaussian``: exp(-|x-y|^2 / 2 sigma^2)."""

    family: str = "energy_squared"
    sigma: float = 1.0

    def __post_init__(self):
        if self.family not in KERNELS:
            raise ValueError(f"unknown kernel family {self.family!r}; choose from {KERNELS}")
        if self.family == "gaussian" and not self.sigma > 0:
            raise ValueError("gaussian kernel bandwidth must be > 0")


def kernel_eval(k: KernelSpec, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise ShapeError(f"kernel_eval: dimension mismatch {x.shape} vs {y.shape}")
    sq = float(np.sum((x - y) ** 2))
    if k.family == "energy_squared":
        return -sq
    if k.family == "energy":
        return -np.sqrt(sq)
    return float(np.exp(-sq / (2.0 * k.sigma ** 2)))


def gram(k: KernelSpec, X, Y) -> Tensor:
    """Kernel matrix between sample sets (..., m, d) and (..., n, d)."""
    X, Y = as_tensor(X), as_tensor(Y)
    lead = X.shape[:-2]
    m, n, d = X.shape[-2], Y.shape[-2], X.shape[-1]
    diff = X.reshape(*lead, m, 1, d) - Y.reshape(*Y.shape[:-2], 1, n, d)
    sq = tsum(diff * diff, axis=-1)
    if k.family == "energy_squared":
        return -sq
    if k.family == "energy":
        return -sqrt_norm(sq)
    return exp(sq * (-1.0 / (2.0 * k.sigma ** 2)))


def mmd_bracket(X, Y, k: KernelSpec) -> Tensor:
    """The quantity under the square root, before clamping."""
    X, Y = as_tensor(X), as_tensor(Y)
    if X.ndim < 2 or Y.ndim < 2:
        raise ShapeError(f"mmd: sample sets must be (..., count, dim), got {X.shape} and {Y.shape}")
    if X.shape[-1] != Y.shape[-1] or X.shape[:-2] != Y.shape[:-2]:
        raise ShapeError(f"mmd: incompatible sample sets {X.shape} and {Y.shape}")
    if X.shape[-2] < 1 or Y.shape[-2] < 1:
        raise ValueError("mmd: sample sets must be non-empty")
    kxx = mean(gram(k, X, X), axis=(-2, -1))
    kyy = mean(gram(k, Y, Y), axis=(-2, -1))
    kxy = mean(gram(k, X, Y), axis=(-2, -1))
    return kxx + kyy - kxy * 2.0


def mmd_estimate(X, Y, k: KernelSpec) -> Tensor:
    """Empirical MMD between two sample sets; differentiable in both."""
    return sqrt_clamped(mmd_bracket(X, Y, k), EPS_MMD)


def uniform_reference(rng: np.random.Generator, batch: int, count: int, action_dim: int) -> np.ndarray:
    """Uniform actions over the normalized box [-1, 1]^d, shape (batch, count, d)."""
    return rng.uniform(-1.0, 1.0, size=(batch, count, action_dim))


def policy_mmd_from_samples(actions, reference, k: KernelSpec) -> Tensor:
    """Mean over states of the per-state MMD; inputs are (states, samples, d)."""
    return mean(mmd_estimate(actions, reference, k))


def policy_mmd_entropy(actor, states, noise_count: int, latent, k: KernelSpec,
                       rng: np.random.Generator, ref_rng: np.random.Generator | None = None) -> Tensor:
    """MMD entropy of ``actor`` on a batch of states.

    For each state, ``noise_count`` latent draws are pushed through the actor
    and compared with as many uniform actions over the box. Latent noise is
    drawn from ``rng``; uniform references from ``ref_rng`` (defaults to ``rng``).
    """
    if noise_count < 2:
        raise ValueError(f"noise_count must be >= 2, got {noise_count}")
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[0] < 1:
        raise ShapeError(f"states must be a non-empty (batch, state_dim) array, got {states.shape}")
    b = states.shape[0]
    z = latent.sample(rng, (b, noise_count))
    ref = uniform_reference(ref_rng if ref_rng is not None else rng, b, noise_count, actor.action_dim)
    actions = generate_actions(actor, states, z)
    return policy_mmd_from_samples(actions, ref, k)


def generate_actions(actor, states: np.ndarray, z: np.ndarray) -> Tensor:
    """Push (states, z) through the actor; ``z`` is (batch, samples, noise_dim)."""
    b, n = z.shape[0], z.shape[1]
    s_rep = np.repeat(states, n, axis=0)
    a = actor(s_rep, z.reshape(b * n, -1))
    return a.reshape(b, n, actor.action_dim)

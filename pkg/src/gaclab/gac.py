"""Generative actor-critic agent and its training loop.

One update on a batch (s, a, r, s', terminal):

1. next actions a' = G(s', z'), z' ~ q_train;
2. critic loss (1/2m) sum (r + gamma * min Q_target(s', a') - min Q_online(s, a))^2,
   Adam on the online pair;
3. actor loss -mean min Q_online(s, G(s, z)) + alpha * MMD entropy, Adam on the actor;
4. (adaptive mode) one Adam step on log(alpha) for log(alpha) * (beta - MMD);
5. one GD step pulling each target critic towards its online twin.

After the inner updates of each outer iteration, beta moves by the sign rule
``beta -= delta_beta * 0.5 * (sign(alpha_max - alpha) + sign(alpha_min - alpha))``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import envs as envlib
from .diffcore import Adam, Tensor, gradients, mean, square
from .mmd import KernelSpec, generate_actions, policy_mmd_from_samples, uniform_reference
from .nets import ActorNet, LatentSpec, QEnsemble, min_q, min_q_predict, target_update
from .seeding import seed_streams

ALGORITHMS = ("gac_adaptive", "gac_fixed", "ddpg_baseline")
BETA_FLOOR = 1e-6


class ConfigError(ValueError):
    pass


@dataclass
class GacConfig:
    """Algorithm and environment settings. Defaults are the desk-scale values."""

    env: str = "bimodal_bandit"
    algorithm: str = "gac_adaptive"
    alpha: float = 1.0  # fixed-mode value, or initial value in adaptive mode
    alpha_min: float = 1.0
    alpha_max: float = 1.8
    delta_beta: float = 0.01
    beta_init: Optional[float] = None  # None: first measured MMD value
    gamma: float = 0.99
    iterations: int = 300
    updates_per_iter: int = 50
    steps_per_iter: int = 100
    batch_size: int = 100
    action_samples: int = 100
    warmup_steps: int = 0  # at least batch_size transitions are always collected
    adam_lr: float = 1e-3
    alpha_lr: float = 1e-3
    gd_step: float = 5e-3
    kernel: str = "energy_squared"
    kernel_sigma: float = 1.0
    hidden: tuple = (64, 64)
    noise_dim: int = 0  # 0: same as action_dim
    latent_train_sigma: float = 1.0
    latent_test_sigma: float = 0.5
    buffer_capacity: int = 100_000
    exploration_noise: float = 0.1  # ddpg_baseline only
    reward_scale: Optional[float] = None  # None: environment default
    eval_episodes: int = 10
    eval_every: int = 1

    def validate(self) -> "GacConfig":
        def need(cond: bool, msg: str):
            if not cond:
                raise ConfigError(msg)

        need(self.env in envlib.ENVIRONMENTS, f"env: unknown environment {self.env!r}")
        need(self.algorithm in ALGORITHMS, f"algorithm: must be one of {ALGORITHMS}, got {self.algorithm!r}")
        need(0.0 <= self.gamma < 1.0, "gamma: must lie in [0, 1)")
        for name in ("iterations", "updates_per_iter", "steps_per_iter", "batch_size",
                     "buffer_capacity", "eval_episodes", "eval_every"):
            need(getattr(self, name) >= 1, f"{name}: must be >= 1")
        need(self.action_samples >= 2, "action_samples: must be >= 2")
        need(self.warmup_steps >= 0, "warmup_steps: must be >= 0")
        need(self.batch_size <= self.buffer_capacity, "batch_size: must not exceed buffer_capacity")
        need(self.noise_dim >= 0, "noise_dim: must be >= 0")
        need(len(self.hidden) >= 1 and all(h >= 1 for h in self.hidden), "hidden: need positive layer sizes")
        for name in ("adam_lr", "alpha_lr", "latent_train_sigma", "delta_beta"):
            need(getattr(self, name) > 0, f"{name}: must be > 0")
        need(0.0 < self.gd_step <= 1.0, "gd_step: must lie in (0, 1]")
        need(self.latent_test_sigma >= 0, "latent_test_sigma: must be >= 0")
        need(self.exploration_noise >= 0, "exploration_noise: must be >= 0")
        need(self.alpha >= 0, "alpha: must be >= 0")
        if self.algorithm == "gac_adaptive":
            need(self.alpha > 0, "alpha: initial alpha must be > 0 in adaptive mode")
            need(0 < self.alpha_min <= self.alpha_max, "alpha_min/alpha_max: need 0 < alpha_min <= alpha_max")
        if self.beta_init is not None:
            need(self.beta_init > 0, "beta_init: must be > 0")
        if self.reward_scale is not None:
            need(self.reward_scale > 0 and math.isfinite(self.reward_scale), "reward_scale: must be > 0")
        try:
            KernelSpec(self.kernel, self.kernel_sigma)
        except ValueError as e:
            raise ConfigError(f"kernel: {e}") from None
        return self

    @property
    def adaptive(self) -> bool:
        return self.algorithm == "gac_adaptive"

    def as_dict(self) -> dict:
        return asdict(self)


# -- replay buffer ------------------------------------------------------------

@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    terminal: bool


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    terminal: np.ndarray

    def __len__(self):
        return self.s.shape[0]


class ReplayBuffer:
    """FIFO ring buffer sampled uniformly with replacement."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.terminal = np.zeros(capacity)
        self.cursor = 0
        self.fill = 0

    def __len__(self):
        return self.fill

    def push(self, t: Transition) -> None:
        i = self.cursor
        self.s[i], self.a[i], self.r[i] = t.s, t.a, t.r
        self.s_next[i], self.terminal[i] = t.s_next, float(t.terminal)
        self.cursor = (i + 1) % self.capacity
        self.fill = min(self.fill + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        if self.fill < n:
            raise ValueError(f"cannot sample {n} transitions from a buffer holding {self.fill}")
        idx = rng.integers(0, self.fill, size=n)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.terminal[idx])

    def arrays(self) -> dict[str, np.ndarray]:
        n = self.fill
        return {"s": self.s[:n], "a": self.a[:n], "r": self.r[:n],
                "s_next": self.s_next[:n], "terminal": self.terminal[:n]}

    def load_arrays(self, arrays: dict[str, np.ndarray], cursor: int, fill: int) -> None:
        for key in ("s", "a", "r", "s_next", "terminal"):
            getattr(self, key)[:fill] = arrays[key]
        self.cursor, self.fill = cursor, fill


# -- adaptive regularizer ----------------------------------------------------

@dataclass
class AdaptiveState:
    log_alpha: float
    beta: float  # NaN until initialised from the first MMD measurement
    alpha_min: float
    alpha_max: float
    delta_beta: float

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)


def alpha_update(adaptive: AdaptiveState, mmd_value: float, opt: Adam) -> AdaptiveState:
    """One Adam step on log(alpha) for the objective log(alpha) * (beta - mmd)."""
    p = {"log_alpha": Tensor(np.array(adaptive.log_alpha), requires_grad=True)}
    opt.step(p, {"log_alpha": np.array(adaptive.beta - mmd_value)})
    adaptive.log_alpha = float(p["log_alpha"].data)
    return adaptive


def beta_update(adaptive: AdaptiveState) -> AdaptiveState:
    a = adaptive.alpha
    grad = 0.5 * (np.sign(adaptive.alpha_max - a) + np.sign(adaptive.alpha_min - a))
    adaptive.beta = max(adaptive.beta - adaptive.delta_beta * float(grad), BETA_FLOOR)
    return adaptive


# -- losses -------------------------------------------------------------------

def critic_targets(batch: Batch, ensemble: QEnsemble, next_actions: np.ndarray, gamma: float) -> np.ndarray:
    q2 = min_q_predict(ensemble, batch.s_next, next_actions, "target")
    return batch.r + gamma * (1.0 - batch.terminal) * q2


def critic_loss(batch: Batch, ensemble: QEnsemble, next_actions: np.ndarray, gamma: float) -> Tensor:
    """Twin-critic Bellman residual; targets enter as constants."""
    y = critic_targets(batch, ensemble, next_actions, gamma)
    q1 = min_q(ensemble, batch.s, batch.a, "online")
    return mean(square(q1 - y)) * 0.5


def actor_loss(states: np.ndarray, actor: ActorNet, ensemble: QEnsemble, alpha: float,
               kernel: KernelSpec, z: np.ndarray, reference: np.ndarray) -> tuple[Tensor, Tensor]:
    """-mean min Q(s, G(s, z)) + alpha * MMD entropy.

    ``z`` is (states, samples, noise_dim) and ``reference`` holds the uniform
    actions (states, samples, action_dim). Returns ``(loss, mmd)``.
    """
    b, n = z.shape[0], z.shape[1]
    actions = generate_actions(actor, states, z)
    s_rep = np.repeat(states, n, axis=0)
    q = min_q(ensemble, s_rep, actions.reshape(b * n, actor.action_dim), "online", block=True)
    mmd = policy_mmd_from_samples(actions, reference, kernel)
    loss = -mean(q)
    if alpha != 0.0:
        loss = loss + mmd * alpha
    return loss, mmd


def deterministic_actor_loss(states: np.ndarray, actor: ActorNet, ensemble: QEnsemble) -> Tensor:
    z = np.zeros((states.shape[0], actor.noise_dim))
    q = min_q(ensemble, states, actor(states, z), "online", block=True)
    return -mean(q)


# -- agents -------------------------------------------------------------------

@dataclass
class TrainStats:
    critic_loss: float
    actor_loss: float
    mmd_value: float
    alpha: float
    beta: float


class GacAgent:
    """Push-forward actor, four critics and the optimizer/regularizer state."""

    def __init__(self, config: GacConfig, state_dim: int, action_dim: int,
                 streams: dict[str, np.random.Generator]):
        self.config = config
        self.state_dim, self.action_dim = state_dim, action_dim
        self.streams = streams
        noise_dim = config.noise_dim or action_dim
        init_rng = streams["init"]
        self.actor = ActorNet(state_dim, action_dim, noise_dim, config.hidden, init_rng)
        self.ensemble = QEnsemble(state_dim, action_dim, config.hidden, init_rng)
        self.latent = LatentSpec(noise_dim, config.latent_train_sigma, config.latent_test_sigma)
        self.kernel = KernelSpec(config.kernel, config.kernel_sigma)
        self.actor_opt = Adam(config.adam_lr)
        self.critic_opt = Adam(config.adam_lr)
        self.alpha_opt = Adam(config.alpha_lr)
        self.adaptive = AdaptiveState(
            log_alpha=math.log(config.alpha) if config.alpha > 0 else -math.inf,
            beta=config.beta_init if config.beta_init is not None else math.nan,
            alpha_min=config.alpha_min, alpha_max=config.alpha_max, delta_beta=config.delta_beta,
        )

    @property
    def alpha(self) -> float:
        return self.adaptive.alpha if self.config.alpha > 0 else 0.0

    # acting
    def act(self, s_norm: np.ndarray, rng: np.random.Generator, sigma: Optional[float] = None) -> np.ndarray:
        """Normalized action for one normalized state; z ~ N(0, sigma^2) (train sigma by default)."""
        z = self.latent.sample(rng, (1,), sigma)
        return self.actor.predict(s_norm.reshape(1, -1), z)[0]

    def eval_act(self, s_norm: np.ndarray, rng: np.random.Generator, sigma: float) -> np.ndarray:
        return self.act(s_norm, rng, sigma)

    def sample_actions(self, s_norm: np.ndarray, n: int, rng: np.random.Generator, sigma: float) -> np.ndarray:
        z = self.latent.sample(rng, (n,), sigma)
        return self.actor.predict(np.repeat(s_norm.reshape(1, -1), n, axis=0), z)

    # learning
    def next_actions(self, s_next: np.ndarray) -> np.ndarray:
        z = self.latent.sample(self.streams["latent"], (s_next.shape[0],))
        return self.actor.predict(s_next, z)

    def _critic_step(self, batch: Batch) -> float:
        loss = critic_loss(batch, self.ensemble, self.next_actions(batch.s_next), self.config.gamma)
        params = self.ensemble.online_params()
        self.critic_opt.step(params, gradients(loss, params))
        return loss.item()

    def update(self, batch: Batch) -> TrainStats:
        cfg = self.config
        c_loss = self._critic_step(batch)
        b = len(batch)
        z = self.latent.sample(self.streams["latent"], (b, cfg.action_samples))
        ref = uniform_reference(self.streams["uniform_ref"], b, cfg.action_samples, self.action_dim)
        loss, mmd = actor_loss(batch.s, self.actor, self.ensemble, self.alpha, self.kernel, z, ref)
        self.actor_opt.step(self.actor.params, gradients(loss, self.actor.params))
        mmd_value = mmd.item()
        if cfg.adaptive:
            if math.isnan(self.adaptive.beta):
                self.adaptive.beta = max(mmd_value, BETA_FLOOR)
            alpha_update(self.adaptive, mmd_value, self.alpha_opt)
        target_update(self.ensemble, cfg.gd_step)
        return TrainStats(c_loss, loss.item(), mmd_value, self.alpha, self.adaptive.beta)

    def end_iteration(self) -> None:
        if self.config.adaptive and not math.isnan(self.adaptive.beta):
            beta_update(self.adaptive)


class DdpgAgent(GacAgent):
    """Deterministic baseline: a = G(s, 0) plus Gaussian exploration noise when training."""

    @property
    def alpha(self) -> float:
        return 0.0

    def act(self, s_norm, rng, sigma=None):
        z = np.zeros((1, self.actor.noise_dim))
        a = self.actor.predict(s_norm.reshape(1, -1), z)[0]
        if self.config.exploration_noise > 0:
            a = a + self.config.exploration_noise * rng.standard_normal(self.action_dim)
        return np.clip(a, -1.0, 1.0)

    def eval_act(self, s_norm, rng, sigma):
        z = np.zeros((1, self.actor.noise_dim))
        return self.actor.predict(s_norm.reshape(1, -1), z)[0]

    def sample_actions(self, s_norm, n, rng, sigma):
        z = np.zeros((n, self.actor.noise_dim))
        return self.actor.predict(np.repeat(s_norm.reshape(1, -1), n, axis=0), z)

    def next_actions(self, s_next):
        return self.actor.predict(s_next, np.zeros((s_next.shape[0], self.actor.noise_dim)))

    def update(self, batch: Batch) -> TrainStats:
        c_loss = self._critic_step(batch)
        loss = deterministic_actor_loss(batch.s, self.actor, self.ensemble)
        self.actor_opt.step(self.actor.params, gradients(loss, self.actor.params))
        target_update(self.ensemble, self.config.gd_step)
        return TrainStats(c_loss, loss.item(), math.nan, 0.0, math.nan)

    def end_iteration(self) -> None:
        pass


def make_agent(config: GacConfig, state_dim: int, action_dim: int, streams) -> GacAgent:
    cls = DdpgAgent if config.algorithm == "ddpg_baseline" else GacAgent
    return cls(config, state_dim, action_dim, streams)


def update_step(agent: GacAgent, batch: Batch) -> TrainStats:
    return agent.update(batch)


def ddpg_baseline_update(agent: DdpgAgent, batch: Batch) -> TrainStats:
    return DdpgAgent.update(agent, batch)


# -- training loop --------------------------------------------------------------

METRIC_COLUMNS = ("step", "env_steps", "eval_return_mean", "eval_return_std", "critic_loss",
                  "actor_loss", "mmd_value", "alpha", "beta")


@dataclass
class EvalResult:
    mean: float
    std: float
    returns: np.ndarray = field(repr=False)
    terminals: int = 0


class Trainer:
    """Owns one (agent, environment) pair plus everything needed to resume it."""

    def __init__(self, config: GacConfig, seed: int):
        self.config = config.validate()
        self.seed = seed
        self.streams = seed_streams(seed)
        self.env = envlib.make_env(config.env, config.reward_scale)
        self.eval_env = envlib.make_env(config.env, config.reward_scale)
        spec = self.env.spec
        self.agent = make_agent(config, spec.state_dim, spec.action_dim, self.streams)
        self.normalizer = envlib.RunningNormalizer(spec.state_dim)
        self.buffer = ReplayBuffer(config.buffer_capacity, spec.state_dim, spec.action_dim)
        self.iteration = 0
        self.env_steps = 0
        self.obs: Optional[np.ndarray] = None  # raw observation the next action is taken from

    @property
    def spec(self) -> envlib.EnvSpec:
        return self.env.spec

    @property
    def warmup_target(self) -> int:
        return max(self.config.batch_size, self.config.warmup_steps)

    def _ensure_started(self) -> None:
        if self.obs is None:
            self.obs = self.env.reset(self.streams["env"])
            self.normalizer.update(self.obs)

    def _env_step(self, a_norm: np.ndarray) -> None:
        a_norm = np.clip(a_norm, -1.0, 1.0)
        s_next, r, terminated, truncated = self.env.step(envlib.denormalize_action(self.spec, a_norm))
        self.normalizer.update(s_next)
        # Raw observations are stored; batches are normalized with current statistics when sampled.
        self.buffer.push(Transition(self.obs, a_norm, envlib.scale_reward(self.spec, r), s_next, terminated))
        self.env_steps += 1
        if terminated or truncated:
            self.obs = self.env.reset(self.streams["env"])
            self.normalizer.update(self.obs)
        else:
            self.obs = s_next

    def sample_batch(self) -> Batch:
        batch = self.buffer.sample(self.config.batch_size, self.streams["buffer_sample"])
        batch.s = self.normalizer.normalize(batch.s)
        batch.s_next = self.normalizer.normalize(batch.s_next)
        return batch

    def warmup(self) -> None:
        self._ensure_started()
        rng = self.streams["exploration"]
        while len(self.buffer) < self.warmup_target:
            self._env_step(rng.uniform(-1.0, 1.0, size=self.spec.action_dim))

    def collect(self, n: int) -> None:
        self._ensure_started()
        rng = self.streams["exploration"]
        for _ in range(n):
            self._env_step(self.agent.act(self.normalizer.normalize(self.obs), rng))

    def run_iteration(self) -> dict:
        cfg = self.config
        self.warmup()
        self.collect(cfg.steps_per_iter)
        stats = [self.agent.update(self.sample_batch()) for _ in range(cfg.updates_per_iter)]
        self.agent.end_iteration()
        self.iteration += 1
        ev_mean = ev_std = math.nan
        if self.iteration % cfg.eval_every == 0 or self.iteration == cfg.iterations:
            ev = self.evaluate(cfg.eval_episodes)
            ev_mean, ev_std = ev.mean, ev.std
        return {
            "step": self.iteration,
            "env_steps": self.env_steps,
            "eval_return_mean": ev_mean,
            "eval_return_std": ev_std,
            "critic_loss": float(np.mean([s.critic_loss for s in stats])),
            "actor_loss": float(np.mean([s.actor_loss for s in stats])),
            "mmd_value": float(np.mean([s.mmd_value for s in stats])),
            "alpha": self.agent.alpha,
            "beta": self.agent.adaptive.beta if cfg.adaptive else math.nan,
        }

    def train(self, iterations: Optional[int] = None, callback=None) -> list[dict]:
        rows = []
        stop = self.config.iterations if iterations is None else self.iteration + iterations
        while self.iteration < stop:
            row = self.run_iteration()
            rows.append(row)
            if callback is not None:
                callback(self, row)
        return rows

    def evaluate(self, episodes: int = 10, sigma: Optional[float] = None,
                 rng: Optional[np.random.Generator] = None) -> EvalResult:
        return evaluate_policy(self.agent, self.eval_env, self.normalizer, episodes,
                               self.config.latent_test_sigma if sigma is None else sigma,
                               rng if rng is not None else self.streams["eval"])

    def sample_actions(self, n: int, sigma: Optional[float] = None,
                       rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Raw actions drawn by the policy at a fresh initial state of the eval env."""
        rng = rng if rng is not None else self.streams["eval"]
        s = self.eval_env.reset(rng)
        a = self.agent.sample_actions(self.normalizer.normalize(s), n, rng,
                                      self.config.latent_test_sigma if sigma is None else sigma)
        return envlib.denormalize_action(self.spec, a)


def evaluate_policy(agent: GacAgent, env: envlib.Env, normalizer: envlib.RunningNormalizer,
                    episodes: int, sigma: float, rng: np.random.Generator) -> EvalResult:
    """Mean and std of undiscounted, unscaled returns with frozen normalization."""
    returns = np.zeros(episodes)
    terminals = 0
    for ep in range(episodes):
        s = env.reset(rng)
        total = 0.0
        while True:
            a = agent.eval_act(normalizer.normalize(s), rng, sigma)
            s, r, terminated, truncated = env.step(envlib.denormalize_action(env.spec, np.clip(a, -1, 1)))
            total += r
            if terminated or truncated:
                terminals += int(terminated)
                break
        returns[ep] = total
    # Spread is taken about the first return so identical returns give exactly zero.
    return EvalResult(float(returns.mean()), float((returns - returns[0]).std()), returns, terminals)


def train(config: GacConfig, seed: int, callback=None) -> Trainer:
    trainer = Trainer(config, seed)
    trainer.train(callback=callback)
    return trainer


def config_fields() -> dict[str, object]:
    return {f.name: f.type for f in fields(GacConfig)}

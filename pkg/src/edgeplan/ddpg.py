"""Deterministic policy-gradient agent with exact analytic gradients.

Actor and critic are two-hidden-layer MLPs (300 units by default, ReLU
hidden activations). The actor squashes its single output onto (0, 1) with a
logistic; the critic's output is linear over state + action. Training follows
an episodic loop: one preserved ratio per prunable layer, the episode reward
broadcast to every transition, one Adam update plus soft target update per
stored transition once the replay warm-up (2/3 of capacity) is complete.
Critic targets are baseline-corrected and undiscounted:
``y = r - b + Q'(s', mu'(s'))`` with the bootstrap term dropped on terminal
transitions and ``b`` an exponential moving average of batch-mean rewards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import EdgeplanError, SearchError
from .netgraph import STATE_SIZE
from .reward import RewardTerms

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class Mlp:
    """Parameters of one 2-hidden-layer network; ``squash`` selects the output head."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    squash: bool

    def arrays(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2, self.W3, self.b3]

    def shapes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(a.shape for a in self.arrays())

    def copy(self) -> "Mlp":
        return Mlp(*(a.copy() for a in self.arrays()), squash=self.squash)

    def forward(self, X: np.ndarray):
        """Batched forward; returns (y, h1, h2) with hidden caches for backward."""
        return kernels.forward(self.W1, self.b1, self.W2, self.b2, self.W3, self.b3,
                               np.ascontiguousarray(X, dtype=np.float64), self.squash)

    def backward(self, X, h1, h2, y, dy):
        """Gradients of sum(dy * y): (dW1, db1, dW2, db2, dW3, db3, dX)."""
        return kernels.backward(self.W1, self.W2, self.W3,
                                np.ascontiguousarray(X, dtype=np.float64),
                                h1, h2, y, np.ascontiguousarray(dy, dtype=np.float64),
                                self.squash)


def init_mlp(rng: np.random.Generator, in_dim: int, hidden: int, squash: bool) -> Mlp:
    """Uniform +-fan_in^-1/2 initialization for each layer, weights and biases."""
    def layer(fan_in: int, fan_out: int):
        bound = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=fan_out)
        return W, b

    W1, b1 = layer(in_dim, hidden)
    W2, b2 = layer(hidden, hidden)
    W3, b3 = layer(hidden, 1)
    return Mlp(W1, b1, W2, b2, W3, b3, squash=squash)


def _forward_checked(mlp: Mlp, x: np.ndarray, who: str) -> float:
    y, h1, h2 = mlp.forward(x[None, :])
    # The squash maps an infinite pre-activation to a finite output, so check
    # the un-squashed readout as well as the hidden activations.
    z3 = h2[0] @ mlp.W3[:, 0] + mlp.b3[0]
    if not (np.isfinite(h1).all() and np.isfinite(h2).all() and np.isfinite(z3)):
        raise EdgeplanError(f"{who} produced a non-finite intermediate")
    return float(y[0])


def actor_forward(mlp: Mlp, state: np.ndarray) -> float:
    """Deterministic action mean in (0, 1) for a single state."""
    return _forward_checked(mlp, np.asarray(state, dtype=np.float64), "actor")


def critic_forward(mlp: Mlp, state: np.ndarray, action: float) -> float:
    """Scalar value of one (state, action) pair."""
    x = np.concatenate([np.asarray(state, dtype=np.float64), [float(action)]])
    return _forward_checked(mlp, x, "critic")


def explore_action(mean: float, sigma: float, rng: np.random.Generator,
                   floor: float = 1e-3) -> float:
    """Truncated-normal exploration on [0, 1] (rejection sampled), clipped to [floor, 1]."""
    if sigma <= 0.0:
        sample = mean
    else:
        # Acceptance is bounded away from zero for mean in [0, 1]; the cap
        # only trips on contract violations and avoids a silent spin.
        for _ in range(100_000):
            sample = rng.normal(mean, sigma)
            if 0.0 <= sample <= 1.0:
                break
        else:
            raise EdgeplanError(
                f"exploration rejection sampler stalled (mean={mean}, sigma={sigma})")
    return min(1.0, max(floor, sample))


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: float
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Bounded ring of transitions with uniform no-replacement batch sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._store: list[Transition] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._store)

    def push(self, transition: Transition) -> None:
        if len(self._store) < self.capacity:
            self._store.append(transition)
        else:
            self._store[self._cursor] = transition
        self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, rng: np.random.Generator, n: int) -> list[Transition]:
        if n > len(self._store):
            raise ValueError(f"cannot sample {n} from buffer of {len(self._store)}")
        idx = rng.choice(len(self._store), size=n, replace=False)
        return [self._store[i] for i in idx]

    def snapshot(self) -> list[Transition]:
        """Contents in insertion order, oldest first."""
        if len(self._store) < self.capacity:
            return list(self._store)
        return self._store[self._cursor:] + self._store[: self._cursor]


@dataclass(frozen=True)
class DdpgConfig:
    """Hyper-parameters; defaults follow the reference setting."""

    episodes: int = 1100
    buffer_capacity: int = 2000
    batch_size: int = 64
    lr_actor: float = 0.001
    lr_critic: float = 0.0001
    tau: float = 0.01
    sigma_init: float = 0.5
    sigma_decay: float = 0.99
    sigma_min: float = 0.05
    action_floor: float = 0.001
    hidden_units: int = 300
    baseline_decay: float = 0.95

    @property
    def warmup_size(self) -> int:
        """Updates begin once the buffer holds 2/3 of its capacity."""
        return (2 * self.buffer_capacity) // 3

    def validate(self) -> "DdpgConfig":
        checks = [
            (self.episodes >= 1, "episodes must be >= 1"),
            (self.buffer_capacity >= 1, "buffer_capacity must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.warmup_size >= self.batch_size,
             f"warm-up size {self.warmup_size} (2/3 of capacity) must cover one batch "
             f"of {self.batch_size}"),
            (self.lr_actor > 0 and self.lr_critic > 0, "learning rates must be positive"),
            (0.0 < self.tau <= 1.0, "tau must lie in (0, 1]"),
            (self.sigma_init >= 0.0, "sigma_init must be >= 0"),
            (0.0 < self.sigma_decay <= 1.0, "sigma_decay must lie in (0, 1]"),
            (0.0 <= self.sigma_min <= self.sigma_init, "need 0 <= sigma_min <= sigma_init"),
            (0.0 < self.action_floor <= 0.5, "action_floor must lie in (0, 0.5]"),
            (self.hidden_units >= 1, "hidden_units must be >= 1"),
            (0.0 <= self.baseline_decay < 1.0, "baseline_decay must lie in [0, 1)"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValueError(message)
        return self


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def like(cls, mlp: Mlp) -> "AdamState":
        return cls(m=[np.zeros_like(a) for a in mlp.arrays()],
                   v=[np.zeros_like(a) for a in mlp.arrays()])

    def step(self, mlp: Mlp, grads: Sequence[np.ndarray], lr: float) -> None:
        self.t += 1
        kernels.adam_step(mlp.arrays(), list(grads), self.m, self.v, self.t,
                          lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)


def soft_update(online: Mlp, target: Mlp, tau: float) -> None:
    """In-place blend target <- tau * online + (1 - tau) * target."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if online.shapes() != target.shapes():
        raise ValueError(f"architecture mismatch: {online.shapes()} vs {target.shapes()}")
    kernels.blend(target.arrays(), online.arrays(), tau)


@dataclass(frozen=True)
class UpdateStats:
    critic_loss: float
    actor_objective: float
    baseline: float


class Trainer:
    """Owns the online/target networks, optimizer state, and best-episode tracking."""

    def __init__(self, config: DdpgConfig, state_dim: int, rng: np.random.Generator):
        config.validate()
        self.config = config
        h = config.hidden_units
        self.actor = init_mlp(rng, state_dim, h, squash=True)
        self.critic = init_mlp(rng, state_dim + 1, h, squash=False)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = AdamState.like(self.actor)
        self.critic_opt = AdamState.like(self.critic)
        self.baseline: float | None = None
        self.sigma = config.sigma_init
        self.updates = 0
        self.best_reward = 0.0
        self.best_actions: tuple[float, ...] | None = None
        self.best_terms: RewardTerms | None = None

    def update(self, batch: Sequence[Transition]) -> UpdateStats:
        """One critic + actor Adam step on a sampled batch."""
        n = len(batch)
        S = np.stack([tr.state for tr in batch])
        A = np.array([tr.action for tr in batch])
        R = np.array([tr.reward for tr in batch])
        S2 = np.stack([tr.next_state for tr in batch])
        terminal = np.array([tr.terminal for tr in batch])

        b_used = float(R.mean()) if self.baseline is None else self.baseline

        a2, _, _ = self.actor_target.forward(S2)
        q2, _, _ = self.critic_target.forward(np.column_stack([S2, a2]))
        y = R - b_used + np.where(terminal, 0.0, q2)

        Xc = np.column_stack([S, A])
        q, h1, h2 = self.critic.forward(Xc)
        critic_loss = float(np.mean((y - q) ** 2))
        if not np.isfinite(critic_loss):
            raise EdgeplanError(f"non-finite critic loss: {critic_loss}")
        dq = 2.0 * (q - y) / n
        *critic_grads, _ = self.critic.backward(Xc, h1, h2, q, dq)
        self.critic_opt.step(self.critic, critic_grads, self.config.lr_critic)

        # Actor ascends Q through the freshly updated critic.
        a_pi, ah1, ah2 = self.actor.forward(S)
        Xpi = np.column_stack([S, a_pi])
        q_pi, ch1, ch2 = self.critic.forward(Xpi)
        dq_pi = np.full(n, -1.0 / n)
        *_, dXpi = self.critic.backward(Xpi, ch1, ch2, q_pi, dq_pi)
        da = dXpi[:, -1]
        *actor_grads, _ = self.actor.backward(S, ah1, ah2, a_pi, da)
        self.actor_opt.step(self.actor, actor_grads, self.config.lr_actor)

        self.baseline = (self.config.baseline_decay * b_used
                         + (1.0 - self.config.baseline_decay) * float(R.mean()))
        self.updates += 1
        return UpdateStats(critic_loss=critic_loss,
                           actor_objective=float(-q_pi.mean()),
                           baseline=self.baseline)

    def soft_update_targets(self) -> None:
        soft_update(self.actor, self.actor_target, self.config.tau)
        soft_update(self.critic, self.critic_target, self.config.tau)


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    reward: float
    kappa: float
    nu: float
    rho: float
    sigma: float
    best_so_far: float


@dataclass(frozen=True)
class SearchResult:
    best_actions: tuple[float, ...]
    best_reward: float
    best_terms: RewardTerms
    trace: tuple[EpisodeRecord, ...]
    episodes: int
    updates: int


def run_search(environment, config: DdpgConfig, seed) -> SearchResult:
    """Full episodic search over one environment; deterministic given the seed.

    Raises SearchError with the partial trace attached if the oracle fails
    mid-run.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    trainer = Trainer(config, STATE_SIZE, rng)
    buffer = ReplayBuffer(config.buffer_capacity)
    trace: list[EpisodeRecord] = []
    n_layers = environment.max_layer

    for episode in range(1, config.episodes + 1):
        sigma_used = trainer.sigma
        states: list[np.ndarray] = []
        actions: list[float] = []
        for t in range(1, n_layers + 1):
            state = environment.state(t, actions)
            mean = actor_forward(trainer.actor, state)
            actions.append(explore_action(mean, sigma_used, rng, config.action_floor))
            states.append(state)

        try:
            outcome = environment.evaluate(actions)
        except EdgeplanError as exc:
            raise SearchError(f"episode {episode}: {exc}", trace) from exc
        r_episode = outcome.terms.reward

        for t in range(n_layers):
            last = t == n_layers - 1
            next_state = np.zeros(STATE_SIZE) if last else states[t + 1]
            buffer.push(Transition(states[t], actions[t], r_episode, next_state, last))
            if len(buffer) >= config.warmup_size:
                batch = buffer.sample(rng, config.batch_size)
                trainer.update(batch)
                trainer.soft_update_targets()

        if len(buffer) >= config.warmup_size:
            trainer.sigma = max(config.sigma_min, trainer.sigma * config.sigma_decay)

        if r_episode >= trainer.best_reward:
            trainer.best_reward = r_episode
            trainer.best_actions = tuple(actions)
            trainer.best_terms = outcome.terms
        trace.append(EpisodeRecord(
            episode=episode, reward=r_episode, kappa=outcome.terms.kappa,
            nu=outcome.terms.nu, rho=outcome.terms.rho, sigma=sigma_used,
            best_so_far=trainer.best_reward))

    assert trainer.best_actions is not None and trainer.best_terms is not None
    return SearchResult(
        best_actions=trainer.best_actions,
        best_reward=trainer.best_reward,
        best_terms=trainer.best_terms,
        trace=tuple(trace),
        episodes=config.episodes,
        updates=trainer.updates,
    )

"""Clipped-surrogate policy-gradient trainer for the discrete allocation policy.

The policy is a categorical head over the fixed feasible-assignment list; the
value baseline is a separate scalar network. Training collects on-policy
rollouts, estimates advantages with GAE(gamma, lambda), normalizes them per
update batch, and applies minibatched clipped-surrogate updates with Adam.
All arithmetic is float64 numpy with hand-written gradients (see nets.py),
so runs are bit-reproducible for a fixed seed on one machine.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol, Sequence

import numpy as np

from .env import AllocationEnv, EnvConfig
from .errors import CheckpointError, NumericError, ShapeMismatchError
from .nets import Adam, Mlp, categorical_entropy, categorical_sample, log_softmax
from .perfmodel import PerformanceModel

CHECKPOINT_FORMAT = "crewload-policy"
CHECKPOINT_VERSION = 1


class DiscreteEnv(Protocol):
    """What the trainer needs from an environment."""

    @property
    def n_actions(self) -> int: ...

    @property
    def obs_dim(self) -> int: ...

    def reset(self, seed: int | None = None) -> np.ndarray: ...

    def step(self, action_index: int) -> tuple[np.ndarray, float, bool, dict[str, Any]]: ...


@dataclass(frozen=True)
class PpoConfig:
    clip_eps: float = 0.2
    learning_rate: float = 3e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    rollout_steps: int = 2048
    epochs_per_update: int = 10
    minibatch_size: int = 64
    total_steps: int = 100_000
    hidden_sizes: tuple[int, ...] = (64, 64)
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must be in (0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")
        for name in ("rollout_steps", "epochs_per_update", "minibatch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))


@dataclass
class PolicyParams:
    """Trained weights: categorical policy net + scalar value net."""

    policy: Mlp
    value: Mlp

    @property
    def obs_dim(self) -> int:
        return self.policy.in_dim

    @property
    def n_actions(self) -> int:
        return self.policy.out_dim

    def is_finite(self) -> bool:
        return self.policy.is_finite() and self.value.is_finite()


def init_policy(
    obs_dim: int, n_actions: int, hidden_sizes: Sequence[int], seed: int
) -> PolicyParams:
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    return PolicyParams(
        policy=Mlp(obs_dim, hidden_sizes, n_actions, rng),
        value=Mlp(obs_dim, hidden_sizes, 1, rng),
    )


def policy_distribution(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    """Action probabilities for a single observation."""
    logits = params.policy(obs)
    return np.exp(log_softmax(logits))[0]


def policy_action(params: PolicyParams, obs: np.ndarray) -> int:
    """Greedy (argmax-probability) action index."""
    return int(np.argmax(policy_distribution(params, obs)))


def clipped_surrogate_loss(
    ratios: np.ndarray, advantages: np.ndarray, clip_eps: float
) -> float:
    """-mean(min(r * A, clip(r, 1-eps, 1+eps) * A)); the quantity minimized."""
    r = np.asarray(ratios, dtype=np.float64)
    a = np.asarray(advantages, dtype=np.float64)
    if r.shape != a.shape:
        raise ValueError(f"ratios {r.shape} and advantages {a.shape} differ in length")
    if np.any(r <= 0):
        raise ValueError("probability ratios must be positive")
    clipped = np.clip(r, 1.0 - clip_eps, 1.0 + clip_eps)
    return float(-np.mean(np.minimum(r * a, clipped * a)))


@dataclass
class Rollout:
    """On-policy batch of transitions plus the value bootstrap for a cut-off episode."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    terminated: np.ndarray
    bootstrap_value: float
    episode_rewards: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.actions)


def compute_advantages(
    rollout: Rollout, gamma: float, gae_lambda: float
) -> tuple[np.ndarray, np.ndarray]:
    """GAE(gamma, lambda) advantages and value targets, un-normalized.

    delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t), accumulated
    backwards with factor gamma*lambda; the final step bootstraps with the
    stored value when its episode was cut off by the rollout boundary.
    """
    n = len(rollout)
    adv = np.zeros(n)
    gae = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if rollout.terminated[t] else 1.0
        next_value = rollout.bootstrap_value if t == n - 1 else rollout.values[t + 1]
        delta = rollout.rewards[t] + gamma * next_value * nonterminal - rollout.values[t]
        gae = delta + gamma * gae_lambda * nonterminal * gae
        adv[t] = gae
    return adv, adv + rollout.values


class RolloutCollector:
    """Streams transitions from one auto-resetting environment.

    Keeps the in-flight episode across collect() calls so consecutive
    rollouts form one continuous stream of experience.
    """

    def __init__(self, env: DiscreteEnv, episode_seed_rng: np.random.Generator):
        self.env = env
        self.episode_seed_rng = episode_seed_rng
        self.obs = env.reset(self._next_seed())
        self.episode_reward = 0.0

    def _next_seed(self) -> int:
        return int(self.episode_seed_rng.integers(0, 2**63 - 1))

    def collect(self, params: PolicyParams, steps: int, rng: np.random.Generator) -> Rollout:
        dim = self.env.obs_dim
        obs = np.zeros((steps, dim))
        actions = np.zeros(steps, dtype=np.int64)
        log_probs = np.zeros(steps)
        rewards = np.zeros(steps)
        values = np.zeros(steps)
        terminated = np.zeros(steps, dtype=bool)
        episode_rewards: list[float] = []

        for t in range(steps):
            logits = params.policy(self.obs)
            logp = log_softmax(logits)[0]
            probs = np.exp(logp)
            a = categorical_sample(probs, rng)
            obs[t] = self.obs
            actions[t] = a
            log_probs[t] = logp[a]
            values[t] = params.value(self.obs)[0, 0]
            next_obs, reward, done, _ = self.env.step(a)
            rewards[t] = reward
            terminated[t] = done
            self.episode_reward += reward
            if done:
                episode_rewards.append(self.episode_reward)
                self.episode_reward = 0.0
                next_obs = self.env.reset(self._next_seed())
            self.obs = next_obs

        bootstrap = 0.0
        if steps > 0 and not terminated[-1]:
            bootstrap = float(params.value(self.obs)[0, 0])
        return Rollout(obs, actions, log_probs, rewards, values, terminated, bootstrap,
                       episode_rewards)


def collect_rollout(
    env: DiscreteEnv, params: PolicyParams, steps: int, seed: int = 0
) -> Rollout:
    """Gather exactly ``steps`` transitions from a fresh seeded collector."""
    ss = np.random.SeedSequence(seed)
    env_seeds, sample = (np.random.default_rng(c) for c in ss.spawn(2))
    return RolloutCollector(env, env_seeds).collect(params, steps, sample)


def _policy_minibatch_update(
    params: PolicyParams,
    opt: Adam,
    obs: np.ndarray,
    actions: np.ndarray,
    old_logp: np.ndarray,
    advantages: np.ndarray,
    cfg: PpoConfig,
) -> dict[str, float]:
    """One clipped-surrogate + entropy-bonus step; returns loss diagnostics.

    The gradient w.r.t. the action log-probability is A * r on the active
    (unclipped) branch of min(r*A, clip(r)*A) and zero when the clipped
    branch is strictly smaller, matching the subgradient used everywhere in
    practice; it is then pushed through log-softmax analytically.
    """
    n = len(actions)
    logits, cache = params.policy.forward(obs)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    idx = np.arange(n)
    logp_a = logp_all[idx, actions]
    ratio = np.exp(logp_a - old_logp)
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * advantages
    entropy = categorical_entropy(probs, logp_all)
    pg_loss = float(-np.minimum(surr1, surr2).mean())
    loss = pg_loss - cfg.entropy_coef * float(entropy.mean())

    unclipped_active = surr1 <= surr2
    dlogp_a = -(unclipped_active * ratio * advantages) / n
    dlogits = dlogp_a[:, None] * (-probs)
    dlogits[idx, actions] += dlogp_a
    # d(-c*mean(H))/dlogits = (c/n) * p * (log p + H); p=0 rows contribute 0
    dlogits += (cfg.entropy_coef / n) * np.where(
        probs > 0, probs * (logp_all + entropy[:, None]), 0.0
    )

    grads = params.policy.backward(cache, dlogits)
    opt.step([g for pair in grads for g in pair])
    return {
        "policy_loss": loss,
        "entropy": float(entropy.mean()),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
    }


def _value_minibatch_update(
    params: PolicyParams,
    opt: Adam,
    obs: np.ndarray,
    returns: np.ndarray,
    cfg: PpoConfig,
) -> float:
    n = len(returns)
    v, cache = params.value.forward(obs)
    err = v[:, 0] - returns
    loss = cfg.value_coef * float(np.mean(err**2))
    dv = (cfg.value_coef * 2.0 / n) * err[:, None]
    grads = params.value.backward(cache, dv)
    opt.step([g for pair in grads for g in pair])
    return loss


@dataclass
class TrainUpdate:
    update: int
    env_steps: int
    mean_episode_reward: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


@dataclass
class TrainReport:
    updates: list[TrainUpdate] = field(default_factory=list)
    total_env_steps: int = 0
    trailing_mean_episode_reward: float = float("nan")
    wall_clock_s: float = 0.0

    def to_csv(self) -> str:
        """Deterministic CSV of the per-update metrics (no timing columns)."""
        lines = ["update,env_steps,mean_episode_reward,policy_loss,value_loss,entropy,clip_fraction"]
        for u in self.updates:
            lines.append(
                f"{u.update},{u.env_steps},{u.mean_episode_reward!r},{u.policy_loss!r},"
                f"{u.value_loss!r},{u.entropy!r},{u.clip_fraction!r}"
            )
        return "\n".join(lines) + "\n"


def train(
    env_factory: Callable[[], DiscreteEnv],
    cfg: PpoConfig,
    *,
    checkpoint_path: str | None = None,
    checkpoint_interval: int = 0,
    trailing_window: int = 100,
) -> tuple[PolicyParams, TrainReport]:
    """Run the full training loop until ``total_steps`` transitions are consumed.

    With ``checkpoint_interval > 0`` the current weights are saved to
    ``checkpoint_path`` every that many updates (and always at the end when a
    path is given). Raises :class:`NumericError` as soon as any weight turns
    non-finite.
    """
    env = env_factory()
    params = init_policy(env.obs_dim, env.n_actions, cfg.hidden_sizes, cfg.seed)
    report = TrainReport()
    if cfg.total_steps == 0:
        if checkpoint_path is not None:
            save_policy(params, checkpoint_path)
        return params, report

    ss = np.random.SeedSequence(cfg.seed)
    env_seed_rng, sample_rng, perm_rng = (np.random.default_rng(c) for c in ss.spawn(3))
    collector = RolloutCollector(env, env_seed_rng)
    opt_policy = Adam(params.policy.param_tensors(), lr=cfg.learning_rate)
    opt_value = Adam(params.value.param_tensors(), lr=cfg.learning_rate)

    t0 = time.perf_counter()
    recent_episodes: list[float] = []
    steps_done = 0
    update = 0
    last_mean_ep = float("nan")
    while steps_done < cfg.total_steps:
        steps = min(cfg.rollout_steps, cfg.total_steps - steps_done)
        rollout = collector.collect(params, steps, sample_rng)
        steps_done += steps
        update += 1

        advantages, returns = compute_advantages(rollout, cfg.gamma, cfg.gae_lambda)
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

        stats_acc: dict[str, list[float]] = {
            "policy_loss": [], "value_loss": [], "entropy": [], "clip_fraction": []
        }
        for _ in range(cfg.epochs_per_update):
            perm = perm_rng.permutation(steps)
            for start in range(0, steps, cfg.minibatch_size):
                mb = perm[start : start + cfg.minibatch_size]
                pstats = _policy_minibatch_update(
                    params, opt_policy, rollout.obs[mb], rollout.actions[mb],
                    rollout.log_probs[mb], advantages[mb], cfg,
                )
                vloss = _value_minibatch_update(
                    params, opt_value, rollout.obs[mb], returns[mb], cfg
                )
                for key, val in pstats.items():
                    stats_acc[key].append(val)
                stats_acc["value_loss"].append(vloss)

        if not params.is_finite():
            raise NumericError(
                f"non-finite weights after update {update} (step {steps_done}); "
                "lower the learning rate or inspect the reward signal"
            )

        recent_episodes.extend(rollout.episode_rewards)
        if rollout.episode_rewards:
            last_mean_ep = float(np.mean(rollout.episode_rewards))
        report.updates.append(
            TrainUpdate(
                update=update,
                env_steps=steps_done,
                mean_episode_reward=last_mean_ep,
                policy_loss=float(np.mean(stats_acc["policy_loss"])),
                value_loss=float(np.mean(stats_acc["value_loss"])),
                entropy=float(np.mean(stats_acc["entropy"])),
                clip_fraction=float(np.mean(stats_acc["clip_fraction"])),
            )
        )
        if checkpoint_path is not None and checkpoint_interval > 0 and update % checkpoint_interval == 0:
            save_policy(params, checkpoint_path)

    report.total_env_steps = steps_done
    report.wall_clock_s = time.perf_counter() - t0
    if recent_episodes:
        tail = recent_episodes[-trailing_window:]
        report.trailing_mean_episode_reward = float(np.mean(tail))
    if checkpoint_path is not None:
        save_policy(params, checkpoint_path)
    return params, report


@dataclass(frozen=True)
class EpisodeRecord:
    reward: float
    final_team_perf: float
    mean_team_perf: float
    steps: int


def _episode_seeds(seed: int, episodes: int) -> list[int]:
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    return [int(s) for s in rng.integers(0, 2**63 - 1, size=episodes)]


def _run_episode(
    env: DiscreteEnv, choose: Callable[[np.ndarray], int], seed: int
) -> EpisodeRecord:
    obs = env.reset(seed)
    total = 0.0
    perfs: list[float] = []
    done = False
    steps = 0
    info: dict[str, Any] = {}
    while not done:
        obs, reward, done, info = env.step(choose(obs))
        total += reward
        if "team_perf_after" in info:
            perfs.append(info["team_perf_after"])
        steps += 1
    final_perf = perfs[-1] if perfs else float("nan")
    mean_perf = float(np.mean(perfs)) if perfs else float("nan")
    return EpisodeRecord(total, final_perf, mean_perf, steps)


def evaluate_policy(
    params: PolicyParams,
    env_config: EnvConfig,
    model: PerformanceModel,
    episodes: int,
    seed: int = 0,
    obs_mask: np.ndarray | None = None,
) -> list[EpisodeRecord]:
    """Greedy-action evaluation, one record per episode."""
    env = AllocationEnv(env_config, model, obs_mask=obs_mask)
    if params.obs_dim != env.obs_dim or params.n_actions != env.n_actions:
        raise ShapeMismatchError(
            f"policy ({params.obs_dim} obs, {params.n_actions} actions) does not match "
            f"environment ({env.obs_dim} obs, {env.n_actions} actions)"
        )
    return [
        _run_episode(env, lambda o: policy_action(params, o), s)
        for s in _episode_seeds(seed, episodes)
    ]


def evaluate_random(
    env_config: EnvConfig,
    model: PerformanceModel,
    episodes: int,
    seed: int = 0,
) -> list[EpisodeRecord]:
    """Uniform-random baseline over the same episode seed stream as
    :func:`evaluate_policy`, enabling paired comparisons."""
    env = AllocationEnv(env_config, model)
    action_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    n = env.n_actions
    return [
        _run_episode(env, lambda o: int(action_rng.integers(n)), s)
        for s in _episode_seeds(seed, episodes)
    ]


def save_policy(params: PolicyParams, path: str) -> None:
    """Write a versioned, shape-tagged JSON checkpoint (bit-exact round-trip)."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "obs_dim": params.obs_dim,
        "n_actions": params.n_actions,
        "policy": params.policy.to_dict(),
        "value": params.value.to_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_policy(
    path: str,
    expect_obs_dim: int | None = None,
    expect_n_actions: int | None = None,
) -> PolicyParams:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a policy checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {doc.get('version')} unsupported (want {CHECKPOINT_VERSION})"
        )
    try:
        params = PolicyParams(
            policy=Mlp.from_dict(doc["policy"]), value=Mlp.from_dict(doc["value"])
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    if expect_obs_dim is not None and params.obs_dim != expect_obs_dim:
        raise ShapeMismatchError(
            f"checkpoint expects {params.obs_dim}-dim observations, environment has {expect_obs_dim}"
        )
    if expect_n_actions is not None and params.n_actions != expect_n_actions:
        raise ShapeMismatchError(
            f"checkpoint has {params.n_actions} actions, environment has {expect_n_actions}"
        )
    return params

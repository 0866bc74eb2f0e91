"""Allocation strategies and the approval gate.

Covers the benchmark lineup: two fixed splits (equal, and a "negotiated"
split frozen from a one-step lookahead at episode start), a uniform-random
baseline, and three policy-driven variants that consume the subjective
channel, the objective channel, or both. Proposals can pass through an
approval gate that leaves the current assignment unchanged on rejection.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .env import Action, EnvConfig, TeamState, encode_observation, feasible_actions
from .perfmodel import PerformanceModel, operator_performance, predict_next_state, team_performance


class Strategy(enum.Enum):
    """How the next view assignment is chosen."""

    FIXED_EQUAL = "fixed_equal"
    FIXED_NEGOTIATED = "fixed_negotiated"
    RANDOM = "random"
    POLICY_SUBJECTIVE = "policy_subjective"
    POLICY_OBJECTIVE = "policy_objective"
    POLICY_FUSED = "policy_fused"

    @property
    def is_fixed(self) -> bool:
        return self in (Strategy.FIXED_EQUAL, Strategy.FIXED_NEGOTIATED)

    @property
    def is_policy(self) -> bool:
        return self in (
            Strategy.POLICY_SUBJECTIVE,
            Strategy.POLICY_OBJECTIVE,
            Strategy.POLICY_FUSED,
        )

    @property
    def uses_subjective(self) -> bool:
        return self in (Strategy.POLICY_SUBJECTIVE, Strategy.POLICY_FUSED)

    @property
    def uses_objective(self) -> bool:
        return self in (Strategy.POLICY_OBJECTIVE, Strategy.POLICY_FUSED)


@dataclass(frozen=True)
class ApprovalPolicy:
    """Gate between a proposal and its application.

    ``none`` always applies the proposal; ``simulated`` accepts with a fixed
    probability (default 0.6493, the empirical operator agreement rate);
    ``interactive`` defers to an explicit human decision.
    """

    kind: str = "none"
    accept_prob: float = 0.6493

    @classmethod
    def none(cls) -> "ApprovalPolicy":
        return cls(kind="none")

    @classmethod
    def simulated(cls, accept_prob: float = 0.6493) -> "ApprovalPolicy":
        if not 0.0 <= accept_prob <= 1.0:
            raise ValueError(f"accept_prob={accept_prob} outside [0, 1]")
        return cls(kind="simulated", accept_prob=accept_prob)

    @classmethod
    def interactive(cls) -> "ApprovalPolicy":
        return cls(kind="interactive")


@dataclass(frozen=True)
class AllocationProposal:
    current: Action
    proposed: Action
    predicted_gain: float


def observation_mask(strategy: Strategy, n_operators: int) -> np.ndarray:
    """Boolean keep-mask over the 3n observation for channel-restricted policies.

    Masked components are replaced by the neutral mid-scale value 0.5 before
    the policy sees them, so a subjective-only strategy is invariant to the
    objective channel and vice versa. View counts are always visible.
    """
    mask = np.ones(3 * n_operators, dtype=bool)
    if not strategy.uses_objective:
        mask[:n_operators] = False
    if not strategy.uses_subjective:
        mask[n_operators : 2 * n_operators] = False
    return mask


def predicted_team_performance(
    state: TeamState, action: Action, config: EnvConfig, model: PerformanceModel
) -> float:
    """Noise-free one-step lookahead of team performance under ``action``."""
    perfs = []
    for i, new_views in enumerate(action):
        dw = config.kappa * (new_views - int(state.views[i]))
        perfs.append(
            operator_performance(
                predict_next_state(float(state.s_subj[i]), dw),
                predict_next_state(float(state.s_obj[i]), dw),
                model,
            )
        )
    return team_performance(perfs)


def greedy_propose(
    state: TeamState, model: PerformanceModel, config: EnvConfig
) -> AllocationProposal:
    """Exhaustive one-step lookahead: argmax of predicted team performance.

    Ties prefer the smallest total view change, then lexicographic order,
    so repeated calls never churn the assignment gratuitously.
    """
    current = tuple(int(v) for v in state.views)
    best: Action | None = None
    best_perf = -np.inf
    best_change = np.inf
    for action in feasible_actions(config):
        perf = predicted_team_performance(state, action, config, model)
        change = sum(abs(a - c) for a, c in zip(action, current))
        if perf > best_perf or (perf == best_perf and change < best_change):
            best, best_perf, best_change = action, perf, change
    assert best is not None
    return AllocationProposal(current, best, best_perf - state.team_perf)


def propose(
    state: TeamState,
    strategy: Strategy,
    config: EnvConfig,
    model: PerformanceModel,
    *,
    policy=None,
    rng: np.random.Generator | None = None,
    frozen_split: Action | None = None,
    allow_greedy_fallback: bool = True,
) -> AllocationProposal:
    """Produce the next-assignment proposal for one allocation round.

    Fixed strategies return the episode's frozen split (``frozen_split``,
    falling back to the current assignment). Random draws uniformly from the
    feasible set. Policy strategies evaluate ``policy`` greedily on the
    channel-masked observation; without a policy they fall back to the
    one-step lookahead unless that fallback is disabled.
    """
    current = tuple(int(v) for v in state.views)
    if strategy.is_fixed:
        target = frozen_split if frozen_split is not None else current
        gain = (
            predicted_team_performance(state, target, config, model) - state.team_perf
        )
        return AllocationProposal(current, target, gain)
    if strategy is Strategy.RANDOM:
        if rng is None:
            raise ValueError("random strategy requires an rng")
        actions = feasible_actions(config)
        target = actions[int(rng.integers(len(actions)))]
        gain = predicted_team_performance(state, target, config, model) - state.team_perf
        return AllocationProposal(current, target, gain)

    # Policy-driven strategies.
    if policy is None:
        if not allow_greedy_fallback:
            raise ValueError(f"strategy {strategy.value} requires a trained policy")
        return greedy_propose(state, model, config)

    from .ppo import policy_action  # local import to keep module deps one-way

    obs = encode_observation(state, config)
    mask = observation_mask(strategy, config.n_operators)
    obs = np.where(mask, obs, 0.5)
    actions = feasible_actions(config)
    target = actions[policy_action(policy, obs)]
    gain = predicted_team_performance(state, target, config, model) - state.team_perf
    return AllocationProposal(current, target, gain)


def apply_approval(
    proposal: AllocationProposal,
    policy: ApprovalPolicy,
    *,
    decision: bool | None = None,
    rng: np.random.Generator | None = None,
) -> Action:
    """Resolve the approval gate: accepted -> proposed, rejected -> unchanged."""
    if policy.kind == "none":
        return proposal.proposed
    if policy.kind == "simulated":
        if rng is None:
            raise ValueError("simulated approval requires an rng")
        return proposal.proposed if rng.random() < policy.accept_prob else proposal.current
    if policy.kind == "interactive":
        if decision is None:
            raise ValueError("interactive approval requires a decision")
        return proposal.proposed if decision else proposal.current
    raise ValueError(f"unknown approval kind {policy.kind!r}")


class StrategyRunner:
    """Binds a strategy to one episode.

    Freezes the negotiated split from the initial state and carries the
    policy/rng so callers only pass the evolving state.
    """

    def __init__(
        self,
        strategy: Strategy,
        config: EnvConfig,
        model: PerformanceModel,
        *,
        policy=None,
        rng: np.random.Generator | None = None,
    ):
        self.strategy = strategy
        self.config = config
        self.model = model
        self.policy = policy
        self.rng = rng
        self._frozen: Action | None = None

    def start_episode(self, state: TeamState) -> None:
        if self.strategy is Strategy.FIXED_EQUAL:
            self._frozen = tuple(int(v) for v in state.views)
        elif self.strategy is Strategy.FIXED_NEGOTIATED:
            self._frozen = greedy_propose(state, self.model, self.config).proposed
        else:
            self._frozen = None

    def propose(self, state: TeamState) -> AllocationProposal:
        return propose(
            state,
            self.strategy,
            self.config,
            self.model,
            policy=self.policy,
            rng=self.rng,
            frozen_split=self._frozen,
        )

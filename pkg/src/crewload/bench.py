"""Simulation harness: strategy benchmarks and trained-vs-random validation.

``build_trial_matrix`` plays every strategy through full missions for a
roster of simulated teams and returns a teams-by-strategies performance
table ready for the stats battery. Columns are simulated independently
(per-team, per-column seed streams) so listing the same strategy twice
yields two noisy draws of the same condition rather than identical columns.

``validate_policy`` runs the paired design instead: trained policy and
uniform-random baseline see identical episode seeds, so their per-episode
differences isolate the policy effect.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocator import ApprovalPolicy, Strategy, StrategyRunner, apply_approval
from .env import EnvConfig, reset, step
from .errors import ConfigError
from .perfmodel import PerformanceModel
from .ppo import PolicyParams, evaluate_policy, evaluate_random
from .stats import TrialMatrix, paired_t


def run_mission(
    runner: StrategyRunner,
    config: EnvConfig,
    model: PerformanceModel,
    episode_seed: int,
    approval: ApprovalPolicy,
    rng: np.random.Generator,
) -> float:
    """One mission under a strategy; returns the mean per-round team performance.

    The mission ends early if team performance drops (the environment's
    termination rule), in which case the executed rounds still count.
    """
    state, _ = reset(config, model, episode_seed)
    runner.start_episode(state)
    perfs: list[float] = []
    while not state.terminated:
        proposal = runner.propose(state)
        action = apply_approval(proposal, approval, rng=rng)
        state, result = step(state, action, config, model, rng)
        perfs.append(result.info["team_perf_after"])
    return float(np.mean(perfs))


def _strategy_runner(
    name: str,
    config: EnvConfig,
    model: PerformanceModel,
    policy: PolicyParams | None,
    rng: np.random.Generator,
) -> StrategyRunner:
    strategy = Strategy(name)
    return StrategyRunner(strategy, config, model, policy=policy, rng=rng)


def build_trial_matrix(
    strategies: list[str],
    teams: int,
    episodes_per_team: int,
    config: EnvConfig,
    model: PerformanceModel,
    *,
    policy: PolicyParams | None = None,
    approval: ApprovalPolicy | None = None,
    seed: int = 0,
) -> TrialMatrix:
    """Simulate ``teams`` x ``strategies`` cells; each cell averages
    ``episodes_per_team`` missions."""
    if teams < 2:
        raise ConfigError("need at least 2 teams")
    if len(strategies) < 2:
        raise ConfigError("need at least 2 strategies")
    gate = approval if approval is not None else ApprovalPolicy.none()
    values = np.zeros((teams, len(strategies)))
    for team in range(teams):
        for col, name in enumerate(strategies):
            cell_ss = np.random.SeedSequence(entropy=(seed, team, col))
            rng = np.random.default_rng(cell_ss)
            runner = _strategy_runner(name, config, model, policy, rng)
            episode_seeds = rng.integers(0, 2**63 - 1, size=episodes_per_team)
            scores = [
                run_mission(runner, config, model, int(s), gate, rng) for s in episode_seeds
            ]
            values[team, col] = float(np.mean(scores))
    row_labels = tuple(f"team{t + 1:02d}" for t in range(teams))
    col_labels = tuple(_unique_labels(strategies))
    return TrialMatrix(values, row_labels, col_labels)


def _unique_labels(strategies: list[str]) -> list[str]:
    seen: dict[str, int] = {}
    labels = []
    for name in strategies:
        seen[name] = seen.get(name, 0) + 1
        labels.append(name if seen[name] == 1 else f"{name}#{seen[name]}")
    return labels


@dataclass(frozen=True)
class ValidationReport:
    """Paired comparison of a trained policy against the random baseline."""

    episodes: int
    seed: int
    trained_mean_reward: float
    random_mean_reward: float
    trained_mean_perf: float
    random_mean_perf: float
    perf_t_stat: float | None
    perf_p_value: float | None
    reward_t_stat: float | None
    reward_p_value: float | None
    insufficient_n: bool

    def to_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "seed": self.seed,
            "trained_mean_reward": self.trained_mean_reward,
            "random_mean_reward": self.random_mean_reward,
            "trained_mean_team_perf": self.trained_mean_perf,
            "random_mean_team_perf": self.random_mean_perf,
            "team_perf_paired_t": self.perf_t_stat,
            "team_perf_p_value": self.perf_p_value,
            "reward_paired_t": self.reward_t_stat,
            "reward_p_value": self.reward_p_value,
            "insufficient_n": self.insufficient_n,
        }


def validate_policy(
    params: PolicyParams,
    config: EnvConfig,
    model: PerformanceModel,
    episodes: int,
    seed: int = 0,
) -> tuple[ValidationReport, np.ndarray]:
    """Evaluate trained vs random on identical episode seeds.

    Returns the summary report plus the per-episode table with columns
    (trained_reward, random_reward, trained_perf, random_perf).
    """
    trained = evaluate_policy(params, config, model, episodes, seed)
    baseline = evaluate_random(config, model, episodes, seed)
    table = np.column_stack(
        [
            [r.reward for r in trained],
            [r.reward for r in baseline],
            [r.mean_team_perf for r in trained],
            [r.mean_team_perf for r in baseline],
        ]
    )
    insufficient = episodes < 2
    if insufficient:
        perf_t = perf_p = rew_t = rew_p = None
    else:
        perf_t, _, perf_p, _ = paired_t(table[:, 2], table[:, 3])
        rew_t, _, rew_p, _ = paired_t(table[:, 0], table[:, 1])
    report = ValidationReport(
        episodes=episodes,
        seed=seed,
        trained_mean_reward=float(table[:, 0].mean()),
        random_mean_reward=float(table[:, 1].mean()),
        trained_mean_perf=float(table[:, 2].mean()),
        random_mean_perf=float(table[:, 3].mean()),
        perf_t_stat=perf_t,
        perf_p_value=perf_p,
        reward_t_stat=rew_t,
        reward_p_value=rew_p,
        insufficient_n=insufficient,
    )
    return report, table


def validation_csv(table: np.ndarray) -> str:
    lines = ["episode,trained_reward,random_reward,trained_team_perf,random_team_perf"]
    for i, row in enumerate(table):
        lines.append(f"{i},{row[0]!r},{row[1]!r},{row[2]!r},{row[3]!r}")
    return "\n".join(lines) + "\n"

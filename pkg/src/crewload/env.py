"""Decision environment for view allocation across a team of simulated operators.

Each episode is one mission of ``sets_per_mission`` allocation rounds. A step
assigns every operator an integer number of camera views; the workload of both
channels of operator ``i`` then shifts by ``kappa * (new_views_i - old_views_i)``
(plus optional Gaussian noise), performance is re-evaluated through the
performance model, and the team earns 0.33 reward whenever team performance
did not decrease. An episode terminates on an infeasible assignment, on a
team-performance drop, or after the final round.

One environment instance is single-threaded; run parallel instances with
independently seeded generators.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .perfmodel import (
    ISA_MAX,
    ISA_MIN,
    PerformanceModel,
    clamp01,
    operator_performance,
    predict_next_state,
    team_performance,
)

STEP_REWARD = 0.33

Action = tuple[int, ...]


@dataclass(frozen=True)
class EnvConfig:
    """Static environment parameters.

    ``kappa`` is the workload shift per camera view; ``noise_sigma`` adds
    zero-mean Gaussian noise per channel per step (0 disables it).
    ``max_views=None`` defaults to ``total_views - (n_operators - 1)`` so
    every other operator can still hold its minimum.
    """

    n_operators: int = 2
    total_views: int = 6
    min_views: int = 1
    max_views: int | None = None
    sets_per_mission: int = 3
    kappa: float = 0.1
    noise_sigma: float = 0.0
    gamma: float = 0.99
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_operators < 2:
            raise ValueError("need at least 2 operators")
        if self.max_views is None:
            object.__setattr__(
                self, "max_views", self.total_views - (self.n_operators - 1) * self.min_views
            )
        if self.min_views < 0 or self.max_views < self.min_views:
            raise ValueError(f"invalid view bounds [{self.min_views}, {self.max_views}]")
        if not (
            self.n_operators * self.min_views
            <= self.total_views
            <= self.n_operators * self.max_views
        ):
            raise ValueError(
                f"total_views={self.total_views} not reachable with "
                f"{self.n_operators} operators in [{self.min_views}, {self.max_views}]"
            )
        if self.sets_per_mission < 1:
            raise ValueError("sets_per_mission must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")


@dataclass
class TeamState:
    """Mutable per-episode state: one workload pair and view count per operator."""

    s_subj: np.ndarray
    s_obj: np.ndarray
    views: np.ndarray
    set_index: int = 0
    team_perf: float = 0.0
    terminated: bool = False

    def copy(self) -> "TeamState":
        return TeamState(
            self.s_subj.copy(),
            self.s_obj.copy(),
            self.views.copy(),
            self.set_index,
            self.team_perf,
            self.terminated,
        )


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    info: dict[str, Any] = field(default_factory=dict)


def equal_split(total: int, n: int) -> Action:
    """Split ``total`` views as evenly as possible, remainder to the lowest indices."""
    base, extra = divmod(total, n)
    return tuple(base + (1 if i < extra else 0) for i in range(n))


def feasible_actions(config: EnvConfig) -> list[Action]:
    """All integer assignments of ``total_views`` within the per-operator bounds.

    Returned in lexicographic order so the list doubles as a stable index
    space for a discrete policy head. (The set does not depend on the
    current state: bounds and the view total are fixed per config.)
    """
    return [
        combo
        for combo in itertools.product(
            range(config.min_views, config.max_views + 1), repeat=config.n_operators
        )
        if sum(combo) == config.total_views
    ]


def is_feasible(action: Sequence[int], config: EnvConfig) -> bool:
    return sum(action) == config.total_views and all(
        config.min_views <= v <= config.max_views for v in action
    )


def team_perf_of(state: TeamState, model: PerformanceModel) -> float:
    perfs = [
        operator_performance(float(state.s_subj[i]), float(state.s_obj[i]), model)
        for i in range(len(state.views))
    ]
    return team_performance(perfs)


def reset(
    config: EnvConfig, model: PerformanceModel, seed: int | None = None
) -> tuple[TeamState, np.ndarray]:
    """Start an episode: i.i.d. uniform workloads, equal view split, round 0."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    n = config.n_operators
    s_subj = rng.uniform(0.0, 1.0, size=n)
    s_obj = rng.uniform(0.0, 1.0, size=n)
    views = np.array(equal_split(config.total_views, n), dtype=np.int64)
    state = TeamState(s_subj=s_subj, s_obj=s_obj, views=views)
    state.team_perf = team_perf_of(state, model)
    return state, encode_observation(state, config)


def encode_observation(state: TeamState, config: EnvConfig) -> np.ndarray:
    """Flatten to (s_obj_1..n, s_subj_1..n, views_1..n / total_views); length 3n."""
    return np.concatenate(
        [state.s_obj, state.s_subj, state.views / config.total_views]
    ).astype(np.float64)


def decode_observation(
    obs: np.ndarray, config: EnvConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`encode_observation`: (s_obj, s_subj, views)."""
    n = config.n_operators
    if obs.shape != (3 * n,):
        raise ValueError(f"observation shape {obs.shape} != ({3 * n},)")
    views = np.rint(obs[2 * n :] * config.total_views).astype(np.int64)
    return obs[:n].copy(), obs[n : 2 * n].copy(), views


def step(
    state: TeamState,
    action: Sequence[int],
    config: EnvConfig,
    model: PerformanceModel,
    rng: np.random.Generator | None = None,
) -> tuple[TeamState, StepResult]:
    """Apply one allocation round and return (next_state, result).

    An infeasible action terminates immediately with reward 0 and leaves the
    team untouched. Otherwise both workload channels of every operator shift
    by ``kappa * (new_views - old_views)`` plus optional noise, and the
    reward is 0.33 iff the new team performance is >= the old one (a tie
    still counts as non-decreasing). A performance drop also terminates, as
    does reaching ``sets_per_mission`` rounds.
    """
    if state.terminated:
        raise RuntimeError("step() called on a terminated episode")

    perf_before = state.team_perf
    if not is_feasible(action, config):
        nxt = state.copy()
        nxt.terminated = True
        info = {
            "infeasible": True,
            "team_perf_before": perf_before,
            "team_perf_after": perf_before,
        }
        return nxt, StepResult(encode_observation(nxt, config), 0.0, True, info)

    action_arr = np.asarray(action, dtype=np.int64)
    delta_w = config.kappa * (action_arr - state.views)

    nxt = state.copy()
    nxt.views = action_arr
    n = config.n_operators
    noise_subj = noise_obj = np.zeros(n)
    if config.noise_sigma > 0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        noise_subj = rng.normal(0.0, config.noise_sigma, size=n)
        noise_obj = rng.normal(0.0, config.noise_sigma, size=n)
    for i in range(n):
        nxt.s_subj[i] = clamp01(predict_next_state(state.s_subj[i], delta_w[i]) + noise_subj[i])
        nxt.s_obj[i] = clamp01(predict_next_state(state.s_obj[i], delta_w[i]) + noise_obj[i])

    operator_perfs = [
        operator_performance(float(nxt.s_subj[i]), float(nxt.s_obj[i]), model) for i in range(n)
    ]
    perf_after = team_performance(operator_perfs)
    nxt.team_perf = perf_after
    nxt.set_index = state.set_index + 1

    improved = perf_after >= perf_before
    reward = STEP_REWARD if improved else 0.0
    terminated = (not improved) or nxt.set_index >= config.sets_per_mission
    nxt.terminated = terminated

    info = {
        "infeasible": False,
        "team_perf_before": perf_before,
        "team_perf_after": perf_after,
        "operator_perf": operator_perfs,
    }
    return nxt, StepResult(encode_observation(nxt, config), reward, terminated, info)


@dataclass(frozen=True)
class IsaBias:
    """Optional response-distortion model: with ``probability``, shift the
    reported score by ``offset`` (result clamped to the five-point scale)."""

    probability: float = 0.0
    offset: int = -1


def simulate_isa_response(
    s_subj: float,
    bias: IsaBias | None = None,
    rng: np.random.Generator | None = None,
) -> int:
    """Quantize a subjective workload to the five-point scale: round(4*s) - 2.

    Rounding is half-up so the mapping is deterministic across platforms.
    The default has no distortion; a bias model needs an rng.
    """
    score = int(np.floor(4.0 * s_subj + 0.5)) - 2
    if bias is not None and bias.probability > 0:
        if rng is None:
            raise ValueError("a bias model requires an rng")
        if rng.random() < bias.probability:
            score += bias.offset
    return max(ISA_MIN, min(ISA_MAX, score))


class AllocationEnv:
    """Stateful wrapper exposing the index-based protocol the trainer consumes.

    Actions are indices into :func:`feasible_actions`; episodes auto-expose
    ``terminated`` and refuse further steps until :meth:`reset`.
    """

    def __init__(
        self,
        config: EnvConfig,
        model: PerformanceModel,
        obs_mask: np.ndarray | None = None,
    ):
        self.config = config
        self.model = model
        self.actions = feasible_actions(config)
        self.obs_mask = obs_mask
        self._state: TeamState | None = None
        self._rng = np.random.default_rng(config.seed)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def obs_dim(self) -> int:
        return 3 * self.config.n_operators

    @property
    def state(self) -> TeamState:
        if self._state is None:
            raise RuntimeError("reset() has not been called")
        return self._state

    def _masked(self, obs: np.ndarray) -> np.ndarray:
        if self.obs_mask is not None:
            obs = obs.copy()
            obs[~self.obs_mask] = 0.5
        return obs

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._state, obs = reset(self.config, self.model, seed)
        return self._masked(obs)

    def step(self, action_index: int) -> tuple[np.ndarray, float, bool, dict[str, Any]]:
        self._state, result = step(
            self.state, self.actions[action_index], self.config, self.model, self._rng
        )
        return self._masked(result.observation), result.reward, result.terminated, result.info


def trace_header(config: EnvConfig, seed: int) -> dict[str, Any]:
    """First JSONL line of an episode trace: seed + static config."""
    return {
        "seed": seed,
        "n_operators": config.n_operators,
        "total_views": config.total_views,
        "min_views": config.min_views,
        "max_views": config.max_views,
        "sets_per_mission": config.sets_per_mission,
        "kappa": config.kappa,
        "noise_sigma": config.noise_sigma,
    }


def trace_step(state: TeamState, action: Sequence[int], result: StepResult) -> dict[str, Any]:
    """One JSONL line per step: post-step state, the action, reward, termination."""
    return {
        "s_subj": [float(x) for x in state.s_subj],
        "s_obj": [float(x) for x in state.s_obj],
        "views": [int(x) for x in state.views],
        "set_index": state.set_index,
        "action": [int(a) for a in action],
        "reward": result.reward,
        "terminated": result.terminated,
    }


def write_trace(path: str, header: dict[str, Any], steps: Iterable[dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for record in steps:
            fh.write(json.dumps(record) + "\n")


def read_trace(path: str) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines:
        raise ValueError(f"empty trace file: {path}")
    return lines[0], lines[1:]

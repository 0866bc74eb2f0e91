"""One YAML config file for the whole toolkit.

Sections (all optional, all keys defaulted): ``performance_model``, ``env``,
``ppo``, ``session``, ``bench``. CLI flags override file values, which
override defaults. See ``configs/default.yaml`` for the documented schema.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import yaml

from .allocator import Strategy
from .env import EnvConfig
from .errors import ConfigError
from .perfmodel import ChannelParams, PerformanceModel
from .ppo import PpoConfig
from .session.engine import SessionConfig


@dataclass(frozen=True)
class BenchConfig:
    strategies: tuple[str, ...] = ("fixed_equal", "random", "policy_fused")
    teams: int = 16
    episodes_per_team: int = 8
    approval: str = "none"  # none | simulated
    accept_prob: float = 0.6493
    seed: int = 0

    def __post_init__(self) -> None:
        if self.teams < 2:
            raise ConfigError("bench needs at least 2 teams")
        if len(self.strategies) < 2:
            raise ConfigError("bench needs at least 2 strategies")
        for name in self.strategies:
            try:
                Strategy(name)
            except ValueError as exc:
                valid = ", ".join(s.value for s in Strategy)
                raise ConfigError(f"unknown strategy {name!r}; valid: {valid}") from exc
        if self.episodes_per_team < 1:
            raise ConfigError("episodes_per_team must be >= 1")
        if self.approval not in ("none", "simulated"):
            raise ConfigError("bench approval must be 'none' or 'simulated'")


@dataclass(frozen=True)
class AppConfig:
    model: PerformanceModel = field(default_factory=PerformanceModel)
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    session: SessionConfig = field(default_factory=SessionConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)


def _build(cls, section: Mapping[str, Any], where: str):
    try:
        return cls(**section)
    except TypeError as exc:
        raise ConfigError(f"bad key in [{where}]: {exc}") from exc
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"invalid [{where}] config: {exc}") from exc


def _channel(section: Mapping[str, Any], where: str) -> ChannelParams:
    return _build(ChannelParams, section, where)


def config_from_mapping(doc: Mapping[str, Any]) -> AppConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("config root must be a mapping")
    known = {"performance_model", "env", "ppo", "session", "bench"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    pm = dict(doc.get("performance_model") or {})
    subjective = _channel(dict(pm.pop("subjective", {}) or {}), "performance_model.subjective")
    objective = _channel(dict(pm.pop("objective", {}) or {}), "performance_model.objective")
    model = _build(
        PerformanceModel,
        {"subjective": subjective, "objective": objective, **pm},
        "performance_model",
    )

    env = _build(EnvConfig, dict(doc.get("env") or {}), "env")

    ppo_section = dict(doc.get("ppo") or {})
    if "hidden_sizes" in ppo_section:
        ppo_section["hidden_sizes"] = tuple(ppo_section["hidden_sizes"])
    ppo = _build(PpoConfig, ppo_section, "ppo")

    session_section = dict(doc.get("session") or {})
    if "task_plan" in session_section:
        session_section["task_plan"] = tuple(session_section["task_plan"])
    session = _build(SessionConfig, session_section, "session")

    bench_section = dict(doc.get("bench") or {})
    if "strategies" in bench_section:
        bench_section["strategies"] = tuple(bench_section["strategies"])
    bench = _build(BenchConfig, bench_section, "bench")

    return AppConfig(model=model, env=env, ppo=ppo, session=session, bench=bench)


def load_config(path: str | None = None, overrides: Mapping[str, Any] | None = None) -> AppConfig:
    """Load the config file (defaults when ``path`` is None) and apply
    dotted-key overrides like ``{"ppo.total_steps": 1000}``."""
    doc: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if loaded is not None:
            if not isinstance(loaded, dict):
                raise ConfigError(f"{path} must contain a mapping at top level")
            doc = loaded
    if overrides:
        for dotted, value in overrides.items():
            parts = dotted.split(".")
            node = doc
            for part in parts[:-1]:
                node = node.setdefault(part, {})
                if not isinstance(node, dict):
                    raise ConfigError(f"override {dotted!r} conflicts with scalar section")
            node[parts[-1]] = value
    return config_from_mapping(doc)


def config_snapshot(cfg: AppConfig) -> dict[str, Any]:
    """JSON-friendly dump of the effective configuration (for run manifests)."""

    def plain(obj: Any) -> Any:
        if hasattr(obj, "__dataclass_fields__"):
            return {k: plain(getattr(obj, k)) for k in obj.__dataclass_fields__}
        if isinstance(obj, (list, tuple)):
            return [plain(v) for v in obj]
        return obj

    return {
        "performance_model": plain(cfg.model),
        "env": plain(cfg.env),
        "ppo": plain(cfg.ppo),
        "session": plain(cfg.session),
        "bench": plain(cfg.bench),
    }

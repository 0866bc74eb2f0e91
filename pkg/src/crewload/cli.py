"""Single command-line entry point.

Subcommands: ``train`` (fit the allocation policy), ``validate`` (paired
trained-vs-random evaluation), ``bench`` (strategy comparison matrix +
stats battery), ``stats`` (ANOVA battery on an existing CSV), ``serve``
(live session service), ``replay`` (check a session log).

Every command honors ``--seed``, writes its outputs plus a ``manifest.json``
into a per-run directory, and exits with 0 on success, 2 on configuration
errors, 3 on IO errors, and 4 on numeric failures.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import __version__
from .allocator import ApprovalPolicy
from .bench import build_trial_matrix, validate_policy, validation_csv
from .config import AppConfig, config_snapshot, load_config
from .env import AllocationEnv
from .errors import CheckpointError, ConfigError, NumericError
from .ppo import load_policy, train
from .session.replay import ReplayError, replay_file
from .stats import TrialMatrix, analyze

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _parse_overrides(pairs: Sequence[str]) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects section.key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        overrides[key.strip()] = yaml.safe_load(raw)
    return overrides


def _load_app_config(args: argparse.Namespace) -> AppConfig:
    overrides = _parse_overrides(getattr(args, "set", []) or [])
    cfg = load_config(getattr(args, "config", None), overrides)
    seed = getattr(args, "seed", None)
    if seed is not None:
        cfg = AppConfig(
            model=cfg.model,
            env=replace(cfg.env, seed=seed),
            ppo=replace(cfg.ppo, seed=seed),
            session=replace(cfg.session, seed=seed),
            bench=replace(cfg.bench, seed=seed),
        )
    return cfg


def _run_dir(args: argparse.Namespace, command: str, seed: int) -> Path:
    if getattr(args, "out", None):
        path = Path(args.out)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
        path = Path("out") / f"{command}-{stamp}-seed{seed}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(
    run_dir: Path, command: str, args_ns: argparse.Namespace, cfg: AppConfig | None,
    seed: int, outputs: list[str], extra: dict[str, Any] | None = None,
) -> None:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "seed": seed,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "outputs": outputs,
    }
    if cfg is not None:
        manifest["config"] = config_snapshot(cfg)
    if extra:
        manifest.update(extra)
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_app_config(args)
    ppo_cfg = cfg.ppo
    if args.total_steps is not None:
        ppo_cfg = replace(ppo_cfg, total_steps=args.total_steps)
    run_dir = _run_dir(args, "train", ppo_cfg.seed)
    checkpoint = run_dir / "policy.json"
    params, report = train(
        lambda: AllocationEnv(cfg.env, cfg.model),
        ppo_cfg,
        checkpoint_path=str(checkpoint),
        checkpoint_interval=args.checkpoint_interval,
    )
    metrics = run_dir / "metrics.csv"
    metrics.write_text(report.to_csv())
    _write_manifest(
        run_dir, "train", args, cfg, ppo_cfg.seed,
        [checkpoint.name, metrics.name],
        {"total_env_steps": report.total_env_steps,
         "trailing_mean_episode_reward": report.trailing_mean_episode_reward,
         "wall_clock_s": report.wall_clock_s},
    )
    print(f"trained {report.total_env_steps} steps in {report.wall_clock_s:.1f}s")
    print(f"trailing mean episode reward: {report.trailing_mean_episode_reward:.4f}")
    print(f"checkpoint: {checkpoint}")
    print(f"metrics: {metrics}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = _load_app_config(args)
    env = AllocationEnv(cfg.env, cfg.model)
    params = load_policy(args.checkpoint, env.obs_dim, env.n_actions)
    seed = args.seed if args.seed is not None else cfg.env.seed
    run_dir = _run_dir(args, "validate", seed)
    report, table = validate_policy(params, cfg.env, cfg.model, args.episodes, seed)
    (run_dir / "validation.csv").write_text(validation_csv(table))
    (run_dir / "validation.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    _write_manifest(run_dir, "validate", args, cfg, seed,
                    ["validation.csv", "validation.json"],
                    {"checkpoint": args.checkpoint})
    print(f"episodes: {report.episodes}")
    print(f"mean team perf: trained {report.trained_mean_perf:.4f} "
          f"vs random {report.random_mean_perf:.4f}")
    print(f"mean reward:    trained {report.trained_mean_reward:.4f} "
          f"vs random {report.random_mean_reward:.4f}")
    if report.insufficient_n:
        print("paired test: skipped (insufficient n)")
    else:
        print(f"paired t (team perf): t={report.perf_t_stat:.3f} p={report.perf_p_value:.3e}")
        print(f"paired t (reward):    t={report.reward_t_stat:.3f} p={report.reward_p_value:.3e}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _load_app_config(args)
    bench = cfg.bench
    if args.strategies:
        bench = replace(bench, strategies=tuple(args.strategies.split(",")))
    if args.teams is not None:
        bench = replace(bench, teams=args.teams)
    if args.episodes_per_team is not None:
        bench = replace(bench, episodes_per_team=args.episodes_per_team)
    policy = None
    if args.checkpoint:
        env = AllocationEnv(cfg.env, cfg.model)
        policy = load_policy(args.checkpoint, env.obs_dim, env.n_actions)
    approval = (
        ApprovalPolicy.simulated(bench.accept_prob)
        if bench.approval == "simulated"
        else ApprovalPolicy.none()
    )
    run_dir = _run_dir(args, "bench", bench.seed)
    matrix = build_trial_matrix(
        list(bench.strategies), bench.teams, bench.episodes_per_team,
        cfg.env, cfg.model, policy=policy, approval=approval, seed=bench.seed,
    )
    from .stats import normalize_rows

    normalized = normalize_rows(matrix)
    report = analyze(normalized, alpha=args.alpha,
                     notes=["rows normalized by team mean before analysis"])
    (run_dir / "matrix.csv").write_text(matrix.to_csv())
    (run_dir / "matrix_normalized.csv").write_text(normalized.to_csv())
    (run_dir / "report.json").write_text(report.to_json())
    (run_dir / "report.txt").write_text(report.to_text())
    _write_manifest(run_dir, "bench", args, cfg, bench.seed,
                    ["matrix.csv", "matrix_normalized.csv", "report.json", "report.txt"])
    print(report.to_text())
    print(f"outputs in {run_dir}")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    matrix = TrialMatrix.read_csv(args.csv)
    column_sets = [cs.split(",") for cs in args.columns] if args.columns else [list(matrix.col_labels)]
    seed = args.seed if args.seed is not None else 0
    run_dir = _run_dir(args, "stats", seed)
    outputs = []
    for i, columns in enumerate(column_sets):
        selected = matrix.select(columns)
        report = analyze(selected, alpha=args.alpha)
        stem = f"report-{i + 1}" if len(column_sets) > 1 else "report"
        (run_dir / f"{stem}.json").write_text(report.to_json())
        (run_dir / f"{stem}.txt").write_text(report.to_text())
        outputs += [f"{stem}.json", f"{stem}.txt"]
        print(report.to_text())
    _write_manifest(run_dir, "stats", args, None, seed, outputs, {"csv": args.csv})
    print(f"outputs in {run_dir}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .session.service import create_app

    cfg = _load_app_config(args)
    policy = None
    if args.checkpoint:
        policy = load_policy(args.checkpoint)
    app = create_app(
        logs_dir=args.logs_dir,
        model=cfg.model,
        policy=policy,
        default_config=cfg.session,
        frontend_dir=args.frontend,
    )
    print(f"serving on http://{args.host}:{args.port} (logs in {args.logs_dir})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    result = replay_file(args.log)
    print(f"events: {result.events}")
    print(f"sets: {result.sets_seen}")
    print(f"duration: {result.duration_ms} ms")
    print(f"team total: {result.team_total}")
    print(f"per-operator: {result.per_operator}")
    print(f"final assignment: {list(result.final_assignment)}")
    print(f"clicks: {result.clicks}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crewload",
        description="Workload-aware view allocation: training, benchmarking, stats, live sessions.",
    )
    parser.add_argument("--version", action="version", version=f"crewload {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="YAML config file (see configs/default.yaml)")
        p.add_argument("--seed", type=int, help="seed override for every component")
        p.add_argument("--out", help="output directory (default: out/<cmd>-<stamp>-seed<N>)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="config override, e.g. --set ppo.total_steps=1000")

    p = sub.add_parser("train", help="train the allocation policy")
    common(p)
    p.add_argument("--total-steps", type=int, dest="total_steps")
    p.add_argument("--checkpoint-interval", type=int, default=0,
                   help="save every N updates (0: only at the end)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("validate", help="paired trained-vs-random evaluation")
    common(p)
    p.add_argument("checkpoint", help="policy checkpoint from `crewload train`")
    p.add_argument("--episodes", type=int, default=10_000)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="simulate strategies and run the stats battery")
    common(p)
    p.add_argument("--strategies", help="comma list, e.g. fixed_equal,random,policy_fused")
    p.add_argument("--teams", type=int)
    p.add_argument("--episodes-per-team", type=int, dest="episodes_per_team")
    p.add_argument("--checkpoint", help="policy for the policy_* strategies")
    p.add_argument("--alpha", type=float, default=0.1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stats", help="ANOVA battery on a CSV score table")
    common(p)
    p.add_argument("csv", help="CSV: header = condition labels, first column = team id")
    p.add_argument("--columns", action="append",
                   help="comma list of columns forming one analysis (repeatable)")
    p.add_argument("--alpha", type=float, default=0.1)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("serve", help="run the live session service")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--logs-dir", default="session-logs")
    p.add_argument("--checkpoint", help="policy driving adaptive tasks (default: lookahead)")
    p.add_argument("--frontend", help="built operator-console directory to serve at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="validate and summarize a session log")
    p.add_argument("log", help="JSONL event log")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReplayError as exc:
        print(f"replay error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

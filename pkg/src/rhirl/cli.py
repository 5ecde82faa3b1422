"""Operator surface: demo generation, training, evaluation, transfer,
horizon ablation, and the duration-growth bound check.

All commands are driven by one JSON config plus a few sweep overrides, and
every run is reproducible from (config, seed).  Exit codes: 2 bad config or
usage, 3 demo generation below the sanity floor, 4 environment/demo file
mismatch, 5 numeric failure (checkpoint preserved).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import RunConfig, load_config
from .costnet import load_params
from .demos import generate_demos, load_demos, save_demos
from .errors import FormatError, GenerationError, NumericError, UsageError
from .evaluation import (REPORT_FIELDS, ablate_horizon, evaluate_policy,
                         final_smoothed_return, score_ratio, steps_to_plateau,
                         transfer_eval, tv_trend)
from .serial import write_csv, write_json, write_jsonl
from .trainer import METRIC_FIELDS, load_training_state, save_training_checkpoint, train


def _ensure_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _noise_tag(level: float) -> str:
    return format(level, "g")


def cmd_gen_demos(args) -> int:
    cfg = load_config(args.config)
    level = args.noise if args.noise is not None else cfg.demo["noise_level"]
    count = args.count if args.count is not None else cfg.demo["count"]
    demos = generate_demos(cfg.env, level, count, cfg.expert_controller,
                           cfg.seed, workers=args.workers)
    out = Path(args.out) if args.out else \
        _ensure_dir(Path(cfg.paths["demos"])) / f"{cfg.env}_noise{_noise_tag(level)}.demos"
    _ensure_dir(out.parent)
    save_demos(demos, out)
    print(f"wrote {demos.count} demos to {out}")
    print(f"expert mean return {demos.expert_mean_return:.2f} "
          f"+/- {demos.expert_std_return:.2f} (random-policy floor "
          f"{demos.floor_return:.2f}) at noise {level}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    demos = load_demos(args.demos, expect_env=cfg.env)
    out = Path(args.out) if args.out else \
        _ensure_dir(Path(cfg.paths["checkpoints"])) / f"{cfg.env}_seed{cfg.seed}.ckpt"
    _ensure_dir(out.parent)
    train_cfg = cfg.train_config()
    resume = None
    if args.resume:
        _, _, resume = load_training_state(args.resume, expect_env=cfg.env)
        if resume is None:
            raise FormatError(f"{args.resume}: checkpoint has no trainer state")
    result = train(train_cfg, demos, checkpoint_path=str(out), resume=resume)
    save_training_checkpoint(result.net, result.opt, result.episodes_done,
                             result.env_steps, train_cfg, str(out))
    reports = _ensure_dir(Path(cfg.paths["reports"]))
    stem = f"{cfg.env}_seed{cfg.seed}_metrics"
    write_csv(reports / f"{stem}.csv", METRIC_FIELDS, result.metrics)
    write_jsonl(reports / f"{stem}.jsonl", result.metrics)
    for row in result.metrics:
        if row["eval_return"] is not None:
            ratio = score_ratio(row["eval_return"], demos.expert_mean_return,
                                demos.floor_return)
            print(f"episode {row['episode']:>3}  env_steps {row['env_steps']:>9}  "
                  f"eval_return {row['eval_return']:.2f}  ratio {ratio:.3f}")
    print(f"wrote checkpoint {out} and metrics {reports / (stem + '.csv')} "
          f"({result.env_steps} env steps)")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    demos = load_demos(args.demos, expect_env=cfg.env)
    net, _, _ = load_params(args.ckpt, expect_env=cfg.env)
    levels = args.noise if args.noise else cfg.eval["noise_levels"]
    rows = []
    for idx, level in enumerate(levels):
        report = evaluate_policy(net, cfg.env, level, cfg.eval["episodes"],
                                 cfg.controller, cfg.seed,
                                 demos.expert_mean_return, demos.floor_return,
                                 context=idx, workers=args.workers)
        rows.append(report.to_row())
        print(f"noise {level:>4}: mean return {report.mean_return:.2f} "
              f"+/- {report.std_return:.2f}, ratio {report.ratio:.3f} "
              f"({report.wall_clock:.1f}s)")
    reports = _ensure_dir(Path(cfg.paths["reports"]))
    write_csv(reports / "eval.csv", REPORT_FIELDS, rows)
    write_json(reports / "eval.json", rows)
    print(f"wrote {reports / 'eval.csv'}")
    return 0


def cmd_eval_transfer(args) -> int:
    cfg = load_config(args.config)
    demos = load_demos(args.demos, expect_env=cfg.env)
    net, _, _ = load_params(args.ckpt, expect_env=cfg.env)
    base = evaluate_policy(net, cfg.env, 0.0, cfg.eval["episodes"], cfg.controller,
                           cfg.seed, demos.expert_mean_return, demos.floor_return,
                           context=99, workers=args.workers)
    levels = args.noise if args.noise else [0.2, 0.5]
    reports_list = transfer_eval(net, cfg.env, levels, cfg.eval["episodes"],
                                 cfg.controller, cfg.seed, demos.expert_mean_return,
                                 demos.floor_return, workers=args.workers)
    rows = [base.to_row()] + [r.to_row() for r in reports_list]
    print(f"noise-free ratio {base.ratio:.3f}")
    for rep in reports_list:
        retained = rep.ratio / base.ratio if base.ratio > 0 else float("nan")
        print(f"transfer to noise {rep.noise_level}: ratio {rep.ratio:.3f} "
              f"(retained {retained:.2f} of noise-free)")
    reports = _ensure_dir(Path(cfg.paths["reports"]))
    write_csv(reports / "transfer.csv", REPORT_FIELDS, rows)
    write_json(reports / "transfer.json", rows)
    print(f"wrote {reports / 'transfer.csv'}")
    return 0


def cmd_ablate_k(args) -> int:
    cfg = load_config(args.config)
    demos = load_demos(args.demos, expect_env=cfg.env)
    seeds = args.seeds if args.seeds else [cfg.seed, cfg.seed + 1, cfg.seed + 2]
    curves = ablate_horizon(demos, cfg.train_config(), args.k, args.budget, seeds)
    rows = []
    for (k, seed), curve in curves.items():
        for point in curve:
            rows.append({"K": k, "seed": seed, **point})
        if curve:
            print(f"K={k:>3} seed={seed}: final smoothed return "
                  f"{final_smoothed_return(curve):.2f}, steps to 90% plateau "
                  f"{steps_to_plateau(curve)}")
    reports = _ensure_dir(Path(cfg.paths["reports"]))
    write_csv(reports / "ablate_k.csv", ["K", "seed", "env_steps", "mean_return", "std"], rows)
    write_json(reports / "ablate_k.json", rows)
    print(f"wrote {reports / 'ablate_k.csv'}")
    return 0


def cmd_check_bound(args) -> int:
    cfg = load_config(args.config)
    net, _, _ = load_params(args.ckpt, expect_env=cfg.env)
    exponent, points = tv_trend(net, cfg.expert_controller, cfg.controller,
                                args.t, args.episodes_per_t,
                                cfg.demo["noise_level"], cfg.seed, env_name=cfg.env)
    for pt in points:
        print(f"T={pt['T']:>4}: D_TV {pt['dtv']:.4f} "
              f"({pt['samples']} samples, {pt['bins']} bins/dim)")
    print(f"fitted log-log growth exponent: {exponent:.3f}")
    reports = _ensure_dir(Path(cfg.paths["reports"]))
    write_csv(reports / "bound.csv", ["T", "dtv", "samples", "bins"], points)
    write_json(reports / "bound.json", {"exponent": exponent, "points": points})
    print(f"wrote {reports / 'bound.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rhirl",
        description="Learn state costs from state-only demonstrations by "
                    "matching receding-horizon control distributions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-demos", help="generate expert demonstrations")
    p.add_argument("--config", required=True)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_gen_demos)

    p = sub.add_parser("train", help="train a cost function on demonstrations")
    p.add_argument("--config", required=True)
    p.add_argument("--demos", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--resume", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint at one or more noise levels")
    p.add_argument("--config", required=True)
    p.add_argument("--demos", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--noise", type=float, nargs="*", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("eval-transfer",
                       help="re-optimize a noise-free cost in noisy environments")
    p.add_argument("--config", required=True)
    p.add_argument("--demos", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--noise", type=float, nargs="*", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_eval_transfer)

    p = sub.add_parser("ablate-k", help="sweep the planning horizon under a fixed budget")
    p.add_argument("--config", required=True)
    p.add_argument("--demos", required=True)
    p.add_argument("--k", type=int, nargs="+", default=[5, 20, 100])
    p.add_argument("--budget", type=int, default=2_000_000)
    p.add_argument("--seeds", type=int, nargs="*", default=None)
    p.set_defaults(func=cmd_ablate_k)

    p = sub.add_parser("check-bound",
                       help="fit the growth of the expert/learner marginal gap with T")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--t", type=int, nargs="+", default=[25, 50, 100, 200])
    p.add_argument("--episodes-per-t", type=int, default=10)
    p.set_defaults(func=cmd_check_bound)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GenerationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except NumericError as exc:
        where = f" (episode {exc.episode}, t {exc.step})" \
            if exc.episode is not None else ""
        print(f"numeric failure{where}: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())

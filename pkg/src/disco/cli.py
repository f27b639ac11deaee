"""Command-line surface tying the toolkit together.

Subcommands: `reward` scores a dataset into per-image breakdowns, `evaluate`
computes the dataset metrics, `curriculum` tabulates the count-sampling
schedule, `train-toy` runs the desk-scale training loop, and `sde-check`
verifies the stochastic sampler's marginals against the analytic answers.

Exit codes: 0 success, 1 validation/usage error, 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
import traceback
from pathlib import Path
from typing import Optional

import numpy as np

from . import curriculum as cur_mod
from . import dataio, flow, metrics, rewards, toy_policy
from .dataio import ConfigError, GroupInconsistency, NormError, RunConfig, SchemaError
from .rewards import MissingQuality


class _Parser(argparse.ArgumentParser):
    """argparse reports usage problems with exit code 2; this interface uses 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="disco", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: _Parser, needs_input: bool = False) -> None:
        if needs_input:
            p.add_argument("--input", required=True, help="dataset JSONL path")
        p.add_argument("--output", required=True, help="primary output path")
        p.add_argument("--config", help="run-config file (flat dotted keys)")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("reward", help="score groups into per-image reward breakdowns")
    common(p, needs_input=True)
    p.add_argument("--preset", choices=sorted(rewards.WEIGHT_PRESETS),
                   help="named weight set")
    p.add_argument("--agg", choices=rewards.AGGREGATIONS,
                   help="intra-image similarity aggregation")

    p = sub.add_parser("evaluate", help="compute dataset metrics (JSON + CSV)")
    common(p, needs_input=True)
    p.add_argument("--csv", help="metrics CSV path (default: output with .csv suffix)")
    p.add_argument("--threshold", type=float, help="duplicate-similarity threshold override")

    p = sub.add_parser("curriculum", help="tabulate the count-sampling schedule as CSV")
    common(p)

    p = sub.add_parser("train-toy", help="train the toy identity generator")
    common(p)
    p.add_argument("--snapshot", help="final policy JSON path (default: output + .policy.json)")
    p.add_argument("--preset", choices=sorted(rewards.WEIGHT_PRESETS),
                   help="named weight set")

    p = sub.add_parser("sde-check", help="stochastic-sampler marginal consistency report")
    common(p)
    return parser


def _load_config(args) -> RunConfig:
    cfg = dataio.parse_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg,
            seed=args.seed,
            train=dataclasses.replace(cfg.train, seed=args.seed),
        )
    return cfg


def _resolve_weights(cfg: RunConfig, args) -> rewards.RewardWeights:
    w = cfg.weights
    preset = getattr(args, "preset", None)
    if preset is not None:
        w = rewards.WEIGHT_PRESETS[preset]
    agg = getattr(args, "agg", None)
    if agg is not None:
        w = dataclasses.replace(w, intra_aggregation=agg)
    return w


def _cmd_reward(args) -> int:
    cfg = _load_config(args)
    weights = _resolve_weights(cfg, args)
    groups = dataio.read_groups(args.input)
    breakdowns, prompt_ids = [], []
    for group in groups:
        for b in rewards.composite_reward(group, weights):
            breakdowns.append(b)
            prompt_ids.append(group.prompt_id)
    dataio.write_breakdowns(args.output, breakdowns, prompt_ids)
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    mcfg = cfg.metrics
    if args.threshold is not None:
        mcfg = dataclasses.replace(mcfg, dup_threshold=args.threshold)
    groups = dataio.read_groups(args.input)
    images = [img for g in groups for img in g.images]
    report = metrics.evaluate_dataset(images, mcfg)
    dataio.write_report_json(args.output, report)
    csv_path = args.csv or str(Path(args.output).with_suffix(".csv"))
    dataio.write_report_csv(csv_path, report)
    return 0


def _cmd_curriculum(args) -> int:
    cfg = _load_config(args)
    ccfg = cfg.curriculum
    stride = max(1, ccfg.t_curriculum // 100)
    steps = sorted(
        set(range(0, 2 * ccfg.t_curriculum + 1, stride))
        | {ccfg.t_curriculum, 2 * ccfg.t_curriculum}
    )
    support = ccfg.support
    with Path(args.output).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "lambda_t"] + [f"p_{n}" for n in support])
        for t in steps:
            lam = cur_mod.annealing_weight(t, ccfg)
            probs = cur_mod.distribution(t, ccfg)
            writer.writerow([t, repr(lam)] + [repr(float(p)) for p in probs])
    return 0


def _cmd_train_toy(args) -> int:
    cfg = _load_config(args)
    weights = _resolve_weights(cfg, args)
    toy = cfg.toy
    policy = toy_policy.ToyPolicy.collapsed(
        dim=toy.dim, n_min=toy.n_min, n_max=toy.n_max,
        log_sigma=toy.log_sigma, n_slots=toy.n_slots,
    )
    final, log = toy_policy.train_disco(
        policy, cfg.train, cfg.curriculum, weights, steps=toy.steps,
        fixed_target=toy.fixed_target, quality_stub=toy.quality_stub,
    )
    dataio.write_train_log_csv(args.output, log)
    snapshot = args.snapshot or args.output + ".policy.json"
    dataio.write_json(snapshot, toy_policy.policy_to_dict(final))
    return 0


def _cmd_sde_check(args) -> int:
    cfg = _load_config(args)
    fc = cfg.flow
    world = flow.GaussianWorld.isotropic(fc.mu0, fc.s0, fc.dim)
    checks = []
    overall = True
    for sigma in fc.sigmas:
        schedule = flow.SigmaSchedule.constant(sigma)
        grid = flow.SamplerGrid.uniform(fc.steps, schedule)
        # snap requested checkpoints to the nearest grid times
        check_times = sorted(
            {float(grid.times[int(np.argmin(np.abs(grid.times - t)))])
             for t in fc.check_times},
            reverse=True,
        )
        result = flow.simulate(
            world, grid, n_paths=fc.n_paths, mode="sde", seed=cfg.seed,
            record_times=check_times,
        )
        for t in check_times:
            samples = result.at(t)
            analytic = flow.marginal(world, t)
            sample_mean = float(samples.mean())
            sample_var = float(samples.var())
            se_mean = float(np.sqrt(analytic.var_t / samples.size))
            se_var = float(analytic.var_t * np.sqrt(2.0 / (samples.size - 1)))
            mean_dev = (sample_mean - float(analytic.mean_t.mean())) / se_mean
            var_dev = (sample_var - analytic.var_t) / se_var
            ok = abs(mean_dev) <= 3.0 and abs(var_dev) <= 3.0
            overall &= ok
            checks.append(
                {
                    "sigma": sigma,
                    "t": t,
                    "sample_mean": sample_mean,
                    "analytic_mean": float(analytic.mean_t.mean()),
                    "mean_dev_se": mean_dev,
                    "sample_var": sample_var,
                    "analytic_var": analytic.var_t,
                    "var_dev_se": var_dev,
                    "pass": ok,
                }
            )
    dataio.write_json(
        args.output,
        {
            "world": {"mu0": fc.mu0, "s0": fc.s0, "dim": fc.dim},
            "n_paths": fc.n_paths,
            "steps": fc.steps,
            "seed": cfg.seed,
            "checks": checks,
            "overall_pass": overall,
        },
    )
    return 0


_COMMANDS = {
    "reward": _cmd_reward,
    "evaluate": _cmd_evaluate,
    "curriculum": _cmd_curriculum,
    "train-toy": _cmd_train_toy,
    "sde-check": _cmd_sde_check,
}

_VALIDATION_ERRORS = (SchemaError, NormError, GroupInconsistency, ConfigError,
                      MissingQuality, FileNotFoundError)


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return _COMMANDS[args.command](args)
    except _VALIDATION_ERRORS as exc:
        print(f"disco {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())

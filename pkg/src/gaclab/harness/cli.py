"""Command line: ``gaclab {train, eval, plot, gradcheck}``.

Every subcommand exits 0 on success and otherwise prints a single
``error: <reason>`` line to stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import copy
import csv
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..gac import METRIC_COLUMNS, ConfigError, Trainer
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, to_text
from .gradcheck import DEFAULT_SEEDS, format_report, run_suites
from .plotting import PlotError, plot_dirs

FINAL_CHECKPOINT = "final.ckpt"
EVAL_COLUMNS = ("sigma", "episodes", "return_mean", "return_std", "terminals")


class CommandError(RuntimeError):
    pass


# -- metrics ------------------------------------------------------------------

def format_value(v) -> str:
    """Shortest text that parses back to the identical value."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def format_row(row: dict) -> str:
    return ",".join(format_value(row[c]) for c in METRIC_COLUMNS) + "\n"


def _metrics_header() -> str:
    return ",".join(METRIC_COLUMNS) + "\n"


def _checkpoint_name(iteration: int) -> str:
    return f"checkpoint_{iteration:06d}.ckpt"


# -- train ----------------------------------------------------------------------

def _train_seed(tr: Trainer, run_dir: Path, checkpoint_every: int, resume: bool) -> Path:
    metrics = run_dir / "metrics.csv"
    if resume:
        keep = [_metrics_header()]
        if metrics.is_file():
            lines = metrics.read_text().splitlines(keepends=True)[1:]
            keep += [ln for ln in lines if int(ln.split(",", 1)[0]) <= tr.iteration]
        metrics.write_text("".join(keep))
    else:
        metrics.write_text(_metrics_header())
    with metrics.open("a") as fh:
        def on_row(trainer: Trainer, row: dict) -> None:
            fh.write(format_row(row))
            fh.flush()
            if checkpoint_every and trainer.iteration % checkpoint_every == 0:
                save_checkpoint(trainer, run_dir / _checkpoint_name(trainer.iteration))

        tr.train(callback=on_row)
    save_checkpoint(tr, run_dir / FINAL_CHECKPOINT)
    return run_dir


def run_train(config_path=None, resume=None, checkpoint_every: Optional[int] = None) -> list[Path]:
    """Train every seed of a config (or continue one checkpoint); returns the seed directories."""
    if resume is not None:
        if config_path is not None:
            raise CommandError("give either a config or --resume, not both")
        tr = load_checkpoint(resume)
        run_dir = Path(resume).parent
        return [_train_seed(tr, run_dir, checkpoint_every or 0, resume=True)]
    if config_path is None:
        raise CommandError("a config file is required")
    cfg: RunConfig = load_config(config_path)
    if checkpoint_every is not None:
        cfg.checkpoint_every = checkpoint_every
        cfg.validate()
    trainers = [Trainer(cfg.gac, seed) for seed in cfg.seeds]  # any remaining error surfaces before mkdir
    root = cfg.resolved_output_dir()
    out = []
    for seed, tr in zip(cfg.seeds, trainers):
        run_dir = root / f"seed_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.txt").write_text(to_text(cfg))
        out.append(_train_seed(tr, run_dir, cfg.checkpoint_every, resume=False))
    return out


# -- eval -----------------------------------------------------------------------

def run_eval(checkpoint, episodes: int = 10, sigmas: Optional[Sequence[float]] = None,
             dump_actions: int = 0, report=None, out=None) -> list[dict]:
    """Evaluate one checkpoint at each latent sigma.

    Every sigma replays the same evaluation random stream, so rows differ only
    through sigma. Writes the report CSV and optional ``actions_sigma<s>.csv`` dumps.
    """
    out = out or sys.stdout
    if episodes < 1:
        raise CommandError("--episodes must be >= 1")
    tr = load_checkpoint(checkpoint)
    sigmas = list(sigmas) if sigmas else [tr.config.latent_test_sigma]
    if any(not (s >= 0 and math.isfinite(s)) for s in sigmas):
        raise CommandError("--latent-sigma values must be finite and >= 0")
    ckpt = Path(checkpoint)
    report = Path(report) if report is not None else ckpt.with_name(ckpt.stem + "_eval.csv")
    base_rng = tr.streams["eval"]
    env_state = tr.eval_env.get_state()
    rows = []
    for s in sigmas:
        tr.eval_env.set_state(env_state)
        res = tr.evaluate(episodes, s, copy.deepcopy(base_rng))
        rows.append({"sigma": s, "episodes": episodes, "return_mean": res.mean,
                     "return_std": res.std, "terminals": res.terminals})
        if dump_actions:
            acts = tr.sample_actions(dump_actions, s, copy.deepcopy(base_rng))
            path = report.parent / f"actions_sigma{s:g}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow([f"a{i}" for i in range(acts.shape[1])])
                w.writerows([format_value(v) for v in a] for a in acts)
    with report.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVAL_COLUMNS)
        for r in rows:
            w.writerow([format_value(r[c]) for c in EVAL_COLUMNS])
    print(f"{'sigma':>8} {'return_mean':>14} {'return_std':>12} {'terminals':>10}", file=out)
    for r in rows:
        print(f"{r['sigma']:>8g} {r['return_mean']:>14.4f} {r['return_std']:>12.4f} "
              f"{r['terminals']:>6}/{episodes}", file=out)
    return rows


# -- plot / gradcheck ---------------------------------------------------------------

def run_plot(dirs: Sequence, out_dir=None) -> list[Path]:
    if not dirs:
        raise CommandError("at least one run directory is required")
    return plot_dirs(dirs, out_dir)


def run_gradcheck(seeds: Sequence[int] = DEFAULT_SEEDS, corrupt: Optional[str] = None, out=None) -> bool:
    worst = run_suites(seeds, corrupt)
    print(format_report(worst), file=out or sys.stdout)
    return all(r.passed for r in worst.values())


# -- entry point ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gaclab", description="Generative actor-critic experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train every seed listed in a config")
    t.add_argument("config", nargs="?", help="key = value config file")
    t.add_argument("--resume", metavar="CKPT", help="continue a run from a checkpoint")
    t.add_argument("--checkpoint-every", type=int, metavar="N", help="override checkpoint_every")

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--latent-sigma", type=float, nargs="+", metavar="S", help="one report row per value")
    e.add_argument("--dump-actions", type=int, default=0, metavar="N",
                   help="also write N sampled actions per sigma for scatter plots")
    e.add_argument("--report", metavar="CSV")

    pl = sub.add_parser("plot", help="render SVG figures for run directories")
    pl.add_argument("dirs", nargs="+")
    pl.add_argument("--out", metavar="DIR")

    g = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    g.add_argument("--seeds", type=int, default=len(DEFAULT_SEEDS), metavar="N")
    g.add_argument("--corrupt", metavar="LOSS", help=argparse.SUPPRESS)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            for d in run_train(args.config, args.resume, args.checkpoint_every):
                print(f"wrote {d}")
        elif args.command == "eval":
            run_eval(args.checkpoint, args.episodes, args.latent_sigma, args.dump_actions, args.report)
        elif args.command == "plot":
            for f in run_plot(args.dirs, args.out):
                print(f"wrote {f}")
        elif args.command == "gradcheck":
            if args.seeds < 1:
                raise CommandError("--seeds must be >= 1")
            if not run_gradcheck(range(args.seeds), args.corrupt):
                print("error: gradient check above tolerance", file=sys.stderr)
                return 1
    except (ConfigError, CheckpointError, PlotError, CommandError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e.filename or ''}: {e.strerror}".replace(": :", ":"), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

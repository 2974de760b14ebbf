"""Command-line entry point: ``permoptim {train,eval,gradcheck,inspect,selftest}``.

Exit codes: 0 success, 1 runtime or check failure, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import io
import logging
import sys
from pathlib import Path

from . import checks
from .harness import checkpoint as ckpt_io
from .harness.config import ConfigError, load_config
from .harness.train import (
    TrainingError, eval_csv, evaluate, load_model, metrics_csv, save_model, structure_for,
    train,
)
from .harness.model import oracle_sort_model
from .ordering import dump_comparison_grid

DEFAULT_SEED = 0


class UsageError(Exception):
    pass


def _grid_spec(text: str):
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be LO:HI:STEPS, got {text!r}") from None
    if steps < 2 or not lo < hi:
        raise argparse.ArgumentTypeError(f"grid needs LO < HI and STEPS >= 2, got {text!r}")
    return lo, hi, steps


def _load_config(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None


def cmd_train(args) -> int:
    config = _load_config(args.config)
    config = config.with_overrides(seed=args.seed if args.seed is not None else config.seed)
    out = Path(args.out or config.checkpoint)
    metrics = Path(args.metrics) if args.metrics else out.with_suffix(".csv")
    model, logs = train(config)
    save_model(out, model, config)
    ckpt_io.atomic_write(metrics, metrics_csv(logs).encode())
    last = logs[-1]
    print(f"trained {config.epochs} epochs: mse {last.mse:.6g}, eta {last.eta:.4f}")
    print(f"checkpoint: {out}\nmetrics: {metrics}")
    return 0


def _format_table(rows) -> str:
    buf = io.StringIO()
    buf.write(f"{'interval':>20}  {'exact_acc':>9}  {'hard_mse':>10}\n")
    for r in rows:
        buf.write(f"{f'[{r.lo:g}, {r.hi:g}]':>20}  {100 * r.exact_acc:8.2f}%  {r.hard_mse:10.3e}\n")
    return buf.getvalue()


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    if args.oracle:
        if config.task != "sort":
            raise UsageError("--oracle applies to sorting configs only")
        model = oracle_sort_model(structure_for(config), config.T, config.L)
    else:
        if not args.checkpoint:
            raise UsageError("eval needs --checkpoint (or --oracle)")
        model, _ = load_model(args.checkpoint)
    rows = evaluate(model, config, threads=args.threads)
    print(_format_table(rows), end="")
    if args.csv:
        ckpt_io.atomic_write(args.csv, eval_csv(rows).encode())
    return 0


def cmd_gradcheck(args) -> int:
    results = checks.gradcheck_suite(args.trials)
    return _report(results)


def cmd_inspect(args) -> int:
    model, _ = load_model(args.checkpoint)
    net = model.comparison_net()
    if "embed.w" in model.params or net.element_dim != 1:
        print("error: inspect needs a scalar-element (sorting) checkpoint", file=sys.stderr)
        return 1
    lo, hi, steps = args.grid
    values, grid = dump_comparison_grid(net, lo, hi, steps)
    buf = io.StringIO()
    buf.write("a,b,F\n")
    for i, a in enumerate(values):
        for j, b in enumerate(values):
            buf.write(f"{a:.17g},{b:.17g},{grid[i, j]:.17g}\n")
    ckpt_io.atomic_write(args.out, buf.getvalue().encode())
    print(f"wrote {steps * steps} rows to {args.out}")
    return 0


def cmd_selftest(args) -> int:
    return _report(checks.selftest_suite())


def _report(results) -> int:
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        print("failing: " + ", ".join(r.name for r in failed), file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="permoptim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="checkpoint path (default: config 'checkpoint')")
    p.add_argument("--metrics", help="metrics CSV path (default: checkpoint path with .csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the config's task")
    p.add_argument("--checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--csv")
    p.add_argument("--oracle", action="store_true", help="use the f(a, b) = a comparison net")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--trials", type=int, default=3)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect", help="dump F(a, b) of a sorting checkpoint as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--grid", required=True, type=_grid_spec, metavar="LO:HI:STEPS")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("selftest", help="run the built-in property suites")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ckpt_io.CheckpointError, TrainingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: dataset generation, formula evolution, and
method evaluation as reproducible runs.

Every command writes a plain-text manifest next to its outputs recording
the resolved configuration, seed, paths, version, and wall-clock time.
With identical flags and seed the primary outputs are byte-identical.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

import argparse
import os
import sys
import time
from pathlib import Path

from . import __version__
from .accelerators import (
    Accelerator,
    aitken_accelerator,
    evolved_accelerator,
    wynn_accelerator,
)
from .benchmark import (
    compare_to_reference,
    run_benchmark,
    write_grid_csv,
    write_totals_csv,
)
from .errors import (
    FormulaSyntaxError,
    InsufficientHistoryError,
    InvalidArgumentError,
    InvalidConfigError,
    NumericalFailureError,
)
from .evolution import EvolutionConfig, ParamOptConfig, evolve, split_dataset, write_report
from .sequences import load_dataset, read_metadata, write_dataset
from .transport import DatasetConfig, dataset_metadata, generate_grid
from .trees import eval_formula, parse

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

DEFAULT_SEED = 0


def _resolve_seed(value):
    if value is not None:
        return value
    env = os.environ.get("TXACCEL_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InvalidArgumentError(
                f"TXACCEL_SEED must be an integer, got {env!r}"
            ) from None
    return DEFAULT_SEED


def _int_list(text):
    return [int(tok) for tok in text.split(",") if tok]


def _float_list(text):
    return [float(tok) for tok in text.split(",") if tok]


def _write_manifest(directory, command, settings, duration):
    lines = [f"command={command}", f"artifact_version={__version__}"]
    for key in sorted(settings):
        lines.append(f"{key}={settings[key]}")
    lines.append(f"duration_s={duration:.3f}")
    Path(directory).mkdir(parents=True, exist_ok=True)
    (Path(directory) / "manifest.txt").write_text("\n".join(lines) + "\n")


def cmd_generate(args):
    started = time.perf_counter()
    seed = _resolve_seed(args.seed)
    config = DatasetConfig(
        c_min=args.c_min, c_max=args.c_max, c_count=args.c_count,
        widths=tuple(args.widths),
        orders=tuple(range(args.n_min, args.n_max + 1, args.n_step)),
    )
    sequences = generate_grid(config, rng_seed=seed, threads=args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(out, sequences, dataset_metadata(config, seed, __version__))
    _write_manifest(out.parent, "generate", {
        "out": out, "seed": seed, "c_min": args.c_min, "c_max": args.c_max,
        "c_count": args.c_count, "widths": ",".join(f"{w:g}" for w in args.widths),
        "n_min": args.n_min, "n_max": args.n_max, "n_step": args.n_step,
        "threads": args.threads, "sequences": len(sequences),
    }, time.perf_counter() - started)
    print(f"wrote {len(sequences)} sequences x {len(config.orders)} orders "
          f"to {out}")
    return EXIT_OK


def cmd_evolve(args):
    started = time.perf_counter()
    seed = _resolve_seed(args.seed)
    sequences = load_dataset(args.data)
    training, validation = split_dataset(sequences, args.split, seed)
    config = EvolutionConfig(
        population_size=args.pop,
        max_generations=args.gens,
        crossover_rate=args.cx,
        mutation_rate=args.mut,
        elite_count=args.elite,
        tournament_size=args.tourn,
        max_depth=args.depth,
        target_fitness=args.target,
        train_fraction=args.split,
        evaluation_orders=tuple(args.positions),
        rng_seed=seed,
        param_opt=ParamOptConfig(),
    )
    report = evolve(config, training, validation)
    out = Path(args.out)
    write_report(report, out)
    _write_manifest(out, "evolve", {
        "data": args.data, "out": out, "seed": seed, "pop": args.pop,
        "gens": args.gens, "cx": args.cx, "mut": args.mut,
        "elite": args.elite, "tourn": args.tourn, "depth": args.depth,
        "target": args.target, "split": args.split,
        "positions": ",".join(str(n) for n in args.positions),
        "threads": args.threads, "train_sequences": len(training),
        "validation_sequences": len(validation),
    }, time.perf_counter() - started)
    print(f"best formula after {report.generations} generations: "
          f"train fitness {report.train_fitness:.4f}, "
          f"validation fitness {report.validation_fitness:.4f}")
    print(f"outputs in {out}")
    return EXIT_OK


def _formula_accelerator(path) -> Accelerator:
    formula = parse(Path(path).read_text())
    return Accelerator("evolved", 4, lambda w: eval_formula(formula, w))


def cmd_evaluate(args):
    started = time.perf_counter()
    sequences = load_dataset(args.data)
    meta_file = Path(args.data).with_suffix(".meta")
    metadata = read_metadata(meta_file) if meta_file.exists() else {}

    available = {
        "aitken": aitken_accelerator,
        "wynn": wynn_accelerator,
        "evolved": (lambda: _formula_accelerator(args.formula))
        if args.formula else evolved_accelerator,
    }
    methods = []
    for name in args.methods.split(","):
        name = name.strip()
        if name not in available:
            raise InvalidArgumentError(
                f"unknown method {name!r}; choose from "
                f"{', '.join(sorted(available))}"
            )
        methods.append(available[name]())

    report = run_benchmark(
        sequences, methods, args.positions, bins=args.bins,
        metadata={"dataset": str(args.data), "window_policy": "trailing-4",
                  "wynn_column": 2, "artifact_version": __version__,
                  **metadata},
        threads=args.threads,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_totals_csv(report, out / "report.csv")
    write_grid_csv(report, out / "grid.csv")
    summary = compare_to_reference(report)
    (out / "compare.txt").write_text(summary)
    _write_manifest(out, "evaluate", {
        "data": args.data, "out": out, "formula": args.formula or "builtin",
        "methods": args.methods, "bins": args.bins,
        "positions": ",".join(str(n) for n in args.positions),
        "threads": args.threads,
    }, time.perf_counter() - started)
    print(summary, end="")
    print(f"outputs in {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="txaccel",
        description="Center-flux convergence sequences for slab transport, "
                    "formula evolution, and accelerator benchmarking.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    gen = sub.add_parser("generate", formatter_class=fmt,
                         help="solve the (c, width) grid and write the "
                              "dataset CSV")
    gen.add_argument("--out", required=True, help="dataset CSV path")
    gen.add_argument("--seed", type=int, default=None,
                     help="RNG seed (default: $TXACCEL_SEED or 0)")
    gen.add_argument("--c-min", type=float, default=0.001)
    gen.add_argument("--c-max", type=float, default=0.999)
    gen.add_argument("--c-count", type=int, default=40)
    gen.add_argument("--widths", type=_float_list, default=[1, 2, 5, 10, 20, 50],
                     help="slab widths in mean free paths, comma separated")
    gen.add_argument("--n-min", type=int, default=4)
    gen.add_argument("--n-max", type=int, default=52)
    gen.add_argument("--n-step", type=int, default=4)
    gen.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    gen.set_defaults(func=cmd_generate)

    evo = sub.add_parser("evolve", formatter_class=fmt,
                         help="run the evolutionary search on a dataset")
    evo.add_argument("--data", required=True, help="dataset CSV from generate")
    evo.add_argument("--pop", type=int, default=40)
    evo.add_argument("--gens", type=int, default=200)
    evo.add_argument("--cx", type=float, default=0.70)
    evo.add_argument("--mut", type=float, default=0.30)
    evo.add_argument("--elite", type=int, default=2)
    evo.add_argument("--tourn", type=int, default=3)
    evo.add_argument("--depth", type=int, default=4)
    evo.add_argument("--target", type=float, default=0.75)
    evo.add_argument("--split", type=float, default=0.70)
    evo.add_argument("--positions", type=_int_list, default=[20, 28, 36, 44, 52])
    evo.add_argument("--seed", type=int, default=None)
    evo.add_argument("--out", required=True, help="output directory")
    evo.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    evo.set_defaults(func=cmd_evolve)

    ev = sub.add_parser("evaluate", formatter_class=fmt,
                        help="benchmark accelerators on a dataset")
    ev.add_argument("--data", required=True)
    ev.add_argument("--formula", default=None,
                    help="formula file (default: built-in evolved accelerator)")
    ev.add_argument("--methods", default="aitken,wynn,evolved")
    ev.add_argument("--positions", type=_int_list, default=[20, 28, 36, 44, 52])
    ev.add_argument("--bins", type=int, default=10)
    ev.add_argument("--out", required=True, help="output directory")
    ev.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ev.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfigError, InvalidArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FileNotFoundError, FormulaSyntaxError, InsufficientHistoryError,
            OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``flagtune {tune,compare,importance,meta-tune,convergence}``.

Exit codes: 0 success, 1 nothing could be measured, 2 usage error,
3 configuration error, 4 baseline failure, 5 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import shlex
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import ga, meta
from .errors import (
    BaselineFailure,
    CompileError,
    FlagTuneError,
    HarnessError,
    InvalidConfig,
    InvalidModel,
    InvalidSpace,
    ParseError,
)
from .flagspace import FlagCatalog, Genome, PredefinedLevel, decode, load_catalog, selected_names
from .harness import (
    CompilerProfile,
    EvaluationLog,
    FitnessEvaluator,
    MeasurementProtocol,
    load_protocol,
    time_arguments,
)
from .importance import importance_from_timer, render_importance
from .mock import MockModel
from .report import RunReport, add_speedups, comparison_table, emit_convergence, history_rows, new_report

log = logging.getLogger("flagtune")

EXIT_OK = 0
EXIT_NO_RESULT = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_BASELINE = 4
EXIT_INTERNAL = 5


class SimulatedClock:
    """Deterministic clock advanced by the modeled cost of each mock measurement."""

    def __init__(self):
        self.now = 0.0

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float):
        self.now += seconds


class MockBackend:
    """In-process mock model; argument lists are interpreted like a compiler would."""

    fitness_source = "mock-inprocess"
    clock_name = "simulated"

    def __init__(self, model: MockModel, catalog: FlagCatalog, protocol: MeasurementProtocol):
        if catalog.genome_length() != len(model):
            raise InvalidConfig(
                f"catalog has {catalog.genome_length()} flags but the mock model has {len(model)}"
            )
        self.model = model
        self.catalog = catalog
        self.protocol = protocol
        self.clock = SimulatedClock()
        self._cache: dict = {}
        self._runs_per_eval = protocol.warmup_runs + protocol.measured_runs

    def timer(self, arguments: Sequence[str], workload_n: Optional[int] = None) -> float:
        try:
            return self.model.measure_arguments(arguments)
        except InvalidModel as exc:
            raise CompileError(str(exc), str(exc)) from None

    def fitness_fn(self, workload_n: Optional[int] = None):
        deterministic = self.model.noise_fraction == 0

        def fitness(genome: Genome) -> float:
            if deterministic and genome.bits in self._cache:
                return self._cache[genome.bits]
            try:
                value = self.timer(decode(genome, self.catalog))
            except HarnessError:
                value = self.protocol.penalty_fitness
            self.clock.advance(value * self._runs_per_eval)
            if deterministic:
                self._cache[genome.bits] = value
            return value

        return fitness

    def executor(self):
        return None


class CompilerBackend:
    fitness_source = "compiler"
    clock_name = "monotonic"

    def __init__(
        self,
        profile: CompilerProfile,
        catalog: FlagCatalog,
        protocol: MeasurementProtocol,
        jobs: int = 1,
        evaluation_log: Optional[EvaluationLog] = None,
    ):
        self.profile = profile
        self.catalog = catalog
        self.protocol = protocol
        self.jobs = jobs
        self.evaluation_log = evaluation_log
        self.clock = time.monotonic
        self._evaluators: dict = {}

    def timer(self, arguments: Sequence[str], workload_n: Optional[int] = None) -> float:
        return time_arguments(arguments, self.profile, self.protocol, workload_n)[0]

    def fitness_fn(self, workload_n: Optional[int] = None):
        if workload_n not in self._evaluators:
            self._evaluators[workload_n] = FitnessEvaluator(
                self.catalog,
                self.profile,
                self.protocol,
                workload_n=workload_n,
                evaluation_log=self.evaluation_log,
                jobs=self.jobs,
            )
        return self._evaluators[workload_n]

    def executor(self):
        return ThreadPoolExecutor(self.jobs) if self.jobs > 1 else None


# -- argument handling ------------------------------------------------------------


def _add_backend_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("program under test")
    g.add_argument("--source", nargs="+", metavar="PATH", help="source files to compile")
    g.add_argument("--compiler", metavar="CMD", help="compiler executable (path or name on PATH)")
    g.add_argument("--extra-args", default="", help="arguments placed before the tuned flags")
    g.add_argument(
        "--run-template",
        default="{binary}",
        help="how to run the binary; {binary} and an optional {N} placeholder",
    )
    g.add_argument("--workdir", default=".", help="working directory for compile and run")
    g.add_argument("--mock-model", metavar="PATH", help="use an in-process mock model instead")
    g.add_argument("--catalog", metavar="PATH", help="flag catalog document")
    g.add_argument("--protocol", metavar="PATH", help="measurement protocol document")
    g.add_argument("--jobs", type=int, default=1, help="concurrent compiles")
    g.add_argument("--eval-log", metavar="PATH", help="append evaluation records here")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _levels(text: str) -> list[PredefinedLevel]:
    try:
        return [PredefinedLevel.parse(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _workloads(text: str) -> list[int]:
    try:
        return [_positive_int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flagtune", description="Genetic-algorithm search over compiler optimization flags.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tune", help="search the flag space with the genetic algorithm")
    _add_backend_args(p)
    p.add_argument("--config", metavar="PATH", help="GA config document (defaults: tuned values)")
    p.add_argument("--workload-n", type=_positive_int, help="workload size passed as {N}")
    p.add_argument("--seed", type=int, help="override the config's rng_seed")
    p.add_argument("--baselines", type=_levels, default="O1,O2,O3", help="levels to report speedup against")
    p.add_argument("--no-baselines", action="store_true")
    p.add_argument("--out", required=True, metavar="PATH", help="run report destination")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("compare", help="measure levels, external flag sets and a tuned report")
    _add_backend_args(p)
    p.add_argument("--levels", type=_levels, required=True, help="e.g. O1,O2,O3")
    p.add_argument(
        "--external", action="append", default=[], metavar="LABEL=FILE",
        help="named flag set; FILE holds whitespace-separated compiler arguments",
    )
    p.add_argument("--foga-report", "--ga-report", dest="ga_report", metavar="PATH",
                   help="run report whose best flags join the comparison")
    p.add_argument("--workloads", type=_workloads, help="comma-separated N values")
    p.add_argument("--out", metavar="PATH", help="write machine-readable rows here")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("importance", help="one-hot flag importance")
    _add_backend_args(p)
    p.add_argument("--baseline-args", help="baseline arguments (default: catalog base_arguments)")
    p.add_argument("--top-k", type=_positive_int, default=5)
    p.add_argument("--workload-n", type=_positive_int)
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("meta-tune", help="tune the GA's own hyperparameters")
    _add_backend_args(p)
    p.add_argument("--budget", type=_positive_int, required=True)
    p.add_argument("--seeds-per-trial", type=_positive_int, default=3)
    p.add_argument("--seed", type=int, default=0, help="outer search seed")
    p.add_argument("--space", metavar="PATH", help="parameter-space document")
    p.add_argument("--workload-n", type=_positive_int)
    p.add_argument("--out", required=True, metavar="PATH", help="winning GA config destination")
    p.add_argument("--trials-log", metavar="PATH")
    p.set_defaults(func=cmd_meta_tune)

    p = sub.add_parser("convergence", help="print (tuning time, best runtime) columns of a report")
    p.add_argument("--report", required=True, metavar="PATH")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_convergence)
    return parser


def _load_protocol(args) -> MeasurementProtocol:
    return load_protocol(args.protocol) if args.protocol else MeasurementProtocol()


def _make_backend(args, parser):
    protocol = _load_protocol(args)
    if args.mock_model:
        model = MockModel.load(args.mock_model)
        catalog = load_catalog(args.catalog) if args.catalog else model.catalog()
        return MockBackend(model, catalog, protocol)
    missing = [f for f, v in (("--source", args.source), ("--compiler", args.compiler), ("--catalog", args.catalog)) if not v]
    if missing:
        parser.error(f"the following arguments are required without --mock-model: {', '.join(missing)}")
    catalog = load_catalog(args.catalog)
    profile = CompilerProfile(
        args.compiler,
        tuple(args.source),
        tuple(shlex.split(args.extra_args)),
        tuple(shlex.split(args.run_template)),
        args.workdir,
    )
    evaluation_log = EvaluationLog(args.eval_log) if args.eval_log else None
    return CompilerBackend(profile, catalog, protocol, max(1, args.jobs), evaluation_log)


def _measure_levels(backend, levels, workloads) -> list[dict]:
    rows = []
    for level in levels:
        for n in workloads:
            row = {"configuration": level.label, "arguments": level.arguments, "workload_n": n}
            try:
                row["runtime"] = backend.timer(level.arguments, n)
                row["error"] = None
            except HarnessError as exc:
                row["runtime"] = None
                row["error"] = f"{exc.status}: {exc}"
            rows.append(row)
    return rows


# -- commands ---------------------------------------------------------------------


def cmd_tune(args, parser) -> int:
    if args.config:
        config, stopping = ga.load_config(args.config)
    else:
        config, stopping = ga.GAConfig(), ga.StoppingPolicy()
    if args.seed is not None:
        config = ga.GAConfig(**{**config.to_dict(), "rng_seed": args.seed})
    backend = _make_backend(args, parser)
    catalog = backend.catalog
    if catalog.genome_length() == 0:
        raise InvalidConfig("catalog has no flags to tune")

    baselines = []
    if not args.no_baselines:
        baselines = _measure_levels(backend, args.baselines, [args.workload_n])
        failed = [r for r in baselines if r["runtime"] is None]
        if failed:
            raise BaselineFailure("; ".join(f"{r['configuration']}: {r['error']}" for r in failed))

    started = time.monotonic()

    def progress(entry):
        log.info("generation %d best %.6g mean %.6g", entry.generation, entry.best_fitness, entry.mean_fitness)

    executor = backend.executor()
    try:
        result = ga.run(
            config, stopping, catalog.genome_length(), backend.fitness_fn(args.workload_n),
            clock=backend.clock, executor=executor, on_generation=progress,
        )
    finally:
        if executor is not None:
            executor.shutdown()
    elapsed = time.monotonic() - started

    best = result.best.genome
    report = new_report(
        catalog_digest=catalog.digest(),
        config=config.to_dict(),
        stopping=stopping.to_dict(),
        protocol=backend.protocol.to_dict(),
        best_flags=selected_names(best, catalog),
        best_arguments=decode(best, catalog),
        best_genome=str(best),
        best_fitness=result.best.fitness,
        history=history_rows(result),
        stop_reason=result.stop_reason.value,
        baselines=baselines,
        wall_clock=elapsed,
        evaluations=result.evaluations,
        clock=backend.clock_name,
        fitness_source=backend.fitness_source,
        workload_n=args.workload_n,
    )
    report.save(args.out)

    print(f"best fitness: {result.best.fitness:.6g} s after {result.generations} generations "
          f"({result.stop_reason.value})")
    print("best flags: " + " ".join(report.best_arguments))
    for row in baselines:
        print(f"speedup vs {row['configuration']}: {row['runtime'] / result.best.fitness:.3f}x")
    return EXIT_OK


def cmd_compare(args, parser) -> int:
    configurations = []
    for spec in args.external:
        label, sep, path = spec.partition("=")
        if not sep or not label:
            parser.error(f"--external expects LABEL=FILE, got {spec!r}")
        try:
            tokens = shlex.split(Path(path).read_text())
        except OSError as exc:
            raise InvalidConfig(f"cannot read external flag file {path}: {exc}") from None
        configurations.append((label, tokens))
    if args.ga_report:
        tuned = RunReport.load(args.ga_report)
        configurations.append(("GA", list(tuned.best_arguments)))

    backend = _make_backend(args, parser)
    workloads = args.workloads or [None]
    rows = _measure_levels(backend, args.levels, workloads)
    for label, tokens in configurations:
        for n in workloads:
            row = {"configuration": label, "arguments": tokens, "workload_n": n}
            try:
                row["runtime"] = backend.timer(tokens, n)
                row["error"] = None
            except HarnessError as exc:
                row["runtime"], row["error"] = None, f"{exc.status}: {exc}"
            rows.append(row)
    add_speedups(rows)

    sys.stdout.write(comparison_table(rows))
    if args.out:
        doc = {"protocol": backend.protocol.to_dict(), "fitness_source": backend.fitness_source, "rows": rows}
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
    return EXIT_OK if any(r["runtime"] is not None for r in rows) else EXIT_NO_RESULT


def cmd_importance(args, parser) -> int:
    backend = _make_backend(args, parser)
    catalog = backend.catalog
    if catalog.genome_length() == 0:
        raise InvalidConfig("catalog has no flags")
    if args.baseline_args is None:
        baseline = list(catalog.base_arguments)
    else:
        baseline = shlex.split(args.baseline_args)
    report = importance_from_timer(
        catalog, lambda a: backend.timer(a, args.workload_n), baseline, args.top_k
    )
    text, _ = render_importance(report, args.top_k)
    print(text)
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=1) + "\n")
    return EXIT_OK


def cmd_meta_tune(args, parser) -> int:
    space = meta.ParameterSpace()
    if args.space:
        try:
            space = meta.ParameterSpace.from_dict(json.loads(Path(args.space).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidSpace(f"cannot read parameter space {args.space}: {exc}") from None
    backend = _make_backend(args, parser)

    def progress(trial):
        log.info("trial %d (%s): objective %.6g", trial.index, trial.phase, trial.objective)

    result = meta.tune(
        space,
        (backend.catalog, backend.fitness_fn(args.workload_n)),
        args.budget,
        args.seeds_per_trial,
        random.Random(args.seed),
        on_trial=progress,
    )
    Path(args.out).write_text(
        json.dumps(ga.config_document(result.best, result.best_stopping), indent=1) + "\n"
    )
    meta.write_trials_log(result.trials, args.trials_log or f"{args.out}.trials.jsonl")
    best = result.best_trial
    print(f"best objective {best.objective:.6g} s from trial {best.index} ({best.phase})")
    print(json.dumps(ga.config_document(result.best, result.best_stopping), indent=1))
    return EXIT_OK


def cmd_convergence(args, parser) -> int:
    text = emit_convergence(RunReport.load(args.report))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args, parser)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    except BaselineFailure as exc:
        print(f"flagtune: baseline failure: {exc}", file=sys.stderr)
        return EXIT_BASELINE
    except (InvalidConfig, InvalidSpace, InvalidModel, ParseError, FlagTuneError) as exc:
        print(f"flagtune: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

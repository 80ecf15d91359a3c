"""Compile-and-time fitness evaluation.

A genome is decoded to compiler arguments, compiled into a uniquely named
binary in a scratch directory, then executed ``warmup_runs`` times untimed and
``measured_runs`` times timed (spawn to exit, monotonic clock).  Every failure
becomes the protocol's finite penalty fitness so the GA always gets a number.

Compiles may run concurrently; timed runs are serialized process-wide through
``TIMING_LOCK`` so they never share cores with each other.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import signal
import statistics
import subprocess
import tempfile
import threading
import time
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

from .errors import (
    CompileError,
    CompileTimeout,
    HarnessError,
    InvalidConfig,
    RunError,
    RunTimeout,
)
from .flagspace import FlagCatalog, Genome, PredefinedLevel, decode

log = logging.getLogger(__name__)

SCRATCH_ENV = "FLAGTUNE_SCRATCH"
BINARY_PLACEHOLDER = "{binary}"
WORKLOAD_PLACEHOLDER = "{N}"

# Spawn-to-exit overhead tolerated on top of a program's own runtime.
OS_SLACK_SECONDS = 0.050

TIMING_LOCK = threading.Lock()


class Aggregator(Enum):
    Median = "Median"
    Mean = "Mean"
    Min = "Min"

    def __call__(self, values: Sequence[float]) -> float:
        if self is Aggregator.Median:
            return statistics.median(values)
        if self is Aggregator.Mean:
            return statistics.fmean(values)
        return min(values)


@dataclass(frozen=True)
class CompilerProfile:
    compiler_command: str
    source_files: tuple[str, ...]
    extra_compile_args: tuple[str, ...] = ()
    run_command_template: tuple[str, ...] = (BINARY_PLACEHOLDER,)
    working_directory: str = "."

    def __post_init__(self):
        if not self.compiler_command:
            raise InvalidConfig("compiler_command must be non-empty")
        object.__setattr__(self, "source_files", tuple(str(s) for s in self.source_files))
        object.__setattr__(self, "extra_compile_args", tuple(self.extra_compile_args))
        object.__setattr__(self, "run_command_template", tuple(self.run_command_template))
        if sum(tok.count(WORKLOAD_PLACEHOLDER) for tok in self.run_command_template) > 1:
            raise InvalidConfig("run_command_template may contain at most one {N} placeholder")

    @property
    def takes_workload(self) -> bool:
        return any(WORKLOAD_PLACEHOLDER in tok for tok in self.run_command_template)

    def resolved_compiler(self) -> str:
        if os.sep in self.compiler_command:
            return self.compiler_command
        return shutil.which(self.compiler_command) or self.compiler_command


@dataclass(frozen=True)
class MeasurementProtocol:
    warmup_runs: int = 1
    measured_runs: int = 5
    aggregator: Aggregator = Aggregator.Median
    run_timeout: float = 60.0
    compile_timeout: float = 120.0
    penalty_fitness: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.aggregator, Aggregator):
            try:
                object.__setattr__(self, "aggregator", Aggregator(self.aggregator))
            except ValueError:
                raise InvalidConfig(f"unknown aggregator {self.aggregator!r}") from None
        if self.penalty_fitness is None:
            object.__setattr__(self, "penalty_fitness", 10.0 * self.run_timeout)
        if self.warmup_runs < 0:
            raise InvalidConfig("warmup_runs must be >= 0")
        if self.measured_runs < 1:
            raise InvalidConfig("measured_runs must be >= 1")
        if self.run_timeout <= 0 or self.compile_timeout <= 0:
            raise InvalidConfig("timeouts must be positive")
        if not self.penalty_fitness > self.run_timeout:
            raise InvalidConfig("penalty_fitness must exceed run_timeout")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["aggregator"] = self.aggregator.value
        return d


def protocol_from_dict(doc: dict) -> MeasurementProtocol:
    known = {f.name for f in fields(MeasurementProtocol)}
    if not isinstance(doc, dict):
        raise InvalidConfig("protocol document must be an object")
    unknown = set(doc) - known
    if unknown:
        raise InvalidConfig(f"unknown protocol fields: {sorted(unknown)}")
    return MeasurementProtocol(**doc)


def load_protocol(path: Union[str, Path]) -> MeasurementProtocol:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfig(f"cannot read protocol {path}: {exc}") from None
    return protocol_from_dict(doc)


@dataclass
class EvaluationRecord:
    genome: str
    argument_list: list[str]
    compile_status: str = "Ok"
    run_status: str = "Skipped"
    raw_runtimes: list[float] = field(default_factory=list)
    fitness: float = 0.0
    diagnostics: str = ""
    started: float = 0.0
    finished: float = 0.0
    workload_n: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "EvaluationRecord":
        return cls(**doc)


@dataclass(frozen=True)
class CompiledBinary:
    path: Path
    diagnostics: str
    compile_seconds: float

    def discard(self):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass


def scratch_directory(override: Optional[Union[str, Path]] = None) -> Path:
    """Explicit override, else $FLAGTUNE_SCRATCH, else the TMPDIR-aware system temp dir."""
    base = override or os.environ.get(SCRATCH_ENV) or tempfile.gettempdir()
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _spawn(cmd: Sequence[str], timeout: float, cwd=None) -> tuple[Optional[int], str, float]:
    """Run ``cmd``; returns (returncode or None on timeout, stderr text, elapsed seconds)."""
    start = time.perf_counter()
    proc = subprocess.Popen(
        list(cmd),
        cwd=cwd,
        stdin=subprocess.DEVNULL,
        stdout=subprocess.DEVNULL,
        stderr=subprocess.PIPE,
        start_new_session=True,
    )
    try:
        _, err = proc.communicate(timeout=timeout)
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        _, err = proc.communicate()
        return None, err.decode(errors="replace"), time.perf_counter() - start
    return proc.returncode, err.decode(errors="replace"), time.perf_counter() - start


def compile_program(
    profile: CompilerProfile,
    arguments: Sequence[str],
    timeout: float = 120.0,
    scratch_dir: Optional[Union[str, Path]] = None,
) -> CompiledBinary:
    """Compile the profile's sources with ``arguments`` appended after extra_compile_args."""
    cwd = Path(profile.working_directory)
    for src in profile.source_files:
        if not (cwd / src).exists():
            raise CompileError(f"source file not found: {src}")
    fd, out = tempfile.mkstemp(prefix="flagtune-", suffix=".bin", dir=scratch_directory(scratch_dir))
    os.close(fd)
    out = Path(out)
    cmd = [
        profile.resolved_compiler(),
        *profile.source_files,
        *profile.extra_compile_args,
        *arguments,
        "-o",
        str(out),
    ]
    try:
        code, err, elapsed = _spawn(cmd, timeout, cwd=cwd)
    except OSError as exc:
        out.unlink(missing_ok=True)
        raise CompileError(f"cannot launch compiler: {exc}", str(exc)) from None
    if code is None:
        out.unlink(missing_ok=True)
        raise CompileTimeout(f"compile exceeded {timeout}s", err)
    if code != 0:
        out.unlink(missing_ok=True)
        raise CompileError(f"compiler exited with status {code}", err)
    return CompiledBinary(out, err, elapsed)


def run_command(profile: CompilerProfile, binary: CompiledBinary, workload_n: Optional[int]) -> list[str]:
    if profile.takes_workload and workload_n is None:
        raise ValueError("run_command_template has an {N} placeholder but no workload_n was given")
    if not profile.takes_workload and workload_n is not None:
        raise ValueError("workload_n given but run_command_template has no {N} placeholder")
    cmd = []
    for tok in profile.run_command_template:
        tok = tok.replace(BINARY_PLACEHOLDER, str(binary.path))
        if workload_n is not None:
            tok = tok.replace(WORKLOAD_PLACEHOLDER, str(workload_n))
        cmd.append(tok)
    return cmd


def measure(
    binary: CompiledBinary,
    protocol: MeasurementProtocol,
    profile: Optional[CompilerProfile] = None,
    workload_n: Optional[int] = None,
) -> list[float]:
    """Warm up, then time ``measured_runs`` sequential executions under the timing lock."""
    if profile is None:
        profile = CompilerProfile("cc", ())
    cmd = run_command(profile, binary, workload_n)
    timings = []
    with TIMING_LOCK:
        for i in range(protocol.warmup_runs + protocol.measured_runs):
            code, err, elapsed = _spawn(cmd, protocol.run_timeout, cwd=profile.working_directory)
            if code is None:
                raise RunTimeout(f"run exceeded {protocol.run_timeout}s", err)
            if code != 0:
                raise RunError(f"program exited with status {code}", err)
            if i >= protocol.warmup_runs:
                timings.append(elapsed)
    return timings


def time_arguments(
    arguments: Sequence[str],
    profile: CompilerProfile,
    protocol: MeasurementProtocol,
    workload_n: Optional[int] = None,
    scratch_dir=None,
) -> tuple[float, list[float]]:
    """Compile with ``arguments`` and return (aggregated seconds, raw timings); raises HarnessError."""
    binary = compile_program(profile, arguments, protocol.compile_timeout, scratch_dir)
    try:
        raw = measure(binary, protocol, profile, workload_n)
    finally:
        binary.discard()
    return protocol.aggregator(raw), raw


class EvaluationLog:
    """Append-only JSON-lines file of EvaluationRecords."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: EvaluationRecord):
        line = json.dumps(record.to_dict(), sort_keys=True)
        with self._lock, self.path.open("a") as fh:
            fh.write(line + "\n")

    def read(self) -> list[EvaluationRecord]:
        if not self.path.exists():
            return []
        with self.path.open() as fh:
            return [EvaluationRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


class EvaluationCache:
    """Genome bits -> EvaluationRecord, safe for concurrent readers and writers."""

    def __init__(self):
        self._records: dict[tuple, EvaluationRecord] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, genome: Genome) -> Optional[EvaluationRecord]:
        record = self._records.get(genome.bits)
        with self._lock:
            if record is None:
                self.misses += 1
            else:
                self.hits += 1
        return record

    def put(self, genome: Genome, record: EvaluationRecord):
        with self._lock:
            self._records.setdefault(genome.bits, record)

    def __len__(self):
        return len(self._records)

    @classmethod
    def from_log(cls, log_: EvaluationLog) -> "EvaluationCache":
        """Rebuild a cache from a previous session's log (restart support)."""
        cache = cls()
        for record in log_.read():
            cache.put(Genome.from_string(record.genome), record)
        return cache


def fitness_of(
    genome: Genome,
    catalog: FlagCatalog,
    profile: CompilerProfile,
    protocol: MeasurementProtocol,
    cache: Optional[EvaluationCache] = None,
    *,
    workload_n: Optional[int] = None,
    evaluation_log: Optional[EvaluationLog] = None,
    scratch_dir=None,
    compile_slots: Optional[threading.Semaphore] = None,
) -> tuple[float, EvaluationRecord]:
    """Total fitness function: never raises for compile or run failures."""
    if cache is not None:
        hit = cache.get(genome)
        if hit is not None:
            return hit.fitness, hit

    arguments = decode(genome, catalog)
    record = EvaluationRecord(
        genome=str(genome), argument_list=arguments, started=time.time(), workload_n=workload_n
    )
    binary = None
    try:
        if compile_slots is not None:
            with compile_slots:
                binary = compile_program(profile, arguments, protocol.compile_timeout, scratch_dir)
        else:
            binary = compile_program(profile, arguments, protocol.compile_timeout, scratch_dir)
        record.diagnostics = binary.diagnostics
        raw = measure(binary, protocol, profile, workload_n)
        record.run_status = "Ok"
        record.raw_runtimes = raw
        record.fitness = protocol.aggregator(raw)
    except (CompileError, CompileTimeout) as exc:
        record.compile_status = exc.status
        record.run_status = "Skipped"
        record.diagnostics = exc.diagnostics or str(exc)
        record.fitness = protocol.penalty_fitness
    except (RunError, RunTimeout) as exc:
        record.run_status = exc.status
        record.diagnostics = exc.diagnostics or str(exc)
        record.fitness = protocol.penalty_fitness
    except Exception as exc:  # totality: anything else is still a penalized evaluation
        log.warning("evaluation of %s failed unexpectedly: %s", genome, exc)
        record.compile_status = record.compile_status if binary else "CompileError"
        record.run_status = "RunError" if binary else "Skipped"
        record.diagnostics = repr(exc)
        record.fitness = protocol.penalty_fitness
    finally:
        if binary is not None:
            binary.discard()
    record.finished = time.time()

    if cache is not None:
        cache.put(genome, record)
    if evaluation_log is not None:
        evaluation_log.append(record)
    return record.fitness, record


class FitnessEvaluator:
    """Callable fitness function for the GA bound to one compiler profile."""

    def __init__(
        self,
        catalog: FlagCatalog,
        profile: CompilerProfile,
        protocol: MeasurementProtocol,
        *,
        workload_n: Optional[int] = None,
        evaluation_log: Optional[EvaluationLog] = None,
        cache: Optional[EvaluationCache] = None,
        scratch_dir=None,
        jobs: int = 1,
    ):
        self.catalog = catalog
        self.profile = profile
        self.protocol = protocol
        self.workload_n = workload_n
        self.evaluation_log = evaluation_log
        self.cache = cache if cache is not None else EvaluationCache()
        self.scratch_dir = scratch_dir
        self.compile_slots = threading.Semaphore(max(1, jobs))

    def __call__(self, genome: Genome) -> tuple[float, EvaluationRecord]:
        return fitness_of(
            genome,
            self.catalog,
            self.profile,
            self.protocol,
            self.cache,
            workload_n=self.workload_n,
            evaluation_log=self.evaluation_log,
            scratch_dir=self.scratch_dir,
            compile_slots=self.compile_slots,
        )


@dataclass
class BaselineCell:
    level: str
    workload_n: Optional[int]
    fitness: Optional[float]
    raw_runtimes: list[float] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.fitness is not None


def evaluate_predefined(
    levels: Sequence[PredefinedLevel],
    profile: CompilerProfile,
    protocol: MeasurementProtocol,
    workloads: Sequence[Optional[int]] = (None,),
    scratch_dir=None,
) -> list[BaselineCell]:
    """One row per (level, N); failed cells carry ``error`` instead of a fitness."""
    rows = []
    for level in levels:
        for n in workloads:
            try:
                fit, raw = time_arguments(level.arguments, profile, protocol, n, scratch_dir)
                rows.append(BaselineCell(level.label, n, fit, raw))
            except HarnessError as exc:
                detail = f"{exc.status}: {exc}"
                if exc.diagnostics:
                    detail += f"\n{exc.diagnostics.strip()}"
                rows.append(BaselineCell(level.label, n, None, error=detail))
    return rows

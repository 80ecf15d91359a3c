"""Outer search over the GA's own hyperparameters.

Half of the trial budget samples configurations uniformly from the parameter
space; the other half perturbs the incumbent one parameter at a time (adjacent
categorical value, or +/-10% on a numeric value).  A trial's objective is the
inner GA's best fitness averaged over a fixed set of inner seeds, shared by
every trial so that configurations are compared on the same random streams.
"""

from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from . import ga
from .errors import InvalidConfig, InvalidSpace
from .flagspace import FlagCatalog
from .ga import CrossoverType, GAConfig, MutationType, SelectionType, StoppingPolicy

MAX_SAMPLE_ATTEMPTS = 1000

_NUMERIC = (
    ("population_size", int),
    ("mutation_probability", float),
    ("elitism_ratio", float),
    ("crossover_probability", float),
    ("parents_portion", float),
    ("max_generations", int),
    ("max_iterations_without_improvement", int),
)
_CATEGORICAL = ("crossover_type", "mutation_type", "selection_type")


@dataclass(frozen=True)
class ParameterSpace:
    crossover_type: tuple = tuple(CrossoverType)
    mutation_type: tuple = tuple(MutationType)
    selection_type: tuple = tuple(SelectionType)
    population_size: tuple[int, int] = (10, 500)
    mutation_probability: tuple[float, float] = (0.01, 0.5)
    elitism_ratio: tuple[float, float] = (0.0, 0.3)
    crossover_probability: tuple[float, float] = (0.05, 1.0)
    parents_portion: tuple[float, float] = (0.1, 0.9)
    max_generations: tuple[int, int] = (10, 200)
    max_iterations_without_improvement: tuple[int, int] = (5, 100)
    tournament_size: int = 2

    def __post_init__(self):
        for name, enum_cls in zip(_CATEGORICAL, (CrossoverType, MutationType, SelectionType)):
            values = getattr(self, name)
            try:
                values = tuple(v if isinstance(v, enum_cls) else enum_cls(v) for v in values)
            except ValueError as exc:
                raise InvalidSpace(str(exc)) from None
            if not values:
                raise InvalidSpace(f"{name} has no values")
            object.__setattr__(self, name, values)
        for name, kind in _NUMERIC:
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InvalidSpace(f"{name} range is empty: [{lo}, {hi}]")
            object.__setattr__(self, name, (kind(lo), kind(hi)))

    @classmethod
    def fixed(cls, config: GAConfig, stopping: StoppingPolicy) -> "ParameterSpace":
        """The single-point space containing exactly ``config``."""
        kw = {name: (getattr(config, name),) for name in _CATEGORICAL}
        for name, _ in _NUMERIC:
            source = stopping if name == "max_iterations_without_improvement" else config
            value = getattr(source, name)
            kw[name] = (value, value)
        return cls(tournament_size=config.tournament_size, **kw)

    def to_dict(self) -> dict:
        d = {name: [v.value for v in getattr(self, name)] for name in _CATEGORICAL}
        d.update({name: list(getattr(self, name)) for name, _ in _NUMERIC})
        d["tournament_size"] = self.tournament_size
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ParameterSpace":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise InvalidSpace(f"unknown parameter-space fields: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        return cls(**kw)


def _build(values: dict, seed: int, tournament_size: int) -> tuple[GAConfig, StoppingPolicy]:
    stopping = StoppingPolicy(values["max_iterations_without_improvement"])
    cfg = {k: v for k, v in values.items() if k != "max_iterations_without_improvement"}
    return GAConfig(tournament_size=tournament_size, rng_seed=seed, **cfg), stopping


def _draw(space: ParameterSpace, rng: random.Random) -> dict:
    values = {name: rng.choice(getattr(space, name)) for name in _CATEGORICAL}
    for name, kind in _NUMERIC:
        lo, hi = getattr(space, name)
        values[name] = rng.randint(lo, hi) if kind is int else rng.uniform(lo, hi)
    return values


def sample_config(
    space: ParameterSpace, rng: random.Random, seed: int = 0
) -> tuple[GAConfig, StoppingPolicy]:
    """Uniform draw, resampled until the GA config invariants hold."""
    for _ in range(MAX_SAMPLE_ATTEMPTS):
        try:
            return _build(_draw(space, rng), seed, space.tournament_size)
        except InvalidConfig:
            continue
    raise InvalidSpace(f"no valid GA config after {MAX_SAMPLE_ATTEMPTS} samples")


def _values_of(config: GAConfig, stopping: StoppingPolicy) -> dict:
    values = {name: getattr(config, name) for name in _CATEGORICAL}
    for name, _ in _NUMERIC:
        source = stopping if name == "max_iterations_without_improvement" else config
        values[name] = getattr(source, name)
    return values


def perturb(
    config: GAConfig, stopping: StoppingPolicy, space: ParameterSpace, rng: random.Random
) -> tuple[GAConfig, StoppingPolicy]:
    """Change one parameter: neighbouring categorical value or a +/-10% numeric step."""
    names = list(_CATEGORICAL) + [n for n, _ in _NUMERIC]
    kinds = dict(_NUMERIC)
    for _ in range(MAX_SAMPLE_ATTEMPTS):
        values = _values_of(config, stopping)
        name = rng.choice(names)
        step = rng.choice((-1, 1))
        if name in _CATEGORICAL:
            options = getattr(space, name)
            if values[name] in options:
                i = options.index(values[name]) + step
                values[name] = options[min(max(i, 0), len(options) - 1)]
            else:
                values[name] = rng.choice(options)
        else:
            lo, hi = getattr(space, name)
            value = values[name] * (1.0 + 0.1 * step)
            if kinds[name] is int:
                moved = int(round(value))
                if moved == values[name]:
                    moved += step
                value = moved
            values[name] = min(max(value, lo), hi)
        try:
            return _build(values, config.rng_seed, space.tournament_size)
        except InvalidConfig:
            continue
    return sample_config(space, rng, config.rng_seed)


@dataclass
class MetaTrial:
    index: int
    phase: str
    config: GAConfig
    stopping: StoppingPolicy
    objective: float
    seed_objectives: list[float]
    evaluations_spent: int
    wall_clock: float

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "phase": self.phase,
            "config": ga.config_document(self.config, self.stopping),
            "objective": self.objective,
            "seed_objectives": self.seed_objectives,
            "evaluations_spent": self.evaluations_spent,
            "wall_clock": self.wall_clock,
        }


@dataclass
class TuneResult:
    best: GAConfig
    best_stopping: StoppingPolicy
    trials: list[MetaTrial]
    inner_seeds: list[int]

    @property
    def best_trial(self) -> MetaTrial:
        return min(self.trials, key=lambda t: (t.objective, t.index))


InnerProblem = tuple[Union[FlagCatalog, int], Callable]


def _genome_length(target) -> int:
    return target.genome_length() if isinstance(target, FlagCatalog) else int(target)


def evaluate_config(
    config: GAConfig,
    stopping: StoppingPolicy,
    inner_problem: InnerProblem,
    inner_seeds: Sequence[int],
) -> tuple[float, list[float], int]:
    """Mean best inner fitness over ``inner_seeds`` (each replaces config.rng_seed)."""
    target, fitness_fn = inner_problem
    length = _genome_length(target)
    bests, spent = [], 0
    for seed in inner_seeds:
        result = ga.run(replace(config, rng_seed=seed), stopping, length, fitness_fn)
        bests.append(result.best.fitness)
        spent += result.evaluations
    return math.fsum(bests) / len(bests), bests, spent


def tune(
    space: ParameterSpace,
    inner_problem: InnerProblem,
    budget: int,
    seeds_per_trial: int = 3,
    rng: Optional[random.Random] = None,
    on_trial: Optional[Callable[[MetaTrial], None]] = None,
) -> TuneResult:
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if seeds_per_trial < 1:
        raise ValueError("seeds_per_trial must be >= 1")
    rng = rng if rng is not None else random.Random(0)
    inner_seeds = [rng.getrandbits(32) for _ in range(seeds_per_trial)]
    explore = budget - budget // 2

    trials: list[MetaTrial] = []
    incumbent: Optional[MetaTrial] = None
    for index in range(budget):
        if index < explore:
            phase = "random"
            config, stopping = sample_config(space, rng, inner_seeds[0])
        else:
            phase = "refine"
            config, stopping = perturb(incumbent.config, incumbent.stopping, space, rng)
        start = time.perf_counter()
        objective, per_seed, spent = evaluate_config(config, stopping, inner_problem, inner_seeds)
        trial = MetaTrial(
            index, phase, replace(config, rng_seed=inner_seeds[0]), stopping,
            objective, per_seed, spent, time.perf_counter() - start,
        )
        trials.append(trial)
        if on_trial is not None:
            on_trial(trial)
        if incumbent is None or trial.objective < incumbent.objective:
            incumbent = trial

    return TuneResult(incumbent.config, incumbent.stopping, trials, inner_seeds)


def write_trials_log(trials: Sequence[MetaTrial], path: Union[str, Path]):
    with Path(path).open("w") as fh:
        for trial in trials:
            fh.write(json.dumps(trial.to_dict(), sort_keys=True) + "\n")

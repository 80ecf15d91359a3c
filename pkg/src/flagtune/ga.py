"""Genetic algorithm over flag genomes.

Fitness is minimized (seconds of execution time).  Each generation keeps the
best ``elitism_ratio`` share untouched, truncates the population to the best
``parents_portion`` share, and refills the remaining slots pairwise from that
pool with the configured selection, crossover and mutation operators.  A run
ends when the generation budget is spent or when the best fitness has not
strictly improved for ``max_iterations_without_improvement`` generations.
"""

from __future__ import annotations

import bisect
import itertools
import json
import math
import random
import statistics
import time
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Union

from .errors import EmptyPopulation, InvalidConfig, LengthMismatch
from .flagspace import Genome


class CrossoverType(Enum):
    OnePoint = "OnePoint"
    TwoPoint = "TwoPoint"
    Uniform = "Uniform"
    Shuffle = "Shuffle"
    Segment = "Segment"


class MutationType(Enum):
    UniformBit = "UniformBit"
    GaussByCenter = "GaussByCenter"


class SelectionType(Enum):
    FullyRandom = "FullyRandom"
    Roulette = "Roulette"
    StochasticUniversal = "StochasticUniversal"
    SigmaScaling = "SigmaScaling"
    Ranking = "Ranking"
    LinearRanking = "LinearRanking"
    Tournament = "Tournament"


class StopReason(Enum):
    GenerationBudget = "GenerationBudget"
    NoImprovement = "NoImprovement"


# floor() guard for products like 0.29 * 100 == 28.999999999999996
_FLOOR_EPS = 1e-9

ROULETTE_EPSILON = 1e-3
SIGMA_SCORE_FLOOR = 0.1


def _portion(ratio: float, size: int) -> int:
    return math.floor(ratio * size + _FLOOR_EPS)


@dataclass(frozen=True)
class GAConfig:
    max_generations: int = 100
    population_size: int = 277
    mutation_probability: float = 0.287
    elitism_ratio: float = 0.147
    crossover_probability: float = 0.120
    parents_portion: float = 0.689
    crossover_type: CrossoverType = CrossoverType.Segment
    mutation_type: MutationType = MutationType.GaussByCenter
    selection_type: SelectionType = SelectionType.LinearRanking
    tournament_size: int = 2
    rng_seed: int = 0

    def __post_init__(self):
        for name, enum_cls in (
            ("crossover_type", CrossoverType),
            ("mutation_type", MutationType),
            ("selection_type", SelectionType),
        ):
            value = getattr(self, name)
            if not isinstance(value, enum_cls):
                try:
                    object.__setattr__(self, name, enum_cls(value))
                except ValueError:
                    choices = ", ".join(m.value for m in enum_cls)
                    raise InvalidConfig(f"{name}={value!r}; expected one of {choices}") from None
        for name in ("max_generations", "population_size", "tournament_size", "rng_seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise InvalidConfig(f"{name} must be an integer, got {value!r}")
        for name in ("mutation_probability", "elitism_ratio", "crossover_probability", "parents_portion"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
                raise InvalidConfig(f"{name} must be a fraction in [0, 1], got {value!r}")
        if self.population_size < 2:
            raise InvalidConfig(f"population_size must be >= 2, got {self.population_size}")
        if self.max_generations < 1:
            raise InvalidConfig(f"max_generations must be >= 1, got {self.max_generations}")
        if self.tournament_size < 1:
            raise InvalidConfig(f"tournament_size must be >= 1, got {self.tournament_size}")
        if not 0 <= self.rng_seed < 2**64:
            raise InvalidConfig("rng_seed must be a 64-bit unsigned integer")
        if self.elite_count > self.parent_pool_size:
            raise InvalidConfig(
                f"elite count {self.elite_count} exceeds parent pool {self.parent_pool_size}"
            )

    @property
    def elite_count(self) -> int:
        return _portion(self.elitism_ratio, self.population_size)

    @property
    def parent_pool_size(self) -> int:
        return _portion(self.parents_portion, self.population_size)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("crossover_type", "mutation_type", "selection_type"):
            d[key] = d[key].value
        return d


@dataclass(frozen=True)
class StoppingPolicy:
    max_iterations_without_improvement: int = 45

    def __post_init__(self):
        value = self.max_iterations_without_improvement
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise InvalidConfig(f"max_iterations_without_improvement must be >= 1, got {value!r}")

    def to_dict(self) -> dict:
        return asdict(self)


_CONFIG_FIELDS = {f.name for f in fields(GAConfig)}
_STOPPING_FIELDS = {f.name for f in fields(StoppingPolicy)}


def config_from_dict(doc: dict) -> tuple[GAConfig, StoppingPolicy]:
    """Build (GAConfig, StoppingPolicy) from a flat mapping; missing fields take defaults."""
    if not isinstance(doc, dict):
        raise InvalidConfig("config document must be an object")
    unknown = set(doc) - _CONFIG_FIELDS - _STOPPING_FIELDS
    if unknown:
        raise InvalidConfig(f"unknown config fields: {sorted(unknown)}")
    try:
        config = GAConfig(**{k: v for k, v in doc.items() if k in _CONFIG_FIELDS})
        stopping = StoppingPolicy(**{k: v for k, v in doc.items() if k in _STOPPING_FIELDS})
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from None
    return config, stopping


def load_config(path: Union[str, Path]) -> tuple[GAConfig, StoppingPolicy]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from None
    return config_from_dict(doc)


def config_document(config: GAConfig, stopping: StoppingPolicy) -> dict:
    return {**config.to_dict(), **stopping.to_dict()}


@dataclass(frozen=True)
class ScoredIndividual:
    genome: Genome
    fitness: float
    evaluation_metadata: Any = None


@dataclass(frozen=True)
class HistoryEntry:
    generation: int
    best_fitness: float
    mean_fitness: float
    evaluations: int
    timestamp: float


@dataclass
class GAResult:
    best: ScoredIndividual
    history: list[HistoryEntry]
    stop_reason: StopReason

    @property
    def generations(self) -> int:
        return len(self.history)

    @property
    def final_generation(self) -> int:
        return self.history[-1].generation

    @property
    def evaluations(self) -> int:
        return self.history[-1].evaluations


# -- initialization -----------------------------------------------------------


def initialize_population(config: GAConfig, genome_length: int, rng: random.Random) -> list[Genome]:
    if genome_length < 1:
        raise InvalidConfig("genome_length must be >= 1")
    if config.population_size < 2:
        raise InvalidConfig("population_size must be >= 2")
    return [
        Genome.trusted(tuple(rng.getrandbits(1) for _ in range(genome_length)))
        for _ in range(config.population_size)
    ]


# -- selection ----------------------------------------------------------------


def survival_scores(fitnesses: Sequence[float], selection_type: SelectionType) -> Optional[list[float]]:
    """Sampling weights (bigger is better) for the weight-based selection types.

    Returns None when selection degenerates to uniform.
    """
    n = len(fitnesses)
    if selection_type is SelectionType.FullyRandom:
        return None
    if selection_type in (SelectionType.Roulette, SelectionType.StochasticUniversal):
        worst, best = max(fitnesses), min(fitnesses)
        spread = worst - best
        if spread == 0:
            return None
        return [(worst - f) + ROULETTE_EPSILON * spread for f in fitnesses]
    if selection_type is SelectionType.SigmaScaling:
        sigma = statistics.pstdev(fitnesses)
        if sigma == 0:
            return None
        mean = statistics.fmean(fitnesses)
        return [max(1.0 + (mean - f) / (2.0 * sigma), SIGMA_SCORE_FLOOR) for f in fitnesses]
    if selection_type in (SelectionType.Ranking, SelectionType.LinearRanking):
        # worst gets rank 1, best gets rank n; ties broken by position
        order = sorted(range(n), key=lambda i: fitnesses[i], reverse=True)
        rank = [0] * n
        for position, i in enumerate(order):
            rank[i] = position + 1
        if selection_type is SelectionType.Ranking:
            return [float(r) for r in rank]
        if n == 1:
            return None
        return [1.0 + (r - 1) / (n - 1) for r in rank]
    raise ValueError(f"{selection_type} has no score table")


class ParentSampler:
    """Selection weights computed once for a pool, then sampled many times."""

    def __init__(
        self,
        scored: Sequence[ScoredIndividual],
        selection_type: SelectionType,
        tournament_size: int = 2,
    ):
        if not scored:
            raise EmptyPopulation("cannot select from an empty population")
        self.scored = list(scored)
        self.selection_type = selection_type
        self.tournament_size = tournament_size
        self.fitnesses = [s.fitness for s in self.scored]
        self.scores = None
        self.cumulative = None
        if selection_type is not SelectionType.Tournament:
            self.scores = survival_scores(self.fitnesses, selection_type)
        if self.scores is not None:
            self.cumulative = list(itertools.accumulate(self.scores))

    def sample(self, count: int, rng: random.Random) -> list[ScoredIndividual]:
        if count < 1:
            raise ValueError("count must be >= 1")
        scored, n = self.scored, len(self.scored)

        if self.selection_type is SelectionType.Tournament:
            fitnesses = self.fitnesses
            picked = []
            for _ in range(count):
                contenders = [rng.randrange(n) for _ in range(self.tournament_size)]
                picked.append(scored[min(contenders, key=lambda i: (fitnesses[i], i))])
            return picked

        if self.scores is None:
            return [scored[rng.randrange(n)] for _ in range(count)]

        if self.selection_type is SelectionType.StochasticUniversal:
            step = self.cumulative[-1] / count
            start = rng.random() * step
            return [
                scored[min(bisect.bisect_right(self.cumulative, start + k * step), n - 1)]
                for k in range(count)
            ]

        return rng.choices(scored, cum_weights=self.cumulative, k=count)


def select_parents(
    scored: Sequence[ScoredIndividual],
    count: int,
    selection_type: SelectionType,
    rng: random.Random,
    tournament_size: int = 2,
) -> list[ScoredIndividual]:
    """Sample ``count`` individuals with replacement; lower fitness survives more often."""
    return ParentSampler(scored, selection_type, tournament_size).sample(count, rng)


# -- crossover ----------------------------------------------------------------


def _one_point(a: Sequence[int], b: Sequence[int], cut: int) -> tuple[tuple, tuple]:
    a, b = tuple(a), tuple(b)
    return a[:cut] + b[cut:], b[:cut] + a[cut:]


def _two_point(a: Sequence[int], b: Sequence[int], lo: int, hi: int) -> tuple[tuple, tuple]:
    a, b = tuple(a), tuple(b)
    return a[:lo] + b[lo:hi] + a[hi:], b[:lo] + a[lo:hi] + b[hi:]


def _uniform(a: Sequence[int], b: Sequence[int], swap: Sequence[int]) -> tuple[tuple, tuple]:
    c1 = tuple(y if s else x for x, y, s in zip(a, b, swap))
    c2 = tuple(x if s else y for x, y, s in zip(a, b, swap))
    return c1, c2


def _shuffle(a: Sequence[int], b: Sequence[int], perm: Sequence[int], cut: int) -> tuple[tuple, tuple]:
    pa = [a[p] for p in perm]
    pb = [b[p] for p in perm]
    s1, s2 = _one_point(pa, pb, cut)
    c1, c2 = [0] * len(a), [0] * len(a)
    for position, p in enumerate(perm):
        c1[p] = s1[position]
        c2[p] = s2[position]
    return tuple(c1), tuple(c2)


def _segment(
    a: Sequence[int], b: Sequence[int], closes: Sequence[int], sources: Sequence[int]
) -> tuple[tuple, tuple]:
    """``closes[i]`` ends a segment after position i; ``sources[k]`` = 1 takes segment k from b."""
    c1, c2 = [], []
    segment = 0
    for i, (x, y) in enumerate(zip(a, b)):
        from_b = sources[segment]
        c1.append(y if from_b else x)
        c2.append(x if from_b else y)
        if i < len(closes) and closes[i]:
            segment += 1
    return tuple(c1), tuple(c2)


def crossover(
    parent_a: Genome, parent_b: Genome, crossover_type: CrossoverType, rng: random.Random
) -> tuple[Genome, Genome]:
    length = len(parent_a)
    if length != len(parent_b):
        raise LengthMismatch(f"parents have lengths {length} and {len(parent_b)}")
    if length < 1:
        raise LengthMismatch("parents must have length >= 1")
    a, b = parent_a.bits, parent_b.bits

    if crossover_type is CrossoverType.OnePoint:
        c1, c2 = _one_point(a, b, rng.randint(1, length - 1)) if length > 1 else (a, b)
    elif crossover_type is CrossoverType.TwoPoint:
        if length > 2:
            lo, hi = sorted(rng.sample(range(1, length), 2))
            c1, c2 = _two_point(a, b, lo, hi)
        elif length == 2:
            c1, c2 = _one_point(a, b, 1)
        else:
            c1, c2 = a, b
    elif crossover_type is CrossoverType.Uniform:
        c1, c2 = _uniform(a, b, [rng.getrandbits(1) for _ in range(length)])
    elif crossover_type is CrossoverType.Shuffle:
        perm = list(range(length))
        rng.shuffle(perm)
        cut = rng.randint(1, length - 1) if length > 1 else 0
        c1, c2 = _shuffle(a, b, perm, cut)
    elif crossover_type is CrossoverType.Segment:
        closes = [rng.getrandbits(1) for _ in range(length - 1)]
        sources = [rng.getrandbits(1) for _ in range(sum(closes) + 1)]
        c1, c2 = _segment(a, b, closes, sources)
    else:
        raise ValueError(f"unsupported crossover type {crossover_type}")
    return Genome.trusted(tuple(c1)), Genome.trusted(tuple(c2))


# -- mutation -----------------------------------------------------------------


def gauss_by_center_bit(rng: random.Random) -> int:
    value = min(max(rng.gauss(0.5, 0.25), 0.0), 1.0)
    return 1 if value >= 0.5 else 0


def mutate(
    genome: Genome, mutation_probability: float, mutation_type: MutationType, rng: random.Random
) -> Genome:
    if not 0.0 <= mutation_probability <= 1.0:
        raise ValueError(f"mutation_probability must be in [0, 1], got {mutation_probability}")
    if mutation_probability == 0.0:
        return genome
    bits = list(genome.bits)
    draw = rng.random
    gauss = mutation_type is MutationType.GaussByCenter
    for i in range(len(bits)):
        if draw() < mutation_probability:
            bits[i] = gauss_by_center_bit(rng) if gauss else rng.getrandbits(1)
    return Genome.trusted(tuple(bits))


# -- generation step ------------------------------------------------------------


def next_generation(
    scored: Sequence[ScoredIndividual], config: GAConfig, rng: random.Random
) -> list[Genome]:
    """Elites first (best to worst), then children bred from the truncated parent pool.

    ``scored`` must be in evaluation order: equal fitness keeps the earlier individual.
    """
    size = config.population_size
    if len(scored) != size:
        raise InvalidConfig(f"expected {size} scored individuals, got {len(scored)}")
    elites = config.elite_count
    if elites > size:
        raise InvalidConfig(f"elite count {elites} exceeds population {size}")
    pool_size = min(max(config.parent_pool_size, 2), size)

    ranked = sorted(scored, key=lambda s: s.fitness)  # stable
    out = [s.genome for s in ranked[:elites]]
    sampler = ParentSampler(ranked[:pool_size], config.selection_type, config.tournament_size)
    while len(out) < size:
        pa, pb = sampler.sample(2, rng)
        if rng.random() < config.crossover_probability:
            c1, c2 = crossover(pa.genome, pb.genome, config.crossover_type, rng)
        else:
            c1, c2 = pa.genome, pb.genome
        out.append(mutate(c1, config.mutation_probability, config.mutation_type, rng))
        if len(out) < size:
            out.append(mutate(c2, config.mutation_probability, config.mutation_type, rng))
    return out


# -- driver ---------------------------------------------------------------------

FitnessFn = Callable[[Genome], Union[float, tuple[float, Any]]]


def _score(genome: Genome, fitness_fn: FitnessFn) -> ScoredIndividual:
    value = fitness_fn(genome)
    meta = None
    if isinstance(value, tuple):
        value, meta = value
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"fitness must be finite and non-negative, got {value} for {genome}")
    return ScoredIndividual(genome, value, meta)


def _evaluate(genomes: Sequence[Genome], fitness_fn: FitnessFn, executor) -> list[ScoredIndividual]:
    if executor is None:
        return [_score(g, fitness_fn) for g in genomes]
    return list(executor.map(lambda g: _score(g, fitness_fn), genomes))


def run(
    config: GAConfig,
    stopping: StoppingPolicy,
    genome_length: int,
    fitness_fn: FitnessFn,
    rng: Optional[random.Random] = None,
    *,
    clock: Callable[[], float] = time.monotonic,
    executor=None,
    on_generation: Optional[Callable[[HistoryEntry], None]] = None,
) -> GAResult:
    """Evolve until the generation budget or the no-improvement budget runs out.

    ``fitness_fn`` may return a bare fitness or ``(fitness, metadata)``.  With an
    ``executor`` the individuals of one generation are scored through
    ``executor.map``; all random draws stay on the calling thread.  ``clock``
    stamps the history (seconds since the run started).
    """
    if rng is None:
        rng = random.Random(config.rng_seed)
    start = clock()
    population = initialize_population(config, genome_length, rng)

    history: list[HistoryEntry] = []
    evaluations = 0
    best: Optional[ScoredIndividual] = None
    last_improvement = 0
    generation = 0
    while True:
        scored = _evaluate(population, fitness_fn, executor)
        evaluations += len(scored)
        leader = min(scored, key=lambda s: s.fitness)
        if best is None or leader.fitness < best.fitness:
            best = leader
            last_improvement = generation
        entry = HistoryEntry(
            generation=generation,
            best_fitness=best.fitness,
            mean_fitness=math.fsum(s.fitness for s in scored) / len(scored),
            evaluations=evaluations,
            timestamp=clock() - start,
        )
        history.append(entry)
        if on_generation is not None:
            on_generation(entry)

        if generation - last_improvement >= stopping.max_iterations_without_improvement:
            reason = StopReason.NoImprovement
            break
        if generation + 1 >= config.max_generations:
            reason = StopReason.GenerationBudget
            break
        population = next_generation(scored, config, rng)
        generation += 1

    return GAResult(best=best, history=history, stop_reason=reason)

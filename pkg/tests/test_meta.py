import random
import statistics
from collections import Counter

import pytest

from flagtune import meta
from flagtune.errors import InvalidSpace
from flagtune.ga import CrossoverType, GAConfig, MutationType, SelectionType, StoppingPolicy
from flagtune.meta import ParameterSpace, evaluate_config, sample_config, tune

from conftest import log_uniform_model


def test_degenerate_space_returns_that_config():
    cfg = GAConfig(population_size=40, mutation_probability=0.1, crossover_type=CrossoverType.Uniform,
                   selection_type=SelectionType.Tournament, max_generations=30)
    stop = StoppingPolicy(12)
    space = ParameterSpace.fixed(cfg, stop)
    got, got_stop = sample_config(space, random.Random(5), seed=cfg.rng_seed)
    assert got == cfg and got_stop == stop


def test_crossover_types_uniform():
    rng = random.Random(11)
    counts = Counter(sample_config(ParameterSpace(), rng)[0].crossover_type for _ in range(10_000))
    assert set(counts) == set(CrossoverType)
    for n in counts.values():
        assert 0.18 <= n / 10_000 <= 0.22


def test_unsatisfiable_space():
    space = ParameterSpace(elitism_ratio=(0.9, 0.9), parents_portion=(0.1, 0.1))
    with pytest.raises(InvalidSpace):
        sample_config(space, random.Random(0))


def test_space_validation_and_round_trip():
    with pytest.raises(InvalidSpace):
        ParameterSpace(population_size=(50, 10))
    with pytest.raises(InvalidSpace):
        ParameterSpace(mutation_type=())
    with pytest.raises(InvalidSpace):
        ParameterSpace.from_dict({"colour": ["red"]})
    space = ParameterSpace(selection_type=(SelectionType.Roulette,), population_size=(20, 30))
    assert ParameterSpace.from_dict(space.to_dict()) == space


def test_perturb_stays_in_space():
    space = ParameterSpace()
    rng = random.Random(2)
    cfg, stop = sample_config(space, rng)
    for _ in range(200):
        cfg, stop = meta.perturb(cfg, stop, space, rng)
        assert space.population_size[0] <= cfg.population_size <= space.population_size[1]
        assert space.mutation_probability[0] <= cfg.mutation_probability <= space.mutation_probability[1]
        assert 5 <= stop.max_iterations_without_improvement <= 100


SMALL = ParameterSpace(population_size=(10, 40), max_generations=(10, 40), max_iterations_without_improvement=(5, 20))


def test_budget_one_is_the_sampled_config():
    model = log_uniform_model(8, seed=2)
    result = tune(SMALL, (8, model), budget=1, seeds_per_trial=2, rng=random.Random(3))
    [trial] = result.trials
    assert result.best == trial.config and result.best_stopping == trial.stopping
    # the same outer stream reproduces the draw
    rng = random.Random(3)
    seeds = [rng.getrandbits(32) for _ in range(2)]
    expected, expected_stop = sample_config(SMALL, rng, seeds[0])
    assert (result.best, result.best_stopping) == (expected, expected_stop)


def test_best_is_argmin_and_at_most_median(twelve_flag_model):
    result = tune(SMALL, (12, twelve_flag_model), budget=12, seeds_per_trial=2, rng=random.Random(1))
    objectives = [t.objective for t in result.trials]
    assert result.best_trial.objective == min(objectives)
    assert result.best_trial.objective <= statistics.median(objectives)
    assert [t.phase for t in result.trials] == ["random"] * 6 + ["refine"] * 6


def test_budget_accounting_and_determinism(twelve_flag_model):
    a = tune(SMALL, (12, twelve_flag_model), budget=4, seeds_per_trial=3, rng=random.Random(9))
    b = tune(SMALL, (12, twelve_flag_model), budget=4, seeds_per_trial=3, rng=random.Random(9))
    assert len(a.trials) == 4
    for t in a.trials:
        assert len(t.seed_objectives) == 3
        objective, per_seed, spent = evaluate_config(t.config, t.stopping, (12, twelve_flag_model), a.inner_seeds)
        assert (objective, per_seed, spent) == (t.objective, t.seed_objectives, t.evaluations_spent)
    assert [t.objective for t in a.trials] == [t.objective for t in b.trials]
    assert a.best == b.best


def test_trials_log(tmp_path, twelve_flag_model):
    result = tune(SMALL, (12, twelve_flag_model), budget=2, seeds_per_trial=1, rng=random.Random(0))
    path = tmp_path / "trials.jsonl"
    meta.write_trials_log(result.trials, path)
    assert len(path.read_text().splitlines()) == 2


@pytest.mark.slow
def test_tuned_defaults_close_to_meta_best(twelve_flag_model):
    result = tune(ParameterSpace(), (12, twelve_flag_model), budget=40, seeds_per_trial=3, rng=random.Random(0))
    table, _, _ = evaluate_config(GAConfig(), StoppingPolicy(), (12, twelve_flag_model), result.inner_seeds)
    best = result.best_trial.objective
    assert table <= 1.10 * best

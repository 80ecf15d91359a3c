import json

import pytest

from flagtune import harness
from flagtune.cli import EXIT_CONFIG, EXIT_OK, EXIT_USAGE, main
from flagtune.flagspace import Genome, reference_catalog
from flagtune.ga import StoppingPolicy, config_document, GAConfig
from flagtune.mock import MockModel
from flagtune.report import RunReport

from conftest import brute_force_minimum


@pytest.fixture
def model_file(tmp_path, twelve_flag_model):
    path = tmp_path / "model.json"
    twelve_flag_model.save(path)
    return path


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return path


def test_tune_defaults_reach_exhaustive_optimum(tmp_path, model_file, twelve_flag_model):
    out = tmp_path / "run.json"
    assert main(["tune", "--mock-model", str(model_file), "--out", str(out)]) == EXIT_OK
    report = RunReport.load(out)
    optimum, argmin = brute_force_minimum(twelve_flag_model.runtime, 12)
    assert report.best_fitness == optimum
    assert report.best_genome == str(Genome(argmin))
    assert report.best_fitness == min(h["best_fitness"] for h in report.history)
    assert report.config == GAConfig().to_dict()
    assert [b["configuration"] for b in report.baselines] == ["O1", "O2", "O3"]
    assert report.clock == "simulated"


def test_population_one_is_config_error_without_spawns(tmp_path, fake_toolchain, monkeypatch):
    model, compiler, source = fake_toolchain
    calls = []
    monkeypatch.setattr(harness, "_spawn", lambda *a, **k: calls.append(a))
    cfg = _write(tmp_path / "cfg.json", {"population_size": 1})
    catalog = _write(tmp_path / "cat.json", model.catalog().to_dict())
    code = main(["tune", "--compiler", str(compiler), "--source", source.name, "--workdir", str(source.parent),
                 "--catalog", str(catalog), "--config", str(cfg), "--out", str(tmp_path / "r.json")])
    assert code == EXIT_CONFIG
    assert calls == []
    assert not (tmp_path / "r.json").exists()


def test_missing_out_is_usage_error(model_file, capsys):
    assert main(["tune", "--mock-model", str(model_file)]) == EXIT_USAGE
    assert "--out" in capsys.readouterr().err


def test_missing_backend_is_usage_error(tmp_path, capsys):
    assert main(["tune", "--out", str(tmp_path / "r.json")]) == EXIT_USAGE
    assert "--compiler" in capsys.readouterr().err


def test_same_seed_same_report(tmp_path, model_file):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert main(["tune", "--mock-model", str(model_file), "--seed", "4", "--out", str(out)]) == EXIT_OK
    ra, rb = RunReport.load(a), RunReport.load(b)
    assert json.dumps(ra.history) == json.dumps(rb.history)
    assert ra.best_genome == rb.best_genome


def test_compare_identity_model(tmp_path, capsys):
    path = tmp_path / "unit.json"
    MockModel((1.0,) * 4, base_runtime=0.5, levels={"O3": ("flag0", "flag2")}).save(path)
    out = tmp_path / "cmp.json"
    assert main(["compare", "--mock-model", str(path), "--levels", "O0,O3", "--out", str(out)]) == EXIT_OK
    rows = json.loads(out.read_text())["rows"]
    assert [r["runtime"] for r in rows] == [0.5, 0.5]
    assert [r["speedup"] for r in rows] == [1.0, 1.0]
    assert "configuration\tN\truntime_s\tspeedup" in capsys.readouterr().out


def test_compare_ga_row_fastest(tmp_path):
    # flags 0-1 help a lot but no level enables them; levels only use the mild ones
    model = MockModel(
        (0.4, 0.5, 0.9, 0.95, 1.2, 1.1),
        base_runtime=1.0,
        levels={"O1": ("flag2",), "O2": ("flag2", "flag3"), "O3": ("flag2", "flag3", "flag4")},
    )
    path = tmp_path / "model.json"
    model.save(path)
    run = tmp_path / "run.json"
    assert main(["tune", "--mock-model", str(path), "--out", str(run)]) == EXIT_OK
    ext = tmp_path / "ext.txt"
    ext.write_text("-O1 -fflag1\n")
    out = tmp_path / "cmp.json"
    code = main(["compare", "--mock-model", str(path), "--levels", "O1,O2,O3", "--foga-report", str(run),
                 "--external", f"other={ext}", "--workloads", "100,200", "--out", str(out)])
    assert code == EXIT_OK
    rows = json.loads(out.read_text())["rows"]
    assert len(rows) == 10
    for n in (100, 200):
        at_n = [r for r in rows if r["workload_n"] == n]
        ga_row = next(r for r in at_n if r["configuration"] == "GA")
        others = [r["runtime"] for r in at_n if r["configuration"] != "GA"]
        assert ga_row["runtime"] < min(others)


def test_compare_unknown_level(model_file):
    assert main(["compare", "--mock-model", str(model_file), "--levels", "O9"]) == EXIT_USAGE


def test_importance_reference_catalog(tmp_path, capsys):
    catalog = reference_catalog()
    weights = [1.0 - 0.003 * (i % 50) for i in range(catalog.genome_length())]
    model = MockModel(tuple(weights), names=tuple(catalog.names()))
    model_path = tmp_path / "m.json"
    model.save(model_path)
    cat_path = _write(tmp_path / "cat.json", {"flags": [{"name": n, "on_form": f"-f{n}"} for n in catalog.names()]})
    out = tmp_path / "imp.json"
    code = main(["importance", "--mock-model", str(model_path), "--catalog", str(cat_path), "--top-k", "5",
                 "--out", str(out)])
    assert code == EXIT_OK
    display = json.loads(out.read_text())["display_rows"]
    assert len(display) == 6 and display[-1]["flag"] == "109 other flags"
    assert "109 other flags" in capsys.readouterr().out


def test_importance_two_flags(tmp_path):
    path = tmp_path / "m.json"
    MockModel((0.5, 0.8)).save(path)
    out = tmp_path / "imp.json"
    assert main(["importance", "--mock-model", str(path), "--out", str(out)]) == EXIT_OK
    rows = json.loads(out.read_text())["rows"]
    assert [r["flag"] for r in rows] == ["flag0", "flag1"]
    assert [r["importance"] for r in rows] == pytest.approx([80.0, 20.0], abs=1e-12)


def test_importance_top_k_zero(model_file):
    assert main(["importance", "--mock-model", str(model_file), "--top-k", "0"]) == EXIT_USAGE


def test_meta_tune_budget_one(tmp_path, model_file):
    out = tmp_path / "best.json"
    log = tmp_path / "trials.jsonl"
    code = main(["meta-tune", "--mock-model", str(model_file), "--budget", "1", "--seeds-per-trial", "1",
                 "--out", str(out), "--trials-log", str(log)])
    assert code == EXIT_OK
    [trial] = [json.loads(line) for line in log.read_text().splitlines()]
    assert json.loads(out.read_text()) == trial["config"]


def test_meta_tune_missing_budget(tmp_path, model_file):
    assert main(["meta-tune", "--mock-model", str(model_file), "--out", str(tmp_path / "x")]) == EXIT_USAGE


@pytest.mark.slow
def test_meta_tune_output_replays_exactly(tmp_path, model_file):
    best = tmp_path / "best.json"
    log = tmp_path / "trials.jsonl"
    code = main(["meta-tune", "--mock-model", str(model_file), "--budget", "40", "--seed", "3",
                 "--out", str(best), "--trials-log", str(log)])
    assert code == EXIT_OK
    trials = [json.loads(line) for line in log.read_text().splitlines()]
    winner = min(trials, key=lambda t: (t["objective"], t["index"]))
    assert json.loads(best.read_text()) == winner["config"]
    run = tmp_path / "replay.json"
    assert main(["tune", "--mock-model", str(model_file), "--config", str(best), "--no-baselines",
                 "--out", str(run)]) == EXIT_OK
    assert RunReport.load(run).best_fitness == winner["seed_objectives"][0]


def test_convergence_rows(tmp_path, model_file):
    cfg = _write(tmp_path / "cfg.json", config_document(GAConfig(population_size=10, max_generations=1),
                                                         StoppingPolicy()))
    run = tmp_path / "run.json"
    assert main(["tune", "--mock-model", str(model_file), "--config", str(cfg), "--out", str(run)]) == EXIT_OK
    out = tmp_path / "conv.tsv"
    assert main(["convergence", "--report", str(run), "--out", str(out)]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 2


def test_convergence_tail_is_flat(tmp_path, model_file, capsys):
    run = tmp_path / "run.json"
    assert main(["tune", "--mock-model", str(model_file), "--out", str(run)]) == EXIT_OK
    report = RunReport.load(run)
    assert report.stop_reason == "NoImprovement"
    capsys.readouterr()
    assert main(["convergence", "--report", str(run)]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()[1:]
    assert len(lines) == len(report.history)
    times = [float(line.split("\t")[0]) for line in lines]
    bests = [float(line.split("\t")[1]) for line in lines]
    assert times == sorted(times)
    assert all(b2 <= b1 for b1, b2 in zip(bests, bests[1:]))
    assert len(set(bests[-45:])) == 1

import itertools
import random
import shutil

import pytest

from flagtune.mock import MockModel, write_fake_toolchain

ACCEPTANCE_LINES = []

requires_gcc = pytest.mark.skipif(shutil.which("gcc") is None, reason="no GCC-family compiler on PATH")


def brute_force_minimum(fn, length):
    """Exhaustive (minimum value, argmin bits) over all 2**length genomes."""
    best = None
    for bits in itertools.product((0, 1), repeat=length):
        value = fn(bits)
        if best is None or value < best[0]:
            best = (value, bits)
    return best


def log_uniform_model(n_flags=12, seed=0, spread=0.3, base_runtime=1.0):
    rng = random.Random(seed)
    weights = [10 ** rng.uniform(-spread, spread) for _ in range(n_flags)]
    return MockModel(tuple(weights), base_runtime)


@pytest.fixture
def twelve_flag_model():
    return log_uniform_model(12, seed=7)


@pytest.fixture
def fake_toolchain(tmp_path):
    """An 8-flag model (4 helpful, 4 harmful) behind a generated fake compiler."""
    weights = (0.7, 1.3, 0.7, 1.3, 1.3, 0.7, 1.3, 0.7)
    model = MockModel(weights, base_runtime=0.1)
    compiler, source = write_fake_toolchain(model, tmp_path / "toolchain")
    return model, compiler, source


@pytest.fixture
def acceptance_line():
    def record(criterion, passed, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

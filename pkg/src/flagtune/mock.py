"""Deterministic stand-in for a compiler + benchmark.

The model's runtime for a genome is

    base_runtime * prod(weights[i] for set genes i) * prod(factor for satisfied interactions)

optionally multiplied by ``1 + U(-noise_fraction, noise_fraction)``.  It is
usable in-process (``model(genome)``) or through a generated fake compiler
executable that accepts the catalog's flag tokens and emits a "binary" which
just sleeps for the modeled runtime, so the real subprocess path gets exercised.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import stat
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .errors import InvalidModel
from .flagspace import FlagCatalog, FlagSpec, Genome, PredefinedLevel

_LEVEL_TOKENS = {level.value for level in PredefinedLevel}


@dataclass
class MockModel:
    weights: tuple[float, ...]
    base_runtime: float = 1.0
    interactions: tuple[tuple[frozenset, float], ...] = ()
    noise_fraction: float = 0.0
    names: Optional[tuple[str, ...]] = None
    # predefined level label -> flag names that level turns on
    levels: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        self.weights = tuple(float(w) for w in self.weights)
        self.interactions = tuple((frozenset(idx), float(f)) for idx, f in self.interactions)
        if not self.base_runtime > 0:
            raise InvalidModel(f"base_runtime must be positive, got {self.base_runtime}")
        for w in self.weights:
            if not (w > 0 and math.isfinite(w)):
                raise InvalidModel(f"flag weights must be positive, got {w}")
        for idx, factor in self.interactions:
            if not (factor > 0 and math.isfinite(factor)):
                raise InvalidModel(f"interaction factors must be positive, got {factor}")
            if any(not 0 <= i < len(self.weights) for i in idx):
                raise InvalidModel(f"interaction {sorted(idx)} refers to a missing flag")
        if not 0 <= self.noise_fraction < 1:
            raise InvalidModel("noise_fraction must be in [0, 1)")
        if self.names is None:
            self.names = tuple(f"flag{i}" for i in range(len(self.weights)))
        self.names = tuple(self.names)
        if len(self.names) != len(self.weights):
            raise InvalidModel("names and weights differ in length")
        for label, flags in self.levels.items():
            PredefinedLevel.parse(label)
            unknown = set(flags) - set(self.names)
            if unknown:
                raise InvalidModel(f"level {label} enables unknown flags {sorted(unknown)}")
        self._rng = random.Random(self.seed)

    def __len__(self):
        return len(self.weights)

    def catalog(self) -> FlagCatalog:
        return FlagCatalog(tuple(FlagSpec(n, f"-f{n}") for n in self.names))

    def runtime(self, genome: Union[Genome, Sequence[int]]) -> float:
        """Noise-free analytic runtime."""
        bits = tuple(genome)
        if len(bits) != len(self.weights):
            raise InvalidModel(f"genome length {len(bits)} != model length {len(self.weights)}")
        value = self.base_runtime
        for bit, w in zip(bits, self.weights):
            if bit:
                value *= w
        for idx, factor in self.interactions:
            if all(bits[i] for i in idx):
                value *= factor
        return value

    def _noisy(self, value: float, rng: random.Random) -> float:
        if self.noise_fraction:
            value *= 1.0 + rng.uniform(-self.noise_fraction, self.noise_fraction)
        return value

    def __call__(self, genome: Genome) -> float:
        return self._noisy(self.runtime(genome), self._rng)

    def genome_of_arguments(self, arguments: Sequence[str]) -> Genome:
        """Apply tokens left to right like a compiler: levels set their flags, -fX / -fno-X toggle."""
        index = {n: i for i, n in enumerate(self.names)}
        bits = [0] * len(self.names)
        for tok in arguments:
            if tok in _LEVEL_TOKENS:
                bits = [0] * len(self.names)
                for name in self.levels.get(PredefinedLevel(tok).label, ()):
                    bits[index[name]] = 1
            elif tok.startswith("-fno-") and tok[5:] in index:
                bits[index[tok[5:]]] = 0
            elif tok.startswith("-f") and tok[2:] in index:
                bits[index[tok[2:]]] = 1
            else:
                raise InvalidModel(f"unrecognized command-line option {tok!r}")
        return Genome(tuple(bits))

    def runtime_of_arguments(self, arguments: Sequence[str]) -> float:
        return self.runtime(self.genome_of_arguments(arguments))

    def measure_arguments(self, arguments: Sequence[str]) -> float:
        """Like ``runtime_of_arguments`` but with the model's noise applied."""
        return self._noisy(self.runtime_of_arguments(arguments), self._rng)

    def seeded_runtime(self, genome: Genome) -> float:
        """Runtime with noise drawn from a per-genome seed (what the fake compiler bakes in)."""
        digest = hashlib.sha256(f"{self.seed}:{genome}".encode()).digest()
        return self._noisy(self.runtime(genome), random.Random(digest))

    def to_dict(self) -> dict:
        return {
            "weights": list(self.weights),
            "base_runtime": self.base_runtime,
            "interactions": [{"flags": sorted(idx), "factor": f} for idx, f in self.interactions],
            "noise_fraction": self.noise_fraction,
            "names": list(self.names),
            "levels": {k: list(v) for k, v in self.levels.items()},
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MockModel":
        known = {"weights", "base_runtime", "interactions", "noise_fraction", "names", "levels", "seed"}
        unknown = set(doc) - known
        if unknown:
            raise InvalidModel(f"unknown mock model fields: {sorted(unknown)}")
        if "weights" not in doc:
            raise InvalidModel("mock model needs 'weights'")
        return cls(
            weights=tuple(doc["weights"]),
            base_runtime=doc.get("base_runtime", 1.0),
            interactions=tuple((tuple(e["flags"]), e["factor"]) for e in doc.get("interactions", ())),
            noise_fraction=doc.get("noise_fraction", 0.0),
            names=tuple(doc["names"]) if doc.get("names") else None,
            levels={k: tuple(v) for k, v in doc.get("levels", {}).items()},
            seed=doc.get("seed", 0),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MockModel":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidModel(f"cannot read mock model {path}: {exc}") from None
        return cls.from_dict(doc)

    def save(self, path: Union[str, Path]):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def mock_compiler_model(
    weights: Sequence[float],
    base_runtime: float,
    interaction_terms: Sequence[tuple[Sequence[int], float]] = (),
    noise_fraction: float = 0.0,
    seed: int = 0,
) -> MockModel:
    return MockModel(tuple(weights), base_runtime, tuple(interaction_terms), noise_fraction, seed=seed)


_FAKE_COMPILER = '''\
#!{python} -S
import os, stat, sys
sys.path.insert(0, {src!r})
from flagtune.mock import MockModel
from flagtune.errors import InvalidModel

model = MockModel.load({model!r})
args, out, sources = [], None, []
argv = iter(sys.argv[1:])
for tok in argv:
    if tok == "-o":
        out = next(argv, None)
    elif tok.startswith("-"):
        args.append(tok)
    else:
        sources.append(tok)
if out is None or not sources:
    sys.stderr.write("fakecc: error: usage: fakecc SOURCE... [FLAGS] -o OUT\\n")
    sys.exit(2)
for src in sources:
    try:
        text = open(src).read()
    except OSError:
        sys.stderr.write("fakecc: error: %s: No such file or directory\\n" % src)
        sys.exit(1)
    if "#error" in text:
        sys.stderr.write("%s: error: #error directive\\n" % src)
        sys.exit(1)
try:
    genome = model.genome_of_arguments(args)
except InvalidModel:
    for tok in args:
        try:
            model.genome_of_arguments([tok])
        except InvalidModel:
            sys.stderr.write("fakecc: error: unrecognized command-line option '%s'\\n" % tok)
            break
    sys.exit(1)
seconds = model.seeded_runtime(genome)
with open(out, "w") as fh:
    fh.write("#!/bin/sh\\nexec sleep %.6f\\n" % seconds)
os.chmod(out, os.stat(out).st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
'''


def write_fake_toolchain(model: MockModel, directory: Union[str, Path]) -> tuple[Path, Path]:
    """Write the model file and a fake compiler into ``directory``; returns (compiler, source).

    The returned source file is a placeholder translation unit the fake compiler accepts.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    model_path = directory / "model.json"
    model.save(model_path)
    src_root = str(Path(__file__).resolve().parent.parent)
    compiler = directory / "fakecc"
    compiler.write_text(_FAKE_COMPILER.format(python=sys.executable, src=src_root, model=str(model_path)))
    compiler.chmod(compiler.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    source = directory / "program.c"
    source.write_text("int main(void) { return 0; }\n")
    return compiler, source

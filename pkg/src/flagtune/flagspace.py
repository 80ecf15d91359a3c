"""Flag catalog, genome encoding and the compiler's predefined optimization levels.

A genome is a fixed-length bit vector with one gene per catalog flag.  Gene
``i`` always refers to ``catalog.flags[i]``; a set gene emits the flag's
``on_form`` and a cleared gene emits its ``off_form`` (or nothing when the
flag has no negative form).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .errors import DuplicateFlag, LengthMismatch, ParseError, UnknownFlag

# off_form value meaning "emit nothing when the gene is 0"
ABSENT = None


@dataclass(frozen=True)
class FlagSpec:
    name: str
    on_form: str
    off_form: Optional[str] = ABSENT

    def __post_init__(self):
        if not self.name:
            raise ParseError("flag name must be non-empty")
        if not self.on_form:
            raise ParseError(f"flag {self.name!r} has an empty on_form")
        if self.on_form == self.off_form:
            raise ParseError(f"flag {self.name!r}: on_form equals off_form")

    def to_dict(self) -> dict:
        d = {"name": self.name, "on_form": self.on_form}
        if self.off_form is not ABSENT:
            d["off_form"] = self.off_form
        return d


@dataclass(frozen=True)
class FlagCatalog:
    flags: tuple[FlagSpec, ...]
    base_arguments: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "flags", tuple(self.flags))
        object.__setattr__(self, "base_arguments", tuple(self.base_arguments))
        seen = set()
        for spec in self.flags:
            if spec.name in seen:
                raise DuplicateFlag(spec.name)
            seen.add(spec.name)

    def genome_length(self) -> int:
        return len(self.flags)

    def names(self) -> list[str]:
        return [f.name for f in self.flags]

    def index_of(self, name: str) -> int:
        for i, spec in enumerate(self.flags):
            if spec.name == name:
                return i
        raise UnknownFlag(name)

    def to_dict(self) -> dict:
        return {
            "base_arguments": list(self.base_arguments),
            "flags": [f.to_dict() for f in self.flags],
        }

    def digest(self) -> str:
        """sha256 of the canonical JSON form; identifies the search space in reports."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class Genome:
    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"genome bits must be 0 or 1, got {self.bits!r}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def trusted(cls, bits: tuple) -> "Genome":
        """Skip validation; ``bits`` must already be a tuple of 0/1 ints."""
        genome = object.__new__(cls)
        object.__setattr__(genome, "bits", bits)
        return genome

    @classmethod
    def from_string(cls, text: str) -> "Genome":
        return cls(tuple(int(c) for c in text))

    @classmethod
    def zeros(cls, length: int) -> "Genome":
        return cls((0,) * length)

    def __len__(self) -> int:
        return len(self.bits)

    def __getitem__(self, i):
        return self.bits[i]

    def __iter__(self):
        return iter(self.bits)

    def __str__(self) -> str:
        return "".join(map(str, self.bits))

    def popcount(self) -> int:
        return sum(self.bits)


class PredefinedLevel(Enum):
    O0 = "-O0"
    O1 = "-O1"
    O2 = "-O2"
    O3 = "-O3"
    Ofast = "-Ofast"

    @property
    def label(self) -> str:
        return self.name

    @property
    def arguments(self) -> list[str]:
        return [self.value]

    @classmethod
    def parse(cls, label: str) -> "PredefinedLevel":
        """Accept ``O2`` or ``-O2``."""
        key = label.strip().lstrip("-")
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown optimization level {label!r}") from None


def catalog_from_dict(doc) -> FlagCatalog:
    if not isinstance(doc, dict) or not isinstance(doc.get("flags"), list):
        raise ParseError("catalog document needs a top-level 'flags' list")
    unknown = set(doc) - {"flags", "base_arguments"}
    if unknown:
        raise ParseError(f"unknown catalog fields: {sorted(unknown)}")
    base = doc.get("base_arguments", [])
    if not isinstance(base, list) or not all(isinstance(a, str) for a in base):
        raise ParseError("'base_arguments' must be a list of strings")

    specs = []
    for i, entry in enumerate(doc["flags"]):
        if not isinstance(entry, dict):
            raise ParseError(f"flag entry {i} is not an object")
        extra = set(entry) - {"name", "on_form", "off_form"}
        if extra:
            raise ParseError(f"flag entry {i} has unknown fields {sorted(extra)}")
        try:
            name, on_form = entry["name"], entry["on_form"]
        except KeyError as exc:
            raise ParseError(f"flag entry {i} is missing {exc.args[0]!r}") from None
        off_form = entry.get("off_form", ABSENT)
        for value in (name, on_form):
            if not isinstance(value, str):
                raise ParseError(f"flag entry {i}: fields must be strings")
        if off_form is not ABSENT and not isinstance(off_form, str):
            raise ParseError(f"flag entry {i}: off_form must be a string")
        specs.append(FlagSpec(name, on_form, off_form))
    return FlagCatalog(tuple(specs), tuple(base))


def load_catalog(source: Union[str, Path, dict]) -> FlagCatalog:
    """Load a catalog from a JSON file path, JSON text, or an already parsed dict.

    Strings starting with ``{`` or ``[`` are parsed as JSON text, other strings are paths.
    Raises ParseError for malformed documents and DuplicateFlag on repeated names.
    """
    if isinstance(source, dict):
        return catalog_from_dict(source)
    if isinstance(source, Path) or not source.lstrip().startswith(("{", "[")):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ParseError(f"cannot read catalog {source}: {exc}") from None
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"catalog is not valid JSON: {exc}") from None
    return catalog_from_dict(doc)


def reference_catalog() -> FlagCatalog:
    """The bundled 114-flag GCC 9.3 catalog, anchored on -O1."""
    text = resources.files("flagtune").joinpath("data/gcc93_flags.json").read_text()
    return load_catalog(text)


def decode(genome: Genome, catalog: FlagCatalog) -> list[str]:
    if len(genome) != catalog.genome_length():
        raise LengthMismatch(
            f"genome has {len(genome)} bits, catalog has {catalog.genome_length()} flags"
        )
    args = list(catalog.base_arguments)
    for bit, spec in zip(genome.bits, catalog.flags):
        if bit:
            args.append(spec.on_form)
        elif spec.off_form is not ABSENT:
            args.append(spec.off_form)
    return args


def selected_names(genome: Genome, catalog: FlagCatalog) -> list[str]:
    if len(genome) != catalog.genome_length():
        raise LengthMismatch(
            f"genome has {len(genome)} bits, catalog has {catalog.genome_length()} flags"
        )
    return [spec.name for bit, spec in zip(genome.bits, catalog.flags) if bit]


def encode(selected: Iterable[str], catalog: FlagCatalog) -> Genome:
    wanted = set(selected)
    names = set(catalog.names())
    for name in sorted(wanted):
        if name not in names:
            raise UnknownFlag(name)
    return Genome(tuple(int(spec.name in wanted) for spec in catalog.flags))


def genome_from_arguments(arguments: Sequence[str], catalog: FlagCatalog) -> Genome:
    """Recover the genome a flag-argument list selects; tokens outside the catalog are ignored."""
    on = {spec.on_form: i for i, spec in enumerate(catalog.flags)}
    off = {spec.off_form: i for i, spec in enumerate(catalog.flags) if spec.off_form is not ABSENT}
    bits = [0] * catalog.genome_length()
    for token in arguments:
        if token in on:
            bits[on[token]] = 1
        elif token in off:
            bits[off[token]] = 0
    return Genome(tuple(bits))

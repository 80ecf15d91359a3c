import json

import pytest
from hypothesis import given, strategies as st

from flagtune.errors import DuplicateFlag, LengthMismatch, ParseError, UnknownFlag
from flagtune.flagspace import (
    ABSENT,
    FlagCatalog,
    FlagSpec,
    Genome,
    PredefinedLevel,
    decode,
    encode,
    genome_from_arguments,
    load_catalog,
    reference_catalog,
    selected_names,
)


def _catalog(n, base=("-O0",), off=False):
    flags = [FlagSpec(f"f{i}", f"-ff{i}", f"-fno-f{i}" if off else ABSENT) for i in range(n)]
    return FlagCatalog(tuple(flags), base)


def test_load_114_entries():
    doc = {"flags": [{"name": f"flag-{i}", "on_form": f"-fflag-{i}"} for i in range(114)]}
    catalog = load_catalog(json.dumps(doc))
    assert catalog.genome_length() == 114
    assert catalog.names()[:2] == ["flag-0", "flag-1"]
    assert all(f.off_form is ABSENT for f in catalog.flags)


def test_reference_catalog_has_114_flags():
    catalog = reference_catalog()
    assert catalog.genome_length() == 114
    assert catalog.base_arguments == ("-O1",)
    assert "unroll-all-loops" in catalog.names()


def test_empty_catalog_is_legal():
    assert load_catalog({"flags": []}).genome_length() == 0


def test_duplicate_flag_reports_name():
    doc = {"flags": [{"name": "unroll-all-loops", "on_form": "-funroll-all-loops"}] * 2}
    with pytest.raises(DuplicateFlag) as info:
        load_catalog(doc)
    assert info.value.name == "unroll-all-loops"


@pytest.mark.parametrize(
    "text",
    [
        "not json",
        "[]",
        '{"flags": [{"name": "a"}]}',
        '{"flags": [{"on_form": "-fa"}]}',
        '{"flags": [], "extra": 1}',
        '{"flags": [{"name": "a", "on_form": "-fa", "off_form": "-fa"}]}',
    ],
)
def test_malformed_documents(text):
    with pytest.raises(ParseError):
        load_catalog(text)


def test_load_from_path(tmp_path):
    path = tmp_path / "cat.json"
    path.write_text(json.dumps({"base_arguments": ["-O2"], "flags": [{"name": "a", "on_form": "-fa", "off_form": "-fno-a"}]}))
    catalog = load_catalog(path)
    assert catalog.base_arguments == ("-O2",)
    assert catalog.flags[0].off_form == "-fno-a"


def test_decode_all_zero_is_base():
    catalog = _catalog(3)
    assert decode(Genome.zeros(3), catalog) == ["-O0"]


def test_decode_101():
    catalog = _catalog(3)
    assert decode(Genome.from_string("101"), catalog) == ["-O0", "-ff0", "-ff2"]


def test_decode_negative_form():
    catalog = FlagCatalog((FlagSpec("A", "-fA", "-fno-A"), FlagSpec("B", "-fB")), ("-O1",))
    assert decode(Genome.from_string("01"), catalog) == ["-O1", "-fno-A", "-fB"]


def test_decode_length_mismatch():
    with pytest.raises(LengthMismatch):
        decode(Genome.from_string("10"), _catalog(3))


def test_encode_cases():
    catalog = _catalog(4)
    assert encode(set(), catalog) == Genome.zeros(4)
    assert encode({"f0"}, catalog) == Genome.from_string("1000")
    with pytest.raises(UnknownFlag) as info:
        encode({"no-such-flag"}, catalog)
    assert info.value.name == "no-such-flag"


def test_genome_rejects_non_binary():
    with pytest.raises(ValueError):
        Genome((0, 2))


def test_predefined_levels_bijective():
    labels = {lvl.label for lvl in PredefinedLevel}
    tokens = {lvl.arguments[0] for lvl in PredefinedLevel}
    assert labels == {"O0", "O1", "O2", "O3", "Ofast"}
    assert len(tokens) == 5
    assert PredefinedLevel.parse("-O2") is PredefinedLevel.O2
    with pytest.raises(ValueError):
        PredefinedLevel.parse("O9")


def test_catalog_digest_stable():
    assert _catalog(3).digest() == _catalog(3).digest()
    assert _catalog(3).digest() != _catalog(4).digest()


bits = st.lists(st.integers(0, 1), min_size=1, max_size=40)


@given(bits)
def test_round_trip_absent_off_forms(b):
    catalog = _catalog(len(b), base=())
    genome = Genome(tuple(b))
    args = decode(genome, catalog)
    assert len(args) == genome.popcount()
    names = {spec.name for spec in catalog.flags if spec.on_form in args}
    assert encode(names, catalog) == genome
    assert selected_names(genome, catalog) == sorted(names, key=catalog.index_of)


@given(bits)
def test_arguments_round_trip_with_off_forms(b):
    catalog = _catalog(len(b), off=True)
    genome = Genome(tuple(b))
    args = decode(genome, catalog)
    assert len(args) == 1 + len(b)
    assert genome_from_arguments(args, catalog) == genome

#!/usr/bin/env python3
"""
Test loading, validation and export of operator spec files
"""
import json
import os
import sys
import tempfile
from fractions import Fraction

import numpy as np

from modules.catalogue import entry_spec, get_entry
from modules.spec_loader import (
    SpecLoaderError,
    dump_spec,
    export_spec,
    load_spec_dict,
    load_spec_file,
    validate_spec,
)
from utils.formatters import set_quiet

LAM = 2.0 ** 12


def _expect_loader_error(func, *args):
    try:
        func(*args)
    except SpecLoaderError as e:
        return str(e)
    raise AssertionError(f"{func.__name__} accepted {args!r}")


def _write(tmp, name, text):
    path = os.path.join(tmp, name)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return path


def test_export_and_reload():
    entry = get_entry("example7", k=2, m=3)
    set_quiet(True)
    try:
        with tempfile.TemporaryDirectory() as tmp:
            path = export_spec(entry, os.path.join(tmp, "example7.json"))
            loaded = load_spec_file(path)
    finally:
        set_quiet(False)
    assert loaded.name == "example7(2,3)"
    assert loaded.expected_exponent == Fraction(2, 3)
    assert np.allclose(loaded.p(LAM), entry.p(LAM))
    assert np.allclose(loaded.q(LAM), entry.q(LAM))
    assert loaded.witness_ids == entry.witness_ids


def test_dump_is_stable_json():
    text = dump_spec(entry_spec("heisenberg"))
    assert text.endswith("\n")
    assert json.loads(text)["name"] == "heisenberg"
    assert dump_spec(json.loads(text)) == text


def test_missing_and_invalid_files():
    with tempfile.TemporaryDirectory() as tmp:
        message = _expect_loader_error(load_spec_file, os.path.join(tmp, "absent.json"))
        assert "not found" in message
        path = _write(tmp, "broken.json", "{ not json")
        assert "Invalid JSON" in _expect_loader_error(load_spec_file, path)


def test_required_keys():
    message = _expect_loader_error(validate_spec, {"name": "x"})
    assert "variables" in message and "fields" in message
    _expect_loader_error(validate_spec, [])


def test_structure_checks():
    good = {"name": "g", "variables": ["x", "t"], "fields": [["1", "0"], ["0", "x"]]}
    assert validate_spec(good) is good
    _expect_loader_error(validate_spec, {**good, "variables": "x,t"})
    _expect_loader_error(validate_spec, {**good, "fields": ["1", "0"]})
    _expect_loader_error(validate_spec, {**good, "dimension": 3})
    _expect_loader_error(validate_spec, {**good, "scenario": ["p", "q"]})


def test_compile_errors_are_wrapped():
    spec = {"name": "bad", "variables": ["x", "t"], "fields": [["1", "0"], ["0", "x^^2"]]}
    message = _expect_loader_error(load_spec_dict, spec, "bad.json")
    assert message.startswith("bad.json:")

    spec = {"name": "bad", "variables": ["x", "t"], "fields": [["1", "0"], ["0", "q"]]}
    _expect_loader_error(load_spec_dict, spec)

    spec = {"name": "bad", "variables": ["x", "t"], "fields": [["1", "0"]], "mode": "fast"}
    _expect_loader_error(load_spec_dict, spec)


def test_loaded_operator_is_usable():
    spec = {"name": "grusin_file", "variables": ["x", "t"], "fields": [["1", "0"], ["0", "x"]], "order": 2}
    entry = load_spec_dict(spec)
    value = entry.operator.sigma_tilde(np.array([0.0, 0.0, 0.0, 4.0]))
    assert abs(float(value) - 2.0) < 1e-9


if __name__ == "__main__":
    print("\n" + "=" * 70)
    print("Testing Spec Loader")
    print("=" * 70)
    failed = 0
    tests = [(name, func) for name, func in list(globals().items()) if name.startswith("test_")]
    for name, func in tests:
        try:
            func()
            print(f"✓ PASS: {name}")
        except Exception as e:
            failed += 1
            print(f"✗ FAIL: {name}: {e!r}")
    print("=" * 70)
    sys.exit(1 if failed else 0)

"""Replays the shared golden wire-protocol fixtures against the builtin
provider served in-process. Skipped when the fixtures are absent."""

import json
import pathlib

import pytest
import requests

from trapkit.toylm import load_model

GOLDEN_DIR = pathlib.Path(__file__).parent.parent / "shim" / "tests" / "golden"

pytestmark = pytest.mark.skipif(not (GOLDEN_DIR / "golden.json").exists(),
                                reason="shared golden fixtures not present")


def test_builtin_matches_golden(wire_server):
    url, handler = wire_server
    saved = handler.provider
    handler.provider = load_model(GOLDEN_DIR / "model.json").provider()
    try:
        with open(GOLDEN_DIR / "golden.json") as fh:
            cases = json.load(fh)
        for case in cases:
            resp = requests.post(url + case["path"], json=case["request"])
            assert resp.status_code == 200, (case["path"], resp.text)
            got, want = resp.json(), case["response"]
            assert got.keys() == want.keys()
            for key, expected in want.items():
                if key == "logprobs":
                    assert got[key] == pytest.approx(expected, abs=1e-12)
                else:
                    assert got[key] == expected, (case["path"], key)
    finally:
        handler.provider = saved

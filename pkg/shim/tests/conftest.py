import json
import pathlib

import pytest
from fastapi.testclient import TestClient

from lmshim.backends import NGramBackend
from lmshim.server import create_app

GOLDEN_DIR = pathlib.Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def golden_cases():
    with open(GOLDEN_DIR / "golden.json") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def client():
    backend = NGramBackend(str(GOLDEN_DIR / "model.json"))
    return TestClient(create_app(backend))

import json
import os
import pathlib

import pytest

SOURCE_DIR = pathlib.Path(os.environ.get("PROMPTPROG_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))


@pytest.fixture
def corpus_dir():
    return SOURCE_DIR / "corpus"


@pytest.fixture
def config_path(tmp_path):
    fixtures = SOURCE_DIR / "tests" / "fixtures" / "replay"
    doc = json.loads((fixtures / "config.json").read_text())
    doc["corpus_path"] = str(SOURCE_DIR / "corpus")
    doc["provider"]["fixture_path"] = str(fixtures / "provider.json")
    doc["log_path"] = str(tmp_path / "events.jsonl")
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path

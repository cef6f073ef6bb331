import logging
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
CORPUS = ROOT / "corpus"


@pytest.fixture(autouse=True)
def _quiet_network_warnings():
    logging.getLogger("physarum").setLevel(logging.ERROR)
    yield


@pytest.fixture
def corpus_dir() -> Path:
    return CORPUS

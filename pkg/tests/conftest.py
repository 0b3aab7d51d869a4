import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stubs import fixture_manifest, make_config, session_backend  # noqa: E402

from litsynth.corpus.ingest import ingest_collection  # noqa: E402
from litsynth.provider.client import ModelProfile, Provider  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = FIXTURES / "golden"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture
def fixture_collection():
    return ingest_collection(fixture_manifest())


@pytest.fixture
def scripted_provider() -> Provider:
    return Provider("live", backend=session_backend())


@pytest.fixture
def reasoning_profile() -> ModelProfile:
    return make_config().provider.profiles["reasoning"]


@pytest.fixture
def extract_profile() -> ModelProfile:
    return make_config().provider.profiles["fast-extract"]

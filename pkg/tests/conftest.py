from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", deadline=None, max_examples=40, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA

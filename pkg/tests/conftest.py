import numpy as np
import pytest

from subunit.core.config import settings
from subunit.services.zoo import make_rng


@pytest.fixture(autouse=True)
def _isolate(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "output_dir", tmp_path / "runs")
    monkeypatch.setattr(settings, "seed", 20240601)
    monkeypatch.setattr(settings, "threads", 2)
    monkeypatch.setattr(settings, "log_file", None)
    monkeypatch.setattr(settings, "environment", "production")
    yield


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(1234)

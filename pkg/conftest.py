import json

import numpy as np
import pytest

from slyap.analysis.example import example_signal, example_system
from slyap.config import CheckSampleConfig, KSetConfig, SearchConfig


@pytest.fixture
def example_sys():
    return example_system()


@pytest.fixture
def example_sig():
    return example_signal()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def small_search():
    return SearchConfig(max_pieces=4, restarts=12, iterations=40, seed=3)


@pytest.fixture
def small_check():
    return CheckSampleConfig(count=12, seed=3)


@pytest.fixture
def small_kset():
    return KSetConfig(signals=16, horizon=400.0, seed=3)


@pytest.fixture
def system_file(tmp_path, example_sys):
    path = tmp_path / "system.json"
    path.write_text(json.dumps(example_sys.to_dict()), encoding="utf-8")
    return path


@pytest.fixture
def signal_file(tmp_path, example_sig):
    path = tmp_path / "signal.json"
    path.write_text(json.dumps(example_sig.to_dict()), encoding="utf-8")
    return path

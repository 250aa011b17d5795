import pathlib

import pytest

TESTS_DIR = pathlib.Path(__file__).parent
DATA_DIR = TESTS_DIR / "data"
SCENARIO_DIR = TESTS_DIR.parent / "scenarios"


@pytest.fixture
def data_dir() -> pathlib.Path:
    return DATA_DIR


@pytest.fixture
def scenario_dir() -> pathlib.Path:
    return SCENARIO_DIR

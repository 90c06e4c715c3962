from __future__ import annotations

from pathlib import Path

import pytest

from intent2dag import deploy_sim, skills
from intent2dag.config import AppConfig
from intent2dag.conductor import Conductor


@pytest.fixture(scope="session")
def library():
    return skills.load_bundled_library()


@pytest.fixture(scope="session")
def s3(library):
    return skills.select_skillset("S3", library)


@pytest.fixture(scope="session")
def s1(library):
    return skills.select_skillset("S1", library)


@pytest.fixture(scope="session")
def s0(library):
    return skills.select_skillset("S0", library)


@pytest.fixture(scope="session")
def fixtures():
    return deploy_sim.load_bundled_fixture()


@pytest.fixture()
def app_config():
    return AppConfig()


@pytest.fixture()
def conductor(app_config, s3, fixtures, tmp_path):
    return Conductor(app_config, s3, fixtures, journal_dir=tmp_path / "sessions")


GOLDEN_DIR = Path(__file__).parent / "golden"

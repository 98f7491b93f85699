from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from sentinel.harness import FixedClock, Workspace, default_registry, load_replay_script, replay
from sentinel.pipeline import analyze_session
from sentinel.seeds import load_seeds
from sentinel.trace import parse_stream_text

DATA_DIR = Path(__file__).parent / "data"
FIXTURE_CLOCK_MS = 1767614400000  # 2026-01-05T12:00:00Z


@pytest.fixture(scope="session")
def fixture_script_text() -> str:
    return (DATA_DIR / "catalog_cache.replay").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def fixture_seeds_text() -> str:
    return (DATA_DIR / "catalog.seed").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def fixture_seeds(fixture_seeds_text):
    return load_seeds(fixture_seeds_text)


@pytest.fixture(scope="session")
def golden_satl_text() -> str:
    return (DATA_DIR / "catalog_cache.satl").read_text(encoding="utf-8")


@pytest.fixture()
def fixture_workspace(tmp_path) -> Workspace:
    root = tmp_path / "ws"
    shutil.copytree(DATA_DIR / "workspace", root)
    return Workspace(root)


@pytest.fixture(scope="session")
def fixture_stream(golden_satl_text):
    """The catalog-cache session parsed from the frozen golden stream."""
    return parse_stream_text(golden_satl_text)


@pytest.fixture(scope="session")
def fixture_analysis(fixture_stream, fixture_seeds):
    header, events = fixture_stream
    return analyze_session(header, events, fixture_seeds)


def replay_fixture(script_text: str, workspace: Workspace, start_ms: int = FIXTURE_CLOCK_MS):
    script = load_replay_script(script_text)
    return replay(script, default_registry(), workspace, FixedClock(start_ms))

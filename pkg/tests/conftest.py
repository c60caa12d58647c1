import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from weightedchaos.config import ExperimentConfig

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def load_raw(name: str) -> dict:
    return json.loads((CONFIGS / name).read_text())


def load_cfg(name: str, **sections) -> ExperimentConfig:
    """Config from configs/, with whole-key replacements per section."""
    raw = load_raw(name)
    for sec, vals in sections.items():
        if isinstance(vals, dict):
            raw.setdefault(sec, {}).update(vals)
        else:
            raw[sec] = vals
    return ExperimentConfig.from_dict(raw)


@pytest.fixture
def configs_dir():
    return CONFIGS


# --- acceptance summary ---------------------------------------------------

CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion checked by the test")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    n, text = mark.args
    ok = call.excinfo is None
    prev = CRITERIA.get(n, (text, True))
    CRITERIA[n] = (text, prev[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        text, ok = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {text}")

import numpy as np
import pytest

from ddsafe.config import load_config
from ddsafe.pipeline import build

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def cfg():
    return load_config()


@pytest.fixture(scope="session")
def art(cfg):
    """Data, model set, 40-level family and closed loop from the shipped config."""
    return build(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def record(criterion: int, ok: bool, detail: str):
    ACCEPTANCE[criterion] = (ok, detail)
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[c]
        terminalreporter.write_line(f"criterion {c:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

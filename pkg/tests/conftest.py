from __future__ import annotations

import numpy as np
import pytest

from weaklift import synth
from weaklift.shapes import CategoryConfig, build_template_bank


@pytest.fixture(scope="session")
def categories() -> CategoryConfig:
    return CategoryConfig.load()


@pytest.fixture(scope="session")
def template_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("templates")
    synth.write_template_dir(root, variants=2, target_points=1500)
    return root


@pytest.fixture(scope="session")
def bank(template_dir, categories):
    return build_template_bank(template_dir, categories)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def criterion_log() -> list[str]:
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from puffnet.core import Tensor
from puffnet.data import synthetic_content, synthetic_style
from puffnet.losses import PerceptualNet


@pytest.fixture(scope="session")
def net():
    return PerceptualNet()


@pytest.fixture
def pair32():
    return Tensor(synthetic_content(32)[None]), Tensor(synthetic_style(32)[None])


@pytest.fixture
def pair64():
    return Tensor(synthetic_content(64)[None]), Tensor(synthetic_style(64)[None])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.VERDICTS:
            terminalreporter.write_line(line)

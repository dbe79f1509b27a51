import numpy as np
import pytest

from otfs_sense.grid import FrameParams, DEFAULT_PARAMS


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small():
    return FrameParams(M=8, N=8, delta_f=150e3, f_c=60e9)


@pytest.fixture
def frame28():
    return DEFAULT_PARAMS


def crandn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


ACCEPTANCE_LINES = []


def report_criterion(name, ok, detail=""):
    """Record one acceptance verdict; all verdicts are printed at session end."""
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

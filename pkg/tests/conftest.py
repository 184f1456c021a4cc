import numpy as np
import pytest
from hypothesis import settings

from flslab.mixture import MixtureSpec, rejection_sample_separable, sample_dataset

settings.register_profile("flslab", deadline=None, max_examples=40)
settings.load_profile("flslab")

_ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    """Record and print one pass/fail line per acceptance criterion."""

    def record(number, ok, message):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {message}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok

    return record


@pytest.fixture(scope="session")
def separable_data():
    data, _ = rejection_sample_separable(MixtureSpec(d=16, kappa=2.0, sigma=0.5, n=20, seed=3), 0.05)
    return data


@pytest.fixture(scope="session")
def paper_data():
    return sample_dataset(MixtureSpec(d=128, kappa=1.5, sigma=1.0, n=50, seed=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

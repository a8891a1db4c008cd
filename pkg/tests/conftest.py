import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from urnmoments.corpus import load_corpus_urn
from urnmoments.generators import random_balanced_urn

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def friedman():
    return load_corpus_urn("friedman")


@pytest.fixture(scope="session")
def e2():
    return load_corpus_urn("e2_critical")


@pytest.fixture(scope="session")
def tri03():
    return load_corpus_urn("triangular_0.3")


@pytest.fixture(scope="session")
def tri07():
    return load_corpus_urn("triangular_0.7")


@pytest.fixture(scope="session")
def ebad():
    return load_corpus_urn("ebad")


@pytest.fixture(scope="session")
def polya():
    return load_corpus_urn("polya_original")


@pytest.fixture(scope="session")
def jordan():
    return load_corpus_urn("jordan_critical")


def balanced_urns(q_min=2, q_max=6, **kwargs):
    """Hypothesis strategy: random balanced urns with rational laws."""
    return st.builds(
        lambda seed, q, b: random_balanced_urn(seed, q, b=b, **kwargs),
        st.integers(0, 2**32 - 1),
        st.integers(q_min, q_max),
        st.integers(1, 5),
    )


def assert_close(actual, expected, rtol=0.0, atol=0.0):
    np.testing.assert_allclose(np.asarray(actual, dtype=complex if np.iscomplexobj(actual) else float),
                               expected, rtol=rtol, atol=atol)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_addoption(parser):
    parser.addoption("--run-stretch", action="store_true", help="run tests marked stretch")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-stretch"):
        return
    skip = pytest.mark.skip(reason="stretch target; use --run-stretch")
    for item in items:
        if "stretch" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

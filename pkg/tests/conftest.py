import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rlzarc.corpus import generate_corpus
from rlzarc.dictionary import build_dictionary, index_dictionary

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def corpus():
    return generate_corpus(1 << 20, seed=11, novelty=0.1)


@pytest.fixture(scope="session")
def small_dict(corpus):
    d = build_dictionary(corpus, 64 << 10, 1024)
    return d, index_dictionary(d)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from intonarank.corpus import generate_clip, sample_specs
from intonarank.features import extract_features

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def corpus_features(n_statement, n_question, seed):
    specs = sample_specs(n_statement, n_question, seed)
    X = np.vstack([extract_features(generate_clip(s)) for s, *_ in specs])
    y = np.array([intonation for *_, intonation in specs])
    return X, y, specs


@pytest.fixture(scope="session")
def corpus_50_50():
    return corpus_features(50, 50, 7)


@pytest.fixture(scope="session")
def corpus_100_100():
    return corpus_features(100, 100, 11)


def random_rank_instance(seed):
    """Small seeded ranking problem: 1-D or 2-D, 2..10 samples, both classes."""
    from intonarank.ranker import RankerConfig

    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 3))
    n = int(rng.integers(2, 11))
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    X = rng.uniform(-1, 1, (n, dim))
    return X, y, RankerConfig(C=float(rng.uniform(0.01, 0.5)))


def oracle_grid(constraints, config, spacing=0.01):
    """Grid wide enough to contain the minimiser: |w*|^2 <= 2 J(0) = 2 C n_ordered."""
    bound = np.sqrt(2 * config.C * constraints.n_ordered)
    hi = max(1.0, float(np.ceil(bound)))
    steps = int(round(2 * hi / spacing)) + 1
    return (-hi, hi, steps), 2 * hi / (steps - 1)

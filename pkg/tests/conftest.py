import numpy as np
import pytest
from hypothesis import settings

from msm_timing.data import Dataset

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_dataset(rng, n=25, p=1, t_max=30.0, pattern_mix=True):
    """Small dataset with continuous times and all four observation patterns."""
    t = rng.exponential(12.0, n) + 0.1
    c = rng.exponential(25.0, n) + 0.1
    a = rng.exponential(8.0, n)
    t_star = np.minimum(np.minimum(t, c), t_max)
    delta_t = (t <= c) & (t <= t_max)
    if not pattern_mix:
        a = np.minimum(a, 0.7 * t_star)
    delta_a = a < t_star
    a_star = np.minimum(a, t_star)
    x = rng.normal(size=(n, p))
    return Dataset.from_baseline(a_star, delta_a, t_star, delta_t, x, t_max=t_max)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def randomized_reduction_data(n=1500, seed=0, t_max=78.0):
    """Every subject initiates in [0, 8) and deaths start after 8 weeks.

    All risk sets at death times then hold treated subjects only, there are no
    pattern III/IV subjects, and the spline terms are identifiable.
    """
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, 8.0, n)
    rate = 0.02 * np.exp(0.3 * np.sin(a / 3.0))
    t = 8.0 + rng.exponential(1.0 / rate)
    c = 8.0 + rng.exponential(100.0, n)
    t_star = np.minimum(np.minimum(t, c), t_max)
    delta_t = (t <= c) & (t <= t_max)
    return Dataset.from_baseline(a, np.ones(n, dtype=bool), t_star, delta_t, t_max=t_max)


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion; returns the check function."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def check(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert passed, line

    return check


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

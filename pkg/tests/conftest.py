import time

import numpy as np
import pytest

from trustfactor.data import SocialGraph, SparseRatings

SUITE_START = time.perf_counter()


def random_graph(rng, n_max=12, edge_prob=0.2):
    """Random signed graph honoring the no-self/no-contradiction invariants."""
    n = int(rng.integers(2, n_max + 1))
    trust, distrust = [], []
    for u in range(n):
        for v in range(n):
            if u == v:
                continue
            draw = rng.random()
            if draw < edge_prob:
                trust.append((u, v))
            elif draw < 2 * edge_prob:
                distrust.append((u, v))
    return SocialGraph.from_edges(n, trust, distrust)


def random_ratings(rng, n, m, density=0.5, r_min=1.0, r_max=5.0):
    mask = rng.random((n, m)) < density
    users, items = np.nonzero(mask)
    values = rng.integers(int(r_min), int(r_max) + 1, size=len(users)).astype(float)
    return SparseRatings(n, m, users, items, values, r_min, r_max)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed"):
        for report in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in report.nodeid:
                name = report.nodeid.split("::")[-1]
                lines.append((name, outcome.upper()))
    if not lines:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in sorted(lines):
        terminalreporter.write_line(f"{outcome:6s} {name}")

import sys

import numpy as np
import pytest

from corona_lab.spaces import build_halfline, from_coords, from_matrix


@pytest.fixture
def halfline64():
    return build_halfline(64)


def random_space(seed: int, n: int | None = None):
    """Point clouds in dims 1-3 and shortest-path matrices, up to 500 points."""
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(20, 500))
    kind = seed % 3
    if kind < 2:
        dim = [1, 2, 3][seed % 3 if kind == 0 else 1 + seed % 2]
        pts = rng.normal(size=(n, dim)) * rng.uniform(2, 40)
        pts[0] = 0.0
        if seed % 5 == 0:
            pts = np.round(pts)  # lattice points: many ties
        return from_coords(pts)
    w = rng.uniform(0.5, 5.0, size=(n, n))
    w = np.minimum(w, w.T)
    from scipy.sparse.csgraph import shortest_path
    d = shortest_path(w, directed=False)
    np.fill_diagonal(d, 0.0)
    return from_matrix(d)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])

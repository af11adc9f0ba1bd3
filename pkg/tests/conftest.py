import math

import numpy as np
import pytest

from nearcrit.hexlattice import NEIGHBOR_OFFSETS, DomainSpec, build_domain
from nearcrit.sampler import Configuration


@pytest.fixture(scope="session")
def small_domain():
    """Smallest legal domain (mesh/radius = 1/8), 34 cells."""
    return build_domain(DomainSpec(radius=1.0, mesh=1 / 8))


@pytest.fixture(scope="session")
def mid_domain():
    return build_domain(DomainSpec(radius=1.0, mesh=1 / 32))


@pytest.fixture(scope="session")
def fine_domain():
    return build_domain(DomainSpec(radius=1.0, mesh=1 / 64))


def config_from_bits(domain, cells, bits, base=None):
    """Configuration equal to `base` except `cells` colored per `bits`."""
    colors = np.zeros(domain.n_cells, dtype=bool) if base is None else base.copy()
    for c, b in zip(cells, bits):
        colors[c] = b
    return Configuration(domain, colors)


def bfs_blue_component(domain, colors, want_blue, start_cells, allowed):
    """Plain-python BFS over same-colored cells; the independent crossing oracle."""
    allowed = set(int(c) for c in allowed)
    ok = lambda c: c in allowed and colors[c] == want_blue
    frontier = [int(c) for c in start_cells if ok(int(c))]
    seen = set(frontier)
    while frontier:
        c = frontier.pop()
        a, b = domain.cells_ab[c]
        for da, db in NEIGHBOR_OFFSETS:
            n = domain.index_of((int(a) + da, int(b) + db))
            if n >= 0 and n not in seen and ok(n):
                seen.add(n)
                frontier.append(n)
    return seen


def oracle_crossed(domain, colors, quad, want_blue=True, s_from=0, s_to=2):
    comp = bfs_blue_component(domain, colors, want_blue, quad.sides[s_from],
                              quad.cells)
    return any(int(c) in comp for c in quad.sides[s_to])


def channel_colors(domain, x_split):
    """Blue west of the split line: the engineered straight-interface coloring."""
    return (domain.centers[:, 0] < x_split).copy()


def vert_norm(domain, v):
    spec = domain.spec
    return math.hypot(v[0] * spec.unit_x, v[1] * spec.unit_y)

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nearcrit.explorer import NeverExits, exit_time, initial_segment, trace
from nearcrit.hexlattice import edge_flanks
from nearcrit.sampler import Configuration, effective_colors, sample_configuration
from tests.conftest import vert_norm

ALL_BLUE_FIXTURE = [(0, -1), (0, 1), (1, 2), (2, 1), (3, 2), (4, 1), (5, 2),
                    (6, 1), (7, 2), (7, 4), (8, 5)]


def test_all_blue_hugs_yellow_boundary(small_domain):
    cfg = Configuration(small_domain, np.ones(small_domain.n_cells, bool))
    path = trace(cfg)
    assert [tuple(v) for v in path.verts] == ALL_BLUE_FIXTURE


def test_all_yellow_is_mirror(small_domain):
    cfg = Configuration(small_domain, np.zeros(small_domain.n_cells, bool))
    path = trace(cfg)
    assert [tuple(v) for v in path.verts] == [(-i, j) for i, j in ALL_BLUE_FIXTURE]


def mirror_config(domain, config):
    colors = np.zeros(domain.n_cells, dtype=bool)
    for idx in range(domain.n_cells):
        a, b = domain.cells_ab[idx]
        m = domain.index_of((int(-a - b - 1), int(b)))
        colors[m] = not config.colors[idx]
    return Configuration(domain, colors)


def test_color_swap_reflection_mirrors_path(small_domain):
    for seed in range(25):
        cfg = sample_configuration(small_domain, 0.5, 7000 + seed)
        p = trace(cfg)
        q = trace(mirror_config(small_domain, cfg))
        assert [(-i, j) for i, j in p.verts.tolist()] == q.verts.tolist()


def check_invariants(domain, path):
    eff = effective_colors(path.config)
    edges = set()
    for k in range(path.n_steps):
        e = (tuple(path.verts[k]), tuple(path.verts[k + 1]))
        assert e not in edges, "repeated directed edge"
        edges.add(e)
        left, right = edge_flanks(*e)
        li, ri = domain.index_of(left), domain.index_of(right)
        assert path.flank_left[k] == li and path.flank_right[k] == ri
        lx = eff[li] if li >= 0 else (2 * left[0] + left[1] + 1) < 0
        rx = eff[ri] if ri >= 0 else (2 * right[0] + right[1] + 1) < 0
        assert lx and not rx, "left must be blue, right yellow"
    spec = domain.spec
    assert vert_norm(domain, path.verts[-1]) >= spec.radius - spec.mesh - 1e-12
    assert (tuple(path.verts[0]), tuple(path.verts[1])) == domain.origin_edge


def test_exhaustive_window_invariants(small_domain):
    """All 2^12 colorings of a 12-cell window; deterministic channel elsewhere."""
    base = (small_domain.centers[:, 0] < 0).copy()
    order = np.argsort((small_domain.centers ** 2).sum(axis=1))
    window = [int(i) for i in order if small_domain.cells_ab[i][1] > 0][:12]
    for bits in itertools.product([False, True], repeat=12):
        colors = base.copy()
        for c, b in zip(window, bits):
            colors[c] = b
        path = trace(Configuration(small_domain, colors))
        check_invariants(small_domain, path)


def test_untouched_recoloring_leaves_path_alone(small_domain):
    for seed in range(20):
        cfg = sample_configuration(small_domain, 0.5, 8100 + seed)
        path = trace(cfg)
        touched = path.touch_mask()
        flipped = cfg.colors.copy()
        flipped[~touched] = ~flipped[~touched]
        path2 = trace(Configuration(small_domain, flipped))
        assert np.array_equal(path.verts, path2.verts)


def test_trace_deterministic(mid_domain):
    cfg = sample_configuration(mid_domain, 0.5, 4)
    a, b = trace(cfg), trace(cfg)
    assert np.array_equal(a.verts, b.verts)


def test_exit_time_rho_zero_rejected(small_domain):
    cfg = sample_configuration(small_domain, 0.5, 1)
    with pytest.raises(ValueError):
        exit_time(trace(cfg), 0.0)


def test_exit_time_tiny_rho(small_domain):
    cfg = sample_configuration(small_domain, 0.5, 1)
    path = trace(cfg)
    assert exit_time(path, 1e-6) in (0, 1)
    assert exit_time(path, 0.05) in (0, 1)


@settings(max_examples=40)
@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_exit_time_monotone(r1, r2):
    lo, hi = sorted([r1, r2])
    t_lo = exit_time(_PATH, lo)
    t_hi = exit_time(_PATH, hi)
    if t_hi is None:
        return
    assert t_lo is not None and t_lo <= t_hi


_PATH = trace(sample_configuration(
    __import__("nearcrit.hexlattice", fromlist=["build_domain"]).build_domain(
        __import__("nearcrit.hexlattice", fromlist=["DomainSpec"]).DomainSpec(1.0, 1 / 8)),
    0.5, 2))


def test_exit_at_radius_consistency(small_domain):
    path = trace(sample_configuration(small_domain, 0.5, 3))
    t = exit_time(path, 1.0)
    if t is None:
        assert vert_norm(small_domain, path.verts[-1]) < 1.0
    else:
        assert vert_norm(small_domain, path.verts[t]) >= 1.0 - 1e-9


def test_initial_segment_composition(small_domain):
    path = trace(sample_configuration(small_domain, 0.5, 5))
    hi = vert_norm(small_domain, path.verts[-1])
    rho, rho2 = 0.6 * hi, 0.3 * hi
    seg = initial_segment(path, rho)
    direct = initial_segment(path, rho2)
    nested = initial_segment(seg, rho2)
    assert np.array_equal(direct.verts, nested.verts)
    assert np.array_equal(direct.flank_left, nested.flank_left)


def test_initial_segment_never_exits(small_domain):
    path = trace(sample_configuration(small_domain, 0.5, 6))
    with pytest.raises(NeverExits):
        initial_segment(path, 1.0 if exit_time(path, 1.0) is None else 2.0)


def test_initial_segment_exhaustive_window(small_domain):
    base = (small_domain.centers[:, 0] < 0).copy()
    order = np.argsort((small_domain.centers ** 2).sum(axis=1))
    window = [int(i) for i in order if small_domain.cells_ab[i][1] > 0][:8]
    for bits in itertools.product([False, True], repeat=8):
        colors = base.copy()
        for c, b in zip(window, bits):
            colors[c] = b
        path = trace(Configuration(small_domain, colors))
        k = exit_time(path, 0.5)
        assert k is not None
        seg = initial_segment(path, 0.5)
        assert seg.n_steps == k
        assert np.array_equal(seg.verts, path.verts[:k + 1])

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nearcrit.connectivity import (AnnulusSpec, InsufficientScales,
                                   centered_rhombus, crossing_probability,
                                   estimate_arm_probability, fit_arm_exponent,
                                   has_arms, is_crossed, rect_quad, rhombus_quad,
                                   slit_quad, symmetric_difference_probability)
from nearcrit.sampler import Configuration, realize, sample_coupling
from nearcrit.hexlattice import DomainSpec, build_domain
from tests.conftest import config_from_bits, oracle_crossed


@pytest.fixture(scope="module")
def rhombus(mid_domain):
    return rhombus_quad(mid_domain, -1, 6, 3, 3)


def test_all_blue_crosses(mid_domain, rhombus):
    colors = np.ones(mid_domain.n_cells, dtype=bool)
    assert is_crossed(Configuration(mid_domain, colors), rhombus)


def test_all_yellow_does_not(mid_domain, rhombus):
    colors = np.zeros(mid_domain.n_cells, dtype=bool)
    assert not is_crossed(Configuration(mid_domain, colors), rhombus)


def test_exhaustive_oracle_duality_selfdual(mid_domain, rhombus):
    """All 2^9 colorings: kernel == BFS oracle, exact XOR duality, exact 1/2."""
    cells = [int(c) for c in rhombus.cells]
    crossings = 0
    for bits in itertools.product([False, True], repeat=9):
        cfg = config_from_bits(mid_domain, cells, bits)
        got = is_crossed(cfg, rhombus)
        assert got == oracle_crossed(mid_domain, cfg.colors, rhombus)
        dual = oracle_crossed(mid_domain, cfg.colors, rhombus,
                              want_blue=False, s_from=1, s_to=3)
        assert got != dual
        crossings += got
    assert crossings == 256  # exactly half: reflection + color-swap symmetry


def test_mc_matches_exact_on_rhombus(mid_domain, rhombus):
    est = crossing_probability(mid_domain, rhombus, 0.5, 20_000, 4)
    assert abs(est["estimate"] - 0.5) < 3 * est["std_error"]


def test_crossing_increasing_in_p(mid_domain, rhombus):
    lo = crossing_probability(mid_domain, rhombus, 0.45, 20_000, 5)
    hi = crossing_probability(mid_domain, rhombus, 0.55, 20_000, 5)
    assert lo["estimate"] < hi["estimate"]


def test_crossing_monotone_under_coupling(mid_domain):
    quad = centered_rhombus(mid_domain, (0.0, 0.5), 6)
    for seed in range(30):
        field = sample_coupling(mid_domain, 600 + seed)
        lo = is_crossed(realize(field, 0.45), quad)
        hi = is_crossed(realize(field, 0.55), quad)
        assert hi or not lo


def test_symmetric_difference_of_identical_quads(mid_domain, rhombus):
    est = symmetric_difference_probability(mid_domain, rhombus, rhombus,
                                           0.5, 2000, 6)
    assert est["estimate"] == 0.0


def test_shrink_family_monotone(fine_domain):
    box = (-0.35, 0.35, 0.1, 0.8)
    base = rect_quad(fine_domain, *box)
    spacing = math.sqrt(3) / 64
    prev = 1.0
    for k in (8, 4, 2, 1):
        shrunk = rect_quad(fine_domain, box[0], box[1] - k * spacing,
                           box[2], box[3])
        est = symmetric_difference_probability(fine_domain, base, shrunk,
                                               0.5, 3000, 7)["estimate"]
        assert est <= prev + 1e-12
        prev = est
    assert prev < 0.1


def test_slit_family_blows_up_stability():
    n = 16
    mesh = 0.35 / n
    domain = build_domain(DomainSpec(1.0, mesh))
    from nearcrit.cli import slit_family
    sq, sl = slit_family(domain, 1.0, n)
    diff = symmetric_difference_probability(domain, sq, sl, 0.5, 3000, 8)
    assert diff["estimate"] > 0.3
    base = crossing_probability(domain, sq, 0.5, 3000, 9)
    assert abs(base["estimate"] - 0.5) < 4 * base["std_error"] + 0.02


# --- arms ---------------------------------------------------------------------

def annulus_for(domain, inner_mult=1.0, outer=0.35):
    return AnnulusSpec((0.0, 0.5), math.sqrt(3) * domain.spec.mesh * inner_mult,
                       outer)


def test_single_arm_trivial(mid_domain):
    ann = annulus_for(mid_domain)
    all_blue = Configuration(mid_domain, np.ones(mid_domain.n_cells, bool))
    assert has_arms(all_blue, ann, "B")
    assert not has_arms(all_blue, ann, "BY")
    assert not has_arms(all_blue, ann, "Y")


def test_four_arm_implies_two_arm(mid_domain):
    ann = annulus_for(mid_domain)
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(300):
        cfg = Configuration(mid_domain, rng.random(mid_domain.n_cells) < 0.5)
        if has_arms(cfg, ann, "BYBY"):
            hits += 1
            assert has_arms(cfg, ann, "BY")
    assert hits > 0


def test_color_swap_rotation_invariance(mid_domain):
    ann = annulus_for(mid_domain)
    rng = np.random.default_rng(1)
    for _ in range(200):
        colors = rng.random(mid_domain.n_cells) < 0.5
        a = has_arms(Configuration(mid_domain, colors), ann, "BYBY")
        b = has_arms(Configuration(mid_domain, ~colors), ann, "YBYB")
        assert a == b


def test_tiny_annulus_exact_enumeration(small_domain):
    ann = AnnulusSpec((0.0, 0.5), math.sqrt(3) / 8, 0.36)
    from nearcrit.connectivity import _annulus_context
    ctx = _annulus_context(small_domain, ann)
    cells = ctx.cells
    exact_hits = 0
    for bits in itertools.product([False, True], repeat=len(cells)):
        cfg = config_from_bits(small_domain, cells, bits)
        exact_hits += has_arms(cfg, ann, "BYBY")
    exact = exact_hits / 2 ** len(cells)
    est = estimate_arm_probability(small_domain, ann, "BYBY", 0.5, 5000, 11)
    assert abs(est["estimate"] - exact) <= 3 * max(est["std_error"], 1e-9) + 1e-12


def test_arm_probability_decreasing_in_ratio(mid_domain):
    vals = [estimate_arm_probability(mid_domain, annulus_for(mid_domain, outer=o),
                                     "BY", 0.5, 3000, 12)["estimate"]
            for o in (0.15, 0.3, 0.45)]
    assert vals[0] > vals[1] > vals[2]


def test_six_arm_polychromatic_decays_fast(fine_domain):
    series = []
    for outer_mult in (4.0, 8.0, 16.0):
        inner = math.sqrt(3) * 2 / 64
        ann = AnnulusSpec((0.0, 0.5), inner, inner * outer_mult)
        est = estimate_arm_probability(fine_domain, ann, "BYBYBY", 0.5, 30_000, 13)
        series.append({"ratio": outer_mult, "estimate": max(est["estimate"], 1e-5)})
    fit = fit_arm_exponent(series)
    assert fit["exponent"] > 2


def test_quasi_multiplicativity(fine_domain):
    inner = math.sqrt(3) / 64
    mid, outer = 0.1, 0.4
    a_full = estimate_arm_probability(
        fine_domain, AnnulusSpec((0.0, 0.5), inner, outer), "BYBY", 0.5, 20_000, 14)
    a_lo = estimate_arm_probability(
        fine_domain, AnnulusSpec((0.0, 0.5), inner, mid), "BYBY", 0.5, 20_000, 15)
    a_hi = estimate_arm_probability(
        fine_domain, AnnulusSpec((0.0, 0.5), mid, outer), "BYBY", 0.5, 20_000, 16)
    c = a_full["estimate"] / (a_lo["estimate"] * a_hi["estimate"])
    assert c > 0.1


def test_fit_exact_power_law():
    series = [{"ratio": r, "estimate": r ** -1.25} for r in (2, 4, 8, 16)]
    fit = fit_arm_exponent(series)
    assert fit["exponent"] == pytest.approx(1.25, abs=1e-9)
    assert fit["std_error"] == pytest.approx(0.0, abs=1e-9)


def test_fit_requires_three_scales():
    with pytest.raises(InsufficientScales):
        fit_arm_exponent([(2, 0.5), (4, 0.2)])


def test_annulus_validation():
    with pytest.raises(ValueError):
        AnnulusSpec((0.0, 0.5), 0.2, 0.1)
    with pytest.raises(ValueError):
        AnnulusSpec((0.3, 0.4), 0.1, 0.2, half_plane=True)

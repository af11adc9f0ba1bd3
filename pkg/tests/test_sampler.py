import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from nearcrit.connectivity import AnnulusSpec, _annulus_context
from nearcrit.hexlattice import DomainSpec, build_domain
from nearcrit.sampler import (BLUE, NearCriticalParam, OutOfRange,
                              calibrate_alpha4_unit, load_calibration_table,
                              lookup_alpha4, probability_open, realize,
                              sample_configuration, sample_coupling,
                              store_calibration)
from tests.conftest import bfs_blue_component


def test_critical_probability_is_half():
    assert probability_open(NearCriticalParam(0.0, 1 / 32, 0.1)) == 0.5


def test_parameter_difference_identity():
    # p_lambda - p_mu equals (lambda - mu) * mesh^2 / alpha4_unit exactly
    mesh, a4 = 1 / 64, 0.07
    for mu, lam in [(0.0, 5.0), (-3.0, 2.0), (1.5, 10.0)]:
        p_mu = probability_open(NearCriticalParam(mu, mesh, a4))
        p_lam = probability_open(NearCriticalParam(lam, mesh, a4))
        assert p_lam - p_mu == pytest.approx((lam - mu) * mesh ** 2 / a4, abs=1e-15)


def test_out_of_range():
    with pytest.raises(OutOfRange):
        probability_open(NearCriticalParam(1e6, 1 / 8, 0.1))


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_strictly_increasing_in_iota(i1, i2):
    if i1 == i2:
        return
    lo, hi = sorted([i1, i2])
    p_lo = probability_open(NearCriticalParam(lo, 1 / 64, 0.1))
    p_hi = probability_open(NearCriticalParam(hi, 1 / 64, 0.1))
    assert p_lo < p_hi


def test_all_blue_at_p_one(small_domain):
    cfg = sample_configuration(small_domain, 1.0, 3)
    assert cfg.colors.all()


def test_blue_fraction_concentrates():
    domain = build_domain(DomainSpec(1.0, 1 / 512))
    assert domain.n_cells > 100_000
    cfg = sample_configuration(domain, 0.5, 17)
    frac = cfg.blue_count() / domain.n_cells
    assert 0.494 <= frac <= 0.506


def test_sampling_deterministic(small_domain):
    a = sample_configuration(small_domain, 0.37, 99)
    b = sample_configuration(small_domain, 0.37, 99)
    assert np.array_equal(a.colors, b.colors)
    c = sample_configuration(small_domain, 0.37, 100)
    assert not np.array_equal(a.colors, c.colors)


def test_realize_extremes(small_domain):
    field = sample_coupling(small_domain, 5)
    assert not realize(field, 0.0).colors.any()
    assert realize(field, 1.0).colors.all()


_MONO_DOMAIN = build_domain(DomainSpec(1.0, 1 / 8))


@settings(max_examples=30)
@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.integers(0, 1000))
def test_realize_monotone(p1, p2, seed):
    lo, hi = sorted([p1, p2])
    field = sample_coupling(_MONO_DOMAIN, seed)
    blue_lo = realize(field, lo).colors
    blue_hi = realize(field, hi).colors
    assert not (blue_lo & ~blue_hi).any()


def test_closed_inequality_convention(small_domain):
    field = sample_coupling(small_domain, 1)
    field.u[:] = 0.3
    assert realize(field, 0.3).colors.all()


def test_switch_census(small_domain):
    field = sample_coupling(small_domain, 8)
    p, q = 0.3, 0.7
    switched = (field.u > p) & (field.u <= q)
    gained = realize(field, q).colors & ~realize(field, p).colors
    assert np.array_equal(switched, gained)


def test_coupling_marginal_matches_binomial(small_domain):
    # counts of blue cells among a fixed 20-cell window over many draws vs the
    # exact binomial law
    p = 0.4
    window = np.arange(20)
    n_draws = 10_000
    counts = np.zeros(n_draws, dtype=int)
    for k in range(n_draws):
        cfg = realize(sample_coupling(small_domain, 50_000 + k), p)
        counts[k] = int(cfg.colors[window].sum())
    observed = np.bincount(counts, minlength=21)
    expected = stats.binom.pmf(np.arange(21), 20, p) * n_draws
    keep = expected > 5
    chi2 = ((observed[keep] - expected[keep]) ** 2 / expected[keep]).sum()
    # merge the tail mass into one pseudo-bin for the dof count
    dof = keep.sum() - 1
    assert chi2 < stats.chi2.ppf(0.999, dof)


def test_calibration_store_roundtrip(tmp_path, monkeypatch):
    monkeypatch.setenv("NEARCRIT_CAL_DIR", str(tmp_path))
    store_calibration(1 / 32, {"alpha4_unit": 0.123, "std_error": 0.01,
                               "n_samples": 100, "seed": 1})
    assert lookup_alpha4(1 / 32) == 0.123
    table = load_calibration_table()
    assert f"{1 / 32:.12g}" in table


def test_calibrate_small_annulus_matches_enumeration(small_domain):
    # exact 4-arm probability on a tiny annulus by exhausting its cells,
    # against the Monte Carlo estimator on the same annulus
    ann = AnnulusSpec((0.0, 0.5), math.sqrt(3) / 8, 0.36)
    ctx = _annulus_context(small_domain, ann)
    cells = ctx.cells
    assert 6 <= len(cells) <= 14
    from nearcrit.connectivity import estimate_arm_probability, has_arms
    from nearcrit.sampler import Configuration
    import itertools
    hits = 0
    for bits in itertools.product([False, True], repeat=len(cells)):
        colors = np.zeros(small_domain.n_cells, dtype=bool)
        colors[cells] = bits
        if has_arms(Configuration(small_domain, colors), ann, "BYBY"):
            hits += 1
    exact = hits / 2 ** len(cells)
    est = estimate_arm_probability(small_domain, ann, "BYBY", 0.5, 4000, 3)
    se = max(est["std_error"], 1e-9)
    assert abs(est["estimate"] - exact) < 3 * se + 1e-12


def test_calibrate_decreasing_in_resolution(tmp_path, monkeypatch):
    monkeypatch.setenv("NEARCRIT_CAL_DIR", str(tmp_path))
    vals = [calibrate_alpha4_unit(DomainSpec(1.0, m), 2000, 7)["alpha4_unit"]
            for m in (1 / 16, 1 / 32, 1 / 64)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_calibrate_requires_samples(small_domain):
    with pytest.raises(ValueError):
        calibrate_alpha4_unit(DomainSpec(1.0, 1 / 16), 50, 1, persist=False)

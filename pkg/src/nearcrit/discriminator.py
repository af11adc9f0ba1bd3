"""Martingale discriminator over good triangles.

The running statistic adds, for each good triangle in hitting order, the
very-good indicator minus the conditional crossing probability of its region,
estimated by nested Monte Carlo on the cells the path prefix left untouched.
Conditioning at the sampling parameter makes the sum a centered martingale
with increments in [-1, 1]; conditioning at a fixed reference parameter while
sampling at a larger one drifts the sum upward, which is what the separation
experiment detects. The summation stops once the good count reaches the cap.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage, stats

from .connectivity import TRI_STRUCTURE
from .explorer import ExplorationPath, trace
from .hexlattice import DomainSpec, HexDomain, build_domain
from .mesoscopic import (DegenerateScale, TriangleGrid, TriangleSpec, build_grid,
                         compute_region, hitting_time, is_good, is_very_good,
                         order_by_hitting, _tri_cells)
from .rng import substream
from .sampler import (Configuration, CouplingField, NearCriticalParam,
                      effective_colors, probability_open, realize)


class MixedParameters(ValueError):
    """Diagnostics pooled over traces with different parameters."""


@dataclass
class StatisticParams:
    """Scales and exponent surrogates for the discriminating statistic.

    good_cap is the stopping budget for the number of good triangles,
    floor(delta^(-2 + alpha2_check + beta)) unless overridden.
    """

    delta: float
    beta: float = 0.05
    alpha2_check: float = None
    alpha4_hat: float = None
    good_cap: int = None
    inner_samples: int = 256

    def __post_init__(self):
        if self.alpha2_check is None:
            self.alpha2_check = 0.25 - self.beta
        if self.alpha4_hat is None:
            self.alpha4_hat = 1.25 + self.beta
        if not 2 * self.alpha4_hat - self.alpha2_check > 2:
            raise ValueError("need 2*alpha4_hat - alpha2_check > 2")
        if self.alpha2_check > 1:
            raise ValueError("alpha2_check must be at most 1")
        if self.good_cap is None:
            self.good_cap = int(self.delta ** (-2 + self.alpha2_check + self.beta))
        if self.inner_samples < 1:
            raise ValueError("inner_samples must be positive")


@dataclass(eq=False)
class StatisticTrace:
    """Per-triangle records and the stopped statistic of one replica."""

    records: list                  # dicts: k, sigma, good, vg, cond_prob, increment
    value: float
    stop_index: int                # 1-based; n_triangles + 1 when the cap is unmet
    good_count: int
    n_triangles: int
    sampled_iota: float
    conditioned_iota: float


def stopping_time(good_flags, cap: int) -> int:
    """First 1-based index where the running good count reaches cap, else N + 1."""
    flags = list(good_flags)
    total = 0
    for n, g in enumerate(flags, start=1):
        total += bool(g)
        if total >= cap:
            return n
    return len(flags) + 1


def conditional_crossing_probability(config: Configuration, path: ExplorationPath,
                                     tri: TriangleSpec, ps, inner_samples: int,
                                     seed_stream) -> list[dict]:
    """Nested MC estimates of the region crossing probability at each p in ps.

    All region cells are redrawn (the prefix never touches them); the same
    uniforms serve every p, so the estimates are monotone-coupled across ps.
    """
    ctx = compute_region(path, tri, config)
    kern = ctx.quad.kernel
    pos = np.searchsorted(ctx.quad.cells, ctx.region)
    u = seed_stream.random((inner_samples, len(ctx.region)))
    base = np.zeros((inner_samples, len(ctx.quad.cells)), dtype=bool)
    out = []
    for p in ps:
        base[:, pos] = u <= p
        hits = int(kern.crossed(base).sum())
        est = hits / inner_samples
        out.append({"estimate": est,
                    "std_error": math.sqrt(est * (1 - est) / inner_samples),
                    "n_samples": inner_samples})
    return out


def conditional_vg_probability(config: Configuration, path: ExplorationPath,
                               tri: TriangleSpec, p: float, inner_samples: int,
                               seed: int) -> dict:
    """Conditional very-good probability given the path prefix, at parameter p."""
    return conditional_crossing_probability(config, path, tri, [p], inner_samples,
                                            substream(seed))[0]


def compute_statistic(config: Configuration, path: ExplorationPath,
                      grid: TriangleGrid, params: StatisticParams, p_cond: float,
                      seed: int, stream: tuple = (),
                      sampled_iota: float = math.nan,
                      conditioned_iota: float = math.nan) -> StatisticTrace:
    """Sum of good * (vg - conditional probability) over triangles in hit order,
    stopped when the good count reaches params.good_cap.

    stream prefixes the per-triangle inner-MC substreams (e.g. the replica
    index), keeping replicas independent and worker-order-free.
    """
    ordered = order_by_hitting(grid, path)
    records = []
    value = 0.0
    goods = 0
    stop_index = len(ordered) + 1
    for k, tri in enumerate(ordered, start=1):
        sigma = hitting_time(path, tri)
        good = is_good(path, tri)
        rec = {"k": k, "sigma": sigma, "good": good, "vg": False,
               "cond_prob": None, "increment": 0.0}
        if good:
            goods += 1
            vg = is_very_good(path, tri, config)
            est = conditional_crossing_probability(
                config, path, tri, [p_cond], params.inner_samples,
                substream(seed, *stream, k))[0]
            rec["vg"] = vg
            rec["cond_prob"] = est["estimate"]
            rec["increment"] = float(vg) - est["estimate"]
            value += rec["increment"]
        records.append(rec)
        if goods >= params.good_cap:
            stop_index = k
            break
    return StatisticTrace(records=records, value=value, stop_index=stop_index,
                          good_count=goods, n_triangles=len(ordered),
                          sampled_iota=sampled_iota,
                          conditioned_iota=conditioned_iota)


def reference_statistic(config: Configuration, path: ExplorationPath,
                        grid: TriangleGrid, params: StatisticParams,
                        mu_param: NearCriticalParam, seed: int,
                        stream: tuple = (),
                        sampled_iota: float = math.nan) -> StatisticTrace:
    """The statistic with conditional probabilities pinned at the reference
    parameter, whatever law the configuration was sampled from."""
    return compute_statistic(config, path, grid, params,
                             probability_open(mu_param), seed, stream=stream,
                             sampled_iota=sampled_iota,
                             conditioned_iota=mu_param.iota)


def martingale_diagnostics(traces, sampled_at: float) -> dict:
    """Empirical mean and variance of the stopped statistic at matched parameter."""
    for t in traces:
        if not (t.sampled_iota == sampled_at and t.conditioned_iota == sampled_at):
            raise MixedParameters("trace parameters differ from sampled_at")
    vals = np.array([t.value for t in traces], dtype=float)
    return {"mean": float(vals.mean()), "variance": float(vals.var(ddof=1)),
            "n": len(vals)}


# --- experiments ---------------------------------------------------------------

@lru_cache(maxsize=4)
def _domain_for(radius: float, mesh: float) -> HexDomain:
    return build_domain(DomainSpec(radius, mesh))


def conditional_gap_experiment(domain: HexDomain, mu: float, lam: float,
                               delta: float, n_good_samples: int,
                               inner_samples: int, seed: int,
                               alpha4_unit: float) -> dict:
    """Pooled conditional-probability gap between the two parameters.

    Prefixes are sampled under the mu-law; on every good triangle the region
    crossing probability is estimated at both parameters with common random
    numbers, and the per-sample differences are pooled.
    """
    mesh = domain.spec.mesh
    p_mu = probability_open(NearCriticalParam(mu, mesh, alpha4_unit))
    p_lam = probability_open(NearCriticalParam(lam, mesh, alpha4_unit))
    grid = build_grid(domain, delta)
    gaps = []
    replica = 0
    while len(gaps) < n_good_samples:
        field = CouplingField(domain, substream(seed, replica, 0).random(domain.n_cells))
        config = realize(field, p_mu)
        path = trace(config)
        for k, tri in enumerate(order_by_hitting(grid, path), start=1):
            if not is_good(path, tri):
                continue
            est_mu, est_lam = conditional_crossing_probability(
                config, path, tri, [p_mu, p_lam], inner_samples,
                substream(seed, replica, k))
            gaps.append({"replica": replica, "k": k,
                         "gap": est_lam["estimate"] - est_mu["estimate"],
                         "p_mu_est": est_mu["estimate"],
                         "p_lam_est": est_lam["estimate"]})
            if len(gaps) >= n_good_samples:
                break
        replica += 1
        if replica > 500 * n_good_samples:
            raise RuntimeError("good triangles too rare at this scale")
    g = np.array([r["gap"] for r in gaps])
    se = float(g.std(ddof=1) / math.sqrt(len(g))) if len(g) > 1 else math.inf
    return {"samples": gaps, "pooled_mean": float(g.mean()), "pooled_se": se,
            "n": len(g), "replicas_used": replica,
            "z_score": float(g.mean() / se) if se > 0 else math.inf}


def separation_experiment(domain: HexDomain, mu: float, lam: float,
                          params: StatisticParams, n_replicas: int, seed: int,
                          alpha4_unit: float, workers: int = 1) -> dict:
    """Reference statistic sampled under both laws, with tail and location tests.

    Per replica the two laws share one coupling field, so the comparison is
    monotone at fixed randomness; replicas are independent streams merged in
    replica order regardless of worker count.
    """
    mesh = domain.spec.mesh
    spec = domain.spec
    payloads = [(spec.radius, spec.mesh, mu, lam, params, seed, r, alpha4_unit)
                for r in range(n_replicas)]
    if workers <= 1:
        rows = [_separation_replica(p) for p in payloads]
    else:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_separation_replica, payloads, chunksize=8))
    rows.sort(key=lambda r: r["replica"])
    z_mu = np.array([r["z_mu"] for r in rows])
    z_lam = np.array([r["z_lam"] for r in rows])
    d = params.delta
    thr_hi = d ** (-1 + params.alpha2_check / 2)
    thr_lo = 0.5 * d ** (params.alpha2_check - params.alpha4_hat + 2 * params.beta)
    diffs = z_lam - z_mu
    nonzero = diffs[diffs != 0]
    n_pos = int((nonzero > 0).sum())
    # one-sided sign test on the paired differences: under exchangeability the
    # nonzero signs are fair coin flips
    sign_p = float(stats.binomtest(n_pos, len(nonzero), 0.5,
                                   alternative="greater").pvalue) \
        if len(nonzero) else 1.0
    welch = stats.ttest_ind(z_lam, z_mu, equal_var=False, alternative="greater")
    return {
        "replicas": rows,
        "z_mu": z_mu.tolist(),
        "z_lambda": z_lam.tolist(),
        "threshold_report": {
            "upper_threshold": thr_hi,
            "mu_tail_frequency": float((z_mu >= thr_hi).mean()),
            "mu_tail_bound": d ** params.beta,
            "lower_threshold": thr_lo,
            "lambda_tail_frequency": float((z_lam <= thr_lo).mean()),
            "lambda_tail_bound": 4 * d ** (2 * params.alpha4_hat
                                           - params.alpha2_check - 2
                                           - 3 * params.beta),
        },
        "location_test": {
            "mean_mu": float(z_mu.mean()),
            "mean_lambda": float(z_lam.mean()),
            "welch_p_value": float(welch.pvalue),
            "paired_nonzero": len(nonzero),
            "paired_positive": n_pos,
            "paired_sign_p_value": sign_p,
        },
    }


def _separation_replica(payload) -> dict:
    radius, mesh, mu, lam, params, seed, r, alpha4_unit = payload
    domain = _domain_for(radius, mesh)
    p_mu = probability_open(NearCriticalParam(mu, mesh, alpha4_unit))
    p_lam = probability_open(NearCriticalParam(lam, mesh, alpha4_unit))
    grid = build_grid(domain, params.delta)
    field = CouplingField(domain, substream(seed, r, 0).random(domain.n_cells))
    mu_param = NearCriticalParam(mu, mesh, alpha4_unit)
    out = {"replica": r}
    for tag, p in (("mu", p_mu), ("lam", p_lam)):
        config = realize(field, p)
        path = trace(config)
        # inner streams keyed by (replica, triangle) only: common random numbers
        # across the two branches, so the paired difference is noise-free
        # whenever the two paths coincide
        tr = reference_statistic(config, path, grid, params, mu_param,
                                 seed=seed, stream=(r, 1),
                                 sampled_iota=mu if tag == "mu" else lam)
        out[f"z_{tag}"] = tr.value
        out[f"stop_{tag}"] = tr.stop_index
        out[f"goods_{tag}"] = tr.good_count
    return out


# --- half-annulus census --------------------------------------------------------

@dataclass(eq=False)
class AnnulusCensus:
    """Good-triangle counts per dyadic half-annulus."""

    delta: float
    rings: list  # dicts: j, inner, outer, n_triangles, good_count, good_triangles


def ring_count(params: StatisticParams, radius: float, c5: float = 1.0) -> float:
    """The ring depth J defined by delta^beta = c5 * (radius * 2^-J)^(2 - alpha2_check)."""
    inner_scale = (params.delta ** params.beta / c5) ** (1 / (2 - params.alpha2_check))
    return -math.log2(inner_scale / radius)


def count_good_in_annuli(config: Configuration, delta: float,
                         params: StatisticParams, c5: float = 1.0) -> AnnulusCensus:
    """Detect per ring the triangles carrying a blue and a yellow arm from the
    b-segment through the gate to the corresponding axis, inside the ring."""
    domain = config.domain
    spec = domain.spec
    if spec.mesh > delta / 16 + 1e-12:
        raise DegenerateScale("mesh too coarse for this delta")
    jmax = int(ring_count(params, spec.radius, c5))
    grid = build_grid(domain, delta)
    eff = effective_colors(config)
    centers = domain.centers
    norms = np.hypot(centers[:, 0], centers[:, 1])
    rings = []
    for j in range(jmax + 1):
        outer = spec.radius * 2.0 ** (-j)
        inner = outer / 2
        clear = outer / 8
        tris = []
        for tri in grid.triangles:
            site = (tri.anchor[0] + delta / 2,
                    tri.anchor[1] + math.sqrt(3) / 6 * delta)
            rr = math.hypot(*site)
            if (rr - delta >= inner + clear and rr + delta <= outer - clear
                    and site[1] - delta >= clear):
                tris.append(tri)
        if not tris:
            raise DegenerateScale(f"ring {j} admits no triangle at delta={delta}")
        ring_mask = (norms >= inner) & (norms <= outer)
        good_tris = [tri for tri in tris
                     if _gate_arms_to_axes(domain, eff, ring_mask, tri)]
        rings.append({"j": j, "inner": inner, "outer": outer,
                      "n_triangles": len(tris), "good_count": len(good_tris),
                      "good_triangles": good_tris})
    return AnnulusCensus(delta=delta, rings=rings)


def _gate_arms_to_axes(domain: HexDomain, eff: np.ndarray, ring_mask: np.ndarray,
                       tri: TriangleSpec) -> bool:
    """Blue arm b->l->negative axis and yellow arm b->l->positive axis, in-ring."""
    tc = _tri_cells(domain, tri)
    gate = tc.gate_region_cells
    for blue, axis_cells in ((True, domain.boundary_blue),
                             (False, domain.boundary_yellow)):
        colormask = eff == blue
        lab, labels = _ring_labels(domain, colormask & ring_mask)
        gate_ok = _gate_crossing_labels(domain, tc, colormask & ring_mask, gate, lab)
        if not gate_ok:
            return False
        axis_in = axis_cells[ring_mask[axis_cells]]
        axis_labels = set(lab[axis_in].tolist()) - {0}
        if not (gate_ok & axis_labels):
            return False
    return True


def _ring_labels(domain: HexDomain, mask: np.ndarray):
    grid = np.zeros(domain.grid_index.shape, dtype=bool)
    sel = np.flatnonzero(mask)
    ab = domain.cells_ab[sel]
    grid[ab[:, 1], ab[:, 0] - domain.a_off] = True
    lab2, n = ndimage.label(grid, structure=TRI_STRUCTURE)
    lab = np.zeros(domain.n_cells, dtype=np.int32)
    lab[sel] = lab2[ab[:, 1], ab[:, 0] - domain.a_off]
    return lab, n


def _gate_crossing_labels(domain, tc, colormask, gate, lab) -> set:
    """Ring-cluster labels whose gate portion joins the b-cells to the l-cells."""
    sel = gate[colormask[gate]]
    if not len(sel):
        return set()
    ab = domain.cells_ab[sel]
    b0, a0 = int(ab[:, 1].min()), int(ab[:, 0].min())
    g = np.zeros((int(ab[:, 1].max()) - b0 + 1, int(ab[:, 0].max()) - a0 + 1),
                 dtype=bool)
    g[ab[:, 1] - b0, ab[:, 0] - a0] = True
    sub, _ = ndimage.label(g, structure=TRI_STRUCTURE)
    sub_ids = sub[ab[:, 1] - b0, ab[:, 0] - a0]
    bmask = domain.mask_from_indices(tc.b_cells)
    lmask = domain.mask_from_indices(tc.l_cells)
    from_b = set(sub_ids[bmask[sel]].tolist())
    from_l = set(sub_ids[lmask[sel]].tolist())
    out = set()
    for sid in from_b & from_l:
        out |= set(lab[sel[sub_ids == sid]].tolist())
    return out - {0}


def second_moment_diagnostics(census_samples) -> list[dict]:
    """Per ring: mean, second moment, and the frequency of at least half the mean."""
    if len(census_samples) < 1:
        raise ValueError("need at least one census")
    n_rings = len(census_samples[0].rings)
    out = []
    for j in range(n_rings):
        counts = np.array([c.rings[j]["good_count"] for c in census_samples],
                          dtype=float)
        mean = counts.mean()
        second = (counts ** 2).mean()
        freq = float((counts >= mean / 2).mean()) if mean > 0 else 0.0
        c7 = (second - mean) / mean ** 2 if mean > 0 else math.inf
        out.append({"j": j, "mean": float(mean), "second_moment": float(second),
                    "frequency_at_half_mean": freq, "c7": float(c7),
                    "n_samples": len(counts)})
    return out

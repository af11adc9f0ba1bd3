"""Experiment driver: config parsing, calibration store, seeded runs, plot data.

Configs are plain key=value text files; command-line flags override file
entries. Results are JSON-lines with one record per replica or scale point;
every payload field is a deterministic function of (config, seed), so reruns
are byte-identical regardless of worker count. Wall-clock and progress go to
stderr only. Exit codes: 1 invalid config, 2 missing calibration, 3 internal
assertion.
"""

import argparse
import csv
import hashlib
import json
import math
import sys
import time

from . import __version__
from .connectivity import (AnnulusSpec, crossing_probability,
                           estimate_arm_probability, rect_quad, slit_quad,
                           symmetric_difference_probability)
from .discriminator import (StatisticParams, count_good_in_annuli,
                            second_moment_diagnostics, separation_experiment)
from .explorer import trace
from .hexlattice import DomainSpec, build_domain
from .sampler import (MissingCalibration, NearCriticalParam, calibrate_alpha4_unit,
                      load_calibration_table, lookup_alpha4, probability_open,
                      sample_configuration)
from .scalemap import scaled_configuration_law, scaling_consistency_experiment


class UnknownKind(ValueError):
    pass


def _parse_number(text: str) -> float:
    """Accept plain floats and fractions like 1/64."""
    if "/" in text:
        num, den = text.split("/")
        return float(num) / float(den)
    return float(text)


def _load_config_file(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


def _run_id(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _emit_jsonl(path, records, config_echo):
    header = {"kind": "header", "version": __version__,
              "run_id": _run_id(config_echo), "config": config_echo}
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(r, sort_keys=True) for r in records]
    text = "\n".join(lines) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _add_common(sp):
    sp.add_argument("--config", help="key=value config file; flags override")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="-", help="output path ('-' for stdout)")
    sp.add_argument("--radius", type=str, default="1")
    sp.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nearcrit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="estimate alpha4_unit for a mesh")
    _add_common(p)
    p.add_argument("--mesh", type=str, required=True)
    p.add_argument("--samples", type=int, default=10000)

    p = sub.add_parser("arms", help="arm-pattern probability in an annulus")
    _add_common(p)
    p.add_argument("--pattern", required=True)
    p.add_argument("--inner", type=str, required=True)
    p.add_argument("--outer", type=str, required=True)
    p.add_argument("--mesh", type=str, required=True)
    p.add_argument("--p", type=str, default="0.5")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--half-plane", action="store_true")
    p.add_argument("--center-y", type=str, default=None,
                   help="annulus center height; defaults to radius/2 (whole plane) or 0")

    p = sub.add_parser("trace", help="trace one exploration path to CSV")
    _add_common(p)
    p.add_argument("--mesh", type=str, required=True)
    p.add_argument("--p", type=str, default="0.5")

    p = sub.add_parser("quad-stability", help="symmetric-difference families")
    _add_common(p)
    p.add_argument("--family", choices=["slit", "shrink"], required=True)
    p.add_argument("--mesh", type=str, default=None,
                   help="mesh for the shrink family")
    p.add_argument("--samples", type=int, default=4000)

    p = sub.add_parser("separate", help="two-law separation experiment")
    _add_common(p)
    p.add_argument("--mu", type=str, required=True)
    p.add_argument("--lambda", dest="lam", type=str, required=True)
    p.add_argument("--delta", type=str, required=True)
    p.add_argument("--mesh", type=str, required=True)
    p.add_argument("--replicas", type=int, default=200)
    p.add_argument("--inner", type=int, default=256)

    p = sub.add_parser("annuli", help="half-annulus good-triangle census")
    _add_common(p)
    p.add_argument("--delta", type=str, required=True)
    p.add_argument("--mesh", type=str, required=True)
    p.add_argument("--samples", type=int, default=100)

    p = sub.add_parser("scalemap", help="scaling-map consistency experiment")
    _add_common(p)
    p.add_argument("--mu", type=str, required=True)
    p.add_argument("--s", type=str, required=True)
    p.add_argument("--mesh", type=str, required=True)
    p.add_argument("--samples", type=int, default=10000)

    p = sub.add_parser("emit-plots", help="turn result JSONL into tidy CSV")
    p.add_argument("--kind", required=True,
                   choices=["exponents", "z-histogram", "annulus-census"])
    p.add_argument("--results", required=True)
    p.add_argument("--out", default="-")
    return ap


def _apply_config_file(args):
    if getattr(args, "config", None):
        overrides = _load_config_file(args.config)
        for key, val in overrides.items():
            attr = key.replace("-", "_")
            if not hasattr(args, attr) or \
                    f"--{key}" in sys.argv or f"--{key.replace('_', '-')}" in sys.argv:
                continue
            cur = getattr(args, attr)
            if isinstance(cur, bool):
                val = val.lower() in ("1", "true", "yes")
            elif isinstance(cur, int):
                val = int(val)
            setattr(args, attr, val)


def _echo(args, skip=("config", "out", "workers")):
    return {k: v for k, v in sorted(vars(args).items())
            if k not in skip and not k.startswith("_")}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _apply_config_file(args)
        t0 = time.time()
        rc = _dispatch(args)
        print(f"[nearcrit] {args.command} finished in {time.time() - t0:.1f}s",
              file=sys.stderr)
        return rc
    except MissingCalibration as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except AssertionError as exc:
        print(f"internal assertion: {exc}", file=sys.stderr)
        return 3


def _dispatch(args) -> int:
    cmd = args.command.replace("-", "_")
    return globals()[f"_cmd_{cmd}"](args)


def _cmd_calibrate(args) -> int:
    spec = DomainSpec(_parse_number(args.radius), _parse_number(args.mesh))
    rec = calibrate_alpha4_unit(spec, args.samples, args.seed)
    _emit_jsonl(args.out, [{"kind": "calibration", "mesh": spec.mesh, **rec}],
                _echo(args))
    return 0


def _cmd_arms(args) -> int:
    radius = _parse_number(args.radius)
    mesh = _parse_number(args.mesh)
    domain = build_domain(DomainSpec(radius, mesh))
    if args.center_y is not None:
        cy = _parse_number(args.center_y)
    else:
        cy = 0.0 if args.half_plane else radius / 2
    ann = AnnulusSpec((0.0, cy), _parse_number(args.inner),
                      _parse_number(args.outer), half_plane=args.half_plane)
    est = estimate_arm_probability(domain, ann, args.pattern,
                                   _parse_number(args.p), args.samples, args.seed)
    rec = {"kind": "arm-estimate", "pattern": args.pattern, "mesh": mesh,
           "inner": ann.inner, "outer": ann.outer,
           "ratio": ann.outer / ann.inner, **est}
    _emit_jsonl(args.out, [rec], _echo(args))
    return 0


def _cmd_trace(args) -> int:
    radius = _parse_number(args.radius)
    mesh = _parse_number(args.mesh)
    domain = build_domain(DomainSpec(radius, mesh))
    config = sample_configuration(domain, _parse_number(args.p), args.seed)
    path = trace(config)
    out = args.out if args.out not in (None, "-") else "path.csv"
    path.dump_csv(out)
    print(f"[nearcrit] wrote {path.n_steps} steps to {out}", file=sys.stderr)
    return 0


def _cmd_quad_stability(args) -> int:
    radius = _parse_number(args.radius)
    records = []
    if args.family == "shrink":
        mesh = _parse_number(args.mesh or "1/64")
        domain = build_domain(DomainSpec(radius, mesh))
        box = (-0.35 * radius, 0.35 * radius, 0.1 * radius, 0.8 * radius)
        base = rect_quad(domain, *box)
        spacing = math.sqrt(3) * mesh
        for k in (8, 4, 2, 1):
            shrunk = rect_quad(domain, box[0], box[1] - k * spacing, box[2], box[3])
            est = symmetric_difference_probability(domain, base, shrunk, 0.5,
                                                   args.samples, args.seed)
            records.append({"kind": "shrink", "mesh": mesh, "k": k, **est})
    else:
        for n in (16, 32, 64):
            mesh = 0.35 / n
            domain = build_domain(DomainSpec(radius, mesh))
            sq, slit = slit_family(domain, radius, n)
            est = symmetric_difference_probability(domain, sq, slit, 0.5,
                                                   args.samples, args.seed)
            base_est = crossing_probability(domain, sq, 0.5, args.samples,
                                            args.seed + 1)
            records.append({"kind": "slit", "n": n, "mesh": mesh,
                            "square_crossing": base_est, **est})
    _emit_jsonl(args.out, records, _echo(args))
    return 0


def slit_family(domain, radius, n):
    """The square quad and its slit perturbation at resolution 1/n."""
    L = 0.7 * radius
    x0, x1 = -L / 2, L / 2
    y0, y1 = 0.1 * radius, 0.1 * radius + L
    sq = rect_quad(domain, x0, x1, y0, y1)
    sl = slit_quad(domain, x0, x1, y0, y1,
                   y0 + L / n, y0 + 2 * L / n, x0 + L / n)
    return sq, sl


def _cmd_separate(args) -> int:
    radius = _parse_number(args.radius)
    mesh = _parse_number(args.mesh)
    alpha4 = lookup_alpha4(mesh)
    domain = build_domain(DomainSpec(radius, mesh))
    params = StatisticParams(delta=_parse_number(args.delta),
                             inner_samples=args.inner)
    res = separation_experiment(domain, _parse_number(args.mu),
                                _parse_number(args.lam), params,
                                args.replicas, args.seed, alpha4,
                                workers=args.workers)
    records = [{"kind": "separation-replica", **row} for row in res["replicas"]]
    records.append({"kind": "separation-summary",
                    "threshold_report": res["threshold_report"],
                    "location_test": res["location_test"]})
    _emit_jsonl(args.out, records, _echo(args))
    return 0


def _cmd_annuli(args) -> int:
    radius = _parse_number(args.radius)
    mesh = _parse_number(args.mesh)
    delta = _parse_number(args.delta)
    domain = build_domain(DomainSpec(radius, mesh))
    params = StatisticParams(delta=delta)
    censuses = []
    for r in range(args.samples):
        config = sample_configuration(domain, 0.5, args.seed + 1000003 * r)
        censuses.append(count_good_in_annuli(config, delta, params))
    records = []
    for c_idx, census in enumerate(censuses):
        for ring in census.rings:
            records.append({"kind": "census", "sample": c_idx, "j": ring["j"],
                            "inner": ring["inner"], "outer": ring["outer"],
                            "n_triangles": ring["n_triangles"],
                            "good_count": ring["good_count"]})
    for diag in second_moment_diagnostics(censuses):
        records.append({"kind": "census-moments", **diag})
    _emit_jsonl(args.out, records, _echo(args))
    return 0


def _cmd_scalemap(args) -> int:
    mesh = _parse_number(args.mesh)
    s = _parse_number(args.s)
    mu = _parse_number(args.mu)
    table = load_calibration_table()
    law = scaled_configuration_law(mu, mesh, s, table)
    res = scaling_consistency_experiment(mu, mesh, s, law["lambda_eff"], table,
                                         args.samples, args.seed,
                                         radius=_parse_number(args.radius))
    _emit_jsonl(args.out, [{"kind": "scalemap-law", **law},
                           {"kind": "scalemap-consistency", **res}], _echo(args))
    return 0


def _cmd_emit_plots(args) -> int:
    with open(args.results) as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    rows, header = _plot_rows(args.kind, records)
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="")
    try:
        w = csv.writer(out)
        w.writerow(header)
        w.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _plot_rows(kind, records):
    if kind == "exponents":
        header = ["pattern", "ratio", "estimate", "std_error"]
        rows = [[r["pattern"], r["ratio"], r["estimate"], r["std_error"]]
                for r in records if r.get("kind") == "arm-estimate"]
    elif kind == "z-histogram":
        header = ["law", "bin_lo", "bin_hi", "count"]
        import numpy as np
        rows = []
        reps = [r for r in records if r.get("kind") == "separation-replica"]
        for law, key in (("mu", "z_mu"), ("lambda", "z_lam")):
            vals = np.array([r[key] for r in reps], dtype=float)
            if not len(vals):
                continue
            counts, edges = np.histogram(vals, bins=20)
            rows += [[law, float(edges[i]), float(edges[i + 1]), int(c)]
                     for i, c in enumerate(counts)]
    elif kind == "annulus-census":
        header = ["sample", "j", "inner", "outer", "n_triangles", "good_count"]
        rows = [[r["sample"], r["j"], r["inner"], r["outer"],
                 r["n_triangles"], r["good_count"]]
                for r in records if r.get("kind") == "census"]
    else:
        raise UnknownKind(kind)
    return rows, header


if __name__ == "__main__":
    sys.exit(main())

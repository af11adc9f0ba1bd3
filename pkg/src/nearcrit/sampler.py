"""Near-critical sampling and the monotone coupling field.

A configuration assigns each cell Blue (True) or Yellow (False). The open
probability at parameter iota is 1/2 + iota * mesh^2 / alpha4_unit, where
alpha4_unit is the calibrated probability of four alternating arms from one
hexagon up to unit scale on the same lattice. alpha4_unit comes from a
persisted per-mesh calibration table, estimated at p = 1/2 before any
near-critical run.

Coupling: each cell carries a uniform u in [0, 1); realize(field, p) colors a
cell Blue iff u <= p, so the blue set is non-decreasing in p pointwise per
field and all increasing events are monotone along the coupling.
"""

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .hexlattice import DomainSpec, HexDomain, build_domain
from .rng import substream

BLUE = True
YELLOW = False


class OutOfRange(ValueError):
    """probability_open left (0, 1): the mesh is too coarse for this iota."""


class MissingCalibration(KeyError):
    """No alpha4_unit entry for the requested mesh."""


@dataclass(frozen=True)
class NearCriticalParam:
    """Near-critical parameter: p = 1/2 + iota * mesh^2 / alpha4_unit."""

    iota: float
    mesh: float
    alpha4_unit: float

    def __post_init__(self):
        if self.mesh <= 0:
            raise ValueError("mesh must be positive")
        if not 0 < self.alpha4_unit <= 1:
            raise ValueError("alpha4_unit must lie in (0, 1]")


def probability_open(param: NearCriticalParam) -> float:
    p = 0.5 + param.iota * param.mesh ** 2 / param.alpha4_unit
    if not 0 < p < 1:
        raise OutOfRange(f"p = {p:.4g} outside (0, 1); mesh too coarse for iota")
    return p


@dataclass
class Configuration:
    domain: HexDomain
    colors: np.ndarray  # bool per cell index, True = Blue

    def __post_init__(self):
        assert self.colors.shape == (self.domain.n_cells,)

    def blue_count(self) -> int:
        return int(self.colors.sum())


@dataclass
class CouplingField:
    domain: HexDomain
    u: np.ndarray  # float64 in [0, 1) per cell index


def sample_coupling(domain: HexDomain, seed: int) -> CouplingField:
    """I.i.d. uniforms per cell; stream keyed by seed only."""
    gen = substream(seed)
    return CouplingField(domain, gen.random(domain.n_cells))


def realize(field: CouplingField, p: float) -> Configuration:
    """Color Blue where u <= p (closed inequality)."""
    return Configuration(field.domain, field.u <= p)


def sample_configuration(domain: HexDomain, p: float, seed: int) -> Configuration:
    """I.i.d. colors at density p; identical to realize(sample_coupling(...), p)."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    return realize(sample_coupling(domain, seed), p)


def effective_colors(config: Configuration) -> np.ndarray:
    """Colors with the boundary conditions forced (blue arc Blue, yellow arc Yellow).

    Everything that reads the configuration through the boundary-conditioned
    interface (tracing, arm detection against the axis) goes through here.
    """
    eff = config.colors.copy()
    eff[config.domain.boundary_blue] = True
    eff[config.domain.boundary_yellow] = False
    return eff


# --- calibration -------------------------------------------------------------

def calibration_dir() -> str:
    return os.environ.get("NEARCRIT_CAL_DIR", os.path.join(os.getcwd(), "calibration"))


def _calibration_path() -> str:
    return os.path.join(calibration_dir(), "alpha4.json")


def _mesh_key(mesh: float) -> str:
    return f"{mesh:.12g}"


def load_calibration_table(path: str | None = None) -> dict:
    path = path or _calibration_path()
    if not os.path.exists(path):
        return {}
    with open(path) as fh:
        return json.load(fh)


def store_calibration(mesh: float, record: dict, path: str | None = None) -> None:
    path = path or _calibration_path()
    os.makedirs(os.path.dirname(path), exist_ok=True)
    table = load_calibration_table(path)
    table[_mesh_key(mesh)] = record
    with open(path, "w") as fh:
        json.dump(table, fh, indent=1, sort_keys=True)


def lookup_alpha4(mesh: float, path: str | None = None) -> float:
    table = load_calibration_table(path)
    key = _mesh_key(mesh)
    if key not in table:
        raise MissingCalibration(f"no alpha4_unit calibration for mesh {key}")
    return table[key]["alpha4_unit"]


def calibrate_alpha4_unit(spec: DomainSpec, n_samples: int, seed: int,
                          persist: bool = True, path: str | None = None) -> dict:
    """Monte Carlo estimate of the one-hexagon-to-unit-scale 4-arm probability.

    Measured at p = 1/2 in the inscribed disc B((0, r/2), r/2), the largest
    annulus the half-disc holds without clipping; the hole is the single
    center hexagon. The estimate is persisted to the calibration store keyed
    by mesh.
    """
    from .connectivity import AnnulusSpec, estimate_arm_probability

    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    domain = build_domain(spec)
    annulus = AnnulusSpec(center=(0.0, spec.radius / 2),
                          inner=math.sqrt(3) * spec.mesh,
                          outer=spec.radius / 2)
    est = estimate_arm_probability(domain, annulus, "BYBY", 0.5, n_samples, seed)
    record = {"alpha4_unit": est["estimate"], "std_error": est["std_error"],
              "n_samples": n_samples, "seed": seed}
    if persist:
        store_calibration(spec.mesh, record, path)
    return record

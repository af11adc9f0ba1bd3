"""Hexagonal lattice geometry and the half-disc domain.

Cells are faces of the hexagonal tiling, indexed by integer axial coordinates
(a, b) so that all adjacency is exact integer arithmetic. Hexagons are
pointy-top with circumradius equal to the mesh; neighboring centers are
sqrt(3)*mesh apart.

Internally, plane positions are expressed in half-units X = sqrt(3)*mesh/2 and
Y = mesh/2:

    center(a, b)   = (2a + b + 1, 3b)          in (X, Y) units
    hexagon corner = center + {(+-1, +-1), (0, +-2)}

Corners of hexagons ("lattice vertices") are the integer pairs (i, j) with
j % 3 in {1, 2}; they form the honeycomb on which the exploration interface
walks. Row b = 0 is centered on the real axis; its cells are the colored
boundary (negative side blue, positive side yellow), and the directed vertical
edge (0,-1) -> (0,1) through the origin separates the two boundary arcs.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

HexCoord = tuple[int, int]

# axial neighbor offsets, fixed order: E, NE, NW, W, SW, SE
NEIGHBOR_OFFSETS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))

_CORNER_OFFSETS = ((1, 1), (-1, 1), (-1, -1), (1, -1), (0, 2), (0, -2))


class DegenerateDomain(ValueError):
    """Raised when mesh/radius exceeds 1/8."""


@dataclass(frozen=True)
class DomainSpec:
    """Half-disc H_r at a given mesh. Units of length: the plane the disc lives in."""

    radius: float
    mesh: float

    def __post_init__(self):
        if self.radius <= 0 or self.mesh <= 0:
            raise DegenerateDomain("radius and mesh must be positive")
        if self.mesh / self.radius > 1 / 8 + 1e-12:
            raise DegenerateDomain(
                f"mesh/radius = {self.mesh / self.radius:.4g} exceeds 1/8")

    @property
    def unit_x(self) -> float:
        return math.sqrt(3) * self.mesh / 2

    @property
    def unit_y(self) -> float:
        return self.mesh / 2


def neighbors(h: HexCoord) -> list[HexCoord]:
    """The six axial neighbors of h, in fixed order E, NE, NW, W, SW, SE."""
    a, b = h
    return [(a + da, b + db) for da, db in NEIGHBOR_OFFSETS]


def center_units(h: HexCoord) -> tuple[int, int]:
    """Hexagon center in integer (X, Y) half-units."""
    a, b = h
    return (2 * a + b + 1, 3 * b)


def axial_from_center_units(ci: int, cj: int) -> HexCoord:
    """Inverse of center_units. cj must be divisible by 3 and ci - cj/3 odd."""
    b = cj // 3
    return ((ci - b - 1) // 2, b)


def hex_center(h: HexCoord, spec: DomainSpec) -> tuple[float, float]:
    """Plane position of the hexagon center."""
    ci, cj = center_units(h)
    return (ci * spec.unit_x, cj * spec.unit_y)


def nearest_cell(point: tuple[float, float], spec: DomainSpec) -> HexCoord:
    """The hexagon containing a plane point (hexagons are Voronoi cells of centers).

    Ties on hexagon boundaries break toward the lexicographically smallest
    (b, a), so the lookup is a deterministic total function.
    """
    x, y = point
    bf = y / (3 * spec.unit_y)
    best = None
    best_d = math.inf
    for b in (math.floor(bf), math.ceil(bf)):
        af = (x / spec.unit_x - b - 1) / 2
        for a in (math.floor(af) - 1, math.floor(af), math.ceil(af), math.ceil(af) + 1):
            cx, cy = ((2 * a + b + 1) * spec.unit_x, 3 * b * spec.unit_y)
            d = (x - cx) ** 2 + (y - cy) ** 2
            if d < best_d - 1e-15 or (abs(d - best_d) <= 1e-15 and (b, a) < best):
                best_d = d
                best = (b, a)
    return (best[1], best[0])


def vertex_xy(v: tuple[int, int], spec: DomainSpec) -> tuple[float, float]:
    """Plane position of a lattice vertex given in integer (X, Y) half-units."""
    return (v[0] * spec.unit_x, v[1] * spec.unit_y)


def vertex_neighbors(v: tuple[int, int]) -> list[tuple[int, int]]:
    """The three honeycomb vertices adjacent to v."""
    i, j = v
    if j % 3 == 1:
        return [(i - 1, j + 1), (i + 1, j + 1), (i, j - 2)]
    if j % 3 == 2:
        return [(i, j + 2), (i - 1, j - 1), (i + 1, j - 1)]
    raise ValueError(f"{v} is not a lattice vertex")


def hexes_at_vertex(v: tuple[int, int]) -> list[HexCoord]:
    """The three hexagons sharing the vertex v."""
    i, j = v
    if j % 3 == 1:
        centers = ((i - 1, j - 1), (i + 1, j - 1), (i, j + 2))
    elif j % 3 == 2:
        centers = ((i, j - 2), (i - 1, j + 1), (i + 1, j + 1))
    else:
        raise ValueError(f"{v} is not a lattice vertex")
    return [axial_from_center_units(ci, cj) for ci, cj in centers]


def edge_flanks(v_from: tuple[int, int], v_to: tuple[int, int]) -> tuple[HexCoord, HexCoord]:
    """(left, right) hexagons of the directed edge v_from -> v_to."""
    i, j = v_from
    di, dj = v_to[0] - i, v_to[1] - j
    if (di, dj) == (0, 2):
        left, right = (i - 1, j + 1), (i + 1, j + 1)
    elif (di, dj) == (0, -2):
        left, right = (i + 1, j - 1), (i - 1, j - 1)
    elif (di, dj) == (1, 1):
        left, right = (i, j + 2), (i + 1, j - 1)
    elif (di, dj) == (-1, -1):
        left, right = (i, j - 2), (i - 1, j + 1)
    elif (di, dj) == (-1, 1):
        left, right = (i - 1, j - 1), (i, j + 2)
    elif (di, dj) == (1, -1):
        left, right = (i + 1, j + 1), (i, j - 2)
    else:
        raise ValueError(f"{v_from} -> {v_to} is not a lattice edge")
    return axial_from_center_units(*left), axial_from_center_units(*right)


class HexDomain:
    """All hexagons of the half-disc, plus the colored boundary row.

    Immutable after construction; shares freely across workers. Cells are held
    in canonical (b, a) order and every per-cell array in the package is
    indexed accordingly.
    """

    def __init__(self, spec: DomainSpec):
        self.spec = spec
        r, eta = spec.radius, spec.mesh
        # containment: all six corners inside the closed disc (integer test
        # against 4 r^2 / eta^2); row b >= 1 is then automatically above the axis.
        lim = 4 * r * r / (eta * eta)
        b_max = int(2 * r / (3 * eta)) + 2
        a_lim = int(2 * r / (math.sqrt(3) * eta)) + 3
        bs, as_ = np.meshgrid(np.arange(0, b_max + 1), np.arange(-a_lim, a_lim + 1),
                              indexing="ij")
        ci = 2 * as_ + bs + 1
        cj = 3 * bs
        worst = np.zeros(ci.shape)
        for oi, oj in _CORNER_OFFSETS:
            worst = np.maximum(worst, 3.0 * (ci + oi) ** 2 + (cj + oj) ** 2)
        keep = worst <= lim
        self.cells_ab = np.stack([as_[keep], bs[keep]], axis=1).astype(np.int64)
        order = np.lexsort((self.cells_ab[:, 0], self.cells_ab[:, 1]))
        self.cells_ab = self.cells_ab[order]
        self.n_cells = len(self.cells_ab)
        if self.n_cells == 0:
            raise DegenerateDomain("domain contains no cells")

        ci = 2 * self.cells_ab[:, 0] + self.cells_ab[:, 1] + 1
        cj = 3 * self.cells_ab[:, 1]
        self.centers = np.stack([ci * spec.unit_x, cj * spec.unit_y], axis=1)

        self.a_off = int(self.cells_ab[:, 0].min())
        self.b_off = 0
        na = int(self.cells_ab[:, 0].max()) - self.a_off + 1
        nb = int(self.cells_ab[:, 1].max()) + 1
        self.grid_index = np.full((nb, na), -1, dtype=np.int32)
        self.grid_index[self.cells_ab[:, 1], self.cells_ab[:, 0] - self.a_off] = \
            np.arange(self.n_cells, dtype=np.int32)

        row0 = self.cells_ab[:, 1] == 0
        self.boundary_blue = np.flatnonzero(row0 & (ci < 0)).astype(np.int32)
        self.boundary_yellow = np.flatnonzero(row0 & (ci > 0)).astype(np.int32)
        if spec.mesh / spec.radius <= 1 / 8 + 1e-12:
            assert len(self.boundary_blue) and len(self.boundary_yellow)
        self.origin_edge = ((0, -1), (0, 1))
        self._index_of = {(int(a), int(b)): k
                          for k, (a, b) in enumerate(self.cells_ab)}

    def index_of(self, h: HexCoord) -> int:
        """Canonical index of a cell, or -1 if outside the domain."""
        return self._index_of.get((h[0], h[1]), -1)

    def cell(self, idx: int) -> HexCoord:
        a, b = self.cells_ab[idx]
        return (int(a), int(b))

    def contains(self, h: HexCoord) -> bool:
        return (h[0], h[1]) in self._index_of

    def neighbor_indices(self, idx: int) -> list[int]:
        """Indices of in-domain neighbors of cell idx (order E, NE, NW, W, SW, SE)."""
        a, b = self.cells_ab[idx]
        return [self.index_of((int(a) + da, int(b) + db))
                for da, db in NEIGHBOR_OFFSETS]

    def mask_from_indices(self, idx) -> np.ndarray:
        m = np.zeros(self.n_cells, dtype=bool)
        m[np.asarray(idx, dtype=np.int64)] = True
        return m

    def summary_json(self) -> str:
        """Domain dump used as a test fixture header."""
        return json.dumps({
            "radius": self.spec.radius,
            "mesh": self.spec.mesh,
            "n_cells": int(self.n_cells),
            "n_boundary_blue": int(len(self.boundary_blue)),
            "n_boundary_yellow": int(len(self.boundary_yellow)),
        }, sort_keys=True)


def build_domain(spec: DomainSpec) -> HexDomain:
    """Construct the maximal cell set for the spec. Deterministic."""
    return HexDomain(spec)

"""Exploration-interface tracing.

The walk maintains a directed honeycomb edge with the blue region on its left
and the yellow region on its right. At the head vertex, the hexagon not
flanking the current edge is "ahead": Blue means turn right, Yellow means turn
left. The first edge is the domain's origin edge; the walk stops once the head
vertex is within one mesh unit of the arc |z| = radius.

Hexagons outside the domain are virtual boundary: blue on the negative-x side,
yellow otherwise. The boundary row and the virtual colors pin the interface to
the upper half-disc, and since no directed edge can repeat, termination within
one mesh of the arc is guaranteed.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .hexlattice import HexDomain, edge_flanks, vertex_xy
from .sampler import Configuration, effective_colors


class NeverExits(ValueError):
    """The path never leaves the requested radius."""


@njit(cache=True)
def _walk(eff, grid_index, a_off, nb, na, stop_sq, max_steps, verts, flank_l, flank_r):
    """Interface walk kernel. Returns the number of steps taken, or -1 on overflow.

    verts holds integer vertex coordinates in (X, Y) half-units; flank_l/flank_r
    hold domain cell indices (-1 when the flanking hexagon is outside).
    """
    fi, fj = 0, -1
    ti, tj = 0, 1
    n = 0
    verts[0, 0], verts[0, 1] = fi, fj
    while True:
        if n >= max_steps:
            return -1
        di = ti - fi
        dj = tj - fj
        # (left, right) hexagon centers of the directed edge, in center units
        if di == 0 and dj == 2:
            li, lj, ri, rj = fi - 1, fj + 1, fi + 1, fj + 1
        elif di == 0 and dj == -2:
            li, lj, ri, rj = fi + 1, fj - 1, fi - 1, fj - 1
        elif di == 1 and dj == 1:
            li, lj, ri, rj = fi, fj + 2, fi + 1, fj - 1
        elif di == -1 and dj == -1:
            li, lj, ri, rj = fi, fj - 2, fi - 1, fj + 1
        elif di == -1 and dj == 1:
            li, lj, ri, rj = fi - 1, fj - 1, fi, fj + 2
        else:  # (1, -1)
            li, lj, ri, rj = fi + 1, fj + 1, fi, fj - 2
        flank_l[n] = _cell_at(li, lj, grid_index, a_off, nb, na)
        flank_r[n] = _cell_at(ri, rj, grid_index, a_off, nb, na)
        n += 1
        verts[n, 0], verts[n, 1] = ti, tj
        if 3 * ti * ti + tj * tj >= stop_sq:
            return n
        # hexagon ahead: the one at the head vertex not flanking the edge
        jm = tj % 3
        if jm == 1:
            h0i, h0j, h1i, h1j, h2i, h2j = ti - 1, tj - 1, ti + 1, tj - 1, ti, tj + 2
        else:
            h0i, h0j, h1i, h1j, h2i, h2j = ti, tj - 2, ti - 1, tj + 1, ti + 1, tj + 1
        if (h0i != li or h0j != lj) and (h0i != ri or h0j != rj):
            ai, aj = h0i, h0j
        elif (h1i != li or h1j != lj) and (h1i != ri or h1j != rj):
            ai, aj = h1i, h1j
        else:
            ai, aj = h2i, h2j
        idx = _cell_at(ai, aj, grid_index, a_off, nb, na)
        if idx >= 0:
            blue = eff[idx] != 0
        else:
            blue = ai < 0  # virtual boundary: negative side blue
        # candidate outgoing vertices (excluding the back edge)
        if jm == 1:
            c0i, c0j, c1i, c1j, c2i, c2j = ti - 1, tj + 1, ti + 1, tj + 1, ti, tj - 2
        else:
            c0i, c0j, c1i, c1j, c2i, c2j = ti, tj + 2, ti - 1, tj - 1, ti + 1, tj - 1
        ni, nj = ti, tj
        found = False
        for ci, cj in ((c0i, c0j), (c1i, c1j), (c2i, c2j)):
            if ci == fi and cj == fj:
                continue
            cross = di * (cj - tj) - dj * (ci - ti)
            if (blue and cross < 0) or (not blue and cross > 0):
                ni, nj = ci, cj
                found = True
                break
        if not found:
            return -1
        fi, fj = ti, tj
        ti, tj = ni, nj


@njit(cache=True)
def _cell_at(ci, cj, grid_index, a_off, nb, na):
    """Domain cell index of the hexagon with center units (ci, cj), else -1."""
    b = cj // 3
    a = (ci - b - 1) // 2
    row = b
    col = a - a_off
    if row < 0 or row >= nb or col < 0 or col >= na:
        return -1
    return grid_index[row, col]


@dataclass(eq=False)
class ExplorationPath:
    """Traced interface: integer vertices plus the flanking cell per step.

    verts has n_steps + 1 rows of (i, j) half-unit coordinates; step k is the
    directed edge verts[k] -> verts[k+1] with flank_left[k] blue-side and
    flank_right[k] yellow-side (index -1 for virtual hexagons).
    """

    domain: HexDomain
    config: Configuration | None
    verts: np.ndarray
    flank_left: np.ndarray
    flank_right: np.ndarray
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_steps(self) -> int:
        return len(self.verts) - 1

    def vertex_xy(self) -> np.ndarray:
        """Plane coordinates of the vertex sequence, shape (n_steps + 1, 2)."""
        spec = self.domain.spec
        return np.stack([self.verts[:, 0] * spec.unit_x,
                         self.verts[:, 1] * spec.unit_y], axis=1)

    def vertex_norms(self) -> np.ndarray:
        if "norms" not in self._memo:
            xy = self.vertex_xy()
            self._memo["norms"] = np.hypot(xy[:, 0], xy[:, 1])
        return self._memo["norms"]

    def touched_cells(self, upto: int | None = None) -> np.ndarray:
        """Domain indices of cells flanking steps 0..upto (inclusive)."""
        hi = self.n_steps if upto is None else min(upto + 1, self.n_steps)
        both = np.concatenate([self.flank_left[:hi], self.flank_right[:hi]])
        return np.unique(both[both >= 0])

    def touch_mask(self, upto: int | None = None) -> np.ndarray:
        m = np.zeros(self.domain.n_cells, dtype=bool)
        m[self.touched_cells(upto)] = True
        return m

    def dump_csv(self, path: str) -> None:
        xy = self.vertex_xy()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y"])
            for row in xy:
                w.writerow([f"{row[0]:.10g}", f"{row[1]:.10g}"])


def trace(config: Configuration) -> ExplorationPath:
    """The unique interface with blue on the left and yellow on the right."""
    dom = config.domain
    spec = dom.spec
    eff = effective_colors(config).astype(np.uint8)
    stop = (spec.radius - spec.mesh) / (spec.mesh / 2)
    stop_sq = stop * stop
    max_steps = 8 * dom.n_cells + 64
    verts = np.empty((max_steps + 1, 2), dtype=np.int64)
    flank_l = np.empty(max_steps, dtype=np.int32)
    flank_r = np.empty(max_steps, dtype=np.int32)
    nb, na = dom.grid_index.shape
    n = _walk(eff, dom.grid_index, dom.a_off, nb, na, stop_sq, max_steps,
              verts, flank_l, flank_r)
    if n < 0:
        raise AssertionError("interface walk failed to terminate")
    return ExplorationPath(dom, config, verts[:n + 1].copy(),
                           flank_l[:n].copy(), flank_r[:n].copy())


def exit_time(path: ExplorationPath, rho: float) -> int | None:
    """Least vertex index with |vertex| >= rho, or None if the path never exits."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if rho > path.domain.spec.radius:
        raise ValueError("rho exceeds the domain radius")
    hits = np.flatnonzero(path.vertex_norms() >= rho - 1e-12)
    return int(hits[0]) if len(hits) else None


def initial_segment(path: ExplorationPath, rho: float) -> ExplorationPath:
    """The path prefix up to exit_time(rho). Raises NeverExits if there is none."""
    k = exit_time(path, rho)
    if k is None:
        raise NeverExits(f"path never reaches |z| >= {rho}")
    return ExplorationPath(path.domain, path.config, path.verts[:k + 1].copy(),
                           path.flank_left[:k].copy(), path.flank_right[:k].copy())

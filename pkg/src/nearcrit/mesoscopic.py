"""Mesoscopic triangles: gate hitting times, good/very-good events, regions.

Each triangle of size delta carries a gate: a narrow rectangle r straddling
the base midsection, with marked horizontal segments l (bottom), m (middle)
and b (top), plus an inner triangle t' whose base lies on the m-line. The
hitting time sigma of a path is the first touch of the trigger region
(t minus the closed gate rectangle, plus the b-segment cells) or the first
touch of l after m, whichever comes first. The triangle is good when the
trigger fired on the b-segment: the path came up through the gate.

On the good event, the region d is the free component of t' above the path
prefix together with the gate components below the m-line that attach to it
between the path's extreme m-crossings; its boundary splits into four arcs at
the marked points, making d a quad whose 0-2 crossing is the very-good event.

All plane regions are discretized by cell-center membership; segments by
hexagon intersection. Proportions: gate x-range [0.44, 0.56] delta, heights
0 / 0.12 / 0.24 delta, inner triangle base [0.1, 0.9] delta at the m-height.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .connectivity import TRI_STRUCTURE, DiscreteQuad, quad_from_cells
from .explorer import ExplorationPath
from .hexlattice import (HexDomain, edge_flanks, hexes_at_vertex,
                         vertex_neighbors)

NOT_HIT = math.inf


class DegenerateScale(ValueError):
    """Triangle scale out of range for this mesh/domain."""


class MalformedHit(RuntimeError):
    """Marked points or arcs of the hit region could not be located."""


@dataclass(frozen=True)
class TriangleSpec:
    """Equilateral triangle with horizontal base; anchor is the lower-left vertex."""

    anchor: tuple[float, float]
    size: float

    @property
    def base_y(self):
        return self.anchor[1]

    @property
    def m_y(self):
        return self.anchor[1] + 0.12 * self.size

    @property
    def b_y(self):
        return self.anchor[1] + 0.24 * self.size

    @property
    def gate_x(self):
        return (self.anchor[0] + 0.44 * self.size, self.anchor[0] + 0.56 * self.size)

    @property
    def apex(self):
        return (self.anchor[0] + self.size / 2,
                self.anchor[1] + math.sqrt(3) / 2 * self.size)

    @property
    def inner_base_x(self):
        return (self.anchor[0] + 0.1 * self.size, self.anchor[0] + 0.9 * self.size)

    @property
    def right_corner(self):
        """Right corner of the inner triangle (the a0 marker)."""
        return (self.anchor[0] + 0.9 * self.size, self.m_y)


@dataclass(frozen=True)
class TriangleGrid:
    delta: float
    triangles: tuple[TriangleSpec, ...]


def build_grid(domain: HexDomain, delta: float) -> TriangleGrid:
    """Triangles at sites of a triangular grid of spacing 4*delta.

    Every site keeps clearance delta from the boundary of the half-disc; the
    grid rows start at height delta so the coarsest admissible scale still
    yields at least one triangle.
    """
    spec = domain.spec
    if spec.mesh > delta / 16 + 1e-12 or delta > spec.radius / 4 + 1e-12:
        raise DegenerateScale("need mesh <= delta/16 <= radius/64")
    s = 4 * delta
    triangles = []
    j = 0
    while True:
        y = delta + s * math.sqrt(3) / 2 * j
        if y > spec.radius:
            break
        i_lim = int(spec.radius / s) + 2
        for i in range(-i_lim, i_lim + 1):
            x = s * (i + 0.5 * (j % 2))
            if y < delta - 1e-12 or math.hypot(x, y) > spec.radius - delta + 1e-12:
                continue
            anchor = (x - delta / 2, y - math.sqrt(3) / 6 * delta)
            triangles.append(TriangleSpec(anchor, delta))
        j += 1
    if not triangles:
        raise DegenerateScale("no triangle fits with the required clearance")
    return TriangleGrid(delta, tuple(triangles))


def _in_triangle(cx, cy, base_left, base_y, size):
    s3 = math.sqrt(3)
    return ((cy >= base_y - 1e-12)
            & (cy - base_y <= s3 * (cx - base_left) + 1e-12)
            & (cy - base_y <= s3 * (base_left + size - cx) + 1e-12))


_HEX_CORNERS = np.array([(math.cos(a), math.sin(a))
                         for a in np.pi / 180 * np.arange(30, 360, 60)])


def _hex_entirely_in_triangle(cx, cy, eta, base_left, base_y, size):
    """Hexagons (circumradius eta) whose closure lies inside the closed triangle."""
    out = np.ones_like(cx, dtype=bool)
    for ox, oy in _HEX_CORNERS:
        out &= _in_triangle(cx + eta * ox, cy + eta * oy, base_left, base_y, size)
    return out


def _hex_meets_rect(cx, cy, eta, x0, x1, y0, y1):
    """Exact hexagon/rectangle overlap via separating axes (pointy-top hexagon).

    Axes: the rectangle's x and y (hexagon extent sqrt(3)/2*eta and eta) and
    the two slanted hexagon edge normals (hexagon extent eta).
    """
    s3 = math.sqrt(3)
    out = (np.abs(np.clip(cx, x0, x1) - cx) <= s3 * eta / 2 + 1e-12) \
        & (np.abs(np.clip(cy, y0, y1) - cy) <= eta + 1e-12)
    for nx, ny in ((s3 / 2, 0.5), (s3 / 2, -0.5)):
        corners = [nx * x + ny * y for x in (x0, x1) for y in (y0, y1)]
        lo, hi = min(corners), max(corners)
        centre = nx * cx + ny * cy
        out &= (hi >= centre - eta - 1e-12) & (lo <= centre + eta + 1e-12)
    return out


def cells_on_hsegment(domain: HexDomain, y: float, xa: float, xb: float) -> np.ndarray:
    """Cells whose hexagon intersects the closed horizontal segment [xa, xb] x {y}."""
    eta = domain.spec.mesh
    cx, cy = domain.centers[:, 0], domain.centers[:, 1]
    dy = np.abs(cy - y)
    w = np.where(dy <= eta / 2, math.sqrt(3) * eta / 2,
                 math.sqrt(3) * np.maximum(eta - dy, 0.0))
    return np.flatnonzero((dy <= eta) & (cx >= xa - w) & (cx <= xb + w))


class _TriangleCells:
    """Discretization of one triangle against one domain."""

    def __init__(self, domain: HexDomain, tri: TriangleSpec):
        self.domain = domain
        self.tri = tri
        eta = domain.spec.mesh
        cx, cy = domain.centers[:, 0], domain.centers[:, 1]
        gx0, gx1 = tri.gate_x
        x0, y0 = tri.anchor
        t_mask = _in_triangle(cx, cy, x0, y0, tri.size)
        in_gate_closed = ((cx >= gx0 - 1e-12) & (cx <= gx1 + 1e-12)
                          & (cy >= y0 - 1e-12) & (cy <= tri.b_y + 1e-12))
        self.b_cells = cells_on_hsegment(domain, tri.b_y, gx0, gx1)
        self.m_cells = cells_on_hsegment(domain, tri.m_y, gx0, gx1)
        self.l_cells = cells_on_hsegment(domain, tri.base_y, gx0, gx1)
        self.b_mask = domain.mask_from_indices(self.b_cells)
        self.m_mask = domain.mask_from_indices(self.m_cells)
        self.l_mask = domain.mask_from_indices(self.l_cells)
        # trigger region: inner hexagonalization (hexagons entirely inside the
        # triangle and clear of the closed gate), plus the outer-hexagonalized
        # b-segment so the gate exit always fires on b
        inner_t = _hex_entirely_in_triangle(cx, cy, eta, x0, y0, tri.size)
        meets_gate = _hex_meets_rect(cx, cy, eta, gx0, gx1, y0, tri.b_y)
        self.trigger_mask = (inner_t & ~meets_gate) | self.b_mask
        ix0, ix1 = tri.inner_base_x
        self.tprime_mask = _in_triangle(cx, cy, ix0, tri.m_y, ix1 - ix0)
        self.gate_open_mask = ((cx > gx0) & (cx < gx1) & (cy > y0) & (cy < tri.b_y))
        self.t_mask = t_mask
        self.gate_region_cells = np.flatnonzero(
            in_gate_closed | self.b_mask | self.l_mask)


def _tri_cells(domain: HexDomain, tri: TriangleSpec) -> _TriangleCells:
    cache = getattr(domain, "_tri_cache", None)
    if cache is None:
        cache = {}
        domain._tri_cache = cache
    if tri not in cache:
        if len(cache) > 512:
            cache.clear()
        cache[tri] = _TriangleCells(domain, tri)
    return cache[tri]


def _touch_steps(path: ExplorationPath, mask: np.ndarray) -> np.ndarray:
    """Boolean per step: does the step flank a cell of the mask."""
    out = np.zeros(path.n_steps, dtype=bool)
    for fl in (path.flank_left, path.flank_right):
        ok = fl >= 0
        out[ok] |= mask[fl[ok]]
    return out


def hitting_time(path: ExplorationPath, tri: TriangleSpec) -> float:
    """First trigger step of the triangle, or NOT_HIT (= inf).

    The trigger is the earlier of (a) touching the trigger region
    (t minus closed gate, plus b-cells) and (b) touching l after having
    touched m.
    """
    return _hit_record(path, tri)[0]


def _hit_record(path: ExplorationPath, tri: TriangleSpec):
    key = ("hit", tri)
    if key in path._memo:
        return path._memo[key]
    tc = _tri_cells(path.domain, tri)
    hit_a = _touch_steps(path, tc.trigger_mask)
    idx_a = np.flatnonzero(hit_a)
    first_a = int(idx_a[0]) if len(idx_a) else None
    hit_m = np.flatnonzero(_touch_steps(path, tc.m_mask))
    sigma_l = None
    if len(hit_m):
        hit_l = np.flatnonzero(_touch_steps(path, tc.l_mask))
        hit_l = hit_l[hit_l >= hit_m[0]]
        if len(hit_l):
            sigma_l = int(hit_l[0])
    if first_a is None and sigma_l is None:
        rec = (NOT_HIT, None)
    elif sigma_l is None or (first_a is not None and first_a <= sigma_l):
        rec = (first_a, "gate")
    else:
        rec = (sigma_l, "l_after_m")
    path._memo[key] = rec
    return rec


def is_good(path: ExplorationPath, tri: TriangleSpec) -> bool:
    """True iff the trigger fired on the b-segment (the path came up the gate)."""
    sigma, branch = _hit_record(path, tri)
    if sigma is NOT_HIT or branch != "gate":
        return False
    tc = _tri_cells(path.domain, tri)
    k = int(sigma)
    decided = []
    for fl in (path.flank_left[k], path.flank_right[k]):
        if fl >= 0 and tc.trigger_mask[fl]:
            decided.append(bool(tc.b_mask[fl]))
    return bool(decided) and all(decided)


@dataclass(eq=False)
class HitContext:
    """Per-triangle derived data on the good event."""

    sigma: int
    good: bool
    a0: tuple[float, float]
    a1: tuple[float, float]
    a2: tuple[float, float]
    region: np.ndarray                    # domain cell indices of d
    arcs: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    quad: DiscreteQuad
    edge_arcs: dict                       # undirected boundary edge -> arc index


def _m_crossings(path: ExplorationPath, tri: TriangleSpec, sigma: int):
    """x-positions where the path prefix crosses the m-segment."""
    eta = path.domain.spec.mesh
    xy = path.vertex_xy()[:sigma + 2]
    y1, y2 = xy[:-1, 1], xy[1:, 1]
    ym = tri.m_y
    straddle = ((y1 - ym) * (y2 - ym) <= 0) & (y1 != y2)
    ks = np.flatnonzero(straddle)
    if not len(ks):
        return np.empty(0)
    t = (ym - y1[ks]) / (y2[ks] - y1[ks])
    xc = xy[ks, 0] + t * (xy[ks + 1, 0] - xy[ks, 0])
    gx0, gx1 = tri.gate_x
    return xc[(xc >= gx0 - eta) & (xc <= gx1 + eta)]


def _boundary_cycle(domain: HexDomain, mask: np.ndarray):
    """Counter-clockwise boundary walk of a connected cell region.

    Returns (head_vertices, inside_cells): per boundary edge, its head vertex
    (integer half-units) and the region cell on its left.
    """
    start_cell = int(np.flatnonzero(mask)[0])  # canonical order = min (b, a)
    a, b = domain.cells_ab[start_cell]
    ci, cj = 2 * int(a) + int(b) + 1, 3 * int(b)
    e = ((ci - 1, cj - 1), (ci, cj - 2))
    start = e
    heads, inside = [], []
    for _ in range(12 * int(mask.sum()) + 12):
        vfrom, vto = e
        left, _right = edge_flanks(vfrom, vto)
        li = domain.index_of(left)
        if li < 0 or not mask[li]:
            raise AssertionError("boundary walk lost the region")
        heads.append(vto)
        inside.append(li)
        third = next(h for h in hexes_at_vertex(vto) if h != left and h != _right)
        ti = domain.index_of(third)
        ahead = ti >= 0 and mask[ti]
        din = (vto[0] - vfrom[0], vto[1] - vfrom[1])
        nxt = None
        for cand in vertex_neighbors(vto):
            if cand == vfrom:
                continue
            cross = din[0] * (cand[1] - vto[1]) - din[1] * (cand[0] - vto[0])
            if (ahead and cross < 0) or (not ahead and cross > 0):
                nxt = cand
                break
        e = (vto, nxt)
        if e == start:
            return heads, inside
    raise AssertionError("boundary walk did not close")


def _nearest_cycle_index(heads, point, spec, candidates=None):
    best, best_d = None, math.inf
    for k in (candidates if candidates is not None else range(len(heads))):
        i, j = heads[k]
        d = (i * spec.unit_x - point[0]) ** 2 + (j * spec.unit_y - point[1]) ** 2
        if d < best_d - 1e-15:
            best, best_d = k, d
    return best


def compute_region(path: ExplorationPath, tri: TriangleSpec, config) -> HitContext:
    """Region d of a good triangle, with marked points and boundary arcs.

    The region is the component of t'-minus-prefix containing the top of t',
    plus the open-gate components below the m-line attaching to it between the
    extreme m-crossings. Arcs run counter-clockwise a1 -> a0 -> a2 -> tip.
    """
    key = ("region", tri)
    if key in path._memo:
        return path._memo[key]
    if not is_good(path, tri):
        raise MalformedHit("compute_region requires the good event")
    dom = path.domain
    spec = dom.spec
    sigma, _ = _hit_record(path, tri)
    sigma = int(sigma)
    tc = _tri_cells(dom, tri)
    prefix = path.touch_mask(upto=sigma)

    free_inner = tc.tprime_mask & ~prefix
    sub = np.flatnonzero(free_inner | (tc.gate_open_mask & ~tc.tprime_mask & ~prefix))
    ab = dom.cells_ab[sub]
    b0, a0_ = int(ab[:, 1].min()), int(ab[:, 0].min())
    H = int(ab[:, 1].max()) - b0 + 1
    W = int(ab[:, 0].max()) - a0_ + 1
    rows, cols = ab[:, 1] - b0, ab[:, 0] - a0_
    grid_top = np.zeros((H, W), dtype=bool)
    inner_sel = free_inner[sub]
    grid_top[rows[inner_sel], cols[inner_sel]] = True
    lab, _n = ndimage.label(grid_top, structure=TRI_STRUCTURE)
    top_cells = sub[inner_sel]
    top_y = dom.centers[top_cells, 1]
    seed = top_cells[np.argmax(top_y)]
    srow = dom.cells_ab[seed, 1] - b0
    scol = dom.cells_ab[seed, 0] - a0_
    top_label = lab[srow, scol]
    top_grid = lab == top_label

    xs = _m_crossings(path, tri, sigma)
    if not len(xs):
        raise MalformedHit("good event without an m-crossing")
    a1x, a2x = float(xs.max()), float(xs.min())

    grid_low = np.zeros((H, W), dtype=bool)
    low_sel = ~inner_sel
    grid_low[rows[low_sel], cols[low_sel]] = True
    lab_low, n_low = ndimage.label(grid_low, structure=TRI_STRUCTURE)
    keep_labels = set()
    tol = math.sqrt(3) * spec.mesh / 2 * 1.02
    if n_low:
        grid_x = np.full((H, W), np.nan)
        grid_x[rows, cols] = dom.centers[sub, 0]
        for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0), (1, -1), (-1, 1)):
            rs = slice(max(dr, 0), H + min(dr, 0))
            cs = slice(max(dc, 0), W + min(dc, 0))
            rd = slice(max(-dr, 0), H + min(-dr, 0))
            cd = slice(max(-dc, 0), W + min(-dc, 0))
            contact = np.zeros((H, W), dtype=bool)
            contact[rd, cd] = top_grid[rs, cs]
            contact &= grid_low
            ok = contact & (grid_x >= a2x - tol) & (grid_x <= a1x + tol)
            keep_labels |= set(np.unique(lab_low[ok]).tolist())
    keep_labels.discard(0)
    region_grid = top_grid.copy()
    for lb in keep_labels:
        region_grid |= lab_low == lb
    region_mask = np.zeros(dom.n_cells, dtype=bool)
    rr, cc = np.nonzero(region_grid)
    region_mask[dom.grid_index[rr + b0, cc + a0_ - dom.a_off]] = True
    region = np.flatnonzero(region_mask)

    heads, inside = _boundary_cycle(dom, region_mask)
    K = len(heads)
    tipv = path.verts[sigma + 1]
    tip_xy = (tipv[0] * spec.unit_x, tipv[1] * spec.unit_y)
    k_tip = _nearest_cycle_index(heads, tip_xy, spec)
    k_a0 = _nearest_cycle_index(heads, tri.right_corner, spec)
    if k_tip == k_a0:
        raise MalformedHit("tip and right corner collapse on the boundary")
    # counter-clockwise the walls appear as ... a2, tip, a1, a0 ...; restricting
    # each m-marker to its cyclic interval picks the correct wall of the finger
    east = [(k_tip + s) % K for s in range(1, (k_a0 - k_tip) % K)]
    west = [(k_a0 + s) % K for s in range(1, (k_tip - k_a0) % K)]
    k_a1 = _nearest_cycle_index(heads, (a1x, tri.m_y), spec, candidates=east)
    k_a2 = _nearest_cycle_index(heads, (a2x, tri.m_y), spec, candidates=west)
    if k_a1 is None or k_a2 is None:
        raise MalformedHit("marker points out of cyclic order")
    arcs = []
    edge_arcs = {}
    for arc_id, (k_from, k_to) in enumerate(((k_a1, k_a0), (k_a0, k_a2),
                                             (k_a2, k_tip), (k_tip, k_a1))):
        cells = []
        span = (k_to - k_from) % K
        for s in range(1, span + 1):
            pos = (k_from + s) % K
            c = inside[pos]
            if not cells or cells[-1] != c:
                cells.append(c)
            v_to = heads[pos]
            v_from = heads[pos - 1]
            edge_arcs[(min(v_from, v_to), max(v_from, v_to))] = arc_id
        arcs.append(np.asarray(cells, dtype=np.int64))
    if len(arcs[0]) == 0 or len(arcs[2]) == 0:
        raise MalformedHit("degenerate crossing arcs")
    quad = quad_from_cells(dom, region, tuple(arcs), check_connected=False)
    ctx = HitContext(sigma=sigma, good=True, a0=tri.right_corner,
                     a1=(a1x, tri.m_y), a2=(a2x, tri.m_y),
                     region=region, arcs=tuple(arcs), quad=quad,
                     edge_arcs=edge_arcs)
    path._memo[key] = ctx
    return ctx


def is_very_good(path: ExplorationPath, tri: TriangleSpec, config) -> bool:
    """True iff the continuation after sigma reaches arc 0 before arc 1.

    Hitting an arc means traversing a boundary edge of the region that belongs
    to it: one flank inside d, the other outside. Traversals of arcs 2 and 3
    (the walls made of the path prefix) do not decide the event.
    """
    if not is_good(path, tri):
        return False
    ctx = compute_region(path, tri, config)
    for k in range(ctx.sigma + 1, path.n_steps):
        v_from = (int(path.verts[k, 0]), int(path.verts[k, 1]))
        v_to = (int(path.verts[k + 1, 0]), int(path.verts[k + 1, 1]))
        arc = ctx.edge_arcs.get((min(v_from, v_to), max(v_from, v_to)))
        if arc == 0:
            return True
        if arc == 1:
            return False
    return False


def order_by_hitting(grid: TriangleGrid, path: ExplorationPath):
    """Triangles sorted by hitting time, NOT_HIT last, stable in grid order."""
    keyed = [(hitting_time(path, t), k) for k, t in enumerate(grid.triangles)]
    order = sorted(range(len(keyed)), key=lambda k: (keyed[k][0], k))
    return [grid.triangles[k] for k in order]


def region_is_simply_connected(domain: HexDomain, cells: np.ndarray) -> bool:
    """Connected with connected complement inside a padded bounding box."""
    ab = domain.cells_ab[np.asarray(cells, dtype=np.int64)]
    b0, a0 = int(ab[:, 1].min()) - 2, int(ab[:, 0].min()) - 2
    H = int(ab[:, 1].max()) - b0 + 3
    W = int(ab[:, 0].max()) - a0 + 3
    grid = np.zeros((H, W), dtype=bool)
    grid[ab[:, 1] - b0, ab[:, 0] - a0] = True
    _, n = ndimage.label(grid, structure=TRI_STRUCTURE)
    if n != 1:
        return False
    _, m = ndimage.label(~grid, structure=TRI_STRUCTURE)
    return m == 1

"""Crossing and arm-event detection.

Quads are discrete from the start: a simply connected cell set with four
boundary arcs in counter-clockwise order. A quad is crossed when a blue
6-connected cell path joins arc 0 to arc 2 inside the quad. Adjacent arcs may
share their corner cell (disjoint interiors); with full rows/columns as the
side arcs of an axial rhombus this makes the blue-0-2 / yellow-1-3 duality an
exact XOR, configuration by configuration.

Arms: clusters are labeled inside the annulus; a cluster is an arm when it
touches both the hole and the outside. The cyclic sequence of arms around the
inner ring is matched against the requested color pattern with distinct
clusters per matched arm (exact for alternating patterns).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .hexlattice import NEIGHBOR_OFFSETS, HexDomain
from .rng import substream

# triangular-lattice connectivity on the (b, a) grid: square moves plus the
# (+1,-1)/(-1,+1) diagonal
TRI_STRUCTURE = np.array([[0, 1, 1],
                          [1, 1, 1],
                          [1, 1, 0]], dtype=int)

_GRID_SHIFTS = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, -1), (-1, 1))

_CHUNK = 512  # fixed Monte Carlo chunk; keeps estimates worker-count independent


class InsufficientScales(ValueError):
    """fit_arm_exponent needs at least three dyadic scales."""


# --- quads -------------------------------------------------------------------

@dataclass
class DiscreteQuad:
    """Simply connected cell set with four marked boundary arcs.

    sides[0] and sides[2] are the crossing arcs; arcs are listed in
    counter-clockwise order and may share endpoint cells with their neighbors.
    """

    domain: HexDomain
    cells: np.ndarray                 # sorted domain cell indices
    sides: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    _kernel: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.cells = np.unique(np.asarray(self.cells, dtype=np.int64))
        self.sides = tuple(np.asarray(s, dtype=np.int64) for s in self.sides)
        if len(self.sides) != 4:
            raise ValueError("a quad has exactly four sides")
        if len(self.sides[0]) == 0 or len(self.sides[2]) == 0:
            raise ValueError("arcs 0 and 2 must be nonempty")
        cellset = set(self.cells.tolist())
        for s in self.sides:
            if not set(s.tolist()) <= cellset:
                raise ValueError("arc cells must belong to the quad")

    @property
    def kernel(self):
        if self._kernel is None:
            self._kernel = _CrossingKernel(self)
        return self._kernel


class _CrossingKernel:
    """Vectorized 0-2 crossing check on the quad's axial bounding box."""

    def __init__(self, quad: DiscreteQuad):
        dom = quad.domain
        ab = dom.cells_ab[quad.cells]
        self.a0 = int(ab[:, 0].min())
        self.b0 = int(ab[:, 1].min())
        self.H = int(ab[:, 1].max()) - self.b0 + 1
        self.W = int(ab[:, 0].max()) - self.a0 + 1
        self.rows = ab[:, 1] - self.b0
        self.cols = ab[:, 0] - self.a0
        self.n = len(quad.cells)
        pos_of = {int(c): k for k, c in enumerate(quad.cells)}
        self.side0 = np.zeros((self.H, self.W), dtype=bool)
        self.side2 = np.zeros((self.H, self.W), dtype=bool)
        for c in quad.sides[0]:
            k = pos_of[int(c)]
            self.side0[self.rows[k], self.cols[k]] = True
        for c in quad.sides[2]:
            k = pos_of[int(c)]
            self.side2[self.rows[k], self.cols[k]] = True

    def crossed(self, colors_q: np.ndarray) -> np.ndarray:
        """colors_q: (batch, n_quad_cells) booleans, True = Blue."""
        colors_q = np.atleast_2d(colors_q)
        B = colors_q.shape[0]
        blue = np.zeros((B, self.H, self.W), dtype=bool)
        blue[:, self.rows, self.cols] = colors_q
        front = blue & self.side0
        alive = np.arange(B)
        out = np.zeros(B, dtype=bool)
        for _ in range(self.H * self.W + 2):
            hit = (front & self.side2).any(axis=(1, 2))
            out[alive[hit]] = True
            keep = ~hit
            front, blue, alive = front[keep], blue[keep], alive[keep]
            if not len(alive):
                break
            grown = front.copy()
            for dr, dc in _GRID_SHIFTS:
                rs = slice(max(dr, 0), self.H + min(dr, 0))
                cs = slice(max(dc, 0), self.W + min(dc, 0))
                rd = slice(max(-dr, 0), self.H + min(-dr, 0))
                cd = slice(max(-dc, 0), self.W + min(-dc, 0))
                grown[:, rs, cs] |= front[:, rd, cd]
            grown &= blue
            changed = (grown != front).any(axis=(1, 2))
            front, blue, alive = grown[changed], blue[changed], alive[changed]
            if not len(alive):
                break
        return out


def quad_from_cells(domain: HexDomain, cells, sides, check_connected=True) -> DiscreteQuad:
    q = DiscreteQuad(domain, cells, tuple(sides))
    if check_connected:
        k = q.kernel
        grid = np.zeros((k.H, k.W), dtype=bool)
        grid[k.rows, k.cols] = True
        _, n = ndimage.label(grid, structure=TRI_STRUCTURE)
        if n != 1:
            raise ValueError("quad cells are not connected")
    return q


def rhombus_quad(domain: HexDomain, a0: int, b0: int, width: int, height: int) -> DiscreteQuad:
    """Axial parallelogram; side arcs are full columns/rows (corners shared).

    Arc 0 = left column, 1 = bottom row, 2 = right column, 3 = top row, in
    counter-clockwise order. For width == height the quad is exactly self-dual
    under reflection plus color swap.
    """
    cells, left, right, bottom, top = [], [], [], [], []
    for b in range(b0, b0 + height):
        for a in range(a0, a0 + width):
            idx = domain.index_of((a, b))
            if idx < 0:
                raise ValueError("rhombus leaves the domain")
            cells.append(idx)
            if a == a0:
                left.append(idx)
            if a == a0 + width - 1:
                right.append(idx)
            if b == b0:
                bottom.append(idx)
            if b == b0 + height - 1:
                top.append(idx)
    return quad_from_cells(domain, cells, (left, bottom, right, top),
                           check_connected=False)


def centered_rhombus(domain: HexDomain, center: tuple[float, float], side: int) -> DiscreteQuad:
    """Rhombus of side x side cells, anchored near a plane point."""
    from .hexlattice import nearest_cell
    a, b = nearest_cell(center, domain.spec)
    return rhombus_quad(domain, a - side // 2, b - side // 2, side, side)


def _rect_cells(domain: HexDomain, x0, x1, y0, y1):
    cx, cy = domain.centers[:, 0], domain.centers[:, 1]
    return np.flatnonzero((cx >= x0) & (cx <= x1) & (cy >= y0) & (cy <= y1))


def rect_quad(domain: HexDomain, x0: float, x1: float, y0: float, y1: float) -> DiscreteQuad:
    """Quad of all cells with center in the closed rectangle.

    Boundary cells are assigned to the nearest rectangle side; corner ties go
    to the vertical sides so that nested width perturbations keep crossings
    monotone.
    """
    cells = _rect_cells(domain, x0, x1, y0, y1)
    if len(cells) == 0:
        raise ValueError("empty rectangle")
    inquad = domain.mask_from_indices(cells)
    sides = ([], [], [], [])
    for idx in cells:
        nbrs = domain.neighbor_indices(int(idx))
        if all(n >= 0 and inquad[n] for n in nbrs):
            continue
        cx, cy = domain.centers[idx]
        d = (cx - x0, y1 - cy, x1 - cx, cy - y0)  # left, top, right, bottom
        # vertical sides win ties
        k = int(np.argmin((d[0], d[2], d[1], d[3])))
        side = (0, 2, 3, 1)[k]
        sides[side].append(int(idx))
    arcs = []
    for s, axis, rev in ((sides[0], 1, True), (sides[1], 0, False),
                         (sides[2], 1, False), (sides[3], 0, True)):
        arr = np.asarray(s, dtype=np.int64)
        if len(arr):
            o = np.argsort(domain.centers[arr, axis])
            arr = arr[o[::-1]] if rev else arr[o]
        arcs.append(arr)
    return quad_from_cells(domain, cells, tuple(arcs), check_connected=False)


def slit_quad(domain: HexDomain, x0: float, x1: float, y0: float, y1: float,
              slit_lo: float, slit_hi: float, slit_x: float) -> DiscreteQuad:
    """Rectangle with a horizontal slit removed from x > slit_x to the right edge.

    Arcs 0, 1, 3 are those of the plain rectangle; arc 2 is the boundary part
    between the bottom-right and top-right corners, which runs along both slit
    walls: reaching the slit from the left now counts as a 0-2 crossing.
    """
    base = _rect_cells(domain, x0, x1, y0, y1)
    cx, cy = domain.centers[:, 0], domain.centers[:, 1]
    removed = np.flatnonzero((cx > slit_x) & (cx <= x1)
                             & (cy > slit_lo) & (cy < slit_hi))
    removed_mask = domain.mask_from_indices(removed)
    cells = base[~removed_mask[base]]
    inquad = domain.mask_from_indices(cells)
    rect = rect_quad(domain, x0, x1, y0, y1)
    keep = lambda arr: arr[inquad[arr]]
    near_slit = []
    for idx in cells:
        if any(n >= 0 and removed_mask[n] for n in domain.neighbor_indices(int(idx))):
            near_slit.append(int(idx))
    side2 = np.unique(np.concatenate([keep(rect.sides[2]),
                                      np.asarray(near_slit, dtype=np.int64)]))
    return quad_from_cells(domain, cells,
                           (keep(rect.sides[0]), keep(rect.sides[1]),
                            side2, keep(rect.sides[3])),
                           check_connected=True)


def is_crossed(config, quad: DiscreteQuad) -> bool:
    """True iff a blue path inside the quad joins arc 0 to arc 2."""
    return bool(quad.kernel.crossed(config.colors[quad.cells][None, :])[0])


def _binomial_record(successes: int, trials: int) -> dict:
    p = successes / trials
    return {"estimate": p, "std_error": math.sqrt(p * (1 - p) / trials),
            "n_samples": trials}


def crossing_probability(domain: HexDomain, quad: DiscreteQuad, p: float,
                         n_samples: int, seed: int) -> dict:
    """Monte Carlo crossing estimate with binomial standard error."""
    kern = quad.kernel
    nq = len(quad.cells)
    hits = 0
    done = 0
    chunk = 0
    while done < n_samples:
        m = min(_CHUNK, n_samples - done)
        u = substream(seed, chunk).random((m, nq))
        hits += int(kern.crossed(u <= p).sum())
        done += m
        chunk += 1
    return _binomial_record(hits, n_samples)


def symmetric_difference_probability(domain: HexDomain, quad_a: DiscreteQuad,
                                     quad_b: DiscreteQuad, p: float,
                                     n_samples: int, seed: int) -> dict:
    """Frequency of is_crossed(a) != is_crossed(b) on shared configurations."""
    union = np.union1d(quad_a.cells, quad_b.cells)
    pos_a = np.searchsorted(union, quad_a.cells)
    pos_b = np.searchsorted(union, quad_b.cells)
    hits = 0
    done = 0
    chunk = 0
    while done < n_samples:
        m = min(_CHUNK, n_samples - done)
        u = substream(seed, chunk).random((m, len(union)))
        blue = u <= p
        diff = quad_a.kernel.crossed(blue[:, pos_a]) \
            != quad_b.kernel.crossed(blue[:, pos_b])
        hits += int(diff.sum())
        done += m
        chunk += 1
    return _binomial_record(hits, n_samples)


# --- annuli and arms ----------------------------------------------------------

@dataclass(frozen=True)
class AnnulusSpec:
    center: tuple[float, float]
    inner: float
    outer: float
    half_plane: bool = False

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("need 0 < inner < outer")
        if self.half_plane and abs(self.center[1]) > 1e-12:
            raise ValueError("half-plane annuli must be centered on the real axis")


def _validate_pattern(pattern) -> str:
    pat = "".join(pattern) if not isinstance(pattern, str) else pattern
    if len(pat) < 1 or any(c not in "BY" for c in pat):
        raise ValueError("pattern must be a nonempty string over {B, Y}")
    return pat


class _AnnulusContext:
    """Static geometry shared by every sample of one (domain, annulus) pair."""

    def __init__(self, domain: HexDomain, ann: AnnulusSpec):
        spec = domain.spec
        if ann.inner < spec.mesh:
            raise ValueError("inner radius below one mesh unit")
        if not ann.half_plane:
            cx, cy = ann.center
            if cy - ann.outer < -1e-9 or math.hypot(cx, cy) + ann.outer > spec.radius + 1e-9:
                raise ValueError("whole-plane annulus does not fit in the domain")
        self.domain = domain
        self.ann = ann
        d = np.hypot(domain.centers[:, 0] - ann.center[0],
                     domain.centers[:, 1] - ann.center[1])
        self.cells = np.flatnonzero((d >= ann.inner) & (d <= ann.outer))
        hole = d < ann.inner
        if not hole.any():
            raise ValueError("annulus hole contains no cell")
        in_ann = domain.mask_from_indices(self.cells)

        ab = domain.cells_ab[self.cells]
        self.b0 = int(ab[:, 1].min())
        self.a0 = int(ab[:, 0].min())
        self.H = int(ab[:, 1].max()) - self.b0 + 1
        self.W = int(ab[:, 0].max()) - self.a0 + 1
        self.rows = ab[:, 1] - self.b0
        self.cols = ab[:, 0] - self.a0

        ring, outer_touch = [], []
        for k, idx in enumerate(self.cells):
            a, b = domain.cells_ab[idx]
            for da, db in NEIGHBOR_OFFSETS:
                ci = 2 * (a + da) + (b + db) + 1
                cj = 3 * (b + db)
                dist = math.hypot(ci * spec.unit_x - ann.center[0],
                                  cj * spec.unit_y - ann.center[1])
                nidx = domain.index_of((int(a + da), int(b + db)))
                if dist < ann.inner and nidx >= 0 and hole[nidx]:
                    ring.append(k)
                if dist > ann.outer:
                    outer_touch.append(k)
                    # half-plane arms may also end on the axis side of the ring
        self.ring = np.unique(np.asarray(ring, dtype=np.int64))
        self.outer_touch = np.unique(np.asarray(outer_touch, dtype=np.int64))
        ang = np.arctan2(domain.centers[self.cells[self.ring], 1] - ann.center[1],
                         domain.centers[self.cells[self.ring], 0] - ann.center[0])
        self.ring = self.ring[np.argsort(ang)]
        if len(self.ring) == 0 or len(self.outer_touch) == 0:
            raise ValueError("annulus too thin to carry arms")

    def arm_sequence(self, colors_ann: np.ndarray) -> list[int]:
        """Signed cluster ids of crossing arms around the inner ring.

        Positive ids are blue clusters, negative yellow. Consecutive repeats
        are merged (cyclically unless half-plane).
        """
        grid_b = np.zeros((self.H, self.W), dtype=bool)
        grid_b[self.rows, self.cols] = colors_ann
        grid_y = np.zeros((self.H, self.W), dtype=bool)
        grid_y[self.rows, self.cols] = ~colors_ann
        lab_b, _ = ndimage.label(grid_b, structure=TRI_STRUCTURE)
        lab_y, _ = ndimage.label(grid_y, structure=TRI_STRUCTURE)
        ids = np.where(colors_ann, lab_b[self.rows, self.cols],
                       -lab_y[self.rows, self.cols])
        crossing = set(ids[self.ring]) & set(ids[self.outer_touch])
        seq = [int(s) for s in ids[self.ring] if s in crossing]
        if not seq:
            return []
        merged = [seq[0]]
        for s in seq[1:]:
            if s != merged[-1]:
                merged.append(s)
        if not self.ann.half_plane and len(merged) > 1 and merged[0] == merged[-1]:
            merged.pop()
        return merged


def _match_linear(seq, pattern, start, used):
    if not pattern:
        return True
    want_blue = pattern[0] == "B"
    for k in range(start, len(seq)):
        s = seq[k]
        if (s > 0) == want_blue and s not in used:
            if _match_linear(seq, pattern[1:], k + 1, used | {s}):
                return True
    return False


def _pattern_present(seq: list[int], pattern: str, cyclic: bool) -> bool:
    if len(seq) < len(pattern):
        return False
    if not cyclic:
        return _match_linear(seq, pattern, 0, frozenset())
    return any(_match_linear(seq[r:] + seq[:r], pattern, 0, frozenset())
               for r in range(len(seq)))


def has_arms(config, annulus: AnnulusSpec, pattern) -> bool:
    """True iff disjoint monochromatic crossings realize the cyclic color pattern.

    Whole-plane patterns are matched cyclically, half-plane ones in the
    angular order from the positive to the negative axis direction. Matched
    arms come from pairwise distinct clusters, which is exact for
    alternating-color patterns.
    """
    pat = _validate_pattern(pattern)
    ctx = _annulus_context(config.domain, annulus)
    seq = ctx.arm_sequence(config.colors[ctx.cells])
    return _pattern_present(seq, pat, cyclic=not annulus.half_plane)


_CTX_CACHE: dict = {}


def _annulus_context(domain: HexDomain, ann: AnnulusSpec) -> _AnnulusContext:
    key = (id(domain), ann)
    if key not in _CTX_CACHE:
        if len(_CTX_CACHE) > 64:
            _CTX_CACHE.clear()
        _CTX_CACHE[key] = _AnnulusContext(domain, ann)
    return _CTX_CACHE[key]


def estimate_arm_probability(domain: HexDomain, annulus: AnnulusSpec, pattern,
                             p: float, n_samples: int, seed: int) -> dict:
    """Monte Carlo arm-pattern probability; samples only the annulus cells."""
    pat = _validate_pattern(pattern)
    ctx = _annulus_context(domain, annulus)
    cyclic = not annulus.half_plane
    nq = len(ctx.cells)
    hits = 0
    done = 0
    chunk = 0
    while done < n_samples:
        m = min(_CHUNK, n_samples - done)
        u = substream(seed, chunk).random((m, nq))
        blue = u <= p
        for row in blue:
            if _pattern_present(ctx.arm_sequence(row), pat, cyclic):
                hits += 1
        done += m
        chunk += 1
    return _binomial_record(hits, n_samples)


def fit_arm_exponent(scale_series) -> dict:
    """Least-squares slope of -log(estimate) against log(ratio)."""
    pts = []
    for entry in scale_series:
        if isinstance(entry, dict):
            pts.append((entry["ratio"], entry["estimate"]))
        else:
            pts.append((entry[0], entry[1]))
    if len(pts) < 3:
        raise InsufficientScales("need at least three scales")
    x = np.log([r for r, _ in pts])
    est = np.array([e for _, e in pts], dtype=float)
    if (est <= 0).any():
        raise ValueError("zero estimate in scale series; increase samples")
    y = -np.log(est)
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, icept), res, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = len(pts) - 2
    rss = float(res[0]) if len(res) else float(((A @ [slope, icept] - y) ** 2).sum())
    var = rss / dof / ((x - x.mean()) ** 2).sum() if dof > 0 else 0.0
    return {"exponent": float(slope), "std_error": math.sqrt(max(var, 0.0))}

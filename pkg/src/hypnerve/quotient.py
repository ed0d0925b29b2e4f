"""Fundamental sets, boundary identifications, and quotient-metric search.

The quotient surface is represented by a fundamental set F made of one
copy of the standard modular triangle per projective coset of the lattice
in the modular group.  Distances in the quotient are computed on lifts:
the canonical lift of each point sits in F, and a precomputed set of
lattice elements (found by a breadth-first search over the modular tiling
around F) supplies every translate that can realize a short quotient
distance.  A band-bucket spatial index over (x, log y) answers fixed
radius neighbor queries; bucket ranges use the exact one-sided bounds

    d(z, w) >= |log(y_z / y_w)|,
    |x_z - x_w| <= 2 sinh(d/2) sqrt(y_z y_w).
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .geometry import MobiusIsometry, apply_mobius, distance
from .lattice import CongruenceLattice

__all__ = ["Window", "SpatialIndex", "QuotientGeometry"]

_T = MobiusIsometry(1, 1, 0, 1)
_Tinv = MobiusIsometry(1, -1, 0, 1)
_S = MobiusIsometry(0, -1, 1, 0)


class Window:
    """Axis box in (x, log y) with hyperbolically correct dilation tests."""

    def __init__(self, x_lo, x_hi, logy_lo, logy_hi):
        self.x_lo, self.x_hi = x_lo, x_hi
        self.logy_lo, self.logy_hi = logy_lo, logy_hi

    @staticmethod
    def around(points, pad=0.0):
        xs = np.real(points)
        lys = np.log(np.imag(points))
        return Window(xs.min() - pad, xs.max() + pad, lys.min() - pad, lys.max() + pad)

    def contains_dilated(self, z, margin):
        """Conservative test: could z be within hyperbolic distance `margin`
        of some point of the box?"""
        y = np.imag(z)
        ly = np.log(y)
        if np.isscalar(ly) or ly.ndim == 0:
            ly = float(ly)
            if ly < self.logy_lo - margin or ly > self.logy_hi + margin:
                return False
            reach = 2.0 * math.sinh(margin / 2.0) * float(y) * math.exp(margin / 2.0)
            x = float(np.real(z))
            return self.x_lo - reach <= x <= self.x_hi + reach
        ok = (ly >= self.logy_lo - margin) & (ly <= self.logy_hi + margin)
        reach = 2.0 * math.sinh(margin / 2.0) * y * math.exp(margin / 2.0)
        x = np.real(z)
        return ok & (x >= self.x_lo - reach) & (x <= self.x_hi + reach)


class SpatialIndex:
    """Bucket grid over (x, log y) supporting exact radius-R candidate
    retrieval for hyperbolic distance queries with R <= the cell size."""

    def __init__(self, cell: float):
        self.cell = float(cell)
        self.buckets: dict = {}
        self.ids: list = []
        self.zs: list = []

    def _band(self, y: float) -> int:
        return math.floor(math.log(y) / self.cell)

    def _xcell(self, x: float, band: int) -> int:
        width = self.cell * math.exp(self.cell * band)
        return math.floor(x / width)

    def insert(self, ident, z: complex):
        idx = len(self.ids)
        self.ids.append(ident)
        self.zs.append(z)
        band = self._band(z.imag)
        key = (band, self._xcell(z.real, band))
        self.buckets.setdefault(key, []).append(idx)

    def query(self, z: complex, radius: float):
        """All stored entries within hyperbolic distance `radius` of z;
        returns (idents list, positions array, distances array)."""
        y, x = z.imag, z.real
        b_lo = math.floor((math.log(y) - radius) / self.cell)
        b_hi = math.floor((math.log(y) + radius) / self.cell)
        cand = []
        halfspan = 2.0 * math.sinh(radius / 2.0) * math.sqrt(y)
        for band in range(b_lo, b_hi + 1):
            # max sqrt(y_w) over the band
            y_band_hi = math.exp(self.cell * (band + 1))
            span = halfspan * math.sqrt(y_band_hi)
            width = self.cell * math.exp(self.cell * band)
            c_lo = math.floor((x - span) / width)
            c_hi = math.floor((x + span) / width)
            for c in range(c_lo, c_hi + 1):
                lst = self.buckets.get((band, c))
                if lst:
                    cand.extend(lst)
        if not cand:
            return [], np.empty(0, dtype=complex), np.empty(0)
        pos = np.array([self.zs[i] for i in cand])
        dist = np.asarray(distance(z, pos))
        keep = dist <= radius
        idents = [self.ids[i] for i, k in zip(cand, keep) if k]
        return idents, pos[keep], dist[keep]

    def __len__(self):
        return len(self.ids)


def _tile_probes(y_top: float):
    """Sample points of the closure of the modular triangle up to height
    y_top, dense enough that any tile meeting a fattened window is seen."""
    pts = []
    for x in np.linspace(-0.5, 0.5, 9):
        theta = math.acos(-x) if abs(x) <= 1 else 0.0
        y_arc = math.sin(theta)
        ys = np.exp(np.linspace(math.log(max(y_arc, 0.5)), math.log(y_top), 14))
        for y in ys:
            pts.append(complex(x, y))
    # arc samples
    for theta in np.linspace(math.pi / 3.0, 2.0 * math.pi / 3.0, 9):
        pts.append(complex(math.cos(theta), math.sin(theta)))
    return np.array(pts)


class QuotientGeometry:
    """Lift bookkeeping for one congruence lattice.

    Builds the fundamental set (truncated at the cusp cutoff y_top), the
    finite set of lattice translations able to move points of the set
    within `reach` of it, and the list of boundary cusps visible from the
    window.
    """

    def __init__(self, lattice: CongruenceLattice, y_top: float, reach: float):
        self.lattice = lattice
        self.y_top = float(y_top)
        self.reach = float(reach)
        reps = lattice.coset_representatives()
        probes = _tile_probes(self.y_top)
        base_pts = np.concatenate([np.asarray(apply_mobius(g.entries(), probes)) for g in reps])
        self.window = Window.around(base_pts, pad=0.05)
        self._build_tiles(reps, probes)

    def _build_tiles(self, reps, probes):
        lat = self.lattice
        margin = self.reach + 0.3
        tiles = {}
        frontier = []
        for g in reps:
            key = g.canonical_sign()
            tiles[key] = g
            frontier.append(g)
        generators = (_T, _Tinv, _S)
        guard = 0
        while frontier:
            guard += 1
            if guard > 200_000:
                raise RuntimeError("tile search did not terminate")
            h = frontier.pop()
            for s in generators:
                nb = h @ s
                key = nb.canonical_sign()
                if key in tiles:
                    continue
                img = np.asarray(apply_mobius(nb.entries(), probes))
                if not np.any(self.window.contains_dilated(img, margin)):
                    continue
                tiles[key] = nb
                frontier.append(nb)
        self.tiles = [tiles[k] for k in sorted(tiles)]
        # translations gluing the tiling back onto the fundamental set
        sigma = {}
        cusps = set()
        for h in self.tiles:
            j = lat.coset_index(h)
            g_j = lat.coset_representatives()[j]
            gamma = h @ g_j.inverse()
            if not gamma.is_identity():
                sigma[gamma.canonical_sign()] = gamma
                inv = gamma.inverse()
                sigma[inv.canonical_sign()] = inv
            a, b, c, d = h.entries()
            cusps.add(Fraction(a, c) if c != 0 else None)  # h(infinity)
        self.sigma = [sigma[k] for k in sorted(sigma)]
        self._sigma_arrays = None
        self.cusps = sorted(cusps, key=lambda f: (f is not None, f))

    def sigma_images(self, z: complex, margin=None):
        """Translates gamma(z), gamma in the gluing set, that land within
        `margin` of the window (canonical lift excluded)."""
        if margin is None:
            margin = self.reach
        if self._sigma_arrays is None:
            ents = np.array([g.entries() for g in self.sigma], dtype=float)
            self._sigma_arrays = (ents[:, 0], ents[:, 1], ents[:, 2], ents[:, 3])
        a, b, c, d = self._sigma_arrays
        if len(self.sigma) == 0:
            return np.empty(0, dtype=complex)
        w = (a * z + b) / (c * z + d)
        keep = self.window.contains_dilated(w, margin)
        return w[keep]

    def canonical_lift(self, z: complex) -> complex:
        return self.lattice.canonical_lift(z)[1]

    # -- neighbor search over a fixed point cloud -------------------------------

    def build_index(self, points, radius: float) -> SpatialIndex:
        """Index canonical points plus their gluing translates for radius-R
        queries in the quotient metric."""
        index = SpatialIndex(cell=max(radius, 1e-6))
        for i, z in enumerate(points):
            index.insert(i, complex(z))
            for w in self.sigma_images(complex(z), margin=radius + 0.05):
                index.insert(i, complex(w))
        return index

    def quotient_distance(self, index: SpatialIndex, z: complex, radius: float):
        """Smallest indexed quotient distance from z within `radius`;
        returns (ident, position, dist) of the minimizer or None."""
        idents, pos, dist = index.query(z, radius)
        if len(idents) == 0:
            return None
        k = int(np.argmin(dist))
        return idents[k], pos[k], float(dist[k])

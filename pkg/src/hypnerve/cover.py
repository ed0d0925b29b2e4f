"""Thick-part sampling, maximal separated nets, ball covers, and nerves.

The pipeline here goes: sample a fundamental set at fixed hyperbolic
resolution and label each sample thick or thin (distance to the cusp
horoball system at least eps, or not) -> extract a maximal delta-separated
net from the thick samples in the quotient metric -> cover with balls of
radius a small multiple of delta -> build the nerve: one vertex per ball,
a simplex for every tuple of balls sharing a common point of the thick
part.  Common-point tests are convex feasibility problems solved by the
smallest-enclosing-ball routine on lifted center tuples; witnesses that
land in the collar are pushed outward along the collar gradient before a
tuple is rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .geometry import (
    MobiusIsometry,
    apply_mobius,
    ball_area,
    chebyshev_center_batch,
    distance,
    geodesic_midpoint,
    unipotent_sublevel,
)
from .lattice import CongruenceLattice, _xgcd
from .quotient import QuotientGeometry, SpatialIndex
from .thickthin import b_constant

__all__ = [
    "ThinRegion",
    "SampleSet",
    "NetCover",
    "NerveComplex",
    "CoverError",
    "cusp_cutoff_height",
    "primitive_parabolic_at",
    "build_thin_region",
    "sample_thick_region",
    "greedy_maximal_net",
    "build_nerve",
    "theorem_constants",
    "verify_vertex_degree_bounds",
]


class CoverError(RuntimeError):
    pass


def cusp_cutoff_height(level: int, eps: float) -> float:
    """Chart height of the collar boundary: every cusp of the level-N
    lattice has width N, so in any cusp chart the eps-horoball floats at
    N / (2 sinh(eps/2)) and its eps-neighborhood reaches down to that
    height times e^{-eps}."""
    return level / (2.0 * math.sinh(eps / 2.0)) * math.exp(-eps)


def primitive_parabolic_at(cusp: Fraction | None, level: int) -> MobiusIsometry:
    """Primitive lattice parabolic fixing the given boundary point
    (None encodes infinity)."""
    n = level
    if cusp is None:
        return MobiusIsometry(1, n, 0, 1)
    p, q = cusp.numerator, cusp.denominator
    g, u, v = _xgcd(p, q)
    assert g == 1
    # columns (p, q), (-u, v): determinant p v + q u = 1
    gmat = MobiusIsometry(p, -v, q, u)
    t_n = MobiusIsometry(1, n, 0, 1)
    return gmat @ t_n @ gmat.inverse()


@dataclass
class ThinRegion:
    """All cusp horoballs visible from the working window, at scale eps.

    delta(z) is the distance to the nearest eps-sub-level horoball, which
    is exactly the collar-family minimum (primitive parabolics realize the
    minimum at every point).  min_displacement(z) is the smallest
    displacement of any nontrivial lattice element, using the closed form
    cosh d = 1 + (cosh eps - 1) (h / y_chart)^2 per horoball and the trace
    floor for nonparabolics.
    """

    eps: float
    horoballs: list
    _charts: tuple = field(default=None, repr=False)

    def _chart_arrays(self):
        if self._charts is None:
            mats = np.array([hb.conj for hb in self.horoballs], dtype=float)
            heights = np.array([hb.height for hb in self.horoballs])
            self._charts = (mats[:, 0], mats[:, 1], mats[:, 2], mats[:, 3], heights)
        return self._charts

    def chart_heights(self, z):
        """Im(conj_k(z)) for every horoball k; shape (n_balls,) + shape(z)."""
        a, b, c, d = self._chart_arrays()[:4]
        z = np.asarray(z, dtype=complex)
        shape = (-1,) + (1,) * z.ndim
        a, b, c, d = (v.reshape(shape) for v in (a, b, c, d))
        return np.imag((a * z + b) / (c * z + d))

    def delta(self, z):
        """Distance to the thin part: min_k max(log(h_k / y_chart_k), 0)."""
        h = self._chart_arrays()[4]
        w = self.chart_heights(z)
        vals = np.maximum(np.log(h.reshape((-1,) + (1,) * (w.ndim - 1)) / w), 0.0)
        return np.min(vals, axis=0)

    def is_thick(self, z):
        """Modified thick part: outside the open eps-neighborhood of the
        thin part."""
        return self.delta(z) >= self.eps

    def nearest_gradient(self, z: complex) -> complex:
        """Frame components of the collar-distance gradient of the nearest
        horoball (the outward direction used by witness rescue walks)."""
        h = self._chart_arrays()[4]
        w = self.chart_heights(z)
        vals = np.maximum(np.log(h / w), 0.0)
        k = int(np.argmin(vals))
        return complex(self.horoballs[k].dist_gradient(z))

    def min_displacement(self, z):
        """Smallest nontrivial displacement at z (vectorized)."""
        h = self._chart_arrays()[4]
        w = self.chart_heights(z)
        coshval = 1.0 + (math.cosh(self.eps) - 1.0) * (
            h.reshape((-1,) + (1,) * (w.ndim - 1)) / w
        ) ** 2
        dmin = np.min(np.arccosh(coshval), axis=0)
        from .lattice import MIN_HYPERBOLIC_DISPLACEMENT

        return np.minimum(dmin, MIN_HYPERBOLIC_DISPLACEMENT)


def build_thin_region(qgeom: QuotientGeometry, eps: float) -> ThinRegion:
    horoballs = []
    for cusp in qgeom.cusps:
        gamma = primitive_parabolic_at(cusp, qgeom.lattice.level)
        horoballs.append(unipotent_sublevel(gamma, eps))
    return ThinRegion(eps=eps, horoballs=horoballs)


@dataclass
class SampleSet:
    """Fixed-resolution sampling of the fundamental set with thick labels.

    Grid cells have hyperbolic side ~resolution in both directions; each
    sample carries the exact hyperbolic area of its cell so that label
    counts integrate to areas."""

    resolution: float
    points: np.ndarray  # complex, canonical lifts
    delta: np.ndarray
    thick: np.ndarray  # bool
    cell_area: np.ndarray

    @property
    def thick_points(self):
        return self.points[self.thick]

    def thick_area_estimate(self) -> float:
        return float(np.sum(self.cell_area[self.thick]))

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("x,y,label,delta\n")
            for z, d, t in zip(self.points, self.delta, self.thick):
                fh.write(f"{z.real!r},{z.imag!r},{'thick' if t else 'thin'},{d!r}\n")


def sample_thick_region(
    lattice: CongruenceLattice,
    thin_region: ThinRegion,
    resolution: float,
    delta_sep: float,
    y_top: float,
) -> SampleSet:
    """Hyperbolic grid over the fundamental set, labeled thick/thin.

    Rows at heights y_k = y_0 e^{k res}, columns spaced res*y within each
    row; each tile copy of the modular triangle is sampled in its own chart
    and mapped through its coset representative.  Points above y_top are
    inside the collar in every chart and carry no thick samples, so the
    grid stops there.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if resolution > delta_sep / 2.0:
        raise CoverError(
            f"resolution {resolution} too coarse for net separation {delta_sep}"
        )
    y0 = math.sqrt(3.0) / 2.0 * 0.999
    n_rows = int(math.ceil(math.log(y_top / y0) / resolution)) + 1
    cols_chunks, area_chunks = [], []
    for k in range(n_rows):
        y = y0 * math.exp(k * resolution)
        n_cols = max(int(math.ceil(1.0 / (resolution * y))), 1)
        step = 1.0 / n_cols
        xs = -0.5 + (np.arange(n_cols) + 0.5) * step
        zs = xs + 1j * y
        zs = zs[np.abs(zs) >= 1.0]  # triangle condition
        if len(zs):
            cols_chunks.append(zs)
            # exact hyperbolic area of the cell centered at height y:
            # width step, band [y e^{-res/2}, y e^{res/2})
            cell = step * 2.0 * math.sinh(resolution / 2.0) / y
            area_chunks.append(cell * np.ones(len(zs)))
    base = np.concatenate(cols_chunks)
    base_area = np.concatenate(area_chunks)
    reps = lattice.coset_representatives()
    pts = np.concatenate([np.asarray(apply_mobius(g.entries(), base)) for g in reps])
    areas = np.tile(base_area, len(reps))
    delta = thin_region.delta(pts)
    thick = delta >= thin_region.eps
    return SampleSet(
        resolution=resolution, points=pts, delta=delta, thick=thick, cell_area=areas
    )


@dataclass
class NetCover:
    """Maximal delta-separated centers on the thick samples plus the ball
    radius of the cover built on them."""

    delta: float
    centers: np.ndarray  # complex canonical lifts
    radius: float
    paper_radius: float  # (b+1) delta at the run's eps

    def __len__(self):
        return len(self.centers)

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("index,x,y\n")
            for i, z in enumerate(self.centers):
                fh.write(f"{i},{z.real!r},{z.imag!r}\n")


def greedy_maximal_net(
    samples: SampleSet,
    delta_sep: float,
    qgeom: QuotientGeometry,
    eps: float,
    cover_scale: float,
) -> NetCover:
    """Greedy maximal delta-separated subset of the thick samples in the
    quotient metric, processed in (y, x) order of the lifts."""
    pts = samples.thick_points
    order = np.lexsort((np.real(pts), np.imag(pts)))
    index = SpatialIndex(cell=max(delta_sep, 1e-9))
    accepted = []
    for k in order:
        z = complex(pts[k])
        idents, _, _ = index.query(z, delta_sep - 1e-12)
        if idents:
            continue
        accepted.append(z)
        ident = len(accepted) - 1
        index.insert(ident, z)
        for w in qgeom.sigma_images(z, margin=delta_sep + 0.05):
            index.insert(ident, complex(w))
    centers = np.array(accepted, dtype=complex)
    b = b_constant(eps)
    return NetCover(
        delta=delta_sep,
        centers=centers,
        radius=cover_scale * delta_sep,
        paper_radius=(b + 1.0) * delta_sep,
    )


@dataclass
class NerveComplex:
    """Nerve of the ball cover: vertex per ball, simplex per tuple of balls
    meeting in a common thick point.  simplices[k] is an (n_k, k+1) array
    of sorted vertex tuples in lexicographic row order."""

    n_vertices: int
    simplices: dict  # dim -> np.ndarray
    dim_cap: int
    truncated: bool  # dimension cap cut off nonempty top simplices
    witness_direct: int = 0
    witness_rescued: int = 0
    rejected_thin: int = 0
    acceptance_margin: float = float("inf")  # min |minimax - r| observed

    def counts(self):
        return {k: len(v) for k, v in sorted(self.simplices.items())}

    @property
    def edges(self):
        return self.simplices.get(1, np.empty((0, 2), dtype=np.int32))

    @property
    def triangles(self):
        return self.simplices.get(2, np.empty((0, 3), dtype=np.int32))

    def degrees(self):
        deg = np.zeros(self.n_vertices, dtype=np.int64)
        e = self.edges
        if len(e):
            deg += np.bincount(e[:, 0], minlength=self.n_vertices)
            deg += np.bincount(e[:, 1], minlength=self.n_vertices)
        return deg

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * len(v) for k, v in self.simplices.items())

    @property
    def chi_reliable(self) -> bool:
        return not self.truncated

    def write_simplices(self, path):
        with open(path, "w") as fh:
            for k in sorted(self.simplices):
                for row in self.simplices[k]:
                    fh.write(f"{k}\t" + " ".join(str(int(v)) for v in row) + "\n")

    def write_adjacency_csv(self, path):
        with open(path, "w") as fh:
            fh.write("u,v\n")
            for u, v in self.edges:
                fh.write(f"{u},{v}\n")


def _thick_witness(points_row, sigma, thin_region: ThinRegion, radius, tie_tol):
    """Try to certify a common thick point for the tuple: start at the
    minimax center sigma; if it sits in the collar, walk outward along the
    collar gradient while staying inside all balls.  Returns 0 (direct),
    1 (rescued), or -1 (no thick common point found)."""
    if bool(thin_region.is_thick(sigma)):
        return 0
    z = sigma
    step = thin_region.eps / 20.0
    for _ in range(60):
        g = thin_region.nearest_gradient(z)
        z = z + g * z.imag * step  # frame -> coordinate step
        if z.imag <= 0:
            return -1
        if np.max(distance(z, points_row)) > radius + tie_tol:
            return -1
        if bool(thin_region.is_thick(z)):
            return 1
    return -1


def build_nerve(
    net: NetCover,
    qgeom: QuotientGeometry,
    thin_region: ThinRegion,
    dim_cap: int = 8,
    tie_tol: float = 1e-9,
    batch: int = 200_000,
) -> NerveComplex:
    """Construct the nerve of the cover.

    Vertices are the net centers.  Edges join centers at quotient distance
    below twice the radius (their equal-radius balls then overlap) whose
    overlap meets the thick part.  A higher tuple spans a simplex when the
    lifted centers admit a point within the radius of all of them
    (smallest-enclosing-ball feasibility) and some such point is thick;
    candidate lifts come through the gluing translations, anchored at the
    tuple's smallest vertex.  Faces of accepted simplices are required to
    be accepted, keeping the complex closed under faces.
    """
    centers = net.centers
    n = len(centers)
    r = net.radius
    index = qgeom.build_index(centers, radius=2.0 * r + 1e-9)

    nerve = NerveComplex(n_vertices=n, simplices={}, dim_cap=dim_cap, truncated=False)
    nerve.simplices[0] = np.arange(n, dtype=np.int32).reshape(-1, 1)

    # neighbor arrays with lift positions, anchored at each vertex
    nbr_ids: list = []
    nbr_pos: list = []
    for i in range(n):
        z = complex(centers[i])
        idents, pos, dist = index.query(z, 2.0 * r)
        pairs = [
            (int(j), complex(w))
            for j, w, dd in sorted(
                zip(idents, pos, dist), key=lambda t: (t[0], t[1].real, t[1].imag)
            )
            if not (j == i and dd < 1e-12)
        ]
        nbr_ids.append(np.array([p[0] for p in pairs], dtype=np.int32))
        nbr_pos.append(np.array([p[1] for p in pairs], dtype=complex))

    def _witness_filter(tuples, positions, level):
        """tuples: list of vertex tuples; positions: (B, k+1) complex.
        Returns the accepted subset, updating witness stats."""
        if len(tuples) == 0:
            return []
        pos = np.asarray(positions)
        if level == 1:
            sig = geodesic_midpoint(pos[:, 0], pos[:, 1])
            val = np.max(distance(sig[:, None], pos), axis=1)
        else:
            # the minimax value is at least half the tuple diameter; skip
            # the solver where that already rules the tuple out
            pair_max = np.max(
                distance(pos[:, :, None], pos[:, None, :]), axis=(1, 2)
            )
            maybe = pair_max / 2.0 <= r + tie_tol
            sig = np.full(len(pos), 1j, dtype=complex)
            val = np.full(len(pos), np.inf)
            if np.any(maybe):
                sig_m, val_m = chebyshev_center_batch(pos[maybe])
                sig[maybe] = sig_m
                val[maybe] = val_m
        feasible = val <= r + tie_tol
        finite = np.isfinite(val)
        if np.any(finite):
            margin = float(np.min(np.abs(val[finite] - r)))
            nerve.acceptance_margin = min(nerve.acceptance_margin, margin)
        thick = thin_region.is_thick(sig)
        accepted = []
        for t, row, s, ok_f, ok_t in zip(tuples, pos, sig, feasible, thick):
            if not ok_f:
                continue
            if ok_t:
                nerve.witness_direct += 1
                accepted.append(t)
                continue
            res = _thick_witness(row, complex(s), thin_region, r, tie_tol)
            if res >= 0:
                nerve.witness_rescued += 1
                accepted.append(t)
            else:
                nerve.rejected_thin += 1
        return accepted

    # dimension 1
    cand_tuples, cand_pos = [], []
    for i in range(n):
        zi = complex(centers[i])
        for j, w in zip(nbr_ids[i], nbr_pos[i]):
            if j > i:
                cand_tuples.append((i, int(j)))
                cand_pos.append((zi, complex(w)))
    edges = _witness_filter(cand_tuples, np.array(cand_pos, dtype=complex), 1)
    edge_set = set(edges)
    nerve.simplices[1] = (
        np.array(sorted(edge_set), dtype=np.int32).reshape(-1, 2)
        if edge_set
        else np.empty((0, 2), dtype=np.int32)
    )

    # higher dimensions: extend accepted simplices anchored at their least
    # vertex.  Each accepted tuple keeps every lift pattern that realized
    # it (almost always one); an extension must be pairwise close to every
    # lift of some pattern, have all its faces accepted, and pass the
    # feasibility + witness test.
    tuples_arr = np.array(
        [t for t, p in zip(cand_tuples, cand_pos) if t in edge_set], dtype=np.int32
    ).reshape(-1, 2)
    pos_arr = np.array(
        [p for t, p in zip(cand_tuples, cand_pos) if t in edge_set], dtype=complex
    ).reshape(-1, 2)
    accepted_sets = {1: edge_set}
    level = 1

    def _candidates(tuples_k, pos_k, want_any=False):
        """Vectorized extension of level-k rows (grouped by anchor) by
        neighbors of the anchor; enforces u > last, u not in tuple,
        pairwise < 2r, and face closure of the new tuple."""
        out_t, out_p = [], []
        anchors = tuples_k[:, 0]
        order = np.argsort(anchors, kind="stable")
        tuples_k = tuples_k[order]
        pos_k = pos_k[order]
        anchors = anchors[order]
        starts = np.searchsorted(anchors, np.arange(n), side="left")
        ends = np.searchsorted(anchors, np.arange(n), side="right")
        kk = tuples_k.shape[1]
        prev = accepted_sets[kk - 1]
        for v0 in np.unique(anchors):
            ids, pos = nbr_ids[v0], nbr_pos[v0]
            if len(ids) == 0:
                continue
            rows = slice(starts[v0], ends[v0])
            G_t, G_p = tuples_k[rows], pos_k[rows]
            dmat = distance(pos[None, :, None], G_p[:, None, :])  # (m, n0, kk)
            ok = np.max(dmat, axis=2) < 2.0 * r
            ok &= ids[None, :] > G_t[:, -1:]
            ok &= ~np.any(ids[None, :, None] == G_t[:, None, :], axis=2)
            ridx, nidx = np.where(ok)
            for a, b in zip(ridx, nidx):
                t = tuple(int(v) for v in G_t[a]) + (int(ids[b]),)
                if not all(
                    (t[:i] + t[i + 1 :]) in prev for i in range(len(t) - 1)
                ):
                    continue
                out_t.append(t)
                out_p.append(tuple(G_p[a]) + (complex(pos[b]),))
                if want_any:
                    return out_t, out_p
        return out_t, out_p

    while len(tuples_arr):
        if level >= dim_cap:
            ct, _ = _candidates(tuples_arr, pos_arr, want_any=True)
            nerve.truncated = bool(ct)
            break
        cand_tuples, cand_pos = _candidates(tuples_arr, pos_arr)
        if not cand_tuples:
            break
        level += 1
        accepted_rows_t, accepted_rows_p = [], []
        acc_all = set()
        for start in range(0, len(cand_tuples), batch):
            chunk_t = cand_tuples[start : start + batch]
            chunk_p = cand_pos[start : start + batch]
            acc = _witness_filter(chunk_t, np.array(chunk_p, dtype=complex), level)
            acc_set = set(acc)
            acc_all |= acc_set
            for t, p in zip(chunk_t, chunk_p):
                if t in acc_set:
                    accepted_rows_t.append(t)
                    accepted_rows_p.append(p)
        if not acc_all:
            break
        accepted_sets[level] = acc_all
        nerve.simplices[level] = np.array(sorted(acc_all), dtype=np.int32)
        tuples_arr = np.array(accepted_rows_t, dtype=np.int32)
        pos_arr = np.array(accepted_rows_p, dtype=complex)
    return nerve


def theorem_constants(eps: float, delta: float, m: int = 1):
    """Closed-form constants of the vertex/degree bounds at scale (eps, delta):
    alpha (vertices per unit volume), d (degree bound), l (packing count),
    b (collar constant), plus the counting constant c1 = alpha."""
    b = b_constant(eps)
    alpha = 1.0 / float(ball_area(delta / 2.0))
    d_bound = float(ball_area(2.0 * (b + 1.25) * delta) / ball_area(delta / 2.0))
    l_pack = int(math.ceil(float(ball_area((b + 1.5) * delta) / ball_area(delta / 2.0))))
    return {
        "b": b,
        "alpha": alpha,
        "degree_bound": d_bound,
        "packing_l": l_pack,
        "c1": alpha,
        "paper_delta_max": eps / (m * (b + 1.0)),
    }


def verify_vertex_degree_bounds(
    nerve: NerveComplex,
    net: NetCover,
    lattice: CongruenceLattice,
    qgeom: QuotientGeometry,
    thin_region: ThinRegion,
    eps: float,
    m: int = 1,
):
    """Check the nerve against the closed-form bounds; any violation is a
    falsification event reported in the outcome dict.

    (i) vertex count <= alpha * covolume; (ii) every degree <= d;
    (iii) every ball of radius (b+1) delta holds at most l net points;
    (iv) balls embed: smallest displacement at each center >= 2 * radius;
    (v) the balls cover the thick samples (within the cover radius).
    """
    consts = theorem_constants(eps, net.delta, m)
    degrees = nerve.degrees()
    max_deg = int(degrees.max()) if len(degrees) else 0
    outcome = dict(consts)
    outcome["n_vertices"] = len(net)
    outcome["vertex_bound"] = consts["alpha"] * lattice.covolume
    outcome["vertex_bound_ok"] = len(net) <= outcome["vertex_bound"]
    outcome["max_degree"] = max_deg
    outcome["degree_ok"] = max_deg <= consts["degree_bound"]

    pack_radius = (consts["b"] + 1.0) * net.delta
    index = qgeom.build_index(net.centers, radius=pack_radius + 1e-9)
    max_in_ball = 0
    for z in net.centers:
        idents, _, _ = index.query(complex(z), pack_radius)
        max_in_ball = max(max_in_ball, len(set(idents)))
    outcome["max_in_ball"] = max_in_ball
    outcome["packing_ok"] = max_in_ball <= consts["packing_l"]

    min_disp = float(np.min(thin_region.min_displacement(net.centers)))
    outcome["min_center_displacement"] = min_disp
    outcome["injectivity_ok"] = min_disp >= 2.0 * net.radius
    outcome["all_ok"] = bool(
        outcome["vertex_bound_ok"]
        and outcome["degree_ok"]
        and outcome["packing_ok"]
        and outcome["injectivity_ok"]
    )
    return outcome

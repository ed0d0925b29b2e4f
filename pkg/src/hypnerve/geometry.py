"""Exact-formula geometry of the hyperbolic upper half-plane.

Points live in {x + iy : y > 0} with the metric (dx^2 + dy^2)/y^2 and are
passed around as complex numbers (or complex numpy arrays; every formula
here is vectorized).  Tangent vectors are stored in *frame components*:
the orthonormal frame at z is (y, 0), (0, y), so a tangent vector with
Euclidean components (vx, vy) has frame components (vx + i*vy)/y and the
hyperbolic inner product of frame components u, v is Re(u * conj(v)).

Isometries are 2x2 real (or integer) matrices of determinant one acting
by fractional linear maps; a matrix and its negation act identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HPoint",
    "UnitTangent",
    "MobiusIsometry",
    "Horoball",
    "GradientUndefinedError",
    "NotParabolicError",
    "distance",
    "apply_mobius",
    "mobius_frame_rotation",
    "displacement",
    "distance_gradient",
    "displacement_gradient",
    "unipotent_sublevel",
    "dist_to_sublevel",
    "sublevel_gradient",
    "ball_area",
    "exp_map",
    "geodesic_midpoint",
    "chebyshev_center",
    "chebyshev_center_batch",
]

_DET_TOL = 1e-12


class GradientUndefinedError(ValueError):
    """Gradient requested at a point where the displacement function is
    not smooth (only possible at or below the displacement minimum)."""


class NotParabolicError(ValueError):
    """Operation requires a parabolic isometry (trace +-2, not +-identity)."""


@dataclass(frozen=True)
class HPoint:
    """Point of the upper half-plane."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and self.y > 0):
            raise ValueError(f"invalid half-plane point ({self.x}, {self.y})")

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    @staticmethod
    def from_z(z: complex) -> "HPoint":
        return HPoint(float(z.real), float(z.imag))


@dataclass(frozen=True)
class UnitTangent:
    """Unit tangent vector: base point plus frame components of hyperbolic
    norm one (the Euclidean norm of the raw vector equals y at the base)."""

    base: HPoint
    frame: complex

    def __post_init__(self):
        if abs(abs(self.frame) - 1.0) > 1e-12:
            raise ValueError(f"frame components not unit: |{self.frame}| != 1")

    @property
    def euclidean(self) -> complex:
        return self.frame * self.base.y


class MobiusIsometry:
    """Determinant-one 2x2 matrix acting on the half-plane by z -> (az+b)/(cz+d).

    Entries may be Python ints (exact, used for lattice elements) or floats.
    The matrix and its negation represent the same isometry; equality and
    hashing quotient out the sign.
    """

    __slots__ = ("a", "b", "c", "d")

    def __init__(self, a, b, c, d):
        det = a * d - b * c
        if isinstance(a, int) and isinstance(b, int) and isinstance(c, int) and isinstance(d, int):
            if det != 1:
                raise ValueError(f"integer matrix has det {det}, expected 1")
        elif abs(det - 1.0) > _DET_TOL:
            raise ValueError(f"matrix has det {det}, expected 1 within {_DET_TOL}")
        self.a, self.b, self.c, self.d = a, b, c, d

    # -- structure ---------------------------------------------------------

    def is_integral(self) -> bool:
        return all(isinstance(v, int) for v in (self.a, self.b, self.c, self.d))

    def entries(self):
        return (self.a, self.b, self.c, self.d)

    def trace(self):
        return self.a + self.d

    def inverse(self) -> "MobiusIsometry":
        return MobiusIsometry(self.d, -self.b, -self.c, self.a)

    def __matmul__(self, other: "MobiusIsometry") -> "MobiusIsometry":
        return MobiusIsometry(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def canonical_sign(self):
        """Entries with the sign fixed so the first nonzero of (a, b, c, d)
        is positive; both matrix lifts of an isometry map to the same key."""
        for v in (self.a, self.b, self.c, self.d):
            if v != 0:
                if v < 0:
                    return (-self.a, -self.b, -self.c, -self.d)
                break
        return (self.a, self.b, self.c, self.d)

    def __eq__(self, other):
        if not isinstance(other, MobiusIsometry):
            return NotImplemented
        return self.canonical_sign() == other.canonical_sign()

    def __hash__(self):
        return hash(self.canonical_sign())

    def __repr__(self):
        return f"MobiusIsometry({self.a}, {self.b}, {self.c}, {self.d})"

    # -- action ------------------------------------------------------------

    def __call__(self, z):
        return apply_mobius(self.entries(), z)

    def is_identity(self) -> bool:
        return self.canonical_sign() == (1, 0, 0, 1)

    def is_parabolic(self) -> bool:
        return abs(self.trace()) == 2 and not self.is_identity() if self.is_integral() else (
            abs(abs(self.trace()) - 2.0) <= 1e-12 and not self.is_identity()
        )

    def fixed_boundary_point(self):
        """Boundary fixed point of a parabolic element; None encodes infinity."""
        if not self.is_parabolic():
            raise NotParabolicError(f"{self!r} is not parabolic (trace {self.trace()})")
        if self.c == 0:
            return None
        # double root of c z^2 + (d-a) z - b
        return (self.a - self.d) / (2.0 * self.c)

    def translation_width(self) -> float:
        """For a parabolic fixing infinity, the translation amount s in
        z -> z + s after normalizing the sign of the matrix."""
        if self.c != 0:
            raise NotParabolicError("translation width only defined for c == 0")
        # a = d = +-1; sign-normalize so the map reads z -> z + b*d
        return float(self.b * self.d)


IDENTITY = MobiusIsometry(1, 0, 0, 1)


def apply_mobius(entries, z):
    """Apply (az+b)/(cz+d) to a complex scalar or array; preserves Im > 0."""
    a, b, c, d = entries
    return (a * z + b) / (c * z + d)


def mobius_frame_rotation(entries, z):
    """Unit complex number by which the differential of the map rotates
    frame components at z (the conformal factor g'(z)/|g'(z)|)."""
    a, b, c, d = entries
    w = c * z + d
    # g'(z) = 1/(cz+d)^2
    phase = np.conj(w * w)
    return phase / np.abs(phase)


def distance(z1, z2):
    """Hyperbolic distance arccosh(1 + |z1-z2|^2 / (2 y1 y2)); vectorized."""
    y1 = np.imag(z1)
    y2 = np.imag(z2)
    q = np.abs(z1 - z2) ** 2 / (2.0 * y1 * y2)
    return np.arccosh(1.0 + q)


def displacement(gamma: MobiusIsometry, z):
    """Displacement d_gamma(z) = d(z, gamma z); conjugation equivariant."""
    return distance(z, gamma(z))


def distance_gradient(z, q):
    """Frame components at z of the gradient of p -> d(p, q), q held fixed.

    This is the unit tangent vector at z pointing away from q along the
    geodesic through the two points.  Undefined at z == q.
    """
    z = np.asarray(z, dtype=complex)
    q = np.asarray(q, dtype=complex)
    y, v = np.imag(z), np.imag(q)
    diff = z - q
    A = 1.0 + np.abs(diff) ** 2 / (2.0 * y * v)
    sinh_d = np.sqrt(np.maximum(A * A - 1.0, 0.0))
    if np.any(sinh_d == 0.0):
        raise GradientUndefinedError("distance gradient requested at zero distance")
    dAdx = np.real(diff) / (y * v)
    dAdy = np.imag(diff) / (y * v) - np.abs(diff) ** 2 / (2.0 * y * y * v)
    # Riemannian gradient has Euclidean components y^2 * partials; frame
    # components are y * partials.  |result| == 1 identically.
    return y * (dAdx + 1j * dAdy) / sinh_d


def displacement_gradient(gamma: MobiusIsometry, z):
    """Frame components of grad d_gamma at z.

    Equals the sum of the unit vectors at z pointing away from gamma(z)
    and away from gamma^{-1}(z), hence has hyperbolic norm at most 2.
    Raises GradientUndefinedError when d_gamma(z) vanishes (identity, or
    a fixed point of an elliptic element).
    """
    if gamma.is_identity():
        raise GradientUndefinedError("displacement of the identity is identically zero")
    zq = gamma(z)
    zp = gamma.inverse()(z)
    return distance_gradient(z, zq) + distance_gradient(z, zp)


@dataclass(frozen=True)
class Horoball:
    """Sub-level set {d_gamma <= eps} of a parabolic isometry.

    Stored as a height h > 0 together with the real Mobius matrix `conj`
    taking the parabolic fixed point to infinity, so the set is the
    preimage of {Im w >= h} under w = conj(z).  For a fixed point already
    at infinity, conj is the identity and the set is {y >= h}.
    """

    height: float
    conj: tuple  # (a, b, c, d) real entries, det 1
    fixed_point: float | None  # None encodes infinity

    def coordinates(self, z):
        """Height coordinate Im(conj(z)); the ball is {coordinate >= height}."""
        return np.imag(apply_mobius(self.conj, z))

    def contains(self, z):
        return self.coordinates(z) >= self.height

    def dist(self, z):
        """Hyperbolic distance to the horoball: log(h / Im w) outside, 0 inside."""
        w = self.coordinates(z)
        return np.maximum(np.log(self.height / w), 0.0)

    def dist_gradient(self, z):
        """Frame components of grad of the distance function, unit norm
        outside the ball (points away from the horoball, toward smaller
        height coordinate)."""
        z = np.asarray(z, dtype=complex)
        # In the conjugated chart the gradient is the downward unit vector
        # -i; pull back through conj^{-1}, which only rotates the frame.
        a, b, c, d = self.conj
        inv = (d, -b, -c, a)
        w = apply_mobius(self.conj, z)
        return -1j * mobius_frame_rotation(inv, w)

    def boundary_point(self, x_param):
        """Point of the boundary horocycle at conjugated abscissa x_param."""
        a, b, c, d = self.conj
        return apply_mobius((d, -b, -c, a), x_param + 1j * self.height)


def _conjugator_to_infinity(xi) -> tuple:
    """Real det-1 matrix sending the boundary point xi to infinity."""
    if xi is None:
        return (1.0, 0.0, 0.0, 1.0)
    return (0.0, -1.0, 1.0, -float(xi))


def unipotent_sublevel(gamma: MobiusIsometry, eps: float) -> Horoball:
    """Horoball {d_gamma <= eps} of a parabolic gamma.

    For gamma conjugate to z -> z + s this is the conjugate of
    {y >= |s| / (2 sinh(eps/2))}, from cosh(eps) = 1 + s^2/(2 h^2).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not gamma.is_parabolic():
        raise NotParabolicError(f"{gamma!r} is not parabolic")
    xi = gamma.fixed_boundary_point()
    conj = _conjugator_to_infinity(xi)
    a, b, c, d = conj
    inv = (d, -b, -c, a)
    # conj * gamma * conj^{-1} fixes infinity: a translation z -> z + s
    ga, gb, gc, gd = gamma.entries()
    m1 = (a * ga + b * gc, a * gb + b * gd, c * ga + d * gc, c * gb + d * gd)
    m = (
        m1[0] * inv[0] + m1[1] * inv[2],
        m1[0] * inv[1] + m1[1] * inv[3],
        m1[2] * inv[0] + m1[3] * inv[2],
        m1[2] * inv[1] + m1[3] * inv[3],
    )
    s = m[1] * m[3]  # sign-normalized translation amount
    height = abs(s) / (2.0 * math.sinh(eps / 2.0))
    return Horoball(height=height, conj=conj, fixed_point=xi)


def dist_to_sublevel(gamma: MobiusIsometry, eps: float, z):
    """Distance from z to the sub-level set {d_gamma <= eps}; 0 inside."""
    return unipotent_sublevel(gamma, eps).dist(z)


def sublevel_gradient(gamma: MobiusIsometry, eps: float, z):
    """Frame components of the gradient of dist_to_sublevel at z (unit norm
    outside the horoball)."""
    return unipotent_sublevel(gamma, eps).dist_gradient(z)


def ball_area(r):
    """Area of a hyperbolic disk: 2 pi (cosh r - 1) = 4 pi sinh^2(r/2)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("negative radius")
    return 4.0 * np.pi * np.sinh(r / 2.0) ** 2


def exp_map(z, frame, t):
    """Point reached from z after time t along the unit-speed geodesic with
    initial direction `frame` (frame components, |frame| = 1); vectorized.

    Translating z to i rotates nothing (the conjugator is upper
    triangular), so shoot the rotated vertical geodesic from i and scale
    back: with phi the angle of `frame` from vertical, the rotation about i
    by phi is the Mobius matrix [[cos(phi/2), sin(phi/2)],
    [-sin(phi/2), cos(phi/2)]].
    """
    z = np.asarray(z, dtype=complex)
    frame = np.asarray(frame, dtype=complex)
    t = np.asarray(t, dtype=float)
    phi = np.angle(frame) - np.pi / 2.0
    ch, sh = np.cos(phi / 2.0), np.sin(phi / 2.0)
    e = np.exp(t) * 1j
    w = (ch * e + sh) / (-sh * e + ch)
    res = w * np.imag(z) + np.real(z)
    if res.ndim == 0:
        return complex(res)
    return res


def geodesic_midpoint(z1, z2):
    """Midpoint of the geodesic segment [z1, z2]; vectorized."""
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    d = distance(z1, z2)
    same = d == 0
    d_safe = np.where(same, 1.0, d)
    u = -distance_gradient(z1, np.where(same, z2 + 1j * np.imag(z2), z2))
    out = exp_map(z1, u, d_safe / 2.0)
    out = np.where(same, z1, out)
    if out.ndim == 0:
        return complex(out)
    return out


def _to_hyperboloid(z):
    """Half-plane to hyperboloid coordinates (X0, X1, X2) with the
    Minkowski form diag(-1, 1, 1); cosh d(z, w) = -<X, W>."""
    x, y = np.real(z), np.imag(z)
    n = x * x + y * y
    return np.stack(((n + 1.0) / (2.0 * y), x / y, (n - 1.0) / (2.0 * y)), axis=-1)


def _from_hyperboloid(X):
    with np.errstate(divide="ignore", invalid="ignore"):
        return (X[..., 1] + 1j) / (X[..., 0] - X[..., 2])


def _circumcenter(p1, p2, p3):
    """Equidistant point of three half-plane points (vectorized); NaN rows
    where the three points have no equidistant point (degenerate)."""
    P = np.stack([_to_hyperboloid(p) for p in (p1, p2, p3)], axis=-2)
    u = P[..., 0, :] - P[..., 1, :]
    v = P[..., 1, :] - P[..., 2, :]
    eta = np.array([-1.0, 1.0, 1.0])
    w = np.cross(u * eta, v * eta)
    s = -w[..., 0] ** 2 + w[..., 1] ** 2 + w[..., 2] ** 2
    bad = s >= -1e-300
    s_safe = np.where(bad, -1.0, s)
    X = w / np.sqrt(-s_safe)[..., None]
    X = X * np.sign(X[..., 0])[..., None]
    z = _from_hyperboloid(X)
    return np.where(bad | ~np.isfinite(z) | (np.imag(z) <= 0), np.nan + 0j, z)


def _lse_minimax_descent(points, x0, iter_cap, grad_tol):
    """Batched minimizer of x -> max_i d(x, points[i]).

    Damped gradient descent on the log-sum-exp smoothing with a decreasing
    temperature localizes the minimizer; an exact polish then tests the
    closed-form candidates supported by the active set (pair midpoints and
    triple equidistant points; the minimax ball is supported by at most
    three points, so one of these is the true optimum).

    points: complex (B, k); x0: complex (B,).  Returns (x, value).
    """
    x = np.array(x0, dtype=complex)
    B, k = points.shape
    spread = np.maximum(np.max(distance(x[:, None], points), axis=1), 1e-9)
    T = spread * 0.5
    logk = math.log(max(k, 2))
    total_iters = 0
    rounds = 0
    while total_iters < iter_cap and rounds < 8:
        rounds += 1
        for _ in range(10):
            dists = distance(x[:, None], points)  # (B, k)
            dmax = np.max(dists, axis=1, keepdims=True)
            w = np.exp((dists - dmax) / T[:, None])
            w /= np.sum(w, axis=1, keepdims=True)
            # gradient of the smoothed max: softmax-weighted unit vectors
            diff = x[:, None] - points
            y = np.imag(x)[:, None]
            v = np.imag(points)
            A = 1.0 + np.abs(diff) ** 2 / (2.0 * y * v)
            sinh_d = np.sqrt(np.maximum(A * A - 1.0, 1e-300))
            gx = np.real(diff) / (y * v)
            gy = np.imag(diff) / (y * v) - np.abs(diff) ** 2 / (2.0 * y * y * v)
            grads = y * (gx + 1j * gy) / sinh_d  # frame components, unit rows
            g = np.sum(w * grads, axis=1)
            gnorm = np.abs(g)
            total_iters += 1
            if np.all(gnorm < grad_tol) or total_iters >= iter_cap:
                break
            step = np.minimum(0.5 * T * logk / np.maximum(gnorm, 1e-30), 0.25 * spread)
            live = gnorm > 0
            gsafe = np.where(live, g, 1.0)
            x = np.where(live, exp_map(x, -gsafe / np.abs(gsafe), step), x)
        T = T / 6.0
    value = np.max(distance(x[:, None], points), axis=1)

    # exact polish over the candidates supported by the top of the active set
    m = min(4, k)
    dists = distance(x[:, None], points)
    top = np.argsort(dists, axis=1)[:, ::-1][:, :m]  # farthest first
    rows = np.arange(B)[:, None]
    tp = points[rows, top]  # (B, m)
    cands = []
    for i in range(m):
        for j in range(i + 1, m):
            cands.append(geodesic_midpoint(tp[:, i], tp[:, j]))
    for i in range(m):
        for j in range(i + 1, m):
            for l in range(j + 1, m):
                cands.append(_circumcenter(tp[:, i], tp[:, j], tp[:, l]))
    for c in cands:
        c = np.asarray(c)
        ok = np.isfinite(c) & (np.imag(c) > 0)
        c_safe = np.where(ok, c, 1j)
        val_c = np.max(distance(c_safe[:, None], points), axis=1)
        better = ok & (val_c < value)
        x = np.where(better, c_safe, x)
        value = np.where(better, val_c, value)
    return x, value


def _minimax_by_support(points):
    """Exact minimax center by support enumeration: the smallest enclosing
    ball is supported by at most three points, so its center is a pair
    midpoint or a triple equidistant point; take the best candidate."""
    B, k = points.shape
    best_x = points[:, 0].copy()
    best_v = np.max(distance(best_x[:, None], points), axis=1)
    cands = []
    for i in range(k):
        for j in range(i + 1, k):
            cands.append(geodesic_midpoint(points[:, i], points[:, j]))
    for i in range(k):
        for j in range(i + 1, k):
            for l in range(j + 1, k):
                cands.append(_circumcenter(points[:, i], points[:, j], points[:, l]))
    for c in cands:
        c = np.asarray(c)
        ok = np.isfinite(c) & (np.imag(c) > 0)
        c_safe = np.where(ok, c, 1j)
        val_c = np.max(distance(c_safe[:, None], points), axis=1)
        better = ok & (val_c < best_v)
        best_x = np.where(better, c_safe, best_x)
        best_v = np.where(better, val_c, best_v)
    return best_x, best_v


def chebyshev_center_batch(points, iter_cap=10_000, grad_tol=1e-9):
    """Chebyshev centers of a batch of finite point sets.

    points: complex array of shape (B, k).  Returns (centers, radii) where
    radii[b] = max_i d(centers[b], points[b, i]).  The minimizer is unique
    by strict convexity of the max-distance function.  Small sets (k <= 7)
    go through exact support enumeration; larger ones are localized by the
    smoothed-minimax descent and then polished the same way.
    """
    points = np.asarray(points, dtype=complex)
    if points.ndim != 2 or points.shape[1] == 0:
        raise ValueError("expected a nonempty (B, k) array of points")
    B, k = points.shape
    if k == 1:
        c = points[:, 0].copy()
        return c, np.zeros(B)
    if k == 2:
        c = geodesic_midpoint(points[:, 0], points[:, 1])
        return c, np.max(distance(c[:, None], points), axis=1)
    if k <= 16:
        return _minimax_by_support(points)
    x0 = geodesic_midpoint(points[:, 0], points[:, 1])
    return _lse_minimax_descent(points, x0, iter_cap, grad_tol)


def chebyshev_center(points, iter_cap=10_000, grad_tol=1e-9):
    """Chebyshev center of a finite point list: the unique minimizer of
    max_i d(x, y_i).  Accepts HPoint or complex entries; returns (center,
    minimax value) with the center as a complex number."""
    zs = [p.z if isinstance(p, HPoint) else complex(p) for p in points]
    if not zs:
        raise ValueError("empty point list")
    c, v = chebyshev_center_batch(np.array([zs]), iter_cap, grad_tol)
    return complex(c[0]), float(v[0])

"""Cusp thick-thin decomposition and the outward retract flow.

Two families of bump functions drive everything, both indexed by the
nonidentity unipotent elements of the lattice (with gamma and gamma^{-1}
identified, since they define the same function):

  * ``displacement``: phi_gamma(x) = d(x, gamma x); its sub-level sets are
    horoballs and their union is the thin part at scale eps.
  * ``dist_to_sublevel``: phi_gamma(x) = distance from x to the horoball
    {d_gamma <= eps}; sub-level sets of these carve out the eps-collar
    around the thin part, whose complement is the modified thick part.

The steering direction at a point maximizes the worst inner product with
the active gradients, and the retract field combines it with weights that
switch on over the window between the eps- and 3eps-active sets.  Flowing
the field increases the family minimum at rate at least
sqrt(2 (eps - delta)), so a trajectory started at delta_0 reaches the
thick side by time sqrt(2 (eps - delta_0)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Horoball,
    MobiusIsometry,
    displacement,
    displacement_gradient,
    distance,
    unipotent_sublevel,
)
from .lattice import CongruenceLattice, MargulisData, is_unipotent

__all__ = [
    "ThinConfig",
    "ActiveSet",
    "FlowConfig",
    "FlowTrace",
    "NoSteeringDirectionError",
    "ActiveSetOverflowError",
    "FlowError",
    "INF_SENTINEL",
    "beta",
    "b_constant",
    "thin_membership",
    "delta_min",
    "active_set",
    "steering_direction",
    "retract_field",
    "flow_to_thick",
]

INF_SENTINEL = float("inf")

FAMILIES = ("displacement", "dist_to_sublevel")


class NoSteeringDirectionError(ValueError):
    """No unit direction has positive inner product with every gradient."""

    def __init__(self, value, direction):
        super().__init__(f"best achievable minimax value {value} <= 0")
        self.value = value
        self.direction = direction


class ActiveSetOverflowError(RuntimeError):
    """More active functions at a point than the configured subset cap."""


class FlowError(RuntimeError):
    """Step-size underflow or time-budget exhaustion; carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


def beta(tau: float) -> float:
    """Steepness modulus of the displacement family: 2 tanh(tau/2).

    This is the derivative of d_gamma along the unit-speed geodesic falling
    away from the parabolic fixed point, evaluated where d_gamma = tau;
    conjugation invariance makes it independent of which parabolic.
    """
    if tau <= 0:
        raise ValueError("beta is defined for positive tau")
    return 2.0 * math.tanh(tau / 2.0)


def b_constant(eps: float) -> float:
    """The collar constant 2 / beta(eps) = coth(eps/2)."""
    return 2.0 / beta(eps)


@dataclass(frozen=True)
class ThinConfig:
    """Scale data for the decomposition: lattice, eps, and the component
    constant m (from the validated thin-scale data)."""

    lattice: CongruenceLattice
    epsilon: float
    m: int = 1

    @staticmethod
    def from_margulis(lattice: CongruenceLattice, data: MargulisData) -> "ThinConfig":
        return ThinConfig(lattice, data.epsilon, data.m)


@dataclass
class ActiveSet:
    """Functions of the family with value <= threshold at a point.

    Each entry is (key, gamma, value) where key identifies the function
    (gamma and its inverse collapse to one key) and value = phi_gamma(point).
    """

    family: str
    threshold: float
    point: complex
    entries: list = field(default_factory=list)

    def values(self):
        return [v for (_, _, v) in self.entries]

    def __len__(self):
        return len(self.entries)


def _function_key(gamma: MobiusIsometry):
    """Canonical key identifying the function phi_gamma: gamma, gamma^{-1}
    and both matrix signs all produce the same displacement function."""
    return min(gamma.canonical_sign(), gamma.inverse().canonical_sign())


def _collect_active(cfg: ThinConfig, z: complex, family: str, threshold: float):
    """Deduplicated (key, gamma, value) list of family members with value
    at or below the threshold."""
    eps = cfg.epsilon
    if family == "displacement":
        tau_enum = threshold
    elif family == "dist_to_sublevel":
        # phi <= t forces d_gamma <= eps + 2 t (the displacement is
        # 2-Lipschitz and equals eps on the horoball boundary)
        tau_enum = eps + 2.0 * threshold
    else:
        raise ValueError(f"unknown family {family!r}")
    seen = {}
    for g in cfg.lattice.enumerate_short_elements(z, tau_enum):
        if not is_unipotent(g):
            continue
        key = _function_key(g)
        if key in seen:
            continue
        if family == "displacement":
            val = float(displacement(g, z))
        else:
            val = float(unipotent_sublevel(g, eps).dist(z))
        if val <= threshold:
            seen[key] = (key, g, val)
    return sorted(seen.values(), key=lambda e: (e[2], e[0]))


def active_set(cfg: ThinConfig, z: complex, family: str, threshold=None) -> ActiveSet:
    """Active set at the point for the given family; default threshold 3 eps."""
    if threshold is None:
        threshold = 3.0 * cfg.epsilon
    return ActiveSet(family, threshold, z, _collect_active(cfg, z, family, threshold))


def delta_min(cfg: ThinConfig, z: complex, family: str, search_cap=None) -> float:
    """Minimum of the family at the point, or the infinity sentinel when
    nothing is active below the (generous) search threshold."""
    if search_cap is None:
        search_cap = 3.0 * cfg.epsilon
    entries = _collect_active(cfg, z, family, search_cap)
    if not entries:
        return INF_SENTINEL
    return entries[0][2]


def thin_membership(cfg: ThinConfig, z: complex, family: str):
    """Whether the point is thin for the family, and the active set at 3 eps.

    displacement: thin means some nontrivial unipotent moves the point by
    at most eps (closed thin part).  dist_to_sublevel: thin means the point
    lies in the open eps-neighborhood of the thin part.
    """
    aset = active_set(cfg, z, family)
    vals = aset.values()
    dmin = min(vals) if vals else INF_SENTINEL
    if family == "displacement":
        return dmin <= cfg.epsilon, aset
    return dmin < cfg.epsilon, aset


def steering_direction(gradients):
    """Unit direction maximizing the smallest inner product with the given
    gradient list (frame components), together with that minimax value.

    In two dimensions the optimum is attained either along one normalized
    gradient or along a bisector direction equalizing two of the inner
    products, so testing those finitely many candidates is exact.  The
    maximizer is unique by strict convexity of the unit disk.  Raises
    NoSteeringDirectionError when no direction achieves a positive value.
    """
    gs = [complex(g) for g in gradients]
    if not gs:
        raise ValueError("empty gradient list")
    if any(abs(g) == 0 for g in gs):
        raise ValueError("zero gradient in steering input")
    cands = []
    for g in gs:
        cands.append(g / abs(g))
    for i in range(len(gs)):
        for j in range(i + 1, len(gs)):
            dgg = gs[i] - gs[j]
            if abs(dgg) < 1e-15:
                continue
            # unit vectors orthogonal to g_i - g_j equalize the two products
            perp = 1j * dgg / abs(dgg)
            cands.append(perp)
            cands.append(-perp)
    best_f, best_v = None, -INF_SENTINEL
    for f in cands:
        v = min((f * gg.conjugate()).real for gg in gs)
        if v > best_v + 1e-15 or best_f is None:
            best_f, best_v = f, v
    if best_v <= 0:
        raise NoSteeringDirectionError(best_v, best_f)
    return best_f, best_v


def _family_gradient(cfg: ThinConfig, gamma: MobiusIsometry, z: complex, family: str):
    if family == "displacement":
        return complex(displacement_gradient(gamma, z))
    return complex(unipotent_sublevel(gamma, cfg.epsilon).dist_gradient(z))


def _beta_for_family(cfg: ThinConfig, dmin: float, family: str) -> float:
    if family == "displacement":
        return beta(dmin)
    # constant modulus beta(eps)/2 for the collar-distance family
    return beta(cfg.epsilon) / 2.0


def retract_field(cfg: ThinConfig, z: complex, family: str, max_active: int = 12):
    """Frame components of the outward field at z.

    V(z) = sqrt(2 (eps - delta) v 0) * sum over subsets Psi between the
    eps-active and 3eps-active sets of

        [(3 eps - max_{phi in Psi} phi) v 0]/eps
        * min(1, [(min_{phi not in Psi} phi - eps) v 0]/eps)
        * (1/beta(delta)) * steering(Psi)

    The complement minimum over an empty in-window complement is +infinity
    and the factor is capped at one (functions outside the 3eps-active set
    would push the factor above one anyway; capping keeps the field bounded
    without hurting the advance rate, which is re-verified by the flow
    tests).  Vanishes identically where delta >= eps.
    """
    eps = cfg.epsilon
    aset = active_set(cfg, z, family)
    if len(aset) == 0:
        return 0j
    vals = aset.values()
    dmin = min(vals)
    lead = math.sqrt(max(2.0 * (eps - dmin), 0.0))
    if lead == 0.0:
        return 0j
    if len(aset) > max_active:
        raise ActiveSetOverflowError(
            f"{len(aset)} active functions at {z} exceed the cap {max_active}; "
            f"values {vals}"
        )
    entries = aset.entries
    base = [e for e in entries if e[2] <= eps]
    optional = [e for e in entries if e[2] > eps]
    grads = {e[0]: _family_gradient(cfg, e[1], z, family) for e in entries}
    binv = 1.0 / _beta_for_family(cfg, dmin, family)

    total = 0j
    n_opt = len(optional)
    for mask in range(1 << n_opt):
        psi = list(base)
        rest = []
        for i in range(n_opt):
            (psi if (mask >> i) & 1 else rest).append(optional[i])
        if not psi:
            continue
        mx = max(e[2] for e in psi)
        c1 = max(3.0 * eps - mx, 0.0) / eps
        if c1 == 0.0:
            continue
        mn_rest = min((e[2] for e in rest), default=INF_SENTINEL)
        c2 = min(max(mn_rest - eps, 0.0) / eps, 1.0)
        if c2 == 0.0:
            continue
        f_hat, _ = steering_direction([grads[e[0]] for e in psi])
        total += c1 * c2 * binv * f_hat
    return lead * total


@dataclass(frozen=True)
class FlowConfig:
    """Integration controls for the retract flow."""

    max_time_step: float | None = None  # default eps/10
    max_spatial_step: float | None = None  # hyperbolic length cap, default eps/10
    min_time_step: float = 1e-12
    time_budget_factor: float = 50.0
    monotone_slack: float = 1e-8
    arrival_tol: float = 0.05
    max_active: int = 12


@dataclass
class FlowTrace:
    """Sampled trajectory of the retract flow."""

    times: list
    points: list
    deltas: list
    arrival_time: float
    status: str  # "arrived" or "trivial"

    def rows(self):
        """CSV rows (t, x, y, delta)."""
        return [
            (t, z.real, z.imag, d)
            for t, z, d in zip(self.times, self.points, self.deltas)
        ]

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,x,y,delta\n")
            for t, x, y, d in self.rows():
                fh.write(f"{t!r},{x!r},{y!r},{d!r}\n")


def flow_to_thick(
    cfg: ThinConfig,
    z0: complex,
    family: str,
    solver: FlowConfig = FlowConfig(),
) -> FlowTrace:
    """Integrate the retract field from z0 until the family minimum reaches
    eps; adaptive RK4 with step halving.

    Asserts the arrival-time contract
    t_arrive <= sqrt(2 (eps - delta_0)) * (1 + arrival_tol), which follows
    from the advance rate of the field, and monotonicity of delta along the
    trace up to the solver slack.
    """
    eps = cfg.epsilon
    d0 = delta_min(cfg, z0, family)
    if d0 >= eps:
        return FlowTrace([0.0], [z0], [d0], 0.0, "trivial")
    h_time = solver.max_time_step if solver.max_time_step is not None else eps / 10.0
    h_space = (
        solver.max_spatial_step if solver.max_spatial_step is not None else eps / 10.0
    )
    bound = math.sqrt(2.0 * (eps - d0)) * (1.0 + solver.arrival_tol)
    budget = bound * solver.time_budget_factor

    def velocity(z):
        # coordinate velocity of the unit frame field: dz/dt = V_frame * y
        v = retract_field(cfg, z, family, solver.max_active)
        return v * z.imag

    t, z, d = 0.0, z0, d0
    times, points, deltas = [t], [z], [d]
    while d < eps:
        if t > budget:
            raise FlowError(
                f"time budget {budget:.3f} exhausted at delta={d:.6f}",
                FlowTrace(times, points, deltas, t, "budget_exhausted"),
            )
        v0 = velocity(z)
        speed = abs(v0) / z.imag
        if speed == 0.0:
            raise FlowError(
                f"field vanished at {z} with delta={d:.6f} < eps",
                FlowTrace(times, points, deltas, t, "stalled"),
            )
        h = min(h_time, h_space / speed)
        while True:
            k1 = v0
            k2 = velocity(z + 0.5 * h * k1)
            k3 = velocity(z + 0.5 * h * k2)
            k4 = velocity(z + h * k3)
            z_new = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if z_new.imag <= 0:
                h *= 0.5
                if h < solver.min_time_step:
                    raise FlowError(
                        "step underflow at the boundary",
                        FlowTrace(times, points, deltas, t, "step_underflow"),
                    )
                continue
            d_new = delta_min(cfg, z_new, family)
            if d_new < d - solver.monotone_slack:
                h *= 0.5
                if h < solver.min_time_step:
                    raise FlowError(
                        f"step underflow with nonmonotone delta at {z}",
                        FlowTrace(times, points, deltas, t, "step_underflow"),
                    )
                continue
            break
        if d_new >= eps and d_new > d:
            # interpolate the crossing time within the last step
            frac = (eps - d) / (d_new - d)
            t = t + h * max(min(frac, 1.0), 0.0)
        else:
            t = t + h
        z, d = z_new, d_new
        times.append(t)
        points.append(z)
        deltas.append(d)
    arrival = t
    if arrival > bound:
        raise FlowError(
            f"arrival time {arrival:.6f} exceeds the contract bound {bound:.6f}",
            FlowTrace(times, points, deltas, arrival, "late"),
        )
    return FlowTrace(times, points, deltas, arrival, "arrived")

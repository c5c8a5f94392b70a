#!/usr/bin/env python3
"""
Cones and cone fields on S^3

A cone field hands out, at each point p, a finite set of unit tangent directions
(its raw generators). Everything quantitative goes through the round envelope of
those directions: the smallest enclosing cone, i.e. the minimal spherical cap
containing the generators on the unit tangent sphere. The inner angle is the
full opening angle of that cone, 2 * half_angle.

Usage:
    python3 src/cone_field.py [alpha0] [collar_eps] [samples]    # adaptedness check of the collared field
"""

import sys
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from errors import BindingPoint, FieldDegenerate, NoEnclosingCone, ZeroVector
from sphere_geometry import (
    BINDING_TOL,
    SpherePoint,
    TangentVector,
    binding_distance,
    contact_form_array,
    dtheta_array,
    from_frame_coords,
    great_circle_distance,
    reeb_array,
    renormalize,
    tangent_frame,
    to_ambient,
    to_frame_coords,
    uniform_sphere,
)

CAP_TOL = 1e-12
VELOCITY_MODELS = ("cap", "disk")


@dataclass(frozen=True, eq=False)
class Cone:
    """Solid round cone: unit tangent axis and half-opening angle in [0, pi/2)"""
    axis: TangentVector
    half_angle: float

    def __post_init__(self):
        if abs(self.axis.norm - 1.0) > 1e-10:
            raise ValueError(f"cone axis must be a unit vector, |axis| = {self.axis.norm!r}")
        if not 0.0 <= self.half_angle < np.pi / 2:
            raise ValueError(f"half angle must lie in [0, pi/2), got {self.half_angle!r}")

    @property
    def inner_angle(self):
        return 2.0 * self.half_angle


def vector_angle(u, v):
    """Angle between vectors along the last axis, accurate near 0 and pi"""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u = u / np.linalg.norm(u, axis=-1, keepdims=True)
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    dot = np.sum(u * v, axis=-1)
    rejection = np.linalg.norm(u - dot[..., None] * v, axis=-1)
    return np.arctan2(rejection, dot)


# ---------------------------------------------------------------------------
# Minimal enclosing spherical cap (randomized incremental, Welzl style)
# ---------------------------------------------------------------------------

def _in_cap(x, center, radius):
    return vector_angle(x, center) <= radius + CAP_TOL


def _cap_from_two(a, b):
    mid = a + b
    norm = np.linalg.norm(mid)
    if norm < 1e-12:
        raise NoEnclosingCone("antipodal directions admit no enclosing cone")
    center = mid / norm
    return center, float(max(vector_angle(a, center), vector_angle(b, center)))


def _cap_from_three(a, b, c):
    normal = np.cross(b - a, c - a)
    norm = np.linalg.norm(normal)
    if norm > 1e-14 and abs(normal @ a) / norm > 1e-12:
        center = normal / norm
        if center @ a < 0:
            center = -center
        radius = max(vector_angle(a, center), vector_angle(b, center), vector_angle(c, center))
        return center, float(radius)
    # degenerate: three directions on one great circle
    best = None
    for p, q in ((a, b), (a, c), (b, c)):
        try:
            center, radius = _cap_from_two(p, q)
        except NoEnclosingCone:
            continue
        if all(_in_cap(x, center, radius) for x in (a, b, c)):
            if best is None or radius < best[1]:
                best = (center, radius)
    if best is None:
        raise NoEnclosingCone("directions do not fit in an open half-space")
    return best


def minimal_cap(points, seed=0):
    """
    Smallest spherical cap containing unit 3-vectors.

    Returns (center, angular radius). The shuffle is seeded so the result is
    reproducible; the minimal cap itself does not depend on input order.
    """
    pts = np.asarray(points, dtype=float)
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    pts = pts[np.random.default_rng(seed).permutation(len(pts))]

    center, radius = pts[0], 0.0
    for i in range(1, len(pts)):
        if _in_cap(pts[i], center, radius):
            continue
        center, radius = pts[i], 0.0
        for j in range(i):
            if _in_cap(pts[j], center, radius):
                continue
            center, radius = _cap_from_two(pts[i], pts[j])
            for k in range(j):
                if not _in_cap(pts[k], center, radius):
                    center, radius = _cap_from_three(pts[i], pts[j], pts[k])

    if radius >= np.pi / 2 - CAP_TOL or np.any(vector_angle(pts, center) > radius + 1e-9):
        raise NoEnclosingCone("directions span more than a half-space")
    return center, radius


def smallest_enclosing_cone(dirs, base: SpherePoint) -> Cone:
    """Cone of minimal half angle at base containing every direction in dirs"""
    vectors = np.array([d.v if isinstance(d, TangentVector) else d for d in dirs], dtype=float)
    if vectors.ndim != 2 or len(vectors) == 0:
        raise ValueError("need at least one direction")
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms < 1e-14):
        raise ZeroVector("zero vector among cone generators")
    X = base.ambient()
    coords = to_frame_coords(np.broadcast_to(X, vectors.shape), vectors / norms[:, None])
    center, radius = minimal_cap(coords)
    axis = from_frame_coords(X, center)
    axis = axis / np.linalg.norm(axis)
    return Cone(TangentVector(base, axis), float(radius))


def is_interior(v, cone: Cone, tol=0.0) -> bool:
    """Strict angular interiority: angle(v, axis) < half_angle - tol"""
    vec = v.v if isinstance(v, TangentVector) else np.asarray(v, dtype=float)
    if np.linalg.norm(vec) < 1e-14:
        raise ZeroVector("interiority is undefined for the zero vector")
    return bool(vector_angle(vec, cone.axis.v) < cone.half_angle - tol)


# ---------------------------------------------------------------------------
# Frames and velocity sampling inside cones
# ---------------------------------------------------------------------------

def complement_frame(X, axes):
    """Orthonormal (f1, f2) spanning the part of T_p S^3 orthogonal to each axis"""
    A = to_frame_coords(X, axes)
    A = A / np.linalg.norm(A, axis=-1, keepdims=True)
    helper = np.zeros_like(A)
    use_first = np.abs(A[..., 0]) < 0.9
    helper[..., 0] = np.where(use_first, 1.0, 0.0)
    helper[..., 1] = np.where(use_first, 0.0, 1.0)
    f1 = np.cross(A, helper)
    f1 /= np.linalg.norm(f1, axis=-1, keepdims=True)
    f2 = np.cross(A, f1)
    return from_frame_coords(X, f1), from_frame_coords(X, f2)


def cone_direction(axes, f1, f2, polar, azimuth):
    c, s = np.cos(polar)[..., None], np.sin(polar)[..., None]
    return c * axes + s * (np.cos(azimuth)[..., None] * f1 + np.sin(azimuth)[..., None] * f2)


def sample_cone_directions(rng, X, axes, half_angles, model="cap"):
    """
    Unit directions inside the cones.

    cap:  uniform over the spherical cap of directions
    disk: uniform over the flat base disk at unit height along the axis
    """
    n = len(X)
    f1, f2 = complement_frame(X, axes)
    u = rng.random(n)
    azimuth = 2.0 * np.pi * rng.random(n)
    if model == "cap":
        cos_polar = 1.0 - u * (1.0 - np.cos(half_angles))
        polar = np.arccos(np.clip(cos_polar, -1.0, 1.0))
    elif model == "disk":
        polar = np.arctan(np.tan(half_angles) * np.sqrt(u))
    else:
        raise ValueError(f"unknown velocity model {model!r}; expected one of {VELOCITY_MODELS}")
    return cone_direction(axes, f1, f2, polar, azimuth)


def _cap_boundary(X, axis, half_angle, count):
    if half_angle <= 0.0:
        return axis[None, :]
    f1, f2 = complement_frame(X[None, :], axis[None, :])
    azimuth = 2.0 * np.pi * np.arange(count) / count
    ring = cone_direction(np.broadcast_to(axis, (count, 4)), np.broadcast_to(f1[0], (count, 4)),
                          np.broadcast_to(f2[0], (count, 4)), np.full(count, half_angle), azimuth)
    return np.vstack([axis[None, :], ring])


# ---------------------------------------------------------------------------
# Cone fields
# ---------------------------------------------------------------------------

class ConeField:
    """
    Base class: subclasses provide generators(p).

    cone_arrays/inner_angles are the vectorized entry points of the Monte Carlo
    kernels; the base versions loop over enclosing().
    """
    name = "field"

    def __init__(self):
        self._enclosing = lru_cache(maxsize=65536)(self._compute_enclosing)

    def generators(self, p: SpherePoint) -> np.ndarray:
        raise NotImplementedError

    def _compute_enclosing(self, p):
        return smallest_enclosing_cone(self.generators(p), p)

    def enclosing(self, p: SpherePoint) -> Cone:
        return self._enclosing(p)

    def cone_arrays(self, X):
        X = np.atleast_2d(X)
        cones = [self.enclosing(SpherePoint.from_ambient(x)) for x in X]
        axes = np.array([c.axis.v for c in cones])
        return axes, np.array([c.half_angle for c in cones])

    def inner_angles(self, X):
        return 2.0 * self.cone_arrays(X)[1]

    def describe(self):
        return self.name


class HopfRayField(ConeField):
    """The degenerate ray field spanned by the Hopf/Reeb direction"""
    name = "hopf"

    def generators(self, p):
        return reeb_array(p.ambient())[None, :]

    def cone_arrays(self, X):
        X = np.atleast_2d(X)
        return reeb_array(X), np.zeros(len(X))


def smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


class ReebConeField(ConeField):
    """
    Solid round cone about the Reeb axis.

    With collar_eps > 0 the half angle is alpha0 * smoothstep(|z2| / collar_eps),
    so the cone collapses to the binding tangent ray on B; collar_eps = 0 gives the
    constant-angle field.
    """
    name = "reeb_cone"

    def __init__(self, alpha0=0.2, collar_eps=0.3, boundary_count=24):
        super().__init__()
        if not 0.0 <= alpha0 < np.pi / 2:
            raise ValueError(f"alpha0 must lie in [0, pi/2), got {alpha0}")
        if collar_eps < 0:
            raise ValueError(f"collar_eps must be nonnegative, got {collar_eps}")
        self.alpha0 = float(alpha0)
        self.collar_eps = float(collar_eps)
        self.boundary_count = int(boundary_count)

    def half_angles(self, X):
        X = np.atleast_2d(X)
        if self.collar_eps == 0.0:
            return np.full(len(X), self.alpha0)
        return self.alpha0 * smoothstep(binding_distance(X) / self.collar_eps)

    def generators(self, p):
        X = p.ambient()
        return _cap_boundary(X, reeb_array(X), float(self.half_angles(X)[0]), self.boundary_count)

    def cone_arrays(self, X):
        X = np.atleast_2d(X)
        return reeb_array(X), self.half_angles(X)

    def describe(self):
        return f"reeb_cone(alpha0={self.alpha0:g}, collar_eps={self.collar_eps:g})"


class FanField(ConeField):
    """2-dimensional fan from the Reeb direction toward +/- e1, half span beta"""
    name = "fan"

    def __init__(self, beta=0.2, rays=9):
        super().__init__()
        if not 0.0 <= beta < np.pi / 2:
            raise ValueError(f"beta must lie in [0, pi/2), got {beta}")
        self.beta = float(beta)
        self.rays = int(rays)

    def generators(self, p):
        R, e1, _ = tangent_frame(p.ambient())
        u = np.linspace(-self.beta, self.beta, self.rays)[:, None]
        return np.cos(u) * R[None, :] + np.sin(u) * e1[None, :]

    def cone_arrays(self, X):
        X = np.atleast_2d(X)
        return reeb_array(X), np.full(len(X), self.beta)

    def describe(self):
        return f"fan(beta={self.beta:g})"


class TabulatedConeField(ConeField):
    """
    Cone field read from CSV rows x1,y1,x2,y2,ax1,ay1,ax2,ay2,half_angle.

    Axis and half angle are inverse-distance averages over the k nearest tabulated
    base points, with the axis projected back to the tangent space.
    """
    name = "tabulated"
    COLUMNS = ["x1", "y1", "x2", "y2", "ax1", "ay1", "ax2", "ay2", "half_angle"]

    def __init__(self, table, neighbors=4, boundary_count=24):
        super().__init__()
        frame = table if isinstance(table, pd.DataFrame) else pd.read_csv(table)
        missing = [c for c in self.COLUMNS if c not in frame.columns]
        if missing:
            raise ValueError(f"tabulated field is missing columns: {missing}")
        self.bases = frame[self.COLUMNS[:4]].to_numpy(dtype=float)
        self.axes = frame[self.COLUMNS[4:8]].to_numpy(dtype=float)
        self.halves = frame["half_angle"].to_numpy(dtype=float)
        if np.any((self.halves < 0) | (self.halves >= np.pi / 2)):
            raise ValueError("tabulated half angles must lie in [0, pi/2)")
        self.neighbors = min(int(neighbors), len(frame))
        self.boundary_count = int(boundary_count)
        self.tree = cKDTree(self.bases)

    def cone_arrays(self, X):
        X = np.atleast_2d(X)
        dist, idx = self.tree.query(X, k=self.neighbors)
        dist = dist.reshape(len(X), -1)
        idx = idx.reshape(len(X), -1)
        weights = 1.0 / (dist + 1e-12)
        weights /= weights.sum(axis=1, keepdims=True)
        axes = np.einsum("nk,nkd->nd", weights, self.axes[idx])
        axes -= np.sum(axes * X, axis=1, keepdims=True) * X
        norms = np.linalg.norm(axes, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise NoEnclosingCone("interpolated cone axes cancel out")
        return axes / norms, np.sum(weights * self.halves[idx], axis=1)

    def generators(self, p):
        X = p.ambient()
        axes, halves = self.cone_arrays(X[None, :])
        return _cap_boundary(X, axes[0], float(halves[0]), self.boundary_count)


def inner_angle(field: ConeField, p: SpherePoint) -> float:
    return 2.0 * field.enclosing(p).half_angle


# ---------------------------------------------------------------------------
# Curves tangent to a cone field, clocked by the open book
# ---------------------------------------------------------------------------

STEP_RULES = ("axis", "tilted", "sample")
FORWARD_REDRAWS = 64


def advance_theta(X, V, h):
    """
    Move each row of X along the chord X + lam*V and renormalize onto S^3.

    lam is solved in closed form so that arg(z2) grows by exactly h: with
    q = v2/z2 = a + ib, lam = sin(h) / (b cos(h) - a sin(h)). For the Reeb
    direction this is lam = tan(h), an exact Hopf rotation by h.
    """
    X = np.atleast_2d(X)
    V = np.atleast_2d(V)
    if np.any(binding_distance(X) <= BINDING_TOL):
        raise BindingPoint("curve reached the binding; the open-book clock is undefined there")
    q = (V[:, 2] + 1j * V[:, 3]) / (X[:, 2] + 1j * X[:, 3])
    if np.any(q.imag <= 0.0):
        raise FieldDegenerate("step direction with d(theta) <= 0 off the binding")
    denom = q.imag * np.cos(h) - q.real * np.sin(h)
    if np.any(denom <= 0.0):
        raise FieldDegenerate(f"theta step {h:g} is too large for the local cone")
    lam = np.sin(h) / denom
    if np.any(1.0 + lam * q.real <= 0.0):
        raise FieldDegenerate(f"theta step {h:g} wraps past the antipodal page")
    return renormalize(X + lam[:, None] * V)


def forward_rows(X, V, h):
    """Rows whose direction admits a theta step of exactly h (the three advance_theta conditions)"""
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (V[:, 2] + 1j * V[:, 3]) / (X[:, 2] + 1j * X[:, 3])
        denom = q.imag * np.cos(h) - q.real * np.sin(h)
        lam = np.sin(h) / np.where(denom > 0.0, denom, 1.0)
        return (q.imag > 0.0) & (denom > 0.0) & (1.0 + lam * q.real > 0.0)


def step_directions(field_, X, rule="axis", rng=None, model="cap", h=None):
    """
    Velocity per row: the cone axis, a fixed boundary generator, or a random draw.

    With h given, sampled rows that cannot advance theta by h are redrawn up to
    FORWARD_REDRAWS times, so the draw is uniform over the forward part of the
    cone; rows that never succeed take the axis.
    """
    axes, half = field_.cone_arrays(X)
    if np.any(np.linalg.norm(axes, axis=1) < 1e-12):
        raise FieldDegenerate("cone axis vanishes off the binding")
    if rule == "axis":
        return axes
    if rule == "tilted":
        f1, _ = complement_frame(X, axes)
        return np.cos(half)[:, None] * axes + np.sin(half)[:, None] * f1
    if rule == "sample":
        if rng is None:
            raise ValueError("rule 'sample' needs a random generator")
        V = sample_cone_directions(rng, X, axes, half, model)
        if h is None:
            return V
        bad = ~forward_rows(X, V, h)
        for _ in range(FORWARD_REDRAWS):
            if not bad.any():
                break
            idx = np.nonzero(bad)[0]
            V[idx] = sample_cone_directions(rng, X[idx], axes[idx], half[idx], model)
            bad[idx] = ~forward_rows(X[idx], V[idx], h)
        V[bad] = axes[bad]
        return V
    raise ValueError(f"unknown step rule {rule!r}; expected one of {STEP_RULES}")


def theta_schedule(t, step_h):
    """Theta increments summing to t: full steps plus one partial step"""
    if step_h <= 0:
        raise ValueError(f"step_h must be positive, got {step_h}")
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    full = int(np.floor(t / step_h + 1e-9))
    steps = [step_h] * full
    rest = t - full * step_h
    if rest > 1e-12:
        steps.append(rest)
    return steps


def integrate_cone_paths(field_, X, t, step_h=1e-3, rule="axis", rng=None, model="cap",
                         record=False):
    """
    Advance every row of X along field-tangent curves until the theta-lift grows by t.

    Returns (endpoints, arclength, history); history lists the intermediate arrays
    when record is set. Arclength is the sum of great-circle step lengths.
    """
    X = np.array(np.atleast_2d(X), dtype=float)
    arclength = np.zeros(len(X))
    history = [X] if record else []
    for h in theta_schedule(t, step_h):
        V = step_directions(field_, X, rule, rng, model, h)
        Y = advance_theta(X, V, h)
        arclength += great_circle_distance(X, Y)
        X = Y
        if record:
            history.append(X)
    return X, arclength, history


def field_from_config(cfg):
    kind = cfg.get("field.kind", "reeb_cone")
    alpha0 = float(cfg.get("field.alpha0", 0.2))
    if kind == "hopf":
        return HopfRayField()
    if kind == "reeb_cone":
        return ReebConeField(alpha0, float(cfg.get("field.collar_eps", 0.3)))
    if kind == "constant":
        return ReebConeField(alpha0, 0.0)
    if kind == "fan":
        return FanField(alpha0)
    if kind == "tabulated":
        return TabulatedConeField(cfg["field.file"])
    raise ValueError(f"unknown field kind {kind!r}")


# ---------------------------------------------------------------------------
# Adaptedness (the four conditions of an adapted cone structure)
# ---------------------------------------------------------------------------

@dataclass
class FlagResult:
    name: str
    passed: bool
    worst_value: float
    witness: SpherePoint = None


@dataclass
class AdaptednessReport:
    field_name: str
    samples: int
    tol: float
    flags: list = field(default_factory=list)

    @property
    def passed(self):
        return all(f.passed for f in self.flags)

    def flag(self, name):
        return next(f for f in self.flags if f.name == name)


def check_adapted(field_: ConeField, alpha=contact_form_array, samples=10000, tol=1e-9, seed=0):
    """
    Check the four adaptedness conditions on random samples.

    binding_tangent: generators on B are tangent to B (worst = max angle to TB)
    dtheta_section:  d(theta)(v) > 0 for every generator off B (worst = min value)
    alpha_section:   alpha(v) > 0 for every generator off B (worst = min value)
    reeb_interior:   the Reeb vector is interior to the enclosing cone (worst = min margin)
    Violations are reported, never raised.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)

    # (1) binding points z = (e^{i psi}, 0)
    psi = 2.0 * np.pi * rng.random(samples)
    worst_tangent, tangent_witness = 0.0, None
    for x in to_ambient(np.exp(1j * psi), np.zeros(samples, dtype=complex)):
        p = SpherePoint.from_ambient(x)
        gens = field_.generators(p)
        binding_dir = reeb_array(x)
        dots = gens @ binding_dir
        rejection = np.linalg.norm(gens - dots[:, None] * binding_dir, axis=1)
        deviation = float(np.max(np.arctan2(rejection, np.abs(dots))))
        if deviation > worst_tangent:
            worst_tangent, tangent_witness = deviation, p

    # (2)-(4) off-binding points
    X = uniform_sphere(rng, samples)
    X = X[binding_distance(X) > 1e3 * BINDING_TOL]
    worst_dtheta = worst_alpha = worst_margin = np.inf
    dtheta_witness = alpha_witness = margin_witness = None
    for x in X:
        p = SpherePoint.from_ambient(x)
        gens = field_.generators(p)
        base = np.broadcast_to(x, gens.shape)
        unit = gens / np.linalg.norm(gens, axis=1, keepdims=True)
        d_min = float(np.min(dtheta_array(base, unit)))
        a_min = float(np.min(alpha(base, unit)))
        if d_min < worst_dtheta:
            worst_dtheta, dtheta_witness = d_min, p
        if a_min < worst_alpha:
            worst_alpha, alpha_witness = a_min, p
        cone = field_.enclosing(p)
        margin = cone.half_angle - float(vector_angle(reeb_array(x), cone.axis.v))
        if margin < worst_margin:
            worst_margin, margin_witness = margin, p

    flags = [
        FlagResult("binding_tangent", worst_tangent <= tol, worst_tangent,
                   tangent_witness if worst_tangent > tol else None),
        FlagResult("dtheta_section", worst_dtheta > 0.0, worst_dtheta,
                   dtheta_witness if worst_dtheta <= 0.0 else None),
        FlagResult("alpha_section", worst_alpha > 0.0, worst_alpha,
                   alpha_witness if worst_alpha <= 0.0 else None),
        FlagResult("reeb_interior", worst_margin > tol, worst_margin,
                   margin_witness if worst_margin <= tol else None),
    ]
    return AdaptednessReport(getattr(field_, "name", "field"), samples, tol, flags)


def main():
    alpha0 = float(sys.argv[1]) if len(sys.argv) > 1 else 0.2
    collar = float(sys.argv[2]) if len(sys.argv) > 2 else 0.3
    samples = int(sys.argv[3]) if len(sys.argv) > 3 else 2000
    field_ = ReebConeField(alpha0, collar)

    print("=" * 60)
    print(f"Adaptedness check: {field_.describe()}")
    print("=" * 60)
    report = check_adapted(field_, samples=samples)
    for flag in report.flags:
        status = "✓" if flag.passed else "❌"
        print(f"  {status} {flag.name:<16} worst={flag.worst_value:.6g}")
    print("=" * 60)
    print("✅ adapted" if report.passed else "⚠ not adapted")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""
Reachability of page sets by cone trajectories

Flat model: in the upper half-space (x, y, z) with z playing the open-book time,
curves whose velocity stays in the vertical cone of full opening angle theta fill
at height t the disk of radius t * tan(theta / 2). On S^3 that disk is centered
at the Hopf image of the start; the page-to-page probability is the mass of the
target set B inside it.

Reach laws (the `law` tag of a ReachDisk):
    flat         t * tan(theta/2)
    area_scaled  t * tan(theta/2) * mu(A)
    minkowski    t * tan(theta/2) + r        (A grown by the flat reach)

Usage:
    python3 src/reachability.py [theta] [t] [n]     # half-space oracle vs the laws
"""

import sys
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from cone_field import ConeField, integrate_cone_paths, theta_schedule
from errors import AngleOutOfRange, EmptyA
from invariants import integrability_max
from page_regions import DiskRegion, FullPage, PageRegion, measure_in_disk
from seeding import run_chunked
from sphere_geometry import (
    PageMeasure,
    PagePoint,
    SpherePoint,
    page_to_sphere,
)

REACH_LAWS = ("flat", "area_scaled", "minkowski")
DEFAULT_STEP_H = 1e-3
Z95 = float(norm.ppf(0.975))


@dataclass(frozen=True)
class HalfSpaceState:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.z < 0:
            raise ValueError(f"half-space states need z >= 0, got {self.z}")


@dataclass(frozen=True)
class ReachDisk:
    center: PagePoint
    radius: float
    t: float
    theta: float
    law: str = "flat"


@dataclass
class Trajectory:
    """Sampled cone trajectory; theta_lift[k] = k * step except for a final partial step"""
    samples: list
    step: float
    theta_lift: np.ndarray
    arclength: float

    def velocities(self):
        """Chord directions projected to the tangent space at each left endpoint"""
        X = np.array([p.ambient() for p in self.samples])
        chords = X[1:] - X[:-1]
        base = X[:-1]
        return chords - np.sum(chords * base, axis=1, keepdims=True) * base


@dataclass
class HalfSpaceReach:
    theta: float
    t: float
    max_radius: float
    endpoints: np.ndarray = field(repr=False)
    flat_radius: float = 0.0
    tan_full_radius: float = 0.0

    @property
    def rel_error(self):
        if self.flat_radius == 0.0:
            return abs(self.max_radius)
        return abs(self.max_radius - self.flat_radius) / self.flat_radius

    def contained(self, slack=1e-9):
        return bool(np.all(np.hypot(self.endpoints[:, 0], self.endpoints[:, 1])
                           <= self.flat_radius + slack))


@dataclass
class McEstimate:
    estimate: float
    ci_lo: float
    ci_hi: float
    stderr: float
    n: int
    endpoints: np.ndarray = field(default=None, repr=False)


@dataclass
class CorollaryBound:
    """
    Bound readings for theta = I_M of the field.

    area_scaled is the bound itself; conditional divides by the page mass of
    the disk; certified is 1 when B meets the Minkowski reach disk and 0 when no
    trajectory can reach B at all.
    """
    theta: float
    area_scaled: float
    conditional: float
    minkowski: float
    minkowski_conditional: float
    certified: float

    @property
    def value(self):
        return self.area_scaled


def _check_angle(theta):
    if not 0.0 <= theta < np.pi:
        raise AngleOutOfRange(f"opening angle must lie in [0, pi), got {theta!r}")


def reach_radius(t, theta, allow_infinite=False):
    """Radius t * tan(theta/2) of the future time-t disk; theta is the full opening angle"""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if allow_infinite and theta >= np.pi:
        return np.inf
    _check_angle(theta)
    return t * np.tan(theta / 2.0)


def wilson_interval(hits, n, z=Z95):
    p = hits / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denom
    half = z * np.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


# ---------------------------------------------------------------------------
# Half-space oracle
# ---------------------------------------------------------------------------

def _cone_speeds(rng, beta, m, model):
    """Horizontal speed tan(polar) per unit vertical speed"""
    u = rng.random(m)
    if model == "cap":
        polar = np.arccos(np.clip(1.0 - u * (1.0 - np.cos(beta)), -1.0, 1.0))
        return np.tan(polar)
    if model == "disk":
        return np.tan(beta) * np.sqrt(u)
    raise ValueError(f"unknown velocity model {model!r}")


def halfspace_reach_mc(theta, t, n, seed=0, pieces=1, velocity_model="cap", threads=None):
    """
    Endpoints at height t of n piecewise-straight curves from the origin.

    Each piece has a direction drawn inside the vertical cone of half angle theta/2,
    scaled to unit vertical speed. pieces = 1 gives the extremal straight curves.
    """
    if n < 1:
        raise ValueError(f"need at least one sample, got n = {n}")
    if pieces < 1:
        raise ValueError(f"pieces must be >= 1, got {pieces}")
    _check_angle(theta)
    beta = theta / 2.0
    dt = t / pieces

    def kernel(rng, start, stop):
        m = stop - start
        xy = np.zeros((m, 2))
        for _ in range(pieces):
            speed = _cone_speeds(rng, beta, m, velocity_model)
            azimuth = 2.0 * np.pi * rng.random(m)
            xy[:, 0] += dt * speed * np.cos(azimuth)
            xy[:, 1] += dt * speed * np.sin(azimuth)
        return np.column_stack([xy, np.full(m, float(t))])

    endpoints = np.vstack(run_chunked(n, seed, kernel, threads, desc="half-space"))
    radii = np.hypot(endpoints[:, 0], endpoints[:, 1])
    return HalfSpaceReach(theta, t, float(radii.max()), endpoints,
                          flat_radius=reach_radius(t, theta),
                          tan_full_radius=t * np.tan(theta) if theta < np.pi / 2 else np.inf)


# ---------------------------------------------------------------------------
# Page-to-page probability
# ---------------------------------------------------------------------------

def _as_disk(A):
    if not isinstance(A, DiskRegion):
        raise TypeError("the start set A must be a DiskRegion")
    if A.radius <= 0.0:
        raise EmptyA(f"start disk has radius {A.radius!r}")
    if abs(A.center) > 1.0:
        raise EmptyA("start disk center lies outside the page")
    return A


def hopf_image(w, t):
    """Page coordinate on P_t of the Hopf image of the P_0 point w"""
    return np.asarray(w) * np.exp(1j * t)


def reach_disk(A: DiskRegion, t, theta, measure=PageMeasure.NORMALIZED, law="flat"):
    A = _as_disk(A)
    base = reach_radius(t, theta)
    if law == "flat":
        radius = base
    elif law == "area_scaled":
        radius = base * A.measure(measure)
    elif law == "minkowski":
        radius = base + A.radius
    else:
        raise ValueError(f"unknown reach law {law!r}; expected one of {REACH_LAWS}")
    return ReachDisk(PagePoint(t, complex(hopf_image(A.center, t))), float(radius), t, theta, law)


def prob_formula(A: DiskRegion, B: PageRegion, t, theta, measure=PageMeasure.NORMALIZED,
                 law="area_scaled", conditional=False):
    """
    mu(B ∩ D) for the reach disk D of A, clipped to the page.

    conditional=True divides by mu(D ∩ page) instead (0 for a zero-radius disk).
    """
    if t <= 0:
        raise ValueError(f"time must be positive, got {t}")
    measure = PageMeasure.parse(measure)
    disk = reach_disk(A, t, theta, measure, law)
    value = measure_in_disk(B, disk.center.w, disk.radius, measure)
    if not conditional:
        return value
    mass = measure_in_disk(FullPage(), disk.center.w, disk.radius, measure)
    return value / mass if mass > 0.0 else 0.0


def sample_disk(rng, A: DiskRegion, m, max_rounds=1000):
    """m points uniform (Euclidean) in A ∩ page"""
    out = np.empty(0, dtype=complex)
    for _ in range(max_rounds):
        k = m - len(out)
        w = A.center + A.radius * np.sqrt(rng.random(k)) * np.exp(2j * np.pi * rng.random(k))
        out = np.concatenate([out, w[np.abs(w) < 1.0]])
        if len(out) >= m:
            return out[:m]
    raise EmptyA("start disk barely meets the page; rejection sampling gave up")


def prob_mc(field_: ConeField, A: DiskRegion, B: PageRegion, t, n, seed=0, velocity_model="cap",
            step_h=DEFAULT_STEP_H, threads=None):
    """
    Fraction of cone trajectories from uniform starts in A (on P_0) that land in B (on P_t).

    Every step draws a fresh direction in the local cone and moves the theta-lift
    by exactly step_h. Returns the estimate with a Wilson 95% interval.
    """
    if n < 100:
        raise ValueError(f"prob_mc needs n >= 100, got {n}")
    A = _as_disk(A)

    def kernel(rng, start, stop):
        w = sample_disk(rng, A, stop - start)
        X0 = page_to_sphere(np.zeros(len(w)), w)
        X, _, _ = integrate_cone_paths(field_, X0, t, step_h, "sample", rng, velocity_model)
        return X[:, 0] + 1j * X[:, 1]

    endpoints = np.concatenate(run_chunked(n, seed, kernel, threads, desc="prob_mc"))
    hits = int(np.count_nonzero(B.contains(endpoints)))
    p = hits / n
    lo, hi = wilson_interval(hits, n)
    return McEstimate(p, lo, hi, float(np.sqrt(p * (1.0 - p) / n)), n, endpoints)


def trace_trajectory(field_: ConeField, start: SpherePoint, t, step_h=DEFAULT_STEP_H,
                     rule="axis", rng=None, velocity_model="cap"):
    X, arclength, history = integrate_cone_paths(field_, start.ambient()[None, :], t, step_h,
                                                 rule, rng, velocity_model, record=True)
    lift = np.concatenate([[0.0], np.cumsum(theta_schedule(t, step_h))])
    samples = [SpherePoint.from_ambient(x[0]) for x in history]
    return Trajectory(samples, step_h, lift, float(arclength[0]))


def corollary_bound(field_: ConeField, A: DiskRegion, B: PageRegion, t,
                    measure=PageMeasure.NORMALIZED, im=None, n_samples=20_000, seed=0):
    """
    Probability bound with theta = I_M(field).

    im may be passed to skip the integrability_max search.
    """
    if im is None:
        im = integrability_max(field_, n_samples, seed).value
    theta = float(im)
    measure = PageMeasure.parse(measure)
    mink = reach_disk(A, t, theta, measure, "minkowski")
    reach = measure_in_disk(B, mink.center.w, mink.radius, measure)
    return CorollaryBound(
        theta=theta,
        area_scaled=prob_formula(A, B, t, theta, measure, "area_scaled"),
        conditional=prob_formula(A, B, t, theta, measure, "area_scaled", conditional=True),
        minkowski=reach,
        minkowski_conditional=prob_formula(A, B, t, theta, measure, "minkowski", conditional=True),
        certified=1.0 if reach > 1e-12 else 0.0,
    )


def main():
    theta = float(sys.argv[1]) if len(sys.argv) > 1 else np.pi / 2
    t = float(sys.argv[2]) if len(sys.argv) > 2 else 1.0
    n = int(sys.argv[3]) if len(sys.argv) > 3 else 100_000

    print("=" * 60)
    print(f"HALF-SPACE REACH: theta={theta:.6f}, t={t:g}, n={n}")
    print("=" * 60)
    result = halfspace_reach_mc(theta, t, n)
    print(f"  Monte Carlo max radius:  {result.max_radius:.6f}")
    print(f"  t*tan(theta/2):          {result.flat_radius:.6f}")
    print(f"  t*tan(theta):            {result.tan_full_radius:.6f}")
    print(f"  relative error:          {result.rel_error:.3%}")
    print(f"  {'✓' if result.contained() else '❌'} endpoints inside t*tan(theta/2)")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""
Integrability measures, sections and Calabi-type invariants

A section assigns to each page point w of P_0 (off the binding) a curve that
leaves the page and comes back to it; return_time(w) is the first return time
and return_map(w) the page point it comes back to. Everything here works on
arrays of page coordinates w (complex) so the page quadrature rules can be
used directly.

Usage:
    python3 src/invariants.py [n_samples]
"""

import sys
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from tqdm import tqdm

from cone_field import ConeField, ReebConeField, integrate_cone_paths
from errors import NonIntegrableTau
from page_regions import FullPage, PageRegion
from seeding import run_chunked
from sphere_geometry import (
    DEFAULT_ANGULAR,
    DEFAULT_RADIAL,
    PageMeasure,
    SpherePoint,
    TWO_PI,
    contact_volume,
    page_coordinate_at_zero,
    page_to_sphere,
    renormalize,
    round_volume,
    uniform_sphere,
)

DEFAULT_TAU_CAP = 1e6
VOLUME_KINDS = ("contact", "round")
SECTION_KINDS = ("reeb_hopf", "perturbed", "trajectory", "constant")


@dataclass
class ReturnData:
    """n-th return points and cumulative return times; taus[k] is tau_{k+1}"""
    n: int
    points: np.ndarray
    tau_n: np.ndarray
    taus: list = field(default_factory=list, repr=False)


class Section:
    """Base class; subclasses implement first_return(w) -> (points, tau)"""
    kind = "section"
    measure_preserving = False

    def first_return(self, w):
        raise NotImplementedError

    def return_time(self, w):
        return self.first_return(w)[1]

    def return_map(self, w):
        return self.first_return(w)[0]

    def return_time_at(self, X):
        """tau read at the page point reached by flowing X back to P_0 along its Hopf circle"""
        return self.return_time(page_coordinate_at_zero(np.atleast_2d(X)))

    def returns(self, w, n):
        if n < 1:
            raise ValueError(f"return index must be >= 1, got {n}")
        points = np.asarray(w, dtype=complex)
        total = np.zeros(points.shape)
        taus = []
        for _ in range(n):
            points, tau = self.first_return(points)
            total = total + tau
            taus.append(total)
        return ReturnData(n, points, total, taus)

    def describe(self):
        return self.kind


class ReebHopfSection(Section):
    """Hopf fibers: every point returns to itself after time 2pi"""
    kind = "reeb_hopf"
    measure_preserving = True

    def first_return(self, w):
        w = np.asarray(w, dtype=complex)
        return w.copy(), np.full(w.shape, TWO_PI)


class ConstantTauSection(Section):
    kind = "constant"
    measure_preserving = True

    def __init__(self, tau=TWO_PI):
        if tau <= 0:
            raise ValueError(f"return time must be positive, got {tau}")
        self.tau = float(tau)

    def first_return(self, w):
        w = np.asarray(w, dtype=complex)
        return w.copy(), np.full(w.shape, self.tau)

    def describe(self):
        return f"constant(tau={self.tau:g})"


class PerturbedFlowSection(Section):
    """
    Hopf flow run at speed 1 + epsilon * (Re z2)^2.

    Orbits are still the Hopf circles, so the return map is the identity, but the
    return time tau = int_0^{2pi} dt / (1 + epsilon * s^2 cos^2 t) = 2pi / sqrt(1 + epsilon s^2)
    varies with s = |z2|. It is computed with a periodic trapezoid rule in t.
    """
    kind = "perturbed"
    measure_preserving = True

    def __init__(self, epsilon=0.5, nodes=256):
        if epsilon <= -1.0:
            raise ValueError(f"epsilon must exceed -1 so the speed stays positive, got {epsilon}")
        self.epsilon = float(epsilon)
        self.nodes = int(nodes)

    def first_return(self, w):
        w = np.asarray(w, dtype=complex)
        t = TWO_PI * np.arange(self.nodes) / self.nodes
        s = np.sqrt(np.clip(1.0 - np.abs(w) ** 2, 0.0, None))
        bump = (s[..., None] * np.cos(t)) ** 2
        tau = TWO_PI * np.mean(1.0 / (1.0 + self.epsilon * bump), axis=-1)
        return w.copy(), tau

    def describe(self):
        return f"perturbed(epsilon={self.epsilon:g})"


class TrajectoryFamilySection(Section):
    """
    Curves tangent to a cone field, one per page point.

    rule 'axis' follows the cone axis, rule 'tilted' a fixed boundary generator.
    Time is great-circle arclength; the curve is stopped when its theta-lift reaches 2pi.
    """
    kind = "trajectory"

    def __init__(self, field_: ConeField, rule="axis", step_h=1e-2):
        if rule not in ("axis", "tilted"):
            raise ValueError(f"unknown trajectory rule {rule!r}")
        self.field = field_
        self.rule = rule
        self.step_h = float(step_h)

    def first_return(self, w):
        w = np.asarray(w, dtype=complex)
        flat = w.ravel()
        X0 = page_to_sphere(np.zeros(flat.shape), flat)
        X, arclength, _ = integrate_cone_paths(self.field, X0, TWO_PI, self.step_h, self.rule)
        return page_coordinate_at_zero(X).reshape(w.shape), arclength.reshape(w.shape)

    def describe(self):
        return f"trajectory({self.field.describe()}, rule={self.rule}, h={self.step_h:g})"


def section_from_config(cfg, field_=None):
    kind = cfg.get("section.kind", "reeb_hopf")
    if kind == "reeb_hopf":
        return ReebHopfSection()
    if kind == "perturbed":
        return PerturbedFlowSection(float(cfg.get("section.epsilon", 0.5)))
    if kind == "constant":
        return ConstantTauSection(float(cfg.get("section.tau", TWO_PI)))
    if kind == "trajectory":
        if field_ is None:
            raise ValueError("trajectory sections need a cone field")
        return TrajectoryFamilySection(field_, cfg.get("section.rule", "axis"),
                                       float(cfg.get("section.step_h", 1e-2)))
    raise ValueError(f"unknown section kind {kind!r}")


def return_map_lipschitz(section: Section, w, delta=1e-4):
    """Largest ratio |Phi(w + d) - Phi(w)| / |d| over the offsets d = delta, i*delta"""
    w = np.asarray(w, dtype=complex)
    base = section.return_map(w)
    ratios = [np.abs(section.return_map(w + d) - base) / delta for d in (delta, 1j * delta)]
    return float(np.max(ratios))


# ---------------------------------------------------------------------------
# Integrability measures
# ---------------------------------------------------------------------------

@dataclass
class IntegrabilityEstimate:
    value: float
    stderr: float
    n: int
    volume_kind: str


@dataclass
class IntegrabilityMax:
    value: float
    polish_delta: float
    argmax: SpherePoint
    n: int


def total_volume(kind="contact", lattice=48):
    if kind == "contact":
        return contact_volume(lattice)
    if kind == "round":
        return round_volume(lattice)
    raise ValueError(f"unknown volume kind {kind!r}; expected one of {VOLUME_KINDS}")


def integrability_mean(field_: ConeField, n_samples=100_000, seed=0, volume="contact",
                       threads=None, lattice=48):
    """Mean inner angle over uniform S^3 samples times the total volume"""
    if n_samples < 2:
        raise ValueError("integrability_mean needs at least 2 samples")

    def kernel(rng, start, stop):
        return field_.inner_angles(uniform_sphere(rng, stop - start))

    values = np.concatenate(run_chunked(n_samples, seed, kernel, threads, desc="I_m"))
    vol = total_volume(volume, lattice)
    return IntegrabilityEstimate(float(vol * values.mean()),
                                 float(vol * values.std(ddof=1) / np.sqrt(n_samples)),
                                 n_samples, volume)


def integrability_max(field_: ConeField, n_samples=20_000, seed=0, polish_steps=20,
                      threads=None):
    """
    Max inner angle over uniform samples, then a gradient-free polish.

    The polish draws 16 perturbations of the incumbent per step with a radius that
    shrinks by 0.7 per step and keeps the best; polish_delta is its total gain.
    """
    if n_samples < 1:
        raise ValueError("integrability_max needs at least 1 sample")

    def kernel(rng, start, stop):
        X = uniform_sphere(rng, stop - start)
        return X, field_.inner_angles(X)

    chunks = run_chunked(n_samples, seed, kernel, threads, desc="I_M")
    X = np.vstack([c[0] for c in chunks])
    values = np.concatenate([c[1] for c in chunks])
    k = int(np.argmax(values))
    best_x, best = X[k], float(values[k])
    sampled = best

    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 0x5EED])
    radius = 0.1
    for _ in range(polish_steps):
        candidates = renormalize(best_x + radius * rng.standard_normal((16, 4)))
        cand_values = field_.inner_angles(candidates)
        j = int(np.argmax(cand_values))
        if cand_values[j] > best:
            best_x, best = candidates[j], float(cand_values[j])
        radius *= 0.7

    return IntegrabilityMax(best, best - sampled, SpherePoint.from_ambient(best_x), n_samples)


# ---------------------------------------------------------------------------
# Calabi invariant and its growth under returns
# ---------------------------------------------------------------------------

def _region_nodes(A: PageRegion, radial, angular):
    w, weights = A.quadrature(radial, angular)
    keep = weights > 0
    return np.asarray(w)[keep], np.asarray(weights)[keep]


def _check_tau(tau, cap):
    if not np.all(np.isfinite(tau)) or np.any(tau > cap):
        worst = float(np.nanmax(np.where(np.isfinite(tau), tau, np.inf)))
        raise NonIntegrableTau(f"return time {worst:.6g} exceeds the cap {cap:g}; "
                               "the return map does not extend continuously here")


def calabi(section: Section, A: PageRegion, measure=PageMeasure.CONTACT,
           tau_cap=DEFAULT_TAU_CAP, radial=DEFAULT_RADIAL, angular=DEFAULT_ANGULAR):
    """Integral of the return time over A"""
    measure = PageMeasure.parse(measure)
    w, weights = _region_nodes(A, radial, angular)
    if len(w) == 0:
        return 0.0
    tau = section.return_time(w)
    _check_tau(tau, tau_cap)
    return float(measure.density * np.sum(tau * weights))


def calabi_growth(section: Section, A: PageRegion, measure=PageMeasure.CONTACT, n_max=10,
                  tau_cap=DEFAULT_TAU_CAP, radial=DEFAULT_RADIAL, angular=DEFAULT_ANGULAR,
                  delta=1e-6):
    """
    CAL^n = integral over A_n = Phi_n(A) of tau_n o Phi_n^{-1}.

    Each point y of A_n carries the cumulative time tau_n(x) of the n returns
    that brought its preimage x in A to y; the return time is never re-read at
    y itself. Pulled back to A this is sum of tau_n(x) |det D Phi_n(x)| w_x, so
    the n = 1 row equals calabi(section, A) whenever Phi preserves the measure.
    The Jacobian is a central difference of the n-th return map, tracked by
    iterating four perturbed copies of the nodes; it is 1 for measure-preserving
    sections. Columns: n, cal_n, cal_n_over_n, mu_A_n.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    measure = PageMeasure.parse(measure)
    w, weights = _region_nodes(A, radial, angular)
    rows = []
    if len(w) == 0:
        return pd.DataFrame([{"n": n, "cal_n": 0.0, "cal_n_over_n": 0.0, "mu_A_n": 0.0}
                             for n in range(1, n_max + 1)])

    track_jacobian = not section.measure_preserving
    points = w.copy()
    nearby = [w + delta, w - delta, w + 1j * delta, w - 1j * delta] if track_jacobian else []
    tau_n = np.zeros(len(w))
    for n in tqdm(range(1, n_max + 1), desc="CAL^n", disable=None, leave=False):
        points, tau = section.first_return(points)
        _check_tau(tau, tau_cap)
        tau_n = tau_n + tau
        if track_jacobian:
            nearby = [section.return_map(p) for p in nearby]
            du = (nearby[0] - nearby[1]) / (2.0 * delta)
            dv = (nearby[2] - nearby[3]) / (2.0 * delta)
            det = np.abs(du.real * dv.imag - du.imag * dv.real)
        else:
            det = np.ones(len(w))
        cal_n = float(measure.density * np.sum(tau_n * det * weights))
        rows.append({"n": n, "cal_n": cal_n, "cal_n_over_n": cal_n / n,
                     "mu_A_n": float(measure.density * np.sum(det * weights))})
    return pd.DataFrame(rows, columns=["n", "cal_n", "cal_n_over_n", "mu_A_n"])


# ---------------------------------------------------------------------------
# Uniform distribution on a page
# ---------------------------------------------------------------------------

@dataclass
class PageStats:
    mean: complex
    variance: float
    variance_1d: float
    page_mass: float
    note: str


def page_uniform_stats(measure=PageMeasure.NORMALIZED, radial=DEFAULT_RADIAL,
                       angular=DEFAULT_ANGULAR):
    """
    Moments of the uniform law on a page seen as a flat disk of area mu(P).

    variance is E|x - Ex|^2 for that disk, i.e. mu(P) / (2 pi);
    variance_1d is mu(P)^2 / 12, the one-dimensional uniform formula.
    """
    measure = PageMeasure.parse(measure)
    w, weights = _region_nodes(FullPage(), radial, angular)
    mass = measure.density * np.sum(weights)
    scale = np.sqrt(mass / np.pi)
    mean = np.sum(w * weights) / np.sum(weights)
    second = np.sum(np.abs(w - mean) ** 2 * weights) / np.sum(weights)
    return PageStats(
        mean=complex(scale * mean),
        variance=float(scale ** 2 * second),
        variance_1d=float(mass ** 2 / 12.0),
        page_mass=float(mass),
        note="variance: planar disk of area mu(P); variance_1d: mu(P)^2/12 (1-D uniform law)",
    )


def main():
    n_samples = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
    field_ = ReebConeField(0.2, 0.3)

    print("=" * 60)
    print(f"INTEGRABILITY: {field_.describe()}")
    print("=" * 60)
    mean = integrability_mean(field_, n_samples)
    peak = integrability_max(field_, n_samples)
    print(f"  I_m = {mean.value:.6f} ± {mean.stderr:.2g}  (contact volume {contact_volume():.6f})")
    print(f"  I_M = {peak.value:.6f}  (polish gain {peak.polish_delta:.2g})")

    print("\nCALABI (Reeb/Hopf section, contact measure)")
    growth = calabi_growth(ReebHopfSection(), FullPage(), PageMeasure.CONTACT, n_max=5)
    print(growth.to_string(index=False))

    stats = page_uniform_stats()
    print(f"\n  page mean {stats.mean:.3g}, variance {stats.variance:.6f}, "
          f"1-D uniform variance {stats.variance_1d:.6f}")
    print("✅ done")


if __name__ == "__main__":
    main()

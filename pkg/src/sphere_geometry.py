#!/usr/bin/env python3
"""
Concrete model of S^3 = OB(D^2, 1) with the trivial open book

Points live in the complex chart (z1, z2) with |z1|^2 + |z2|^2 = 1, or as rows
(x1, y1, x2, y2) of ambient R^4 arrays for the vectorized kernels.

- binding B = {z2 = 0}, open-book angle theta = arg(z2)
- page P_phi = closure of {theta = phi}, parameterized by the closed unit z1-disk
- Hopf flow (z1, z2) -> (e^{it} z1, e^{it} z2), the Reeb flow of alpha = sum(x dy - y dx)

Usage:
    python3 src/sphere_geometry.py            # print the page/volume identities
"""

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from errors import BindingPoint, QuadratureDivergence

TWO_PI = 2.0 * np.pi
BINDING_TOL = 1e-12
NORM_TOL = 1e-12
TANGENCY_TOL = 1e-10

# Quadrature defaults (config keys quad.radial, quad.angular, quad.volume_lattice)
DEFAULT_RADIAL = 64
DEFAULT_ANGULAR = 128
DEFAULT_VOLUME_LATTICE = 48


@dataclass(frozen=True)
class SpherePoint:
    """A point of S^3 in the complex chart"""
    z1: complex
    z2: complex

    def __post_init__(self):
        norm2 = abs(self.z1) ** 2 + abs(self.z2) ** 2
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValueError(f"point is off the unit sphere: |z|^2 = {norm2!r}")

    @classmethod
    def normalized(cls, z1, z2):
        scale = np.sqrt(abs(z1) ** 2 + abs(z2) ** 2)
        return cls(complex(z1 / scale), complex(z2 / scale))

    @classmethod
    def from_ambient(cls, x):
        x = np.asarray(x, dtype=float)
        return cls.normalized(complex(x[0], x[1]), complex(x[2], x[3]))

    def ambient(self):
        return np.array([self.z1.real, self.z1.imag, self.z2.real, self.z2.imag])

    @property
    def on_binding(self):
        return abs(self.z2) <= BINDING_TOL


@dataclass(frozen=True)
class PagePoint:
    """Point (phi, w) of the page P_phi; |w| = 1 is the binding"""
    phi: float
    w: complex

    def __post_init__(self):
        if abs(self.w) > 1.0 + NORM_TOL:
            raise ValueError(f"page coordinate outside the unit disk: |w| = {abs(self.w)!r}")
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)

    def to_sphere(self):
        return embed_page_point(self)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Ambient 4-vector v tangent to S^3 at base"""
    base: SpherePoint
    v: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "v", v)
        if abs(float(v @ self.base.ambient())) > TANGENCY_TOL * max(1.0, float(np.linalg.norm(v))):
            raise ValueError("vector is not tangent to the sphere at its base point")

    @property
    def norm(self):
        return float(np.linalg.norm(self.v))


class PageMeasure(Enum):
    """The two page measures; Contact comes from d(alpha), Normalized has total mass 1"""
    CONTACT = "contact"
    NORMALIZED = "normalized"

    @property
    def density(self):
        # per unit Euclidean area of the z1-disk
        return 2.0 if self is PageMeasure.CONTACT else 1.0 / np.pi

    @property
    def page_mass(self):
        return self.density * np.pi

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


# ---------------------------------------------------------------------------
# Vectorized kernels on (n, 4) ambient arrays
# ---------------------------------------------------------------------------

def to_ambient(z1, z2):
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    return np.stack([z1.real, z1.imag, z2.real, z2.imag], axis=-1)


def from_ambient(X):
    X = np.asarray(X, dtype=float)
    return X[..., 0] + 1j * X[..., 1], X[..., 2] + 1j * X[..., 3]


def renormalize(X):
    return X / np.linalg.norm(X, axis=-1, keepdims=True)


def binding_distance(X):
    return np.hypot(X[..., 2], X[..., 3])


def theta_array(X):
    """Open-book angle arg(z2) in [0, 2pi); raises BindingPoint on B"""
    X = np.asarray(X, dtype=float)
    if np.any(binding_distance(X) <= BINDING_TOL):
        raise BindingPoint("theta is undefined on the binding {z2 = 0}")
    return np.mod(np.arctan2(X[..., 3], X[..., 2]), TWO_PI)


def hopf_flow_array(X, t):
    z1, z2 = from_ambient(X)
    phase = np.exp(1j * np.asarray(t, dtype=float))
    return to_ambient(phase * z1, phase * z2)


def reeb_array(X):
    X = np.asarray(X, dtype=float)
    return np.stack([-X[..., 1], X[..., 0], -X[..., 3], X[..., 2]], axis=-1)


def contact_form_array(X, V):
    """alpha_p(v) with alpha = x1 dy1 - y1 dx1 + x2 dy2 - y2 dx2"""
    return (X[..., 0] * V[..., 1] - X[..., 1] * V[..., 0]
            + X[..., 2] * V[..., 3] - X[..., 3] * V[..., 2])


def contact_two_form_array(A, B):
    """d(alpha)(a, b) = 2 (dx1^dy1 + dx2^dy2)(a, b)"""
    return 2.0 * (A[..., 0] * B[..., 1] - A[..., 1] * B[..., 0]
                  + A[..., 2] * B[..., 3] - A[..., 3] * B[..., 2])


def dtheta_array(X, V):
    """d(theta)_p(v) = Im(v2 / z2)"""
    s2 = X[..., 2] ** 2 + X[..., 3] ** 2
    return (X[..., 2] * V[..., 3] - X[..., 3] * V[..., 2]) / s2


def tangent_frame(X):
    """
    Global orthonormal frame (R, e1, e2) of T S^3.

    R is the Reeb/Hopf field, e1 = (-conj z2, conj z1) and e2 = i*e1 span the
    contact plane.
    """
    X = np.asarray(X, dtype=float)
    x1, y1, x2, y2 = X[..., 0], X[..., 1], X[..., 2], X[..., 3]
    R = np.stack([-y1, x1, -y2, x2], axis=-1)
    e1 = np.stack([-x2, y2, x1, -y1], axis=-1)
    e2 = np.stack([-y2, -x2, y1, x1], axis=-1)
    return R, e1, e2


def to_frame_coords(X, V):
    R, e1, e2 = tangent_frame(X)
    return np.stack([np.sum(V * R, axis=-1), np.sum(V * e1, axis=-1),
                     np.sum(V * e2, axis=-1)], axis=-1)


def from_frame_coords(X, C):
    R, e1, e2 = tangent_frame(X)
    return C[..., 0:1] * R + C[..., 1:2] * e1 + C[..., 2:3] * e2


def uniform_sphere(rng, n):
    """Uniform samples on S^3 via normalized 4-dimensional Gaussians"""
    return renormalize(rng.standard_normal((n, 4)))


def page_to_sphere(phi, w):
    w = np.asarray(w, dtype=complex)
    s = np.sqrt(np.clip(1.0 - np.abs(w) ** 2, 0.0, None))
    return to_ambient(w, s * np.exp(1j * np.asarray(phi, dtype=float)))


def sphere_to_page(X):
    """(phi, w) of each point; phi is undefined (returned as 0) on the binding"""
    z1, z2 = from_ambient(X)
    phi = np.where(np.abs(z2) > BINDING_TOL, np.mod(np.angle(z2), TWO_PI), 0.0)
    return phi, z1


def page_coordinate_at_zero(X):
    """Page coordinate after flowing back along the Hopf circle to theta = 0"""
    z1, z2 = from_ambient(X)
    return z1 * np.exp(-1j * np.angle(z2))


def great_circle_distance(X, Y):
    chord = np.linalg.norm(np.asarray(X) - np.asarray(Y), axis=-1)
    return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Scalar operations
# ---------------------------------------------------------------------------

def theta(p: SpherePoint) -> float:
    if p.on_binding:
        raise BindingPoint(f"theta is undefined on the binding (|z2| = {abs(p.z2):.3g})")
    return float(np.mod(np.angle(p.z2), TWO_PI))


def hopf_flow(p: SpherePoint, t: float) -> SpherePoint:
    # e^{it} * 0 stays 0, so binding points never leave the binding
    return SpherePoint.from_ambient(hopf_flow_array(p.ambient(), t))


def reeb_field(p: SpherePoint) -> TangentVector:
    return TangentVector(p, reeb_array(p.ambient()))


def contact_form(p: SpherePoint, v) -> float:
    vec = v.v if isinstance(v, TangentVector) else np.asarray(v, dtype=float)
    return float(contact_form_array(p.ambient(), vec))


def dtheta(p: SpherePoint, v) -> float:
    if p.on_binding:
        raise BindingPoint("d(theta) is undefined on the binding")
    vec = v.v if isinstance(v, TangentVector) else np.asarray(v, dtype=float)
    return float(dtheta_array(p.ambient(), vec))


def page_point(p: SpherePoint) -> PagePoint:
    phi, w = sphere_to_page(p.ambient())
    return PagePoint(float(phi), complex(w))


def embed_page_point(q: PagePoint) -> SpherePoint:
    s = np.sqrt(max(0.0, 1.0 - abs(q.w) ** 2))
    return SpherePoint.normalized(q.w, s * np.exp(1j * q.phi))


@lru_cache(maxsize=None)
def _page_nodes(radial, angular):
    x, wx = np.polynomial.legendre.leggauss(radial)
    r = 0.5 * (x + 1.0)
    wr = 0.5 * wx
    psi = TWO_PI * np.arange(angular) / angular
    w = r[:, None] * np.exp(1j * psi[None, :])
    weights = (wr * r)[:, None] * np.full(angular, TWO_PI / angular)[None, :]
    w.setflags(write=False)
    weights.setflags(write=False)
    return w, weights


def page_nodes(radial=DEFAULT_RADIAL, angular=DEFAULT_ANGULAR):
    """Tensor rule on the unit disk: Gauss-Legendre in radius x trapezoid in angle (Euclidean weights)"""
    return _page_nodes(int(radial), int(angular))


def page_measure_integrate(f, phi=0.0, measure=PageMeasure.NORMALIZED,
                           radial=DEFAULT_RADIAL, angular=DEFAULT_ANGULAR, on_sphere=False):
    """
    Integrate f over the page P_phi.

    Args:
        f: vectorized callable; receives the disk coordinates w (complex array), or
           the embedded ambient points of P_phi when on_sphere is True
        phi: page label
        measure: PageMeasure
    """
    measure = PageMeasure.parse(measure)
    w, weights = page_nodes(radial, angular)
    arg = page_to_sphere(np.full(w.shape, phi), w) if on_sphere else w
    values = np.broadcast_to(np.asarray(f(arg), dtype=float), w.shape)
    if not np.all(np.isfinite(values)):
        raise QuadratureDivergence("integrand is not finite at some page quadrature node")
    return float(measure.density * np.sum(values * weights))


def contact_page_area(radial=DEFAULT_RADIAL, angular=DEFAULT_ANGULAR):
    return page_measure_integrate(lambda w: 1.0, measure=PageMeasure.CONTACT,
                                  radial=radial, angular=angular)


def _hopf_lattice(lattice):
    x, wx = np.polynomial.legendre.leggauss(lattice)
    eta = np.pi / 4.0 * (x + 1.0)
    w_eta = np.pi / 4.0 * wx
    xi = TWO_PI * np.arange(lattice) / lattice
    E, X1, X2 = np.meshgrid(eta, xi, xi, indexing="ij")
    weights = w_eta[:, None, None] * (TWO_PI / lattice) ** 2 * np.ones_like(E)
    # coordinate tangent vectors d/d(eta), d/d(xi1), d/d(xi2) at every node
    c, s = np.cos(E), np.sin(E)
    d_eta = to_ambient(-s * np.exp(1j * X1), c * np.exp(1j * X2))
    d_xi1 = to_ambient(1j * c * np.exp(1j * X1), np.zeros_like(E, dtype=complex))
    d_xi2 = to_ambient(np.zeros_like(E, dtype=complex), 1j * s * np.exp(1j * X2))
    points = to_ambient(c * np.exp(1j * X1), s * np.exp(1j * X2))
    return points, (d_eta, d_xi1, d_xi2), weights


@lru_cache(maxsize=None)
def contact_volume(lattice=DEFAULT_VOLUME_LATTICE):
    """Integral of alpha ^ d(alpha) over S^3 in Hopf coordinates (cached per lattice)"""
    P, (u, v, w), weights = _hopf_lattice(int(lattice))
    form = (contact_form_array(P, u) * contact_two_form_array(v, w)
            - contact_form_array(P, v) * contact_two_form_array(u, w)
            + contact_form_array(P, w) * contact_two_form_array(u, v))
    return float(np.sum(np.abs(form) * weights))


@lru_cache(maxsize=None)
def round_volume(lattice=DEFAULT_VOLUME_LATTICE):
    """Round Riemannian volume of S^3 (2 pi^2) by the same lattice"""
    _, vectors, weights = _hopf_lattice(int(lattice))
    gram = np.stack([np.stack([np.sum(a * b, axis=-1) for b in vectors], axis=-1)
                     for a in vectors], axis=-2)
    return float(np.sum(np.sqrt(np.abs(np.linalg.det(gram))) * weights))


def fubini_volume(radial=DEFAULT_RADIAL, angular=DEFAULT_ANGULAR):
    """Suspension of the page with constant return time 2pi"""
    return TWO_PI * contact_page_area(radial, angular)


def main():
    print("=" * 60)
    print("S^3 = OB(D^2, 1): page and volume identities")
    print("=" * 60)
    print(f"  Normalized page mass:  {page_measure_integrate(lambda w: 1.0):.12f}")
    print(f"  Contact page mass:     {contact_page_area():.12f}  (2pi = {TWO_PI:.12f})")
    print(f"  Contact volume:        {contact_volume():.12f}")
    print(f"  Fubini oracle:         {fubini_volume():.12f}")
    print(f"  Round volume:          {round_volume():.12f}  (2pi^2 = {2 * np.pi ** 2:.12f})")
    print("=" * 60)


if __name__ == "__main__":
    main()

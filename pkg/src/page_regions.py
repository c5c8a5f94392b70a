#!/usr/bin/env python3
"""
Measurable subsets of a page, given in the disk coordinate w of the z1-disk

Every region knows its membership test, its own quadrature rule (Euclidean weights;
multiply by PageMeasure.density), and, when convex, the interval cut out of a ray.
measure_in_disk() computes mu(region ∩ disk ∩ page), the quantity behind the
page-to-page probability formula.
"""

import numpy as np
import pandas as pd
from scipy import integrate

from sphere_geometry import PageMeasure, TWO_PI, page_nodes

EMPTY_INTERVAL = (0.0, -1.0)


def _disk_ray_interval(c, u, center, radius):
    """Interval of rho >= 0 with |c + rho*u - center| <= radius"""
    d = c - center
    b = (np.conj(u) * d).real
    disc = b * b - (abs(d) ** 2 - radius * radius)
    if disc < 0.0:
        return EMPTY_INTERVAL
    root = np.sqrt(disc)
    lo, hi = max(0.0, -b - root), -b + root
    return (lo, hi) if hi >= lo else EMPTY_INTERVAL


def _polar_rule(center, r_lo, r_hi, a_lo, a_hi, radial, angular, periodic):
    x, wx = np.polynomial.legendre.leggauss(radial)
    r = r_lo + 0.5 * (r_hi - r_lo) * (x + 1.0)
    wr = 0.5 * (r_hi - r_lo) * wx * r
    if periodic:
        psi = a_lo + (a_hi - a_lo) * np.arange(angular) / angular
        wpsi = np.full(angular, (a_hi - a_lo) / angular)
    else:
        y, wy = np.polynomial.legendre.leggauss(angular)
        psi = a_lo + 0.5 * (a_hi - a_lo) * (y + 1.0)
        wpsi = 0.5 * (a_hi - a_lo) * wy
    w = center + r[:, None] * np.exp(1j * psi[None, :])
    weights = wr[:, None] * wpsi[None, :]
    return w.ravel(), weights.ravel()


class PageRegion:
    """Base class for page subsets"""
    kind = "region"

    def contains(self, w):
        raise NotImplementedError

    def quadrature(self, radial=64, angular=128):
        raise NotImplementedError

    def euclidean_area(self):
        w, weights = self.quadrature()
        return float(np.sum(weights))

    def measure(self, measure=PageMeasure.NORMALIZED):
        return PageMeasure.parse(measure).density * self.euclidean_area()

    def ray_interval(self, c, u):
        return None

    def describe(self):
        return self.kind


class DiskRegion(PageRegion):
    kind = "disk"

    def __init__(self, center=0j, radius=0.1):
        if radius < 0:
            raise ValueError(f"disk radius must be nonnegative, got {radius}")
        self.center = complex(center)
        self.radius = float(radius)

    def contains(self, w):
        return np.abs(np.asarray(w) - self.center) <= self.radius

    def quadrature(self, radial=64, angular=128):
        w, weights = _polar_rule(self.center, 0.0, self.radius, 0.0, TWO_PI,
                                 radial, angular, periodic=True)
        # truncate mass outside the page
        return w, np.where(np.abs(w) <= 1.0, weights, 0.0)

    def euclidean_area(self):
        if abs(self.center) + self.radius <= 1.0:
            return np.pi * self.radius ** 2
        return super().euclidean_area()

    def ray_interval(self, c, u):
        return _disk_ray_interval(c, u, self.center, self.radius)

    def describe(self):
        return f"disk(center={self.center.real:.4g}{self.center.imag:+.4g}i, r={self.radius:.4g})"


class AnnulusRegion(PageRegion):
    kind = "annulus"

    def __init__(self, center=0j, inner=0.0, outer=0.5):
        if not 0.0 <= inner <= outer:
            raise ValueError(f"annulus needs 0 <= inner <= outer, got {inner}, {outer}")
        self.center = complex(center)
        self.inner = float(inner)
        self.outer = float(outer)

    def contains(self, w):
        d = np.abs(np.asarray(w) - self.center)
        return (d >= self.inner) & (d <= self.outer)

    def quadrature(self, radial=64, angular=128):
        w, weights = _polar_rule(self.center, self.inner, self.outer, 0.0, TWO_PI,
                                 radial, angular, periodic=True)
        return w, np.where(np.abs(w) <= 1.0, weights, 0.0)

    def describe(self):
        return f"annulus(r_in={self.inner:.4g}, r_out={self.outer:.4g})"


class HalfPageRegion(PageRegion):
    """Sector start_angle <= arg(w) <= start_angle + pi of the unit disk"""
    kind = "half"

    def __init__(self, start_angle=-np.pi / 2):
        self.start_angle = float(start_angle)

    def contains(self, w):
        w = np.asarray(w)
        rel = np.mod(np.angle(w) - self.start_angle, TWO_PI)
        return (np.abs(w) <= 1.0) & (rel <= np.pi)

    def quadrature(self, radial=64, angular=128):
        return _polar_rule(0j, 0.0, 1.0, self.start_angle, self.start_angle + np.pi,
                           radial, angular, periodic=False)

    def euclidean_area(self):
        return np.pi / 2.0

    def ray_interval(self, c, u):
        lo, hi = _disk_ray_interval(c, u, 0j, 1.0)
        normal = np.exp(1j * (self.start_angle + np.pi / 2))
        a0 = (np.conj(normal) * c).real
        a1 = (np.conj(normal) * u).real
        if a1 > 0:
            lo = max(lo, -a0 / a1)
        elif a1 < 0:
            hi = min(hi, -a0 / a1)
        elif a0 < 0:
            return EMPTY_INTERVAL
        return (lo, hi) if hi >= lo else EMPTY_INTERVAL


class FullPage(PageRegion):
    kind = "full"

    def contains(self, w):
        return np.abs(np.asarray(w)) <= 1.0

    def quadrature(self, radial=64, angular=128):
        w, weights = page_nodes(radial, angular)
        return w.ravel(), weights.ravel()

    def euclidean_area(self):
        return np.pi

    def ray_interval(self, c, u):
        return _disk_ray_interval(c, u, 0j, 1.0)


class EmptyRegion(PageRegion):
    kind = "empty"

    def contains(self, w):
        return np.zeros(np.shape(w), dtype=bool)

    def quadrature(self, radial=64, angular=128):
        return np.zeros(0, dtype=complex), np.zeros(0)

    def euclidean_area(self):
        return 0.0

    def ray_interval(self, c, u):
        return EMPTY_INTERVAL


class GridRegion(PageRegion):
    """Indicator grid over the square extent (x0, x1, y0, y1); row 0 is y0"""
    kind = "grid"

    def __init__(self, mask, extent=(-1.0, 1.0, -1.0, 1.0)):
        self.mask = np.asarray(mask, dtype=bool)
        self.extent = tuple(float(e) for e in extent)

    @classmethod
    def from_csv(cls, path, extent=(-1.0, 1.0, -1.0, 1.0)):
        frame = pd.read_csv(path, header=None)
        return cls(frame.to_numpy() != 0, extent)

    def _cell(self, w):
        x0, x1, y0, y1 = self.extent
        ny, nx = self.mask.shape
        w = np.asarray(w)
        ix = np.floor((w.real - x0) / (x1 - x0) * nx).astype(int)
        iy = np.floor((w.imag - y0) / (y1 - y0) * ny).astype(int)
        return ix, iy

    def contains(self, w):
        ix, iy = self._cell(w)
        ny, nx = self.mask.shape
        inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        hit = np.zeros(np.shape(w), dtype=bool)
        hit[inside] = self.mask[iy[inside], ix[inside]]
        return hit & (np.abs(np.asarray(w)) <= 1.0)

    def quadrature(self, radial=64, angular=128):
        x0, x1, y0, y1 = self.extent
        ny, nx = self.mask.shape
        xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
        ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
        w = (xs[None, :] + 1j * ys[:, None]).ravel()
        cell = (x1 - x0) * (y1 - y0) / (nx * ny)
        keep = self.mask.ravel() & (np.abs(w) <= 1.0)
        return w[keep], np.full(int(keep.sum()), cell)

    def describe(self):
        return f"grid({self.mask.shape[0]}x{self.mask.shape[1]})"


def disk_mass(radius, measure=PageMeasure.NORMALIZED):
    """mu(A) of a disk of radius r lying inside the page"""
    return PageMeasure.parse(measure).density * np.pi * radius ** 2


def measure_in_disk(region, center, radius, measure=PageMeasure.NORMALIZED,
                    fallback_radial=256, fallback_angular=512):
    """
    mu(region ∩ D ∩ page) for the disk D = disk(center, radius), center inside the page.

    Convex regions integrate the exact ray intervals over the ray angle about the
    disk center with scipy's adaptive quadrature; annuli are a difference of two
    disks; indicator grids fall back to the tensor page rule.
    """
    measure = PageMeasure.parse(measure)
    center = complex(center)
    if radius <= 0.0 or isinstance(region, EmptyRegion):
        return 0.0
    if isinstance(region, AnnulusRegion):
        outer = measure_in_disk(DiskRegion(region.center, region.outer), center, radius, measure)
        if region.inner <= 0.0:
            return outer
        inner = measure_in_disk(DiskRegion(region.center, region.inner), center, radius, measure)
        return max(0.0, outer - inner)
    if region.ray_interval(center, 1.0 + 0j) is None:
        w, weights = page_nodes(fallback_radial, fallback_angular)
        inside = region.contains(w) & (np.abs(w - center) <= radius)
        return float(measure.density * np.sum(weights * inside))

    def sector(psi):
        u = np.exp(1j * psi)
        lo_p, hi_p = _disk_ray_interval(center, u, 0j, 1.0)
        lo_r, hi_r = region.ray_interval(center, u)
        lo = max(0.0, lo_p, lo_r)
        hi = min(radius, hi_p, hi_r)
        return 0.5 * (hi * hi - lo * lo) if hi > lo else 0.0

    value, _ = integrate.quad(sector, 0.0, TWO_PI, limit=500, epsabs=1e-12, epsrel=1e-10)
    return float(measure.density * value)


def region_from_spec(kind, center=0j, radius=0.1, inner_radius=0.0, path=None,
                     start_angle=-np.pi / 2):
    kind = str(kind).strip().lower()
    if kind == "disk":
        return DiskRegion(center, radius)
    if kind == "annulus":
        return AnnulusRegion(center, inner_radius, radius)
    if kind == "half":
        return HalfPageRegion(start_angle)
    if kind == "full":
        return FullPage()
    if kind == "empty":
        return EmptyRegion()
    if kind == "grid":
        if not path:
            raise ValueError("grid region needs a file path")
        return GridRegion.from_csv(path)
    raise ValueError(f"unknown region kind: {kind!r}")

#!/usr/bin/env python3
"""
Tests for reach radii, the half-space oracle and page-to-page probabilities
"""

import sys

import numpy as np
import pytest

from cone_field import HopfRayField, ReebConeField, vector_angle
from errors import AngleOutOfRange, EmptyA
from page_regions import AnnulusRegion, DiskRegion, EmptyRegion, FullPage
from reachability import (
    HalfSpaceState,
    corollary_bound,
    halfspace_reach_mc,
    hopf_image,
    prob_formula,
    prob_mc,
    reach_disk,
    reach_radius,
    trace_trajectory,
    wilson_interval,
)
from sphere_geometry import PageMeasure, SpherePoint


def lens_area(d, r1, r2):
    """Area of the intersection of two planar disks with centers d apart"""
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        return np.pi * min(r1, r2) ** 2
    a1 = r1 ** 2 * np.arccos((d * d + r1 * r1 - r2 * r2) / (2 * d * r1))
    a2 = r2 ** 2 * np.arccos((d * d + r2 * r2 - r1 * r1) / (2 * d * r2))
    k = np.sqrt((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2))
    return a1 + a2 - 0.5 * k


# ---------------------------------------------------------------------------
# Reach radius and the half-space oracle
# ---------------------------------------------------------------------------

def test_reach_radius():
    assert reach_radius(1.0, np.pi / 2) == pytest.approx(1.0)
    assert reach_radius(0.0, 1.0) == 0.0
    assert reach_radius(2.0, 0.0) == 0.0
    for t in (0.1, 0.5, 2.0):
        for theta in (0.2, 1.0, 2.5):
            assert reach_radius(t, theta) == pytest.approx(t * np.tan(theta / 2))
    assert reach_radius(1.0, np.pi, allow_infinite=True) == np.inf
    with pytest.raises(AngleOutOfRange):
        reach_radius(1.0, np.pi)
    with pytest.raises(AngleOutOfRange):
        reach_radius(1.0, -0.1)
    with pytest.raises(ValueError):
        reach_radius(-1.0, 0.5)


def test_halfspace_state_lives_above_the_floor():
    assert HalfSpaceState(0.0, 1.0, 0.0).z == 0.0
    with pytest.raises(ValueError):
        HalfSpaceState(0.0, 0.0, -1e-3)


def test_halfspace_oracle_at_right_angle():
    result = halfspace_reach_mc(np.pi / 2, 1.0, 20_000, seed=1)
    assert result.flat_radius == pytest.approx(1.0)
    assert result.rel_error < 0.02
    assert result.contained()
    # the full-angle reading t * tan(theta) is not attained
    assert result.tan_full_radius == np.inf


def test_halfspace_piecewise_curves_stay_inside():
    result = halfspace_reach_mc(1.0, 0.7, 5_000, seed=2, pieces=8, velocity_model="disk")
    assert result.contained()
    assert np.allclose(result.endpoints[:, 2], 0.7)


def test_halfspace_zero_angle_collapses():
    result = halfspace_reach_mc(0.0, 1.0, 1_000)
    assert result.max_radius == 0.0
    assert result.rel_error == 0.0
    assert np.all(result.endpoints[:, :2] == 0.0)


def test_wilson_interval_brackets_the_rate():
    lo, hi = wilson_interval(0, 200)
    assert lo < 1e-12 and 0.0 < hi < 0.03
    lo, hi = wilson_interval(100, 200)
    assert lo < 0.5 < hi
    lo, hi = wilson_interval(200, 200)
    assert hi == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Probability formula
# ---------------------------------------------------------------------------

def test_reach_disk_laws():
    A = DiskRegion(0.3, 0.1)
    base = reach_radius(0.5, 0.8)
    assert reach_disk(A, 0.5, 0.8).radius == pytest.approx(base)
    assert reach_disk(A, 0.5, 0.8, PageMeasure.NORMALIZED, "area_scaled").radius == pytest.approx(base * 0.01)
    assert reach_disk(A, 0.5, 0.8, law="minkowski").radius == pytest.approx(base + 0.1)
    disk = reach_disk(A, 0.5, 0.8)
    assert disk.center.phi == pytest.approx(0.5)
    assert disk.center.w == pytest.approx(0.3 * np.exp(0.5j))
    with pytest.raises(ValueError):
        reach_disk(A, 0.5, 0.8, law="convex")


def test_formula_matches_lens_area():
    A = DiskRegion(0.1, 0.2)
    B = DiskRegion(0.4, 0.3)
    t, theta = 1.0, 1.0
    center = complex(hopf_image(0.1, t))
    r = t * np.tan(theta / 2)
    expected = lens_area(abs(0.4 - center), r, 0.3) / np.pi
    got = prob_formula(A, B, t, theta, PageMeasure.NORMALIZED, law="flat")
    assert got == pytest.approx(expected, abs=1e-6)
    # contact measure scales by the page mass 2pi
    got_contact = prob_formula(A, B, t, theta, PageMeasure.CONTACT, law="flat")
    assert got_contact == pytest.approx(2 * np.pi * expected, abs=1e-5)


def test_formula_with_the_mass_scaled_radius():
    A = DiskRegion(0j, 0.5)
    t, theta = 2.0, 1.2
    r = t * np.tan(theta / 2) * 0.25
    got = prob_formula(A, FullPage(), t, theta)
    assert got == pytest.approx(r * r, abs=1e-8)
    assert prob_formula(A, FullPage(), t, theta, conditional=True) == pytest.approx(1.0, abs=1e-8)


def test_formula_edge_cases():
    A = DiskRegion(0.2, 0.1)
    assert prob_formula(A, EmptyRegion(), 1.0, 1.0) == 0.0
    # a reach disk covering the page saturates at the page mass
    assert prob_formula(A, FullPage(), 5.0, 1.0, law="flat") == pytest.approx(1.0, abs=1e-9)
    assert prob_formula(A, FullPage(), 5.0, 1.0, PageMeasure.CONTACT, law="flat") == \
        pytest.approx(2 * np.pi, rel=1e-9)
    # zero angle: the reach disk is a point
    assert prob_formula(A, FullPage(), 1.0, 0.0) == 0.0
    assert prob_formula(A, FullPage(), 1.0, 0.0, conditional=True) == 0.0
    with pytest.raises(EmptyA):
        prob_formula(DiskRegion(0.2, 0.0), FullPage(), 1.0, 1.0)
    with pytest.raises(EmptyA):
        prob_formula(DiskRegion(1.5, 0.1), FullPage(), 1.0, 1.0)
    with pytest.raises(AngleOutOfRange):
        prob_formula(A, FullPage(), 1.0, np.pi)


def test_formula_is_monotone_in_time_and_angle():
    A = DiskRegion(0j, 0.3)
    B = AnnulusRegion(0j, 0.05, 0.4)
    by_time = [prob_formula(A, B, t, 1.0, law="flat") for t in (0.05, 0.1, 0.2, 0.4, 0.8)]
    by_angle = [prob_formula(A, B, 0.3, theta, law="flat") for theta in (0.1, 0.5, 1.0, 2.0, 3.0)]
    assert all(a <= b + 1e-12 for a, b in zip(by_time, by_time[1:]))
    assert all(a <= b + 1e-12 for a, b in zip(by_angle, by_angle[1:]))


# ---------------------------------------------------------------------------
# Monte Carlo over cone trajectories
# ---------------------------------------------------------------------------

def test_hopf_trajectories_land_on_the_rotated_start():
    A = DiskRegion(0.3 + 0.1j, 0.05)
    t = 0.5
    image = complex(hopf_image(A.center, t))
    hit = prob_mc(HopfRayField(), A, DiskRegion(image, 0.051), t, 200, seed=4, step_h=1e-2)
    miss = prob_mc(HopfRayField(), A, DiskRegion(-image, 0.2), t, 200, seed=4, step_h=1e-2)
    assert hit.estimate == 1.0
    assert miss.estimate == 0.0
    assert miss.ci_lo < 1e-12 and miss.ci_hi > 0.0


def test_constant_cone_trajectories_stay_in_the_grown_disk():
    field_ = ReebConeField(0.2, 0.0)
    A = DiskRegion(0.2, 0.1)
    t = 0.5
    grown = reach_disk(A, t, 0.4, law="minkowski")
    B = DiskRegion(grown.center.w, grown.radius)
    result = prob_mc(field_, A, B, t, 300, seed=5, step_h=1e-2)
    assert result.estimate == 1.0
    assert len(result.endpoints) == 300


def test_prob_mc_is_seeded():
    field_ = ReebConeField(0.2, 0.3)
    A = DiskRegion(0.1, 0.2)
    B = DiskRegion(0.1 * np.exp(0.3j), 0.1)
    first = prob_mc(field_, A, B, 0.3, 2500, seed=9, step_h=2e-2, threads=1)
    again = prob_mc(field_, A, B, 0.3, 2500, seed=9, step_h=2e-2, threads=3)
    assert np.array_equal(first.endpoints, again.endpoints)
    assert first.estimate == again.estimate
    assert first.ci_lo <= first.estimate <= first.ci_hi
    with pytest.raises(ValueError):
        prob_mc(field_, A, B, 0.3, 50)


def test_halving_the_step_keeps_the_estimate():
    # B sits inside the image of A, where the start density is uniform
    field_ = ReebConeField(0.05, 0.0)
    A = DiskRegion(0.2, 0.2)
    t = 0.2
    B = DiskRegion(complex(hopf_image(A.center, t)), 0.05)
    coarse = prob_mc(field_, A, B, t, 20_000, seed=3, step_h=2e-3)
    fine = prob_mc(field_, A, B, t, 20_000, seed=3, step_h=1e-3)
    assert abs(coarse.estimate - fine.estimate) < 1e-3
    assert fine.estimate == pytest.approx(0.0625, abs=0.01)


def test_prob_mc_runs_from_the_page_edge():
    field_ = ReebConeField(0.2, 0.0)
    mc = prob_mc(field_, DiskRegion(0.97, 0.02), FullPage(), 0.5, 200, seed=1)
    assert mc.estimate == 1.0
    assert np.all(np.abs(mc.endpoints) < 1.0)


def disk_scenarios(count, seed):
    """Random (A, B, t) with A and B well inside the page and B at varying distance from the reach disk"""
    rng = np.random.default_rng(seed)
    scenarios = []
    for _ in range(count):
        A = DiskRegion(0.3 * np.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random()),
                       0.05 + 0.15 * rng.random())
        t = 0.2 + 0.8 * rng.random()
        center = complex(hopf_image(A.center, t))
        offset = (A.radius + 0.25 * rng.random()) * np.exp(2j * np.pi * rng.random())
        scenarios.append((A, DiskRegion(center + offset, 0.05 + 0.2 * rng.random()), t))
    return scenarios


def check_scenario(field_, A, B, t, n, seed, step_h):
    bound = corollary_bound(field_, A, B, t, im=0.4)
    reach = reach_disk(A, t, 0.4, law="minkowski")
    d = abs(B.center - reach.center.w)
    assert bound.minkowski == pytest.approx(lens_area(d, reach.radius, B.radius) / np.pi, abs=1e-6)
    assert bound.certified == (1.0 if d < reach.radius + B.radius else 0.0)

    mc = prob_mc(field_, A, B, t, n, seed=seed, step_h=step_h)
    assert mc.estimate - 2 * mc.stderr <= bound.certified
    assert np.all(np.abs(mc.endpoints - reach.center.w) <= reach.radius + 1e-9)
    return mc, bound


def test_bound_holds_over_seeded_scenarios():
    field_ = ReebConeField(0.2, 0.0)
    results = [check_scenario(field_, A, B, t, 400, seed, 2e-2)
               for seed, (A, B, t) in enumerate(disk_scenarios(5, 17))]
    assert any(bound.certified == 1.0 for _, bound in results)


def test_unreachable_target_is_never_hit():
    field_ = ReebConeField(0.2, 0.0)
    A = DiskRegion(0.2, 0.1)
    t = 0.4
    reach = reach_disk(A, t, 0.4, law="minkowski")
    B = DiskRegion(reach.center.w + 1j * (reach.radius + 0.06), 0.05)
    mc, bound = check_scenario(field_, A, B, t, 500, 6, 2e-2)
    assert bound.certified == 0.0 and bound.minkowski == 0.0
    assert mc.estimate == 0.0


@pytest.mark.slow
def test_bound_holds_over_twenty_scenarios_at_full_size():
    field_ = ReebConeField(0.2, 0.0)
    for seed, (A, B, t) in enumerate(disk_scenarios(20, 2024)):
        check_scenario(field_, A, B, t, 10_000, seed, 1e-2)


def test_hopf_field_bound_vanishes():
    A = DiskRegion(0.3, 0.1)
    B = DiskRegion(-0.5, 0.1)
    bound = corollary_bound(HopfRayField(), A, B, 0.2, n_samples=500, seed=1)
    assert bound.theta == 0.0
    assert bound.area_scaled == 0.0 and bound.value == 0.0
    assert bound.conditional == 0.0
    assert bound.certified == 0.0


def test_trajectory_velocities_stay_in_the_cone():
    field_ = ReebConeField(0.2, 0.3)
    start = SpherePoint.normalized(0.3 + 0.2j, 0.8 + 0.1j)
    traj = trace_trajectory(field_, start, 0.3, step_h=1e-2, rule="sample",
                            rng=np.random.default_rng(7))
    assert len(traj.samples) == len(traj.theta_lift) == 31
    assert traj.theta_lift[-1] == pytest.approx(0.3)
    X = np.array([p.ambient() for p in traj.samples[:-1]])
    axes, half = field_.cone_arrays(X)
    assert np.all(vector_angle(traj.velocities(), axes) <= half + 1e-9)
    assert traj.arclength > 0.0


if __name__ == "__main__":
    code = pytest.main([__file__, "-q"])
    print("✅ PASS" if code == 0 else "❌ FAIL")
    sys.exit(code)

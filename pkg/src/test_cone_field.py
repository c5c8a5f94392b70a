#!/usr/bin/env python3
"""
Tests for cones, enclosing cones, built-in fields, theta-exact stepping and adaptedness
"""

import sys

import numpy as np
import pandas as pd
import pytest

from cone_field import (
    Cone,
    ConeField,
    FanField,
    HopfRayField,
    ReebConeField,
    TabulatedConeField,
    advance_theta,
    check_adapted,
    field_from_config,
    forward_rows,
    inner_angle,
    integrate_cone_paths,
    is_interior,
    minimal_cap,
    sample_cone_directions,
    smallest_enclosing_cone,
    step_directions,
    vector_angle,
)
from errors import FieldDegenerate, NoEnclosingCone, ZeroVector
from sphere_geometry import (
    SpherePoint,
    TangentVector,
    binding_distance,
    dtheta_array,
    from_ambient,
    page_coordinate_at_zero,
    reeb_array,
    tangent_frame,
    theta_array,
    to_ambient,
    uniform_sphere,
)

P = SpherePoint.normalized(0.4 + 0.3j, 0.5 - 0.7j)


def frame_at(p):
    R, e1, e2 = tangent_frame(p.ambient())
    return R, e1, e2


# ---------------------------------------------------------------------------
# Violation fixtures: the collared Reeb cone field with one adaptedness condition broken
# ---------------------------------------------------------------------------

class BindingViolation(ReebConeField):
    """Adds a direction transverse to B at binding points only"""
    name = "binding_violation"

    def generators(self, p):
        gens = super().generators(p)
        if binding_distance(p.ambient()) < 1e-9:
            _, e1, _ = tangent_frame(p.ambient())
            gens = np.vstack([gens, e1[None, :]])
        return gens


class DthetaViolation(ReebConeField):
    """Adds cos(1.2) R + sin(1.2) e where e is the contact direction minimizing d(theta)"""
    name = "dtheta_violation"

    def generators(self, p):
        gens = super().generators(p)
        if abs(p.z2) > 0.3:
            c = -1j * (p.z1 * p.z2) / abs(p.z1 * p.z2)
            e = to_ambient(c * -np.conj(p.z2), c * np.conj(p.z1))
            gens = np.vstack([gens, np.cos(1.2) * reeb_array(p.ambient()) + np.sin(1.2) * e])
        return gens


class ScaledField(ConeField):
    """Same cones with every generator stretched by a constant"""

    def __init__(self, inner, scale):
        super().__init__()
        self.inner = inner
        self.scale = scale

    def generators(self, p):
        return self.scale * self.inner.generators(p)


class TiltedField(ReebConeField):
    """Half angle 0.1 + 0.2 * x1**2 / (1 + x1**2): a unique maximum region, no collar"""
    name = "tilted"

    def __init__(self):
        super().__init__(0.3, 0.0)

    def half_angles(self, X):
        X = np.atleast_2d(X)
        return 0.1 + 0.2 * X[:, 0] ** 2 / (1.0 + X[:, 0] ** 2)


# ---------------------------------------------------------------------------
# Cones and enclosing cones
# ---------------------------------------------------------------------------

def test_cone_validates_axis_and_angle():
    R = frame_at(P)[0]
    with pytest.raises(ValueError):
        Cone(TangentVector(P, 2 * R), 0.1)
    with pytest.raises(ValueError):
        Cone(TangentVector(P, R), np.pi / 2)
    assert Cone(TangentVector(P, R), 0.25).inner_angle == pytest.approx(0.5)


def test_single_direction_gives_zero_angle():
    R = frame_at(P)[0]
    cone = smallest_enclosing_cone([R], P)
    assert cone.half_angle == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(cone.axis.v, R, atol=1e-14)


def test_two_directions_give_bisector():
    R, e1, _ = frame_at(P)
    beta = 0.35
    a = np.cos(beta) * R + np.sin(beta) * e1
    b = np.cos(beta) * R - np.sin(beta) * e1
    cone = smallest_enclosing_cone([a, b], P)
    assert cone.half_angle == pytest.approx(beta, abs=1e-12)
    assert np.allclose(cone.axis.v, R, atol=1e-12)


def test_fan_encloses_at_its_span():
    fan = FanField(0.3)
    assert inner_angle(fan, P) == pytest.approx(0.6, abs=2e-3)


def test_enclosing_cone_is_order_and_scale_independent():
    rng = np.random.default_rng(11)
    R, e1, e2 = frame_at(P)
    dirs = [R + 0.3 * (u * e1 + v * e2) for u, v in rng.uniform(-1, 1, (12, 2))]
    base = smallest_enclosing_cone(dirs, P)
    shuffled = smallest_enclosing_cone([dirs[i] for i in rng.permutation(12)], P)
    scaled = smallest_enclosing_cone([3.5 * d for d in dirs], P)
    for other in (shuffled, scaled):
        assert other.half_angle == pytest.approx(base.half_angle, abs=1e-12)
        assert np.allclose(other.axis.v, base.axis.v, atol=1e-10)
    assert all(vector_angle(d, base.axis.v) <= base.half_angle + 1e-9 for d in dirs)


def test_minimal_cap_three_point_boundary():
    # three directions at polar angle 0.4, 120 degrees apart: the circumcap has radius 0.4
    az = np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
    pts = np.column_stack([np.full(3, np.cos(0.4)), np.sin(0.4) * np.cos(az), np.sin(0.4) * np.sin(az)])
    center, radius = minimal_cap(np.vstack([pts, [[1.0, 0.0, 0.0]]]))
    assert radius == pytest.approx(0.4, abs=1e-12)
    assert np.allclose(center, [1.0, 0.0, 0.0], atol=1e-12)


def test_half_space_spanning_directions_have_no_cone():
    R, e1, e2 = frame_at(P)
    with pytest.raises(NoEnclosingCone):
        smallest_enclosing_cone([R, -R], P)
    with pytest.raises(NoEnclosingCone):
        smallest_enclosing_cone([R, e1, e2, -R - e1 - e2], P)
    with pytest.raises(ZeroVector):
        smallest_enclosing_cone([R, 0 * R], P)


def test_is_interior():
    R, e1, _ = frame_at(P)
    cone = Cone(TangentVector(P, R), 0.2)
    assert is_interior(R, cone)
    assert is_interior(np.cos(0.1) * R + np.sin(0.1) * e1, cone)
    assert not is_interior(np.cos(0.2) * R + np.sin(0.2) * e1, cone, tol=1e-9)
    assert not is_interior(e1, cone)
    with pytest.raises(ZeroVector):
        is_interior(np.zeros(4), cone)


# ---------------------------------------------------------------------------
# Built-in fields
# ---------------------------------------------------------------------------

def test_closed_form_cones_match_enclosing_algorithm():
    X = uniform_sphere(np.random.default_rng(2), 40)
    for field_ in (ReebConeField(0.2, 0.3), ReebConeField(0.4, 0.0), FanField(0.25), HopfRayField()):
        axes, half = field_.cone_arrays(X)
        for x, axis, h in zip(X, axes, half):
            cone = field_.enclosing(SpherePoint.from_ambient(x))
            assert cone.half_angle == pytest.approx(h, abs=1e-9)
            assert vector_angle(cone.axis.v, axis) < 1e-8


def test_collared_field_closes_on_the_binding():
    field_ = ReebConeField(0.2, 0.3)
    X = to_ambient(np.array([1.0, np.sqrt(1 - 0.05 ** 2), np.sqrt(1 - 0.5 ** 2)]),
                   np.array([0.0, 0.05, 0.5]))
    half = field_.cone_arrays(X)[1]
    assert half[0] == 0.0
    assert 0.0 < half[1] < 0.2
    assert half[2] == pytest.approx(0.2)


def test_tabulated_field_reproduces_constant_cone():
    X = uniform_sphere(np.random.default_rng(8), 4000)
    axes = reeb_array(X)
    table = pd.DataFrame(np.column_stack([X, axes, np.full(len(X), 0.15)]),
                         columns=TabulatedConeField.COLUMNS)
    field_ = TabulatedConeField(table)
    X = uniform_sphere(np.random.default_rng(9), 10)
    got_axes, got_half = field_.cone_arrays(X)
    assert np.allclose(got_half, 0.15)
    assert np.all(vector_angle(got_axes, reeb_array(X)) < 0.25)
    assert np.allclose(np.sum(got_axes * X, axis=1), 0.0, atol=1e-12)


def test_field_from_config():
    assert isinstance(field_from_config({"field.kind": "hopf"}), HopfRayField)
    constant = field_from_config({"field.kind": "constant", "field.alpha0": 0.3})
    assert constant.collar_eps == 0.0 and constant.alpha0 == 0.3
    with pytest.raises(ValueError):
        field_from_config({"field.kind": "spiral"})
    with pytest.raises(ValueError):
        ReebConeField(np.pi / 2)


def test_sampled_directions_stay_in_the_cone():
    rng = np.random.default_rng(4)
    X = uniform_sphere(rng, 500)
    axes = reeb_array(X)
    half = np.full(500, 0.3)
    for model in ("cap", "disk"):
        V = sample_cone_directions(rng, X, axes, half, model)
        assert np.allclose(np.linalg.norm(V, axis=1), 1.0)
        assert np.allclose(np.sum(V * X, axis=1), 0.0, atol=1e-12)
        assert np.all(vector_angle(V, axes) <= 0.3 + 1e-12)


# ---------------------------------------------------------------------------
# Theta-exact stepping
# ---------------------------------------------------------------------------

def test_reeb_step_is_an_exact_hopf_rotation():
    X = uniform_sphere(np.random.default_rng(6), 30)
    Y = advance_theta(X, reeb_array(X), 0.01)
    z1, z2 = from_ambient(X)
    w1, w2 = from_ambient(Y)
    assert np.allclose(w1, z1 * np.exp(0.01j), atol=1e-14)
    assert np.allclose(w2, z2 * np.exp(0.01j), atol=1e-14)


def test_tilted_steps_advance_theta_exactly():
    rng = np.random.default_rng(12)
    X = uniform_sphere(rng, 200)
    X = X[binding_distance(X) > 0.4]
    V = sample_cone_directions(rng, X, reeb_array(X), np.full(len(X), 0.2), "cap")
    Y = advance_theta(X, V, 1e-3)
    delta = np.mod(theta_array(Y) - theta_array(X) + np.pi, 2 * np.pi) - np.pi
    assert np.allclose(delta, 1e-3, atol=1e-14)


def test_backward_direction_is_degenerate():
    X = uniform_sphere(np.random.default_rng(1), 5)
    with pytest.raises(FieldDegenerate):
        advance_theta(X, -reeb_array(X), 1e-3)


def test_sampled_steps_near_the_binding_all_move_forward():
    field_ = ReebConeField(0.2, 0.0)
    rng = np.random.default_rng(21)
    w = 0.995 * np.exp(2j * np.pi * rng.random(500))
    X = to_ambient(w, np.sqrt(1 - np.abs(w) ** 2))
    axes, half = field_.cone_arrays(X)
    raw = sample_cone_directions(rng, X, axes, half, "cap")
    assert not forward_rows(X, raw, 1e-3).all()

    V = step_directions(field_, X, "sample", rng, h=1e-3)
    assert forward_rows(X, V, 1e-3).all()
    assert np.all(vector_angle(V, axes) <= half + 1e-12)
    Y = advance_theta(X, V, 1e-3)
    delta = np.mod(theta_array(Y) - theta_array(X) + np.pi, 2 * np.pi) - np.pi
    assert np.allclose(delta, 1e-3, atol=1e-12)


def test_axis_paths_return_to_their_page_point():
    w = np.array([0.1 + 0.2j, -0.5j, 0.7 + 0j])
    X0 = to_ambient(w, np.sqrt(1 - np.abs(w) ** 2))
    X, arclength, _ = integrate_cone_paths(ReebConeField(0.2, 0.3), X0, 2 * np.pi, 1e-2)
    assert np.allclose(page_coordinate_at_zero(X), w, atol=1e-12)
    assert np.allclose(arclength, 2 * np.pi, rtol=1e-12)


# ---------------------------------------------------------------------------
# Integrability-relevant properties and adaptedness
# ---------------------------------------------------------------------------

def test_rescaled_generators_keep_the_enclosing_cone():
    field_ = TiltedField()
    scaled = ScaledField(field_, 4.2)
    for x in uniform_sphere(np.random.default_rng(14), 20):
        p = SpherePoint.from_ambient(x)
        assert scaled.enclosing(p).half_angle == pytest.approx(field_.enclosing(p).half_angle, abs=1e-12)


def test_collared_field_is_adapted():
    report = check_adapted(ReebConeField(0.2, 0.3), samples=400, seed=1)
    assert report.passed, [(f.name, f.worst_value) for f in report.flags]
    assert all(f.witness is None for f in report.flags)


@pytest.mark.slow
def test_collared_field_is_adapted_at_full_sample_count():
    assert check_adapted(ReebConeField(0.2, 0.3), samples=10_000).passed


def test_narrow_collar_breaks_dtheta_positivity():
    report = check_adapted(ReebConeField(0.2, 0.1), samples=2000, seed=2)
    assert not report.flag("dtheta_section").passed


@pytest.mark.parametrize("field_, broken", [
    (BindingViolation(0.2, 0.3), "binding_tangent"),
    (DthetaViolation(0.2, 0.3), "dtheta_section"),
    (HopfRayField(), "reeb_interior"),
])
def test_each_violation_fails_exactly_its_flag(field_, broken):
    report = check_adapted(field_, samples=400, seed=3)
    failed = [f.name for f in report.flags if not f.passed]
    assert failed == [broken]
    witness = report.flag(broken).witness
    assert isinstance(witness, SpherePoint)


def test_dtheta_fixture_direction_is_negative_away_from_binding():
    p = SpherePoint.normalized(0.8, 0.5j)
    gens = DthetaViolation(0.2, 0.3).generators(p)
    values = dtheta_array(np.broadcast_to(p.ambient(), gens.shape), gens)
    assert values.min() < 0


if __name__ == "__main__":
    code = pytest.main([__file__, "-q"])
    print("✅ PASS" if code == 0 else "❌ FAIL")
    sys.exit(code)

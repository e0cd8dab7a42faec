import math

import numpy as np
import pytest

from plap import domain as dm


def test_annulus_inside():
    dom = dm.annulus(1.0, 2.0, 2)
    assert dom.inside((1.5, 0.0))
    assert not dom.inside((0.5, 0.0))
    assert not dom.inside((2.5, 0.0))
    assert not dom.inside((1.0, 0.0))  # boundary is not inside


def test_annulus_projection():
    dom = dm.annulus(1.0, 2.0, 2)
    assert np.allclose(dom.boundary_project((3.0, 0.0)), (2.0, 0.0))
    assert np.allclose(dom.boundary_project((0.6, 0.0)), (1.0, 0.0))
    # nearer sphere wins for interior points
    assert np.allclose(dom.boundary_project((1.9, 0.0)), (2.0, 0.0))


def test_annulus_inward_normal_against_inside_predicate():
    # the inward normal at the inner sphere must point away from the origin:
    # a small step along it lands inside, against it lands outside
    dom = dm.annulus(1.0, 2.0, 2)
    n = dom.inward_normal((1.0, 0.0))
    assert np.allclose(n, (1.0, 0.0))
    t = 1e-6 * dom.diameter
    assert dom.inside(np.array([1.0, 0.0]) + t * n)
    assert not dom.inside(np.array([1.0, 0.0]) - t * n)
    n_out = dom.inward_normal((2.0, 0.0))
    assert np.allclose(n_out, (-1.0, 0.0))


@pytest.mark.parametrize("dom", [
    dm.annulus(1.0, 2.0, 2),
    dm.annulus(0.5, 1.5, 3),
    dm.cylinder(1, 1.0, 1.0),
    dm.cylinder(2, 1.0, 2.0),
    dm.box([(0.0, 1.0), (0.0, 2.0)]),
])
def test_normal_displacement_property(dom):
    rng = np.random.default_rng(42)
    lo, hi = dom.bbox
    pts = rng.uniform(lo, hi, size=(1000, dom.dim))
    proj = dom.boundary_project(pts)
    normals = dom.inward_normal(proj)
    defined = ~np.isnan(normals).any(axis=1)
    assert defined.sum() > 500
    t = 1e-6 * dom.diameter
    inside_fwd = dom.inside(proj[defined] + t * normals[defined])
    inside_bwd = dom.inside(proj[defined] - t * normals[defined])
    assert np.all(inside_fwd)
    assert not np.any(inside_bwd)


def test_normals_are_unit():
    for dom in (dm.annulus(1.0, 2.0, 2), dm.cylinder(1, 1.0, 1.0)):
        s = dom.boundary_samples(512)
        n = dom.inward_normal(s)
        ok = ~np.isnan(n).any(axis=1)
        assert np.all(np.abs(np.linalg.norm(n[ok], axis=1) - 1.0) < 1e-12)


def test_boundary_samples_lie_on_boundary():
    for dom in (dm.annulus(1.0, 2.0, 2), dm.cylinder(1, 1.0, 1.0),
                dm.box([(0.0, 1.0), (0.0, 1.0)])):
        s = dom.boundary_samples(1024)
        assert len(s) >= 1024
        d = np.linalg.norm(s - dom.boundary_project(s), axis=1)
        assert d.max() < 1e-9 * dom.diameter


def test_cylinder_rim_normal_undefined():
    dom = dm.cylinder(1, 1.0, 1.0)
    rim = dom.inward_normal((1.0, 0.0))
    assert np.all(np.isnan(rim))
    bottom = dom.inward_normal((0.0, 0.0))
    assert np.allclose(bottom, (0.0, 1.0))
    side = dom.inward_normal((1.0, 0.5))
    assert np.allclose(side, (-1.0, 0.0))


def test_box_projection_and_normals():
    dom = dm.box([(0.0, 1.0), (0.0, 1.0)])
    assert np.allclose(dom.boundary_project((0.5, -1.0)), (0.5, 0.0))
    assert np.allclose(dom.boundary_project((0.5, 0.1)), (0.5, 0.0))
    assert np.allclose(dom.inward_normal((0.5, 0.0)), (0.0, 1.0))
    corner = dom.inward_normal((0.0, 0.0))
    assert np.all(np.isnan(corner))


def test_make_builtin_parsing():
    dom = dm.make_builtin("annulus 1.0 2.0 2")
    assert dom.kind == "annulus" and dom.dim == 2
    rect = dm.make_builtin("cylinder 1 1.0 1.0")
    assert rect.dim == 2
    bx = dm.make_builtin("box 0,1 0,2")
    assert bx.dim == 2
    with pytest.raises(ValueError):
        dm.make_builtin("torus 1 2")


def test_builtin_validation_names_offending_field():
    with pytest.raises(ValueError, match="r_in"):
        dm.annulus(2.0, 1.0, 2)
    with pytest.raises(ValueError, match="R"):
        dm.cylinder(1, -1.0, 1.0)
    with pytest.raises(ValueError, match="H"):
        dm.cylinder(1, 1.0, 0.0)
    with pytest.raises(ValueError, match="side"):
        dm.box([(1.0, 0.0)])


# ---------------------------------------------------------------------------
# enclosing tangent ball
# ---------------------------------------------------------------------------

def test_enclosing_ball_annulus_inner_point():
    # every |x|=1 satisfies |x - (-1,0)| <= 2 with equality only at (1,0),
    # so the sampled strict check holds once x0 itself is excluded
    dom = dm.annulus(1.0, 2.0, 2)
    F = dm.annulus_data(dom, "outer")  # {F=0} is the inner sphere
    assert dm.check_enclosing_ball(F, dom, (1.0, 0.0), 2.0) is True


def test_enclosing_ball_cylinder_flat_bottom():
    # the bottom disc is flat: no tangent ball at its center contains it strictly
    dom = dm.cylinder(1, 1.0, 1.0)
    F = dm.cylinder_sides_top(dom)  # {F=0} is the bottom
    for R in (0.5, 1.0, 2.0, 10.0):
        assert dm.check_enclosing_ball(F, dom, (0.0, 0.0), R) is False


def test_enclosing_ball_vacuous():
    dom = dm.annulus(1.0, 2.0, 2)
    F = dm.constant_data(1.0)
    assert dm.check_enclosing_ball(F, dom, (1.0, 0.0), 0.1) is True


def test_enclosing_ball_monotone_in_R():
    # with {F=0} in the tangent half-space, success at R implies success at R' > R
    dom = dm.annulus(1.0, 2.0, 2)
    F = dm.annulus_data(dom, "outer")
    results = [dm.check_enclosing_ball(F, dom, (1.0, 0.0), R)
               for R in np.linspace(1.2, 8.0, 12)]
    first_true = results.index(True)
    assert all(results[first_true:])


def test_enclosing_ball_errors():
    dom = dm.cylinder(1, 1.0, 1.0)
    F = dm.cylinder_sides_top(dom)
    with pytest.raises(ValueError, match="normal"):
        dm.check_enclosing_ball(F, dom, (1.0, 0.0), 1.0)  # rim: no normal
    with pytest.raises(ValueError, match="R"):
        dm.check_enclosing_ball(F, dom, (0.0, 0.0), -1.0)


# ---------------------------------------------------------------------------
# hyperplane separation
# ---------------------------------------------------------------------------

def test_separation_annulus_found_and_strict():
    dom = dm.annulus(1.0, 2.0, 2)
    F = dm.annulus_data(dom, "inner")
    x0 = np.array([2.0, 0.0])
    res = dm.check_hyperplane_separation(F, dom, x0)
    assert res is not None
    xi, beta = res
    assert abs(np.linalg.norm(xi) - 1.0) < 1e-9
    assert xi @ x0 > beta
    S = dom.boundary_samples(4096)
    ones = S[F.value(S) >= 0.5]
    assert np.all(ones @ xi < beta)
    # the max-margin separator for this geometry is the first axis at midgap
    assert xi[0] > 0.99
    assert abs(beta - 1.5) < 0.05


def test_separation_cylinder_rim_blocks():
    # {F=1} touches the tangent plane of the bottom at the rim, so no strict
    # separator exists once rim samples are present
    dom = dm.cylinder(1, 1.0, 1.0)
    F = dm.cylinder_sides_top(dom)
    assert dm.check_hyperplane_separation(F, dom, (0.0, 0.0)) is None


def test_separation_vacuous():
    dom = dm.annulus(1.0, 2.0, 2)
    F = dm.constant_data(0.0)
    res = dm.check_hyperplane_separation(F, dom, (2.0, 0.0))
    assert res is not None
    xi, beta = res
    assert xi @ np.array([2.0, 0.0]) > beta


# ---------------------------------------------------------------------------
# boundary data catalog
# ---------------------------------------------------------------------------

def test_indicator_values_binary_and_closed():
    dom = dm.cylinder(1, 1.0, 1.0)
    F = dm.cylinder_sides_top(dom)
    s = dom.boundary_samples(2048)
    v = F.value(s)
    assert set(np.unique(v)) <= {0.0, 1.0}
    # rim points belong to the closed {F=1}
    assert F.value(np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 1.0]])).tolist() == [1, 1, 1]


def test_ramp_payoff_matches_closed_form():
    dom = dm.cylinder(1, 1.0, 1.0)
    ramp = dm.cylinder_ramp_top(dom)
    xs = np.linspace(-1, 1, 21)
    pts = np.stack([xs, np.ones_like(xs)], axis=1)
    expect = np.minimum(1.0, 10.0 - 10.0 * np.abs(xs))
    assert np.allclose(ramp.value(pts), np.clip(expect, 0.0, 1.0))
    assert ramp.value(np.array([[0.3, 0.0]]))[0] == 0.0


def test_constant_data_validation():
    with pytest.raises(ValueError):
        dm.constant_data(0.5)

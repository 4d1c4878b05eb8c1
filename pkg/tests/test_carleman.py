from __future__ import annotations

import numpy as np
import pytest

from platelab.carleman import (
    Arc,
    CarlemanPreconditionError,
    FlowSpec,
    ManufacturedBump,
    WeightFunction,
    carleman_inequality_check,
    characteristic_bracket_closed_form,
    characteristic_samples,
    conjugated_symbol,
    flow_deform,
    flow_map,
    flow_velocity,
    poisson_bracket,
    verify_subellipticity,
)
from platelab.mesh import build_grid2d

LINEAR = {(1, 0): 1.0, (0, 1): 0.3}
SADDLE = {(2, 0): 1.0, (1, 0): -1.0, (0, 2): -1.0, (0, 1): 1.0}
# (x1 - 1/2)^2 + (x1 - 1/2)^4 - (x2 - 1/2)^2, a single interior saddle
QUARTIC_SADDLE = {
    (0, 0): 0.0625,
    (1, 0): -1.5,
    (2, 0): 2.5,
    (3, 0): -2.0,
    (4, 0): 1.0,
    (0, 1): 1.0,
    (0, 2): -1.0,
}


def _unit_region(n=33):
    return build_grid2d((0.0, 1.0, 0.0, 1.0), n, n)


def test_weight_calculus_matches_hand_derivatives():
    w = WeightFunction.from_coefficients({(3, 1): 2.0, (0, 2): -1.0, (0, 0): 0.5}, scale=1.5)
    x = np.array([0.7, 0.3])
    x1, x2 = x
    assert w.psi(x) == pytest.approx(2 * x1**3 * x2 - x2**2 + 0.5, rel=1e-14)
    np.testing.assert_allclose(
        w.grad_psi(x), [6 * x1**2 * x2, 2 * x1**3 - 2 * x2], rtol=1e-14
    )
    np.testing.assert_allclose(
        w.hess_psi(x), [[12 * x1 * x2, 6 * x1**2], [6 * x1**2, -2.0]], rtol=1e-14
    )
    # chain rule: grad phi = scale * phi * grad psi
    np.testing.assert_allclose(
        w.grad_phi(x), 1.5 * w.phi(x) * w.grad_psi(x), rtol=1e-14
    )


def test_weight_rejects_high_degree_and_bad_scale():
    with pytest.raises(ValueError):
        WeightFunction.from_coefficients({(3, 2): 1.0})
    with pytest.raises(ValueError):
        WeightFunction.from_coefficients(LINEAR, scale=0.0)
    with pytest.raises(ValueError):
        WeightFunction(coeffs=np.zeros((6, 6)).reshape(36), scale=1.0)


def test_characteristic_samples_annihilate_the_symbol():
    rng = np.random.default_rng(4)
    w = WeightFunction.from_coefficients(
        {(1, 0): 0.8, (0, 1): -0.4, (2, 0): 0.3, (1, 1): 0.2}, scale=2.0
    )
    pts = rng.uniform(0.1, 0.9, size=(50, 2))
    fans = characteristic_samples(w, pts, 8)
    assert fans.shape == (50, 8, 2)
    p = conjugated_symbol(w, pts[:, None, :], fans)
    scale = np.max(np.sum(fans**2, axis=-1))
    assert np.max(np.abs(p)) <= 1e-10 * scale
    with pytest.raises(ValueError):
        characteristic_samples(w, pts, 4)


def test_bracket_hand_values_for_a_linear_profile():
    # psi = x1, lam = 2: on the characteristic set the bracket reduces to
    # 4 lam^4 |grad psi|^4 e^{3 lam psi} = 64 e^{6 x1}.
    w = WeightFunction.from_coefficients({(1, 0): 1.0}, scale=2.0)
    origin = np.zeros(2)
    fan = characteristic_samples(w, origin, 8)
    np.testing.assert_allclose(poisson_bracket(w, origin, fan), 64.0, rtol=1e-12)
    np.testing.assert_allclose(
        characteristic_bracket_closed_form(w, origin, fan), 64.0, rtol=1e-12
    )
    x = np.array([0.3, 0.7])
    fan = characteristic_samples(w, x, 8)
    np.testing.assert_allclose(
        poisson_bracket(w, x, fan), 64.0 * np.exp(1.8), rtol=1e-12
    )


def test_bracket_hand_value_for_a_curved_profile():
    # psi = x1^2, lam = 1, x = (1, 0.2): grad psi = (2, 0), psi'' = diag(2, 0),
    # characteristic xi is normal to grad psi, so xi' psi'' xi = 0 and
    #   bracket = 4 e^{3} (1 * 16 + 1 * 8) = 96 e^3.
    w = WeightFunction.from_coefficients({(2, 0): 1.0}, scale=1.0)
    x = np.array([1.0, 0.2])
    fan = characteristic_samples(w, x, 8)
    expected = 96.0 * np.exp(3.0)
    np.testing.assert_allclose(poisson_bracket(w, x, fan), expected, rtol=1e-12)
    np.testing.assert_allclose(
        characteristic_bracket_closed_form(w, x, fan), expected, rtol=1e-12
    )
    # the misprinted-exponent variant halves this value and must disagree
    wrong = characteristic_bracket_closed_form(w, x, fan, printed_exponent=True)
    np.testing.assert_allclose(wrong, 0.5 * expected, rtol=1e-12)


def test_bracket_dual_routes_agree_on_random_weights():
    rng = np.random.default_rng(8)
    for _ in range(5):
        terms = {
            (i, j): float(rng.normal())
            for i in range(3)
            for j in range(3)
            if 0 < i + j <= 3
        }
        w = WeightFunction.from_coefficients(terms, scale=float(rng.uniform(0.5, 4.0)))
        pts = rng.uniform(0.0, 1.0, size=(40, 2))
        fans = characteristic_samples(w, pts, 8)
        a = poisson_bracket(w, pts, fans)
        b = characteristic_bracket_closed_form(w, pts, fans)
        scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-30)
        assert np.max(np.abs(a - b) / scale) <= 1e-8


def test_min_bracket_scales_as_the_fourth_power_of_lambda():
    region = _unit_region()
    lams = np.array([1.0, 2.0, 4.0, 8.0])
    mins = []
    for lam in lams:
        w = WeightFunction.from_coefficients(LINEAR, scale=float(lam))
        rep = verify_subellipticity(w, region)
        assert rep.certified
        mins.append(rep.min_bracket)
    slope = np.polyfit(np.log(lams), np.log(mins), 1)[0]
    assert abs(slope - 4.0) <= 0.1
    # at lam = 4 the minimum sits at the origin: 4 * 256 * (1 + 0.09)^2
    assert mins[2] == pytest.approx(4.0 * 256.0 * 1.09**2, rel=1e-9)


def test_linear_profile_is_certified_with_origin_witness():
    w = WeightFunction.from_coefficients(LINEAR, scale=4.0)
    rep = verify_subellipticity(w, _unit_region())
    assert rep.certified
    assert rep.witness == (0.0, 0.0)
    assert rep.critical_points.shape == (0, 2)
    assert not rep.degenerate_hessian
    assert rep.bracket_grid is not None and rep.bracket_grid.shape == (33, 33)
    assert rep.min_bracket == pytest.approx(float(np.min(rep.bracket_grid)))
    with pytest.raises(ValueError):
        verify_subellipticity(w, _unit_region(), n_xi=4)


def test_convex_profile_without_interior_critical_point_is_certified():
    # (x1 + 1)^2 + (x2 + 1)^2 is strictly convex with its minimum outside
    terms = {(2, 0): 1.0, (1, 0): 2.0, (0, 2): 1.0, (0, 1): 2.0, (0, 0): 2.0}
    w = WeightFunction.from_coefficients(terms, scale=4.0)
    rep = verify_subellipticity(w, _unit_region())
    assert rep.certified
    assert rep.min_bracket > 0.0
    assert rep.critical_points.shape == (0, 2)


def test_interior_saddle_defeats_certification():
    w = WeightFunction.from_coefficients(SADDLE, scale=2.0)
    rep = verify_subellipticity(w, _unit_region())
    assert not rep.certified
    assert np.isnan(rep.min_bracket)
    assert rep.bracket_grid is None
    # the Newton refinement lands on the true saddle
    assert rep.critical_points.shape[0] >= 1
    np.testing.assert_allclose(rep.critical_points[0], [0.5, 0.5], atol=1e-9)
    # the witness is the nearest grid node, here exactly the saddle
    assert rep.witness == (0.5, 0.5)


def _quartic_flow():
    psi1 = WeightFunction.from_coefficients(QUARTIC_SADDLE, scale=2.0)
    spec = FlowSpec(arcs=(Arc(start=(0.28, 0.5), end=(0.72, 0.5)),))
    region = _unit_region(33)
    return psi1, spec, region


def test_flow_velocity_is_supported_in_the_tube():
    _, spec, _ = _quartic_flow()
    arc = spec.arcs[0]
    v_center = flow_velocity(spec, arc.center())
    np.testing.assert_allclose(v_center, [arc.half_length(), 0.0], atol=1e-15)
    # outside the tube the field vanishes identically
    for far in ([0.5, 0.9], [0.05, 0.5], [0.95, 0.1]):
        np.testing.assert_array_equal(flow_velocity(spec, np.asarray(far)), [0.0, 0.0])


def test_flow_deformation_produces_the_exclusivity_certificate():
    psi1, spec, region = _quartic_flow()
    result = flow_deform(psi1, spec, region)
    assert len(result.arc_diagnostics) == 1
    diag = result.arc_diagnostics[0]
    # the plateau covers the arc, so the time-one map carries the saddle
    # exactly to the arc end and the lift equals psi1 there
    lift_exact = 0.22**2 + 0.22**4
    assert diag.critical_point == (0.5, 0.5)
    assert diag.lift_at_critical == pytest.approx(lift_exact, rel=1e-9)
    assert diag.drop_at_partner == pytest.approx(lift_exact, rel=1e-9)
    np.testing.assert_allclose(diag.partner_point, [0.28, 0.5], atol=1e-9)
    grad_exact = abs(2 * 0.22 + 4 * 0.22**3)
    assert diag.grad_psi1_at_partner == pytest.approx(grad_exact, rel=1e-9)
    assert diag.grad_psi2_at_critical == pytest.approx(grad_exact, rel=1e-3)
    assert result.round_trip_defect <= 1e-6
    assert result.frozen_band_defect == 0.0
    # psi2 callable agrees with the grid evaluation
    pts = region.points()[::97]
    np.testing.assert_allclose(
        result.psi2(pts),
        result.psi2_grid.reshape(-1)[::97],
        rtol=1e-12,
    )


def test_flow_deform_rejects_bad_geometry():
    psi1, _, region = _quartic_flow()
    # midpoint off the critical point
    with pytest.raises(ValueError):
        flow_deform(psi1, FlowSpec(arcs=(Arc((0.3, 0.5), (0.8, 0.5)),)), region)
    # endpoints on different levels
    with pytest.raises(ValueError):
        flow_deform(psi1, FlowSpec(arcs=(Arc((0.28, 0.5), (0.7, 0.49)),)), region)
    # tube leaving the region
    with pytest.raises(ValueError):
        flow_deform(
            psi1,
            FlowSpec(arcs=(Arc((0.28, 0.5), (0.72, 0.5)),), tube_radius=0.6),
            region,
        )


def test_flow_spec_validations():
    with pytest.raises(ValueError):
        FlowSpec(arcs=())
    with pytest.raises(ValueError):
        FlowSpec(arcs=(Arc((0.2, 0.5), (0.6, 0.5)),), normal_plateau=0.2)
    with pytest.raises(ValueError):
        FlowSpec(arcs=(Arc((0.2, 0.5), (0.6, 0.5)),), step=0.5)
    with pytest.raises(ValueError):
        FlowSpec(
            arcs=(Arc((0.2, 0.5), (0.4, 0.5)), Arc((0.25, 0.6), (0.45, 0.6))),
        )


def test_flow_map_round_trips_interior_points():
    _, spec, region = _quartic_flow()
    pts = np.array([[0.4, 0.5], [0.5, 0.55], [0.62, 0.45]])
    fwd = flow_map(spec, pts, 1.0, region.bounds)
    back = flow_map(spec, fwd, -1.0, region.bounds)
    assert np.max(np.abs(back - pts)) <= 1e-9


def test_manufactured_bump_derivatives_match_finite_differences():
    bump = ManufacturedBump(
        bounds=(0.0, 1.0, 0.0, 1.0), gamma="left", center=(0.5, 0.5), width=0.18
    )
    rng = np.random.default_rng(12)
    pts = rng.uniform(0.05, 0.95, size=(20, 2))
    eps = 1e-6
    e1 = np.array([eps, 0.0])
    e2 = np.array([0.0, eps])
    g_fd = np.stack(
        [
            (bump.value(pts + e1) - bump.value(pts - e1)) / (2 * eps),
            (bump.value(pts + e2) - bump.value(pts - e2)) / (2 * eps),
        ],
        axis=-1,
    )
    np.testing.assert_allclose(bump.grad(pts), g_fd, rtol=1e-6, atol=1e-8)
    lap_fd = (
        bump.value(pts + e1)
        + bump.value(pts - e1)
        + bump.value(pts + e2)
        + bump.value(pts - e2)
        - 4 * bump.value(pts)
    ) / eps**2
    np.testing.assert_allclose(bump.laplacian(pts), lap_fd, rtol=1e-3, atol=1e-5)
    # the field vanishes identically on its distinguished side
    edge = np.column_stack([np.zeros(9), np.linspace(0, 1, 9)])
    np.testing.assert_array_equal(bump.value(edge), 0.0)
    with pytest.raises(ValueError):
        ManufacturedBump(bounds=(0, 1, 0, 1), gamma="front", center=(0.5, 0.5), width=0.1)
    with pytest.raises(ValueError):
        ManufacturedBump(bounds=(0, 1, 0, 1), gamma="left", center=(0.5, 0.5), width=0.0)


def test_weighted_inequality_ratios_are_stable_in_h():
    w = WeightFunction.from_coefficients(LINEAR, scale=4.0)
    region = build_grid2d((0.0, 1.0, 0.0, 1.0), 65, 65)
    bump = ManufacturedBump(
        bounds=region.bounds, gamma="left", center=(0.5, 0.5), width=0.18
    )
    report = carleman_inequality_check(w, bump, "left", [0.2, 0.1, 0.05], region)
    assert np.all(report.lhs > 0.0) and np.all(report.rhs > 0.0)
    assert np.all(report.ratios > 0.0)
    assert report.ratio_spread() < 10.0
    assert report.min_bracket == pytest.approx(4.0 * 256.0 * 1.09**2, rel=1e-9)
    # both sides are quadratic in the field, so ratios are amplitude-free
    doubled = ManufacturedBump(
        bounds=region.bounds, gamma="left", center=(0.5, 0.5), width=0.18, amplitude=2.0
    )
    report2 = carleman_inequality_check(w, doubled, "left", [0.2, 0.1, 0.05], region)
    np.testing.assert_allclose(report2.ratios, report.ratios, rtol=1e-12)


def test_weighted_inequality_preconditions():
    region = _unit_region()
    bump = ManufacturedBump(
        bounds=region.bounds, gamma="left", center=(0.5, 0.5), width=0.18
    )
    saddle = WeightFunction.from_coefficients(SADDLE, scale=2.0)
    with pytest.raises(CarlemanPreconditionError):
        carleman_inequality_check(saddle, bump, "left", [0.1], region)
    linear = WeightFunction.from_coefficients(LINEAR, scale=4.0)
    with pytest.raises(ValueError):
        carleman_inequality_check(linear, bump, "right", [0.1], region)
    with pytest.raises(ValueError):
        carleman_inequality_check(linear, bump, "left", [], region)
    with pytest.raises(ValueError):
        carleman_inequality_check(linear, bump, "left", [0.1, -0.2], region)
    other = build_grid2d((0.0, 2.0, 0.0, 1.0), 33, 33)
    with pytest.raises(ValueError):
        carleman_inequality_check(linear, bump, "left", [0.1], other)
    # profile increasing toward gamma is refused
    rising = ManufacturedBump(
        bounds=region.bounds, gamma="right", center=(0.5, 0.5), width=0.18
    )
    with pytest.raises(CarlemanPreconditionError):
        carleman_inequality_check(linear, rising, "right", [0.1], region)


def test_error_types_are_distinguishable():
    assert issubclass(CarlemanPreconditionError, ValueError)

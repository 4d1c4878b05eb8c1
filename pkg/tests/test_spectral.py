from __future__ import annotations

import numpy as np
import pytest

from platelab.generator import assemble_generator
from platelab.mesh import build_mesh
from platelab.spectral import (
    ResolventScan,
    compute_spectrum,
    direct_resolvent_solve,
    eigen_to_pencil_points,
    factorized_resolvent_solve,
    fit_growth_envelope,
    point_in_region,
    reduced_generator,
    region_is_clear,
    resolvent_norm,
    sample_resolvent_data,
    scan_resolvent,
    trace_estimate_check,
)


def _gen(style="damped", a=1.0, b=1.0, N=101, c1=1.0, c2=2.0):
    mesh = build_mesh(L=1.0, x0=0.4, c1=c1, c2=c2, N=N)
    return assemble_generator(mesh, a, b, style=style)


def test_drift_chain_length_per_configuration():
    # hinged: SPD metric, nothing to quotient; damped: one drift mode;
    # free end with zero feedback: a two-link chain.
    for style, a, b, m in [("hinged", 0.0, 0.0, 0), ("damped", 1.0, 1.0, 1), ("damped", 0.0, 0.0, 2)]:
        gen = _gen(style=style, a=a, b=b, N=41)
        red = reduced_generator(gen)
        assert red.chain_length == m
        assert red.A_V.shape == (2 * gen.ndof - m,) * 2
        # Cholesky factor of the reduced metric exists and reproduces it
        np.testing.assert_allclose(red.R.T @ red.R, red.E_V, atol=1e-10 * np.abs(red.E_V).max())


def test_hinged_spectrum_matches_the_discrete_dirichlet_oracle():
    gen = _gen(style="hinged", a=0.0, b=0.0, N=101, c2=1.0)
    spec = compute_spectrum(gen)
    mesh = gen.mesh
    pos = np.sort(spec.eigenvalues.imag[spec.eigenvalues.imag > 0])
    k = np.arange(1, 6)
    mu = (4.0 / mesh.h**2) * np.sin(k * np.pi * mesh.h / 2.0) ** 2
    np.testing.assert_allclose(pos[:5], mu, rtol=1e-8)
    assert abs(spec.abscissa) < 1e-9
    assert spec.conjugation_defect <= 1e-9 * np.max(np.abs(spec.eigenvalues))


def test_damped_spectrum_lies_strictly_in_the_left_half_plane():
    gen = _gen(a=1.0, b=1.0)
    spec = compute_spectrum(gen)
    assert spec.abscissa < 0.0
    assert np.all(spec.eigenvalues.real < 0.0)


def test_pencil_points_are_rotated_eigenvalues():
    mu = np.array([1j, -2.0 + 3j])
    np.testing.assert_allclose(eigen_to_pencil_points(mu), [1.0, 3.0 + 2j])


def test_clearance_region_excludes_every_singular_point():
    gen = _gen()
    spec = compute_spectrum(gen)
    lam = eigen_to_pencil_points(spec.eigenvalues)
    outside = lam[np.abs(lam) > spec.region_inner_radius]
    for p in outside:
        assert not point_in_region(spec, complex(p))
    assert spec.region_amplitude > 0.0


def test_hinged_resolvent_norm_is_reciprocal_distance():
    # The hinged pencil is normal in the energy metric, so the resolvent
    # norm equals the reciprocal distance to the singular points.
    gen = _gen(style="hinged", a=0.0, b=0.0, N=101, c2=1.0)
    spec = compute_spectrum(gen)
    pts = eigen_to_pencil_points(spec.eigenvalues)
    for lam in (3.7 + 2.5j, 60.0 + 0.0j, 0.5 - 12.0j):
        dist = float(np.min(np.abs(pts - lam)))
        assert resolvent_norm(gen, lam) == pytest.approx(1.0 / dist, rel=0.05)


def test_zero_feedback_pencil_is_singular_on_the_real_axis():
    gen = _gen(a=0.0, b=0.0)
    spec = compute_spectrum(gen)
    pts = eigen_to_pencil_points(spec.eigenvalues)
    real_pts = np.sort(pts.real[np.abs(pts.imag) < 1e-8])
    target = float(real_pts[np.searchsorted(real_pts, 5.0)])  # an interior one
    near = resolvent_norm(gen, complex(target))
    far = resolvent_norm(gen, complex(target) + 0.5)
    assert near > 1e5 * far


def test_scan_estimates_bound_the_exact_norms_from_below():
    gen = _gen(N=41)
    scan = scan_resolvent(gen, (0.5, 4.0), (-3.0, 3.0), (4, 5))
    assert scan.norms.shape == (4, 5)
    for re, im, est in scan.iter_rows():
        exact = resolvent_norm(gen, complex(re, im))
        assert est <= exact * (1.0 + 1e-9)
        assert est >= 0.1 * exact


def test_scan_is_thread_invariant():
    gen = _gen(N=41)
    one = scan_resolvent(gen, (0.5, 4.0), (-2.0, 2.0), (3, 4), threads=1)
    two = scan_resolvent(gen, (0.5, 4.0), (-2.0, 2.0), (3, 4), threads=3)
    np.testing.assert_array_equal(one.norms, two.norms)


def test_scan_rejects_oversized_or_degenerate_grids():
    gen = _gen(N=41)
    with pytest.raises(ValueError):
        scan_resolvent(gen, (0.5, 4.0), (-2.0, 2.0), (1, 4))
    with pytest.raises(ValueError):
        scan_resolvent(gen, (0.5, 4.0), (-2.0, 2.0), (201, 201))


def test_growth_envelope_covers_the_real_axis_row():
    gen = _gen(N=41)
    scan = scan_resolvent(gen, (0.5, 6.0), (-1.0, 1.0), (6, 3))
    env = fit_growth_envelope(scan)
    assert env.rate >= 0.0
    assert env.max_defect <= 1e-12
    j = int(np.argmin(np.abs(scan.im_values)))
    covered = np.exp(env.intercept + env.rate * np.abs(scan.re_values))
    assert np.all(scan.norms[:, j] <= covered * (1.0 + 1e-9))


def test_region_clearance_flags_planted_blowup():
    gen = _gen()
    spec = compute_spectrum(gen)
    re_values = np.array([2.0, 4.0])
    im_values = np.array([-1e-6, 1e-6])  # deep inside the clearance region
    clean = ResolventScan(re_values, im_values, np.full((2, 2), 10.0))
    blown = ResolventScan(re_values, im_values, np.array([[10.0, 10.0], [10.0, 1e15]]))
    ok, worst_ok = region_is_clear(clean, spec)
    bad, worst_bad = region_is_clear(blown, spec)
    assert ok and worst_ok == 10.0
    assert not bad and worst_bad == 1e15


def test_factorized_solve_matches_the_direct_route():
    gen = _gen(N=101)
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(20):
        lam = complex(rng.uniform(1.0, 50.0), rng.uniform(-1e-2, 1e-2))
        F, G = sample_resolvent_data(gen.mesh, rng)
        direct = direct_resolvent_solve(gen, lam, F, G)
        fact = factorized_resolvent_solve(gen, lam, F, G)
        zd = gen.dof_vector(direct)
        zf = gen.dof_vector(fact)
        gap = zd - zf

        def e_norm(q):
            return float(np.sqrt(abs(np.conj(q) @ (gen.gram @ q))))

        worst = max(worst, e_norm(gap) / e_norm(zd))
    assert worst <= 1e-8


def test_factorized_solve_rejects_unsupported_inputs():
    gen_h = _gen(style="hinged", a=0.0, b=0.0, N=41)
    gen = _gen(N=41)
    F = np.zeros(gen.mesh.N)
    with pytest.raises(ValueError):
        factorized_resolvent_solve(gen_h, 1.0 + 0j, F, F)
    with pytest.raises(ValueError):
        factorized_resolvent_solve(gen, 1j, F, F)  # Re lam = 0
    with pytest.raises(ValueError):
        direct_resolvent_solve(gen, 1.0 + 0j, F[:-1], F[:-1])


def test_trace_bound_holds_with_stable_ratios():
    gen = _gen(N=101)
    rng = np.random.default_rng(7)
    ratios = []
    for _ in range(10):
        lam = complex(rng.uniform(1.0, 50.0), rng.uniform(-1e-2, 1e-2))
        F, G = sample_resolvent_data(gen.mesh, rng)
        est = trace_estimate_check(gen, lam, F, G)
        assert est.lhs >= 0.0 and est.rhs > 0.0
        assert est.ratio == pytest.approx(est.lhs / est.rhs)
        ratios.append(est.ratio)
    ratios = np.asarray(ratios)
    assert np.max(ratios) <= 10.0 * np.median(ratios)
    with pytest.raises(ValueError):
        trace_estimate_check(_gen(style="hinged", a=0.0, b=0.0, N=41), 1.0, None, None)


def test_sampled_data_is_pinned_and_seed_deterministic():
    mesh = build_mesh(L=1.0, x0=0.4, c1=1.0, c2=2.0, N=101)
    F1, G1 = sample_resolvent_data(mesh, np.random.default_rng(9))
    F2, G2 = sample_resolvent_data(mesh, np.random.default_rng(9))
    np.testing.assert_array_equal(F1, F2)
    np.testing.assert_array_equal(G1, G2)
    assert F1[0] == 0.0 and G1[0] == 0.0
    assert abs(F1[-1]) > 0.0  # trace terms at x = L are generically alive


def test_spectrum_rejects_an_inner_radius_that_empties_the_fit():
    gen = _gen(N=41)
    with pytest.raises(ValueError):
        compute_spectrum(gen, inner_radius=1e9)

import math

import numpy as np
import pytest
from scipy.integrate import quad

from platecont import carleman_frame as cf
from platecont import elasticity as el
from platecont import inequalities as ineq
from platecont import plate_solver as ps
from platecont import symbol_factor as sf
from platecont.fields import BumpProfile, Grid, ScalarField, grid_for_sigma_ball
from platecont.fields import test_function as annulus_bump

ISO = el.isotropic_spec(0.0, 0.5)


# ---------------------------------------------------------------------------
# exponent arithmetic


def test_theta1_frozen_example():
    consts = ineq.CertificateConstants(beta=1.0, gamma2=1.0)
    # (5 - 2.5) / (20 - 2.5) = 1/7
    assert consts.theta1(0.1, 0.2, 0.8) == pytest.approx(1.0 / 7.0, rel=1e-14)


def test_theta_scale_invariance():
    consts = ineq.CertificateConstants(beta=0.7, gamma2=0.9)
    t1 = consts.theta1(0.1, 0.2, 0.8)
    t2 = consts.theta1(0.2, 0.4, 1.6)
    assert t1 == pytest.approx(t2, rel=1e-12)
    e1 = consts.exp_argument(0.2, 0.8, 1.0)
    e2 = consts.exp_argument(0.4, 1.6, 2.0)
    assert e1 == pytest.approx(e2, rel=1e-12)


# ---------------------------------------------------------------------------
# second order Carleman runs


def _radial_oracle_ratio(tau, beta, profile):
    """Polar-coordinates quadrature of the second order two-sided data."""

    def eta(r):
        return profile(np.array([r]))[0]

    def eta1(r, h=1e-6):
        return (eta(r + h) - eta(r - h)) / (2 * h)

    def eta2(r, h=1e-5):
        return (eta(r + h) - 2 * eta(r) + eta(r - h)) / h**2

    r_in, r_out = profile.r_in, profile.r_out
    s0 = 2 * tau * r_in ** (-beta)
    W = lambda r: np.exp(2 * tau * r ** (-beta) - s0)
    lhs1 = quad(lambda r: r**beta * W(r) * eta1(r) ** 2 * 2 * np.pi * r, r_in, r_out, limit=400)[0]
    lhs2 = quad(
        lambda r: r ** (-beta - 2) * W(r) * eta(r) ** 2 * 2 * np.pi * r, r_in, r_out, limit=400
    )[0]
    rhs = quad(
        lambda r: r ** (2 * beta + 2) * W(r) * (eta2(r) + eta1(r) / r) ** 2 * 2 * np.pi * r,
        r_in, r_out, limit=400,
    )[0]
    return (tau * lhs1 + tau**3 * lhs2) / rhs


def test_carleman_second_order_matches_polar_oracle():
    beta = 0.5
    w = cf.QuadraticWeight(np.eye(2), beta=beta)
    metric = cf.ConstantMetric(np.eye(2))
    g = Grid.square(513, 0.55)
    u = annulus_bump(g, 0.2, 0.5, m=0, smoothness=5, weight=w)
    rep = ineq.carleman_second_order(metric, w, u, [20.0, 80.0], "radial")
    for tau, ratio in zip(rep.taus, rep.ratios):
        oracle = _radial_oracle_ratio(tau, beta, u.profile)
        assert ratio == pytest.approx(oracle, rel=0.02)


def test_carleman_second_order_scaling_invariance():
    w = cf.QuadraticWeight(np.eye(2), beta=0.5)
    metric = cf.ConstantMetric(np.eye(2))
    g = Grid.square(257, 0.55)
    u = annulus_bump(g, 0.2, 0.5, m=1, smoothness=5, weight=w)
    rep1 = ineq.carleman_second_order(metric, w, u, [10.0], "u")
    rep2 = ineq.carleman_second_order(metric, w, 3.0 * u, [10.0], "3u")
    assert rep2.lhs[0] == pytest.approx(9.0 * rep1.lhs[0], rel=1e-12)
    assert rep2.ratios[0] == pytest.approx(rep1.ratios[0], rel=1e-12)


def test_carleman_second_order_beta_below_omega0_rejected():
    # anisotropic metric with Gamma = I: omega0 > 0
    w = cf.QuadraticWeight(np.eye(2), beta=0.2)
    metric = cf.ConstantMetric(np.diag([1.0, 4.0]))
    g = Grid.square(65, 0.55)
    u = annulus_bump(g, 0.2, 0.5, m=0, smoothness=4, weight=w)
    with pytest.raises(ineq.AdmissibilityError):
        ineq.carleman_second_order(metric, w, u, [5.0])


def test_carleman_support_in_core_rejected():
    w = cf.QuadraticWeight(np.eye(2), beta=0.5, sigma_min=0.25)
    metric = cf.ConstantMetric(np.eye(2))
    g = Grid.square(65, 0.55)
    u = annulus_bump(g, 0.2, 0.5, m=0, smoothness=4, weight=w)
    with pytest.raises(ineq.AdmissibilityError):
        ineq.carleman_second_order(metric, w, u, [5.0])


def test_carleman_degenerate_zero_field():
    w = cf.QuadraticWeight(np.eye(2), beta=0.5)
    metric = cf.ConstantMetric(np.eye(2))
    g = Grid.square(65, 0.55)
    rep = ineq.carleman_second_order(metric, w, ScalarField(g, np.zeros(g.shape)), [5.0])
    assert rep.degenerate
    assert math.isnan(rep.ratios[0])


def test_carleman_report_csv(tmp_path):
    w = cf.QuadraticWeight(np.eye(2), beta=0.5)
    metric = cf.ConstantMetric(np.eye(2))
    g = Grid.square(129, 0.55)
    u = annulus_bump(g, 0.2, 0.5, m=0, smoothness=4, weight=w)
    rep = ineq.carleman_second_order(metric, w, u, [5.0, 10.0, 20.0], "csv")
    rep.save_csv(tmp_path / "run.csv")
    lines = (tmp_path / "run.csv").read_text().strip().splitlines()
    assert lines[0] == "tau,lhs,rhs,ratio"
    assert len(lines) == 4


# ---------------------------------------------------------------------------
# fourth order Carleman runs


def test_carleman_fourth_order_biharmonic_pair():
    w = cf.QuadraticWeight(np.eye(2), beta=0.5)
    metric = cf.ConstantMetric(np.eye(2))
    g = Grid.square(257, 0.55)
    ratios = []
    for m in (0, 1):
        u = annulus_bump(g, 0.2, 0.5, m=m, smoothness=5, weight=w)
        rep = ineq.carleman_fourth_order(metric, metric, w, u, [5.0, 10.0, 20.0, 40.0], f"m{m}")
        assert all(np.isfinite(rep.ratios))
        ratios.append(max(rep.ratios))
    assert max(ratios) < 1e3


def golden_normalized_setup(beta_margin=1.1):
    q = el.QuarticCoefficients(1, 0, 3, 0, 1)
    pair = sf.metrics_from_roots(sf.solve_quartic(q), 1.0)
    frame = cf.normalize_pair(pair.g1, pair.g2)
    beta = beta_margin * (np.sqrt(frame.mu[-1] / frame.mu[0]) - 1.0)
    w0 = cf.QuadraticWeight.from_mu(frame.mu, beta)
    m1 = cf.ConstantMetric(frame.Psi @ pair.g1 @ frame.Psi.T)
    m2 = cf.ConstantMetric(frame.Psi @ pair.g2 @ frame.Psi.T)
    return w0, m1, m2


def test_carleman_fourth_order_golden_pair_finite():
    w0, m1, m2 = golden_normalized_setup()
    g = grid_for_sigma_ball(w0, 1.0, 257)
    u = annulus_bump(g, 0.7, 1.0, m=1, smoothness=7, weight=w0)
    rep = ineq.carleman_fourth_order(m1, m2, w0, u, [5.0, 10.0, 20.0], "golden")
    assert all(np.isfinite(rep.ratios))
    assert all(r > 0 for r in rep.ratios)


def test_carleman_fourth_order_beta_bound_enforced():
    w0, m1, m2 = golden_normalized_setup()
    low = cf.QuadraticWeight(w0.Gamma, beta=0.5)  # below the golden bound 1.618
    g = grid_for_sigma_ball(w0, 1.0, 65)
    u = annulus_bump(g, 0.7, 1.0, m=0, smoothness=5, weight=w0)
    with pytest.raises(ineq.AdmissibilityError):
        ineq.carleman_fourth_order(m1, m2, low, u, [5.0])


# ---------------------------------------------------------------------------
# three-sphere certificates


def _biharmonic_solution(n=129, k=3):
    def u_exact(p):
        z = p[..., 1] + 1j * p[..., 0]
        return (z**k).real

    prob = ps.PlateProblem(spec=ISO, domain=("disk", 1.0), bc=("manufactured", u_exact))
    return ps.solve(prob, prob.make_grid(n)).field


CONSTS = ineq.CertificateConstants(beta=1.0, gamma2=1.0, s_pract=0.5)


def test_v1_constant_field_ball_measure_oracle():
    g = Grid.square(257, 1.0)
    c = 0.7
    u = ScalarField(g, np.full(g.shape, c))
    r, rho, rho1 = 0.1, 0.2, 0.45
    cert = ineq.three_sphere_v1(u, r, rho, rho1, 1.0, CONSTS)
    th = cert.theta1
    # derivative sums reduce to c^2 * pi * t^2 (area of each ball)
    expected = (
        (c**2 * np.pi * rho**2)
        / ((c**2 * np.pi * r**2) ** th * (c**2 * np.pi * rho1**2) ** (1 - th))
    )
    assert cert.C_emp == pytest.approx(expected, rel=1e-3)


def test_v1_finite_on_solution():
    u = _biharmonic_solution()
    cert = ineq.three_sphere_v1(u, 0.1, 0.2, 0.45, 1.0, CONSTS)
    assert cert.admissible
    assert np.isfinite(cert.C_emp) and cert.C_emp > 0


def test_certificates_invariant_under_scaling():
    u = _biharmonic_solution()
    for fn in (ineq.three_sphere_v1, ineq.three_sphere_v2, ineq.three_sphere_v3):
        c1 = fn(u, 0.1, 0.2, 0.45, 1.0, CONSTS)
        c2 = fn(2.0 * u, 0.1, 0.2, 0.45, 1.0, CONSTS)
        assert c2.C_emp == pytest.approx(c1.C_emp, rel=1e-10)


def test_v2_affine_invariance():
    u = _biharmonic_solution()
    cert = ineq.three_sphere_v2(u, 0.1, 0.2, 0.4, 1.0, CONSTS)
    pts = u.grid.points()
    shifted = ScalarField(u.grid, u.values + 5.0 - 2.0 * pts[..., 0] + pts[..., 1], u.domain_mask)
    cert2 = ineq.three_sphere_v2(shifted, 0.1, 0.2, 0.4, 1.0, CONSTS)
    assert cert2.C_emp == pytest.approx(cert.C_emp, rel=1e-8)


def test_v2_affine_field_degenerate():
    g = Grid.square(65, 1.0)
    pts = g.points()
    u = ScalarField(g, 1.0 + pts[..., 0] - 2.0 * pts[..., 1])
    cert = ineq.three_sphere_v2(u, 0.1, 0.2, 0.4, 1.0, CONSTS)
    assert cert.degenerate
    assert cert.A == pytest.approx(0.0, abs=1e-18)


def test_v2_outer_ball_must_fit():
    # declared solved radius 0.9 while the doubled outer ball reaches 0.92:
    # the certificate is still computed but flagged inadmissible
    u = _biharmonic_solution(65)
    cert = ineq.three_sphere_v2(u, 0.05, 0.1, 0.46, 0.9, CONSTS)
    assert not cert.admissible
    assert any("2*rho1" in f for f in cert.flags)
    assert np.isfinite(cert.C_emp)


def test_v3_theta_relation():
    u = _biharmonic_solution()
    cert3 = ineq.three_sphere_v3(u, 0.1, 0.2, 0.45, 1.0, CONSTS)
    assert cert3.theta == cert3.theta1 / 4.0
    cert1 = ineq.three_sphere_v1(u, 0.1, 0.2, 0.45, 1.0, CONSTS)
    assert cert3.theta1 == pytest.approx(cert1.theta1, rel=1e-14)


def test_v3_zero_field_degenerate():
    g = Grid.square(65, 1.0)
    cert = ineq.three_sphere_v3(ScalarField(g, np.zeros(g.shape)), 0.1, 0.2, 0.45, 1.0, CONSTS)
    assert cert.degenerate


def test_complete_reduces_to_v3_at_zero_epsilon():
    u = _biharmonic_solution()
    u0 = ScalarField(u.grid, np.zeros(u.grid.shape), u.domain_mask)
    base = ineq.three_sphere_v3(u, 0.1, 0.2, 0.45, 1.0, CONSTS)
    comp = ineq.three_sphere_complete(u, u0, 0.0, (0.1, 0.2, 0.45), 1.0, CONSTS)
    assert comp.C_emp**2 == pytest.approx(base.C_emp, rel=1e-10)


def test_complete_monotone_in_epsilon():
    u = _biharmonic_solution()
    u0 = ScalarField(u.grid, np.zeros(u.grid.shape), u.domain_mask)
    c1 = ineq.three_sphere_complete(u, u0, 0.01, (0.1, 0.2, 0.45), 1.0, CONSTS)
    c2 = ineq.three_sphere_complete(u, u0, 0.02, (0.1, 0.2, 0.45), 1.0, CONSTS)
    assert c2.C_emp <= c1.C_emp * (1 + 1e-12)


def test_complete_with_inhomogeneous_solution():
    def fbump(p):
        return np.exp(-((p[..., 0] ** 2 + p[..., 1] ** 2) / 0.1))

    rep0, _ = ps.solve_clamped_inhomogeneous((fbump, None, None), ISO, 1.0, 1.0, n=129)

    def u_exact(p):
        z = p[..., 1] + 1j * p[..., 0]
        return (z**3).real

    prob = ps.PlateProblem(
        spec=ISO, domain=("disk", 1.0), bc=("manufactured", u_exact), rhs=(fbump, None, None)
    )
    u = ps.solve(prob, prob.make_grid(129)).field
    eps = rep0.meta["rhs_norm_measured"]
    cert = ineq.three_sphere_complete(u, rep0.field, eps, (0.1, 0.2, 0.45), 1.0, CONSTS)
    assert np.isfinite(cert.C_emp) and cert.C_emp > 0


def test_complete_requires_u0():
    u = _biharmonic_solution(65)
    with pytest.raises(ValueError):
        ineq.three_sphere_complete(u, None, 0.0, (0.1, 0.2, 0.45), 1.0, CONSTS)


# ---------------------------------------------------------------------------
# supporting inequalities


def test_poincare_affine_degenerate():
    g = Grid.square(65, 1.0)
    pts = g.points()
    u = ScalarField(g, 2.0 + pts[..., 0])
    assert math.isnan(ineq.poincare_check(u, 0.5, 0.9))


def test_poincare_quadratic_mesh_stable():
    vals = []
    for n in (129, 257):
        g = Grid.square(n, 1.0)
        u = ScalarField(g, g.points()[..., 0] ** 2)
        vals.append(ineq.poincare_check(u, 0.9, 0.9))
    assert np.isfinite(vals[0])
    assert vals[0] == pytest.approx(vals[1], rel=0.05)


def test_poincare_invariant_under_affine_addition():
    g = Grid.square(129, 1.0)
    pts = g.points()
    u = ScalarField(g, pts[..., 0] ** 2)
    v = ScalarField(g, pts[..., 0] ** 2 + 3.0 + 0.5 * pts[..., 1])
    assert ineq.poincare_check(u, 0.5, 0.9) == pytest.approx(
        ineq.poincare_check(v, 0.5, 0.9), rel=1e-10
    )


def test_caccioppoli_affine_zero():
    g = Grid.square(65, 1.0)
    pts = g.points()
    u = ScalarField(g, 1.0 + pts[..., 0] + pts[..., 1])
    assert ineq.caccioppoli_check(u, 0.8) == pytest.approx(0.0, abs=1e-18)


def test_caccioppoli_quadratic_solution():
    def u_exact(p):
        return p[..., 0] ** 2 - p[..., 1] ** 2

    prob = ps.PlateProblem(spec=ISO, domain=("disk", 1.0), bc=("manufactured", u_exact))
    u = ps.solve(prob, prob.make_grid(129)).field
    val = ineq.caccioppoli_check(u, 0.8)
    assert np.isfinite(val)
    assert val == pytest.approx(0.0, abs=1e-10)  # third derivatives vanish


def test_caccioppoli_scaling_sweep():
    u = _biharmonic_solution(129, k=5)
    v1 = ineq.caccioppoli_check(u, 0.8)
    v2 = ineq.caccioppoli_check(u, 0.8 / np.sqrt(2.0))
    assert np.isfinite(v1) and np.isfinite(v2) and v1 > 0
    assert 0.25 < v1 / v2 < 4.0


def test_interpolation_constant_field():
    g = Grid.square(65, 1.0)
    u = ScalarField(g, np.full(g.shape, 2.5))
    assert ineq.interpolation_check(u, 0.9) == pytest.approx(1.0, rel=1e-12)


def test_interpolation_scale_invariance():
    u = _biharmonic_solution(129, k=4)
    a = ineq.interpolation_check(u, 0.4)
    b = ineq.interpolation_check(17.0 * u, 0.4)
    assert a == pytest.approx(b, rel=1e-12)


def test_interpolation_oscillatory_bounded_in_frequency():
    vals = []
    for lam in (2.0, 8.0, 32.0):
        g = Grid.square(513, 1.0)
        u = ScalarField(g, np.cos(lam * g.points()[..., 0]))
        vals.append(ineq.interpolation_check(u, 0.8))
    assert np.all(np.isfinite(vals))
    assert max(vals) < 3.0


def test_interpolation_rejects_zero_field():
    g = Grid.square(33, 1.0)
    with pytest.raises(ValueError):
        ineq.interpolation_check(ScalarField(g, np.zeros(g.shape)), 0.5)

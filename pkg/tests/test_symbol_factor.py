import numpy as np
import pytest

from platecont import elasticity as el
from platecont import symbol_factor as sf

from conftest import random_quartic

GOLDEN = el.QuarticCoefficients(1, 0, 3, 0, 1)
B1 = np.sqrt((3 - np.sqrt(5)) / 2)
B2 = np.sqrt((3 + np.sqrt(5)) / 2)


def test_solve_quartic_biharmonic():
    # double root at i: each computed root is accurate only to the
    # square root of the evaluation noise, their mean to much better
    pair = sf.solve_quartic(el.QuarticCoefficients(1, 0, 2, 0, 1))
    assert pair.alpha1 == pytest.approx(0.0, abs=1e-9)
    assert pair.alpha2 == pytest.approx(0.0, abs=1e-9)
    assert pair.beta1 == pytest.approx(1.0, rel=1e-7)
    assert pair.beta2 == pytest.approx(1.0, rel=1e-7)
    assert 0.5 * (pair.beta1 + pair.beta2) == pytest.approx(1.0, rel=1e-10)


def test_solve_quartic_golden():
    pair = sf.solve_quartic(GOLDEN)
    assert pair.alpha1 == pytest.approx(0.0, abs=1e-12)
    assert pair.beta1 == pytest.approx(B1, rel=1e-12)
    assert pair.beta2 == pytest.approx(B2, rel=1e-12)


def test_solve_quartic_vieta_sum():
    rng = np.random.default_rng(23)
    for _ in range(200):
        q = random_quartic(rng, rng.uniform(0.1, 1.0))
        pair = sf.solve_quartic(q)
        # sum of all four roots: 2 (alpha1 + alpha2) = -a1/a0
        total = 2.0 * (pair.alpha1 + pair.alpha2)
        assert total == pytest.approx(-q.a1 / q.a0, abs=1e-8 * (1 + abs(q.a1 / q.a0)))


def test_solve_quartic_real_root_rejected():
    # (t^2 - 1)(t^2 + 1) = t^4 - 1 has real roots
    with pytest.raises(el.EllipticityError):
        sf.solve_quartic([1.0, 0.0, 0.0, 0.0, -1.0])


def test_solve_quartic_nonpositive_leading():
    with pytest.raises(el.EllipticityError):
        sf.solve_quartic([0.0, 0.0, 1.0, 0.0, 1.0])


def test_reconstruction_matches_input():
    rng = np.random.default_rng(29)
    for _ in range(100):
        q = random_quartic(rng, 0.2)
        pair = sf.solve_quartic(q)
        recon = sf.reconstruct_quartic(pair, q.a0)
        assert np.max(np.abs(recon - q.as_array())) <= 1e-9 * np.max(np.abs(q.as_array()))


def test_metrics_identity_for_biharmonic():
    pair = sf.RootPair(0.0, 1.0, 0.0, 1.0)
    mp = sf.metrics_from_roots(pair, 1.0)
    assert np.allclose(mp.g1, np.eye(2))
    assert np.allclose(mp.g2, np.eye(2))


def test_metrics_golden_diagonal():
    pair = sf.solve_quartic(GOLDEN)
    mp = sf.metrics_from_roots(pair, 1.0)
    assert np.allclose(mp.g1, np.diag([1.0, B1**2]), atol=1e-12)
    assert np.allclose(mp.g2, np.diag([1.0, B2**2]), atol=1e-12)


def test_metric_determinant_identity():
    rng = np.random.default_rng(31)
    for _ in range(100):
        q = random_quartic(rng, 0.2)
        pair = sf.solve_quartic(q)
        mp = sf.metrics_from_roots(pair, q.a0)
        assert np.linalg.det(mp.g1) == pytest.approx(q.a0 * pair.beta1**2, rel=1e-10)
        assert np.linalg.det(mp.g2) == pytest.approx(q.a0 * pair.beta2**2, rel=1e-10)


def test_verify_factorization_biharmonic():
    mp = sf.MetricPair(np.eye(2), np.eye(2), 1.0)
    dev = sf.verify_factorization(mp, el.QuarticCoefficients(1, 0, 2, 0, 1))
    assert dev < 1e-15


def test_verify_factorization_golden_hand_expansion():
    # (xi1^2 + b1^2 xi2^2)(xi1^2 + b2^2 xi2^2): middle coefficient b1^2 + b2^2 = 3
    mp = sf.MetricPair(np.diag([1.0, B1**2]), np.diag([1.0, B2**2]), 1.0)
    coeffs = sf.expand_product(mp)
    assert coeffs[2] == pytest.approx(3.0, rel=1e-14)
    dev = sf.verify_factorization(mp, GOLDEN, rtol=1e-12)
    assert dev < 1e-12


def test_verify_factorization_random_tensors():
    rng = np.random.default_rng(37)
    for _ in range(1000):
        q = random_quartic(rng, rng.uniform(0.1, 1.0))
        pair = sf.solve_quartic(q)
        mp = sf.metrics_from_roots(pair, q.a0)
        assert sf.verify_factorization(mp, q, rtol=1e-9) < 1e-9


def test_verify_factorization_failure_names_coefficient():
    mp = sf.MetricPair(np.eye(2), np.eye(2), 1.0)
    with pytest.raises(sf.FactorizationError) as err:
        sf.verify_factorization(mp, GOLDEN, rtol=1e-3)
    assert "a2" in str(err.value)


def test_explicit_constants_unit_gamma():
    consts = sf.explicit_constants(1.0, 1.0 / 32.0)
    assert consts.gamma1 == 1.0
    assert consts.gamma2 == pytest.approx(5.0**-6)
    assert consts.beta_worstcase == pytest.approx(5.0**12 - 1.0)
    assert consts.epsilon0 == pytest.approx(1.0 / np.sqrt(50.0))


def test_explicit_constants_gamma1_chain():
    consts = sf.explicit_constants(1.0, 1.0)
    assert consts.gamma1 == pytest.approx(1.0 / 16.0)
    assert consts.gamma2 == pytest.approx(5.0**-6 * 16.0**-15)


def test_explicit_constants_beta_floor():
    consts = sf.explicit_constants(1.0, 1.0, np.eye(2), np.eye(2))
    assert consts.beta_bound == pytest.approx(0.0, abs=1e-14)
    assert consts.beta_practical == 0.1


def test_explicit_constants_eigenvalue_ratio():
    consts = sf.explicit_constants(1.0, 1.0, np.eye(2), np.diag([1.0, 4.0]))
    assert consts.beta_bound == pytest.approx(1.0)
    assert consts.beta_practical == pytest.approx(1.1)


def test_metric_eigenvalue_and_root_bounds():
    rng = np.random.default_rng(41)
    for _ in range(300):
        gamma = rng.uniform(0.1, 1.0)
        q = random_quartic(rng, gamma)
        M = 4.0 * sum(abs(v) for v in q)  # crude but valid C^(1,1) bound
        consts = sf.explicit_constants(gamma, M)
        pair = sf.solve_quartic(q)
        box = 1.0 / (consts.gamma1 * consts.epsilon0)
        for b in (pair.beta1, pair.beta2):
            assert b > consts.epsilon0
            assert b <= box
        for a in (pair.alpha1, pair.alpha2):
            assert abs(a) <= box
        mp = sf.metrics_from_roots(pair, q.a0)
        for g in (mp.g1, mp.g2):
            evals = np.linalg.eigvalsh(g)
            assert evals[0] >= consts.gamma2
            assert evals[-1] <= 1.0 / consts.gamma2


def test_symmetric_functions_reproduce_coefficients():
    rng = np.random.default_rng(43)
    for _ in range(200):
        q = random_quartic(rng, 0.2)
        pair = sf.solve_quartic(q)
        P = sf.symmetric_functions(pair.alpha1, pair.alpha2, pair.beta1**2, pair.beta2**2)
        a0 = q.a0
        recon = np.array([-2 * a0 * P[0], a0 * P[1], -2 * a0 * P[2], a0 * P[3]])
        target = q.as_array()[1:]
        assert np.max(np.abs(recon - target)) <= 1e-8 * max(1.0, np.max(np.abs(target)))


def test_jacobian_discriminant_identity():
    # J^2 / discriminant = 1 / (16 a0^6 b1^2 b2^2), bounded by the root box
    rng = np.random.default_rng(47)
    ratios = []
    for _ in range(300):
        gamma = rng.uniform(0.1, 1.0)
        q = random_quartic(rng, gamma)
        pair = sf.solve_quartic(q)
        d = el.discriminant_roots(pair, q.a0)
        if d < 1e-12:
            continue
        J = sf.root_jacobian(pair.alpha1, pair.alpha2, pair.beta1**2, pair.beta2**2)
        ratios.append(J**2 / d)
        expected = 1.0 / (16.0 * q.a0**6 * pair.beta1**2 * pair.beta2**2)
        assert J**2 / d == pytest.approx(expected, rel=1e-8)
    ratios = np.array(ratios)
    assert ratios.min() > 0.0 and np.isfinite(ratios.max())


def test_factor_field_constant_tensor():
    spec = el.orthotropic_spec(1.0, 0.25, 0.5, 0.0)
    xs = np.linspace(-1, 1, 9)
    ff = sf.factor_field(spec, xs, xs)
    assert ff.dichotomy == "Positive"
    assert ff.lipschitz == pytest.approx(0.0, abs=1e-12)
    assert ff.hessian == pytest.approx(0.0, abs=1e-10)
    assert np.allclose(ff.g1, ff.g1[0, 0])


def _zero_dichotomy_field_spec():
    """Variable isotropic field: discriminant identically zero."""
    z = np.zeros((2, 2))
    lam = z.copy()
    lam[0, 0] = 0.2
    lam[0, 1] = 0.05
    mu = z.copy()
    mu[0, 0] = 0.5
    mu[1, 0] = 0.1
    payload = {
        "A0": lam + 2 * mu,
        "B0": lam,
        "C0": z,
        "D0": z,
        "E0": mu,
        "F0": lam + 2 * mu,
        "halfwidth": 1.0,
    }
    return el.ElasticityTensorSpec("coefficient_field", payload, gamma=0.3, M=30)


def test_factor_field_zero_case_closed_form_agrees_with_roots():
    spec = _zero_dichotomy_field_spec()
    xs = np.linspace(-0.9, 0.9, 7)
    ff = sf.factor_field(spec, xs, xs)
    assert ff.dichotomy == "Zero"
    # closed form must agree with the companion-matrix route pointwise;
    # compare against the mean of the two companion roots, which is
    # accurate even where the pair degenerates
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    for i in range(len(xs)):
        for j in range(len(xs)):
            c6 = el.evaluate_tensor(spec, np.array([X[i, j], Y[i, j]]))
            pair = sf.solve_quartic(el.quartic_coefficients(c6))
            alpha_mean = 0.5 * (pair.alpha1 + pair.alpha2)
            beta_mean = 0.5 * (pair.beta1 + pair.beta2)
            assert ff.alpha[i, j, 0] == pytest.approx(alpha_mean, abs=1e-9)
            assert ff.beta[i, j, 0] == pytest.approx(beta_mean, rel=1e-9)


def _positive_polynomial_spec():
    """Orthotropic polynomial field with strictly positive discriminant."""
    z = np.zeros((2, 2))
    one = z.copy()
    one[0, 0] = 1.0
    e0 = z.copy()
    e0[0, 0] = 0.75
    e0[1, 0] = 0.05
    e0[0, 1] = 0.03
    payload = {"A0": one, "B0": z, "C0": z, "D0": z, "E0": e0, "F0": one, "halfwidth": 1.0}
    return el.ElasticityTensorSpec("coefficient_field", payload, gamma=0.5, M=30)


def test_factor_field_seed_invariance_up_to_swap():
    spec = _positive_polynomial_spec()
    xs = np.linspace(-0.9, 0.9, 11)
    ff_a = sf.factor_field(spec, xs, xs, seed=(0, 0))
    ff_b = sf.factor_field(spec, xs, xs, seed=(10, 10))
    same = np.allclose(ff_a.beta, ff_b.beta, atol=1e-12)
    swapped = np.allclose(ff_a.beta, ff_b.beta[..., ::-1], atol=1e-12)
    assert same or swapped


def test_factor_field_refuses_violated_region():
    # reuse the mixed-sign field from the elasticity tests
    from test_elasticity import _mixed_field_spec

    spec = _mixed_field_spec()
    xs = np.linspace(-1, 1, 9)
    with pytest.raises(el.EllipticityError):
        sf.factor_field(spec, xs, xs)


def test_factor_field_export(tmp_path):
    spec = el.orthotropic_spec(1.0, 0.25, 0.5, 0.0)
    xs = np.linspace(-1, 1, 5)
    ff = sf.factor_field(spec, xs, xs)
    prefix = tmp_path / "field"
    ff.save(prefix)
    assert (tmp_path / "field.json").exists()
    lines = (tmp_path / "field.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 25  # header + nodes


def test_lipschitz_bounded_by_delta1_rate():
    """Gradient of the factors obeys the delta1^(-1/2) shaped bound.

    The offset of a2 from its degenerate value 2 shrinks across the
    sweep while the spatial gradient of a2 stays fixed, driving delta1
    toward 0.  The measured Lipschitz bound must grow monotonically and
    the product lipschitz * sqrt(delta1) must stay bounded by its value
    on the best-conditioned member (the bound need not be saturated).
    """
    lips = []
    deltas = []
    for eps in (0.4, 0.2, 0.1, 0.05):
        z = np.zeros((2, 2))
        one = z.copy()
        one[0, 0] = 1.0
        e0 = z.copy()
        e0[0, 0] = 0.5 + eps / 2  # a2 = 2 + 2*eps at the center
        e0[1, 0] = 0.01  # fixed spatial gradient of a2
        payload = {"A0": one, "B0": z, "C0": z, "D0": z, "E0": e0, "F0": one, "halfwidth": 1.0}
        spec = el.ElasticityTensorSpec("coefficient_field", payload, gamma=0.4, M=30)
        xs = np.linspace(-0.9, 0.9, 13)
        ff = sf.factor_field(spec, xs, xs)
        assert ff.dichotomy == "Positive"
        rep = el.classify_dichotomy(spec, ("rect", -0.9, 0.9, -0.9, 0.9), 0.15)
        lips.append(ff.lipschitz)
        deltas.append(rep.delta1)
    lips = np.array(lips)
    deltas = np.array(deltas)
    assert np.all(np.diff(deltas) < 0)
    assert np.all(np.diff(lips) > 0)  # harder dichotomy, steeper factors
    products = lips * np.sqrt(deltas)
    assert np.all(products <= products[0] * (1 + 1e-9))

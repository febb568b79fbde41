import math

import numpy as np
import pytest
from scipy.special import gammaln

from rtoep.domains import catalog_lookup
from rtoep.quadrature import (EMB_WEIGHTS, GL_NODES, GL_WEIGHTS, QuadratureRequest, boundary_grade, box_rule,
                              integrate_base, integrate_full_polar, integrate_simplex, orthant_directions,
                              tensor_nodes)


def test_rules_integrate_polynomials():
    for k in range(29):
        assert GL_WEIGHTS @ GL_NODES ** k == pytest.approx(1 / (k + 1), rel=1e-13)
    for k in range(14):
        assert EMB_WEIGHTS @ GL_NODES ** k == pytest.approx(1 / (k + 1), rel=1e-12)
    assert EMB_WEIGHTS[len(EMB_WEIGHTS) // 2] == 0


def test_box_rule_and_tensor_nodes():
    assert tensor_nodes(2, np.array([0.0, 1.0])).shape == (4, 2)
    val = box_rule(lambda x: x[:, 0] ** 3 * x[:, 1], [0, 0], [2, 1])
    assert val == pytest.approx(2.0)


def test_orthant_directions_are_unit_and_positive():
    u = np.random.default_rng(0).uniform(0, math.pi / 2, size=(30, 2))
    om, jac = orthant_directions(u, 3)
    assert np.allclose(np.linalg.norm(om, axis=1), 1)
    assert np.all(om >= 0) and np.all(jac >= 0)


@pytest.mark.parametrize("square", [False, True])
def test_ball_volume_of_base(square):
    d = catalog_lookup("ball-lambda", 2)
    # int over the quarter disk of r1 r2 dr = 1/8
    res = integrate_base(lambda r: np.ones(r.shape[0]), d, square=square)
    assert res.value == pytest.approx(1 / 8, rel=1e-12)
    assert res.converged


@pytest.mark.parametrize("n,lam", [(1, 0.0), (2, 0.5), (3, 2.0)])
def test_weighted_moments_match_gamma_closed_form(n, lam):
    d = catalog_lookup("ball-lambda", n, {"lambda": lam})
    p = np.array([3, 1, 2][:n])

    def f(r):
        return np.prod(r ** (2 * p), axis=-1) * d.weight(r)

    res = integrate_base(f, d, rel_tol=1e-11, abs_tol=0)
    assert res.value == pytest.approx(math.exp(d.log_moment(tuple(p))), rel=1e-10)


def test_breaks_handle_jumps_exactly():
    d = catalog_lookup("ball-lambda", 2)
    f = lambda r: (np.linalg.norm(r, axis=-1) < 0.5).astype(float)  # noqa: E731
    res = integrate_base(f, d, breaks=[0.5], max_cells=50)
    assert res.value == pytest.approx(0.5 ** 4 / 8, rel=1e-13)
    assert res.cells_used <= 50


def test_vector_integrand_refines_all_components():
    d = catalog_lookup("ball-lambda", 1)
    res = integrate_base(lambda r: np.stack([r[:, 0] ** 2, r[:, 0] ** 40], axis=1), d, rel_tol=1e-12, abs_tol=0)
    assert res.value == pytest.approx([1 / 4, 1 / 42], rel=1e-12)
    assert np.shape(res.error_estimate) == (2,)


def test_full_polar_recovers_area_and_kills_fourier_modes():
    d = catalog_lookup("ball-lambda", 1)
    area = integrate_full_polar(lambda z: np.ones(z.shape[:-1]), d)
    assert area.value == pytest.approx(math.pi, rel=1e-12)
    mode = integrate_full_polar(lambda z: z[..., 0] ** 3, d, n_theta=9)
    assert abs(mode.value) < 1e-14


def test_full_polar_product_moment():
    d = catalog_lookup("ball-lambda", 2)
    # int |z1|^2 |z2|^4 mu_0 dv = 1! 2! / 5! * 2 = 1/30
    res = integrate_full_polar(lambda z: np.abs(z[..., 0]) ** 2 * np.abs(z[..., 1]) ** 4 * d.weight(np.abs(z)), d)
    assert res.value.real == pytest.approx(1 / 30, rel=1e-10)


@pytest.mark.parametrize("n,lam", [(1, 0.0), (2, 1.0), (3, 0.5), (2, -0.5)])
def test_simplex_dirichlet_moments(n, lam):
    p = np.array([2, 1, 3][:n])
    res = integrate_simplex(lambda s: np.prod(s ** p, axis=-1), n, lam, rel_tol=1e-13, abs_tol=0)
    exact = math.exp(gammaln(p + 1).sum() + gammaln(lam + 1) - gammaln(p.sum() + n + lam + 1))
    assert res.value == pytest.approx(exact, rel=1e-12)


def test_simplex_breaks():
    res = integrate_simplex(lambda s: (s.sum(axis=-1) < 0.25).astype(float), 2, 0.0, breaks=[0.25])
    assert res.value == pytest.approx(0.25 ** 2 / 2, rel=1e-13)


def test_request_dispatch_and_validation():
    d = catalog_lookup("ball-lambda", 1)
    req = QuadratureRequest(lambda r: np.ones(r.shape[0]), d)
    assert req.run().value == pytest.approx(0.5)
    with pytest.raises(ValueError):
        QuadratureRequest(lambda r: r, d, mode="cubature")
    with pytest.raises(ValueError):
        QuadratureRequest(lambda r: r, d, rel_tol=0)


def test_budget_exhaustion_is_reported():
    d = catalog_lookup("ball-lambda", 1)
    res = integrate_base(lambda r: np.abs(r[:, 0] - 0.3137) ** 0.5, d, rel_tol=1e-15, abs_tol=0, max_cells=3)
    assert not res.converged
    assert res.cells_used <= 4


def test_deterministic_accumulation():
    d = catalog_lookup("superellipsoid", 2)
    f = lambda r: np.cos(7 * r[:, 0]) * r[:, 1] ** 3  # noqa: E731
    a, b = integrate_base(f, d), integrate_base(f, d)
    assert a.value == b.value


def test_grading_only_for_non_integer_exponents():
    assert boundary_grade(catalog_lookup("ball-lambda", 2, {"lambda": 2.0})) == 1
    assert boundary_grade(catalog_lookup("ball-lambda", 2, {"lambda": 0.5})) == 2


@pytest.mark.parametrize("lam", [0.5, -0.5, 1.3])
def test_half_integer_ball_weight_is_cheap(lam):
    d = catalog_lookup("ball-lambda", 3, {"lambda": lam})
    res = integrate_base(lambda r: d.weight(r), d, rel_tol=1e-12, abs_tol=0.0, square=True)
    assert res.converged
    assert res.value * (2 * math.pi) ** 3 == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("lam", [0.0, 0.5, -0.5])
def test_box_bases_integrate_on_the_box(lam):
    d = catalog_lookup("polydisk", 3, {"lambda": lam})
    p = np.array([2.0, 0.0, 1.0])
    res = integrate_base(lambda r: np.prod(r ** (2 * p), axis=-1) * d.weight(r), d, rel_tol=1e-12,
                         abs_tol=0.0, square=True)
    assert res.converged and res.cells_used < 500
    assert res.value == pytest.approx(d.moment_closed_form((2, 0, 1)), rel=1e-11)


def test_unreachable_tolerance_stops_without_error():
    d = catalog_lookup("ball-lambda", 1)
    res = integrate_base(lambda r: (1 - r[:, 0]) ** -0.999, d, rel_tol=1e-14, abs_tol=0.0, max_cells=10**6)
    assert not res.converged
    assert np.isfinite(res.value)


def test_root_coordinates_handle_square_roots():
    # Dirichlet integral: Gamma(3/2)^2 Gamma(3) / Gamma(6) = pi / 240
    exact = math.gamma(1.5) ** 2 * math.gamma(3.0) / math.gamma(6.0)
    f = lambda s: np.sqrt(s[:, 0] * s[:, 1])  # noqa: E731
    res = integrate_simplex(f, 2, 2.0, rel_tol=1e-13, abs_tol=0.0, root_coordinates=True)
    assert res.converged and res.value == pytest.approx(exact, rel=1e-12)
    plain = integrate_simplex(f, 2, 2.0, rel_tol=1e-13, abs_tol=0.0, max_order=64)
    assert abs(plain.value / exact - 1) > 1e-12

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtoep.bergman import (CoefficientVector, KernelSeries, apply_R, apply_Rstar, ball_alpha, ball_kernel,
                           basis_eval, compute_alpha, gram_matrix, inner_product, kernel_eval, table_rows)
from rtoep.domains import DomainError, PolarPoint, catalog_lookup


@pytest.fixture(scope="module")
def disk_table():
    return compute_alpha(catalog_lookup("ball-lambda", 1), 12)


@pytest.fixture(scope="module")
def ball_table():
    return compute_alpha(catalog_lookup("ball-lambda", 2), 4)


def test_alpha_disk_values(disk_table):
    assert disk_table[(0,)] == pytest.approx(math.sqrt(2 * math.pi), rel=1e-13)
    assert disk_table[(3,)] == pytest.approx(math.sqrt(8 * math.pi), rel=1e-13)
    # one-dimensional moment: int_0^1 r^6 (1/pi) r dr = 1/(8 pi)
    assert disk_table[(3,)] ** -2 == pytest.approx(1 / (8 * math.pi), rel=1e-13)


def test_alpha_ball_lambda_one():
    t = compute_alpha(catalog_lookup("ball-lambda", 2, {"lambda": 1.0}), 3)
    assert t[(1, 2)] ** 2 == pytest.approx((2 * math.pi) ** 2 * 60, rel=1e-12)
    assert t.closed_form_deviation() < 1e-8
    assert t[(1, 2)] == pytest.approx(ball_alpha((1, 2), 1.0), rel=1e-12)


@pytest.mark.parametrize("name", ["polydisk", "superellipsoid"])
def test_alpha_other_domains_match_closed_forms(name):
    t = compute_alpha(catalog_lookup(name, 2, {"lambda": 0.5}), 6)
    assert t.closed_form_deviation() < 1e-10
    assert not t.failed_indices
    assert t[(0, 0)] == pytest.approx(2 * math.pi, rel=1e-12)


def test_closed_form_method_and_errors():
    d = catalog_lookup("ball-lambda", 2)
    t = compute_alpha(d, 3, method="gamma-closed-form")
    assert t.method == "gamma-closed-form"
    with pytest.raises(DomainError):
        compute_alpha(d, -1)
    with pytest.raises(DomainError):
        compute_alpha(d, 2, method="magic")
    with pytest.raises(DomainError):
        t[(4, 0)]


def test_basis_values(disk_table):
    z = PolarPoint((0.4,), (1.1,))
    assert basis_eval(disk_table, (0,), z) == pytest.approx(1.0)
    assert basis_eval(disk_table, (1,), z) == pytest.approx(math.sqrt(2) * z.z[0])
    e1 = lambda w: basis_eval(disk_table, (1,), w)  # noqa: E731
    d = catalog_lookup("ball-lambda", 1)
    assert inner_product(d, e1, e1).real == pytest.approx(1.0, rel=1e-10)


def test_orthonormality_by_quadrature(ball_table):
    G = gram_matrix(ball_table)
    assert np.abs(G - np.eye(len(ball_table))).max() < 1e-8


def test_kernel_at_origin_and_geometric_series(disk_table):
    ks = KernelSeries(disk_table)
    assert kernel_eval(ks, [0j], [0j]) == pytest.approx(1.0)
    long = KernelSeries(compute_alpha(catalog_lookup("ball-lambda", 1), 80))
    assert kernel_eval(long, [0.5 + 0j], [0.5 + 0j]).real == pytest.approx(16 / 9, rel=1e-13)


def test_series_converges_geometrically_to_closed_form():
    d = catalog_lookup("ball-lambda", 2, {"lambda": 0.5})
    z, w = np.array([0.3 + 0.1j, -0.2j]), np.array([0.1 - 0.3j, 0.25 + 0.1j])
    exact = ball_kernel(z, w, 0.5)
    errs = [abs(kernel_eval(KernelSeries(compute_alpha(d, P, method="gamma-closed-form")), z, w) - exact)
            for P in (4, 8, 12, 16)]
    assert all(b < a * 0.5 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-0.5, 0.5), min_size=4, max_size=4))
def test_kernel_hermitian(v):
    t = compute_alpha(catalog_lookup("ball-lambda", 2), 6, method="gamma-closed-form")
    ks = KernelSeries(t)
    z, w = np.array([v[0] + 1j * v[1], v[2]]), np.array([v[3], v[1] - 1j * v[0]])
    assert kernel_eval(ks, z, w) == pytest.approx(np.conj(kernel_eval(ks, w, z)), abs=1e-13)


def test_kernel_diagonal_depends_only_on_radii(rng, ball_table):
    ks = KernelSeries(ball_table)
    r = np.array([0.4, 0.5])
    vals = [kernel_eval(ks, r * np.exp(1j * th), r * np.exp(1j * th))
            for th in rng.uniform(0, 2 * math.pi, size=(5, 2))]
    assert all(abs(v.imag) < 1e-15 and v.real > 0 for v in vals)
    assert max(abs(v - vals[0]) for v in vals) < 1e-12 * abs(vals[0])
    assert ks.diagonal(r[None])[0] == pytest.approx(vals[0].real, rel=1e-13)
    assert ks.last_shell_magnitude(r, r) > 0


def test_rstar_matches_basis_and_zero(ball_table, rng):
    z = rng.uniform(-0.5, 0.5, 2) + 1j * rng.uniform(-0.5, 0.5, 2)
    assert apply_Rstar(ball_table, CoefficientVector.unit((1, 2)), z) == pytest.approx(
        basis_eval(ball_table, (1, 2), z))
    assert apply_Rstar(ball_table, np.zeros(len(ball_table)), z) == 0
    with pytest.raises(DomainError):
        apply_Rstar(ball_table, CoefficientVector.unit((5, 0)), z)


def test_rstar_is_isometric(ball_table, rng):
    d = ball_table.domain
    c = rng.normal(size=len(ball_table)) + 1j * rng.normal(size=len(ball_table))
    f = lambda z: apply_Rstar(ball_table, c, z)  # noqa: E731
    norm_sq = inner_product(d, f, f, n_theta=21).real
    assert norm_sq == pytest.approx(np.sum(np.abs(c) ** 2), rel=1e-7)
    assert CoefficientVector.from_array(ball_table, c).norm() == pytest.approx(np.linalg.norm(c))


def test_R_of_anti_analytic_function_vanishes(disk_table):
    c = apply_R(disk_table, lambda z: np.conj(z[..., 0])).to_array(disk_table)
    assert np.abs(c).max() < 1e-12


def test_R_of_basis_function(ball_table):
    c = apply_R(ball_table, lambda z: basis_eval(ball_table, (2, 1), z)).to_array(ball_table)
    target = np.zeros(len(ball_table))
    target[ball_table.index((2, 1))] = 1
    assert np.abs(c - target).max() < 1e-7


def test_table_rows(ball_table):
    header, rows = table_rows(ball_table)
    assert header == ["p_1", "p_2", "alpha_p", "method", "err_estimate"]
    assert len(rows) == len(ball_table)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtoep.bergman import compute_alpha
from rtoep.domains import (DomainError, annulus_symbol, catalog_lookup, constant_symbol, lincomb_symbol,
                           power_symbol, re_z_symbol)
from rtoep.toeplitz import (cluster_values, commutator_norm, compute_gamma, compute_gamma_ball, diagonal_matrix,
                            disk_power_gamma, matrix_oracle, spectral_report)


@pytest.fixture(scope="module")
def disk_table(disk):
    return compute_alpha(disk, 20)


def test_constant_symbol_gives_ones(disk_table, disk):
    g = compute_gamma(disk, constant_symbol(1.0), 20, disk_table)
    assert np.abs(g.values - 1).max() < 1e-12
    rep = spectral_report(g)
    assert rep.operator_norm_estimate == pytest.approx(1.0)
    assert rep.spectrum_sample == pytest.approx([1.0])
    assert not rep.compactness_verdict


def test_disk_power_symbol(disk_table, disk):
    g = compute_gamma(disk, power_symbol([2]), 20, disk_table)
    assert g[(0,)] == pytest.approx(0.5, rel=1e-12)
    assert g[(1,)] == pytest.approx(2 / 3, rel=1e-12)
    exact = np.array([disk_power_gamma(p) for p in range(21)])
    assert np.abs(g.values / exact - 1).max() < 1e-10
    rep = spectral_report(g)
    assert not rep.compactness_verdict
    # outer shells approach the limit 1 from below as the truncation grows
    assert all(abs(v - 1) < 0.06 for v in rep.essential_spectrum_estimate)
    coarse = spectral_report(compute_gamma(disk, power_symbol([2]), 8, disk_table))
    assert min(rep.essential_spectrum_estimate) > max(coarse.essential_spectrum_estimate)
    assert rep.shell_trend == sorted(rep.shell_trend)


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_weighted_disk_power_symbol(lam):
    d = catalog_lookup("ball-lambda", 1, {"lambda": lam})
    g = compute_gamma(d, power_symbol([2]), 10)
    assert g.values == pytest.approx([disk_power_gamma(p, lam) for p in range(11)], rel=1e-10)


def test_disk_small_disc_indicator_is_compact(disk_table, disk):
    g = compute_gamma(disk, annulus_symbol(0.0, 0.5), 20, disk_table)
    assert np.abs(g.values / 4.0 ** -(np.arange(21) + 1) - 1).max() < 1e-8
    assert spectral_report(g).compactness_verdict


def test_ball_gamma_ratio(ball2):
    g = compute_gamma(ball2, power_symbol([2, 0]), 6)
    exact = np.array([(p[0] + 1) / (sum(p) + 3) for p in g.indices])
    assert np.abs(g.values / exact - 1).max() < 1e-10


def test_simplex_route_matches_base_route():
    a = lincomb_symbol([(1.0, power_symbol([1, 3])), (0.5, annulus_symbol(0.2, 0.6))])
    for lam in (0.0, 2.0):
        d = catalog_lookup("ball-lambda", 2, {"lambda": lam})
        g, gb = compute_gamma(d, a, 6), compute_gamma_ball(2, lam, a, 6)
        assert np.abs(g.values / gb.values - 1).max() < 1e-8
    d1 = catalog_lookup("ball-lambda", 1)
    assert compute_gamma_ball(1, 0.0, power_symbol([2]), 8).values == pytest.approx(
        compute_gamma(d1, power_symbol([2]), 8).values, rel=1e-9)


def test_simplex_route_small_ball_indicator_lambda_two():
    d = catalog_lookup("ball-lambda", 2, {"lambda": 2.0})
    a = annulus_symbol(0.0, 0.5)
    g, gb = compute_gamma(d, a, 5), compute_gamma_ball(2, 2.0, a, 5)
    assert np.abs(g.values / gb.values - 1).max() < 1e-6


def test_general_symbol_rejected(disk):
    with pytest.raises(DomainError):
        compute_gamma(disk, re_z_symbol(1), 3)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 0.45), st.floats(0.5, 0.95), st.floats(-3, 3), st.floats(-3, 3))
def test_gamma_linear_and_order_preserving(inner, outer, c1, c2):
    d = catalog_lookup("ball-lambda", 1)
    a, b = annulus_symbol(inner, outer), power_symbol([1])
    ga, gb = compute_gamma(d, a, 6), compute_gamma(d, b, 6)
    gc = compute_gamma(d, lincomb_symbol([(c1, a), (c2, b)]), 6)
    assert gc.values == pytest.approx(c1 * ga.values + c2 * gb.values, abs=1e-12)
    # 0 <= a <= 1 and 0 <= b <= 1 imply bounds and order against the constant 1
    for g in (ga, gb):
        assert np.all(g.values >= -1e-15) and np.all(g.values <= 1 + 1e-12)
    wide = compute_gamma(d, annulus_symbol(inner / 2, outer), 6)
    assert np.all(ga.values <= wide.values + 1e-14)


def test_oracle_identity_and_diagonal(disk):
    assert np.abs(matrix_oracle(disk, constant_symbol(1.0), 4).entries - np.eye(5)).max() < 1e-8
    M = matrix_oracle(disk, power_symbol([2]), 4)
    assert M.off_diagonal_max() < 1e-8
    assert np.real(np.diag(M.entries)) == pytest.approx([disk_power_gamma(p) for p in range(5)], abs=1e-8)
    assert M.hermitian_defect() < 1e-12


def test_oracle_negative_control_structure(disk):
    M = matrix_oracle(disk, re_z_symbol(1), 4).entries
    q, p = np.indices(M.shape)
    assert np.abs(M[np.abs(p - q) != 1]).max() < 1e-12
    assert np.abs(M[np.abs(p - q) == 1]).min() > 1e-2


def test_commutators(disk):
    a, b = power_symbol([2]), annulus_symbol(0.0, 0.5)
    ga, gb = compute_gamma(disk, a, 4), compute_gamma(disk, b, 4)
    assert commutator_norm(diagonal_matrix(ga), diagonal_matrix(gb)) == 0.0
    Ma, Mb = matrix_oracle(disk, a, 4), matrix_oracle(disk, b, 4)
    assert commutator_norm(Ma, Mb) < 1e-7
    assert commutator_norm(matrix_oracle(disk, re_z_symbol(1), 4), Ma) > 1e-3
    with pytest.raises(ValueError):
        commutator_norm(Ma, matrix_oracle(disk, a, 3))


def test_ball_oracle_diagonality(ball2):
    a = lincomb_symbol([(1.0, power_symbol([2, 4])), (-0.5, annulus_symbol(0.3, 0.8))])
    M = matrix_oracle(ball2, a, 3)
    g = compute_gamma(ball2, a, 3)
    assert M.off_diagonal_max() < 1e-7
    assert np.abs(np.diag(M.entries) - g.values).max() < 1e-7


def test_cluster_values():
    assert cluster_values([0.1, 0.1005, 0.5, 0.9, 0.9001], 1e-3) == pytest.approx([0.10025, 0.5, 0.90005])
    assert cluster_values([], 1e-3) == []


def test_gamma_rows(disk):
    header, rows = compute_gamma(disk, power_symbol([2]), 3).rows()
    assert header == ["p_1", "gamma"]
    assert rows[1] == [1, pytest.approx(2 / 3)]

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtoep.domains import (DomainError, PolarPoint, annulus_symbol, base_membership_grid, catalog_lookup,
                           constant_symbol, domain_from_descriptor, iter_interior_samples, lincomb_symbol,
                           multi_index, multi_indices, power_symbol, re_z_symbol, shell, symbol_from_descriptor)


@given(st.integers(1, 4), st.integers(0, 9))
def test_multi_index_count_is_binomial(n, order):
    idx = multi_indices(n, order)
    assert len(idx) == math.comb(n + order, n)
    assert len(set(idx)) == len(idx)
    assert [sum(p) for p in idx] == sorted(sum(p) for p in idx)


def test_shell_and_validation():
    assert shell(2, 2) == [(0, 2), (1, 1), (2, 0)]
    with pytest.raises(DomainError):
        multi_index([1, -1])
    with pytest.raises(DomainError):
        multi_index([1, 2], n=3)


def test_polar_point_round_trip():
    z = np.array([0.3 - 0.4j, -0.2j])
    p = PolarPoint.from_z(z)
    assert np.allclose(p.z, z)
    assert p.r == pytest.approx((0.5, 0.2))
    with pytest.raises(DomainError):
        PolarPoint((0.1,), (0.0, 1.0))


@pytest.mark.parametrize("name,params", [("ball-lambda", {"lambda": 0.0}), ("ball-lambda", {"lambda": 1.5}),
                                         ("polydisk", {}), ("superellipsoid", {"q": 2.0}),
                                         ("superellipsoid", {"q": 1.5, "lambda": 0.5})])
def test_catalog_weights_are_probability_measures(name, params):
    d = catalog_lookup(name, 2, params)
    # closed-form zeroth moment times (2 pi)^n is the total mass
    assert d.moment_closed_form((0, 0)) * (2 * math.pi) ** 2 == pytest.approx(1.0, rel=1e-13)


def test_catalog_rejects_bad_input():
    with pytest.raises(DomainError):
        catalog_lookup("cube", 2)
    with pytest.raises(DomainError):
        catalog_lookup("ball-lambda", 2, {"lambda": -1.0})
    with pytest.raises(DomainError):
        catalog_lookup("ball-lambda", 0)
    with pytest.raises(DomainError):
        catalog_lookup("polydisk", 2, {"q": 3})
    with pytest.raises(DomainError):
        domain_from_descriptor({"name": "ball-lambda", "n": 2, "colour": "red"})


@pytest.mark.parametrize("name", ["ball-lambda", "polydisk", "superellipsoid"])
def test_extent_lands_on_boundary(name, rng):
    d = catalog_lookup(name, 3)
    om = np.abs(rng.normal(size=(50, 3)))
    om /= np.linalg.norm(om, axis=1, keepdims=True)
    t = d.extent(om)
    assert np.all(d.contains((t * (1 - 1e-9))[:, None] * om))
    assert not np.any(d.contains((t * (1 + 1e-9))[:, None] * om))
    s = d.extent(om, squared=True)
    pts = np.sqrt(s[:, None] * om)
    assert np.all(d.contains(pts * (1 - 1e-9))) and not np.any(d.contains(pts * (1 + 1e-9)))


def test_membership_grid_area_of_disk_quadrant():
    d = catalog_lookup("ball-lambda", 2)
    grid = base_membership_grid(d, 400)
    assert grid.mean() == pytest.approx(math.pi / 4, abs=5e-3)


def test_interior_samples_respect_margin_and_floor(rng):
    d = catalog_lookup("superellipsoid", 2)
    pts = np.array(list(iter_interior_samples(d, 100, rng, margin=0.1, floor=0.05)))
    assert pts.shape == (100, 2) and np.all(pts >= 0.05)
    rho = np.linalg.norm(pts, axis=1)
    assert np.all(rho < 0.9 * d.extent(pts / rho[:, None]))


def test_symbols_evaluate_and_round_trip():
    r = np.array([[0.2, 0.4], [0.6, 0.1]])
    a = power_symbol([2, 1])
    assert a(r) == pytest.approx(r[:, 0] ** 2 * r[:, 1])
    ann = annulus_symbol(0.3, 0.5)
    assert list(ann(r)) == [1.0, 0.0]
    assert ann.breaks == (0.3, 0.5)
    combo = lincomb_symbol([(2.0, a), (-1.0, ann)])
    assert combo.is_radial
    back = symbol_from_descriptor(combo.descriptor)
    assert back(r) == pytest.approx(combo(r))
    assert constant_symbol(3.0)(r) == pytest.approx([3.0, 3.0])


def test_general_symbols():
    rez = re_z_symbol(2)
    z = np.array([[0.1 + 0.2j, -0.3 + 0.5j]])
    assert rez.evaluate_full(z) == pytest.approx([-0.3])
    assert not rez.is_radial
    with pytest.raises(DomainError):
        rez(np.abs(z))
    mixed = lincomb_symbol([(1.0, rez), (1.0, power_symbol([0, 2]))])
    assert mixed.kind == "general"
    assert mixed.evaluate_full(z) == pytest.approx([-0.3 + 0.34])


def test_symbol_descriptor_errors():
    with pytest.raises(DomainError):
        symbol_from_descriptor({"type": "power"})
    with pytest.raises(DomainError):
        symbol_from_descriptor({"type": "power", "exponents": [1], "extra": 1})
    with pytest.raises(DomainError):
        symbol_from_descriptor({"type": "spline"})
    with pytest.raises(DomainError):
        annulus_symbol(0.5, 0.2)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=2, max_size=2), st.floats(-2, 2), st.floats(-2, 2))
def test_lincomb_is_linear(r, c1, c2):
    a, b = power_symbol([2, 0]), annulus_symbol(0.2, 0.6)
    r = np.array([r])
    combo = lincomb_symbol([(c1, a), (c2, b)])
    assert combo(r)[0] == pytest.approx(c1 * a(r)[0] + c2 * b(r)[0], abs=1e-14)

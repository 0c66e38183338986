from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from wishart_edges.errors import PoleProximity, UnsupportedOrder, ValidationError
from wishart_edges.measure import (
    AtomicMeasure,
    WishartModel,
    density,
    g_deriv,
    g_eval,
    stieltjes_solve,
)

DELTA1 = AtomicMeasure.point_mass(1.0)


def test_atoms_are_sorted_and_merged():
    m = AtomicMeasure(((3.0, 0.2), (1.0, 0.5), (3.0, 0.3)))
    assert m.atoms == ((1.0, 0.5), (3.0, 0.5))
    assert list(m.poles) == [1 / 3, 1.0]


@pytest.mark.parametrize(
    "atoms",
    [((1.0, 0.5), (2.0, 0.4)), ((0.0, 1.0),), ((-1.0, 1.0),), ((1.0, 0.0), (2.0, 1.0)), ()],
)
def test_invalid_measures_are_rejected(atoms):
    with pytest.raises(ValidationError):
        AtomicMeasure(atoms)


def test_model_from_run_lengths():
    model = WishartModel.from_multiplicities(3000, [(1.0, 209), (1.7, 1), (3.0, 90)])
    assert model.n == 300 and model.gamma == pytest.approx(0.1)
    assert model.lambdas[209] == 1.7
    nu = model.measure()
    assert nu.atoms[0] == (1.0, 209 / 300)
    assert model.to_json()["lambdas"][1] == {"value": 1.7, "multiplicity": 1}


def test_model_rejects_wrong_length():
    with pytest.raises(ValidationError):
        WishartModel(3, 2, (1.0, 2.0))


def test_g_eval_closed_forms(two_bulk):
    assert g_eval(DELTA1, 0.25, 2.0) == pytest.approx(0.25, abs=1e-15)
    assert g_eval(DELTA1, 0.25, 2 / 3) == pytest.approx(2.25, abs=1e-14)
    assert g_eval(two_bulk, 0.1, -1.0) == pytest.approx(-0.9425, abs=1e-15)


def test_g_deriv_closed_forms():
    assert g_deriv(DELTA1, 0.25, 2 / 3, 1) == pytest.approx(0.0, abs=1e-13)
    assert g_deriv(DELTA1, 0.25, 2 / 3, 2) == pytest.approx(20.25, rel=1e-13)


def test_g_deriv_matches_finite_differences(two_bulk):
    for z in [-2.0, 0.2, 0.6, 1.2, 5.0]:
        h = 1e-5 * max(1.0, abs(z))
        for order in (1, 2, 3):
            fd = (g_deriv(two_bulk, 0.1, z + h, order - 1) if order > 1 else g_eval(two_bulk, 0.1, z + h))
            bd = (g_deriv(two_bulk, 0.1, z - h, order - 1) if order > 1 else g_eval(two_bulk, 0.1, z - h))
            exact = g_deriv(two_bulk, 0.1, z, order)
            assert (fd - bd) / (2 * h) == pytest.approx(exact, rel=1e-6)


def test_pole_and_order_errors(two_bulk):
    with pytest.raises(PoleProximity):
        g_eval(two_bulk, 0.1, 0.0)
    with pytest.raises(PoleProximity):
        g_eval(two_bulk, 0.1, 1 / 3 + 1e-15)
    with pytest.raises(UnsupportedOrder):
        g_deriv(two_bulk, 0.1, 2.0, 4)


def test_stieltjes_matches_quadratic_root():
    # root of z m^2 - (z + 1 - gamma) m + 1 = 0 with negative imaginary part
    expected = complex(0.20375596965690282, -0.044228491373589245)
    m = stieltjes_solve(DELTA1, 0.25, 5 + 1j)
    assert abs(m - expected) < 1e-12


def test_stieltjes_inverts_g(two_bulk):
    z = 1.5 + 0.01j
    m = stieltjes_solve(two_bulk, 0.1, z)
    assert m.imag < 0
    assert abs(g_eval(two_bulk, 0.1, m) - z) < 1e-9


def test_stieltjes_large_z_asymptotics(two_bulk):
    for R in (1e2, 1e3, 1e4):
        z = complex(R, 1.0)
        assert abs(stieltjes_solve(two_bulk, 0.1, z) - 1 / z) < 5 / R**2


def test_stieltjes_needs_upper_half_plane():
    with pytest.raises(ValidationError):
        stieltjes_solve(DELTA1, 0.25, 1.0 - 1j)


def test_density_values(two_bulk):
    # (1/(2 pi x)) sqrt((b - x)(x - a)) at x = 1, a = 0.25, b = 2.25
    assert density(DELTA1, 0.25, 1.0) == pytest.approx(math.sqrt(0.9375) / (2 * math.pi), abs=1e-6)
    assert density(DELTA1, 0.25, 3.0) == pytest.approx(0.0, abs=1e-12)
    assert density(two_bulk, 0.1, 1.85) == pytest.approx(0.0, abs=1e-8)


def test_density_integrates_to_one_with_atom():
    for gamma in (0.25, 4.0):
        a, b = (1 - math.sqrt(gamma)) ** 2, (1 + math.sqrt(gamma)) ** 2
        mass, _ = quad(lambda x: density(DELTA1, gamma, x), a, b, limit=200)
        assert mass + max(1 - gamma, 0) == pytest.approx(1.0, abs=1e-3)


def test_density_vectorized():
    xs = np.array([0.5, 1.0, 2.0])
    vals = density(DELTA1, 0.25, xs)
    assert vals.shape == (3,)
    assert vals[1] == pytest.approx(density(DELTA1, 0.25, 1.0))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from lattice_ohm.errors import CapacityError, ContractError, GeometryError
from lattice_ohm.lattice_fields import (BUMP_MASS, Pulse, SpatialProfile, VectorPotential, build_box, bump,
                                        bump_derivative, bump_integral, check_ac, electric_field,
                                        integrated_bond_field, nearest_bonds)


@given(st.integers(1, 3), st.integers(1, 4))
def test_box_index_roundtrip(d, l):
    box = build_box(d, l)
    assert box.n == (2 * l + 1) ** d
    idx = box.indices(box.sites)
    assert np.array_equal(idx, np.arange(box.n))


def test_box_rejects_outside_sites_and_oversize():
    box = build_box(2, 1)
    with pytest.raises(GeometryError):
        box.index((2, 0))
    with pytest.raises(CapacityError):
        build_box(3, 20, cap=1000)
    with pytest.raises(ContractError):
        build_box(1, 0)


@pytest.mark.parametrize("d,l", [(1, 3), (2, 2), (3, 1)])
def test_interior_bond_count(d, l):
    # each direction has (2l) * (2l+1)^(d-1) unordered bonds, stored in both orientations
    bonds = nearest_bonds(build_box(d, l), "interior")
    assert len(bonds) == 2 * d * (2 * l) * (2 * l + 1) ** (d - 1)


def test_bump_is_smooth_and_compactly_supported():
    u = np.array([-1.5, -1.0, 1.0, 2.0])
    assert np.all(bump(u) == 0.0)
    assert bump(0.0) == pytest.approx(1.0)
    mass, _ = quad(lambda s: float(bump(s)), -1, 1)
    assert BUMP_MASS == pytest.approx(mass, rel=1e-10)


@given(st.floats(-0.95, 0.95))
def test_bump_derivative_and_integral_consistent(u):
    h = 1e-5
    fd = (bump(u + h) - bump(u - h)) / (2 * h)
    assert float(bump_derivative(u)) == pytest.approx(float(fd), abs=1e-6)
    gi = (bump_integral(u + h) - bump_integral(u - h)) / (2 * h)
    assert float(gi) == pytest.approx(float(bump(u)), abs=1e-6)


@given(st.floats(0.05, 2.95))
@settings(max_examples=40)
def test_pulse_primitive_differentiates_to_values(t):
    p = Pulse.superpose([Pulse.bump(0.0, 2.0), Pulse.bump_derivative(1.0, 3.0, -0.7)])
    h = 1e-5
    fd = (p.primitive(t + h) - p.primitive(t - h)) / (2 * h)
    assert float(fd) == pytest.approx(float(p.values(t)), abs=1e-6)


def test_ac_classification_and_field_off_time():
    assert Pulse.bump_derivative(0.0, 2.0).ac
    assert not Pulse.bump(0.0, 2.0).ac
    assert check_ac(Pulse.bump(0.0, 2.0)) == math.inf
    t1 = check_ac(Pulse.bump_derivative(0.0, 2.0))
    assert 0.95 * 2.0 <= t1 <= 2.0
    rng = np.random.default_rng(0)
    assert Pulse.random_ac(rng, 0.0, 3.0).ac


def test_tabulated_pulse_primitive_exact_for_piecewise_linear():
    p = Pulse.tabulated([0.0, 1.0, 2.0], [0.0, 1.0, 0.0])
    assert float(p.primitive(1.0)) == pytest.approx(0.5)
    assert float(p.primitive(5.0)) == pytest.approx(1.0)
    assert not p.ac
    q = Pulse.tabulated([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, -1.0, 0.0])
    assert q.ac


def test_pulse_rejects_empty_support():
    with pytest.raises(ContractError):
        Pulse.bump(1.0, 1.0)


@pytest.mark.parametrize("kind,d", [("indicator", 1), ("indicator", 2), ("bump", 1), ("bump", 2)])
def test_profile_normalization_is_square_integral(kind, d):
    prof = SpatialProfile(kind, d)
    r = prof.support_radius
    if d == 1:
        val, _ = quad(lambda x: float(prof(np.array([x]))) ** 2, -r, r, points=[0.0])
    else:
        x = np.linspace(-r, r, 801)
        g = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)
        val = np.trapezoid(np.trapezoid(prof(g) ** 2, x), x)
    assert val == pytest.approx(prof.normalization, rel=2e-3)


def test_vector_potential_sign_and_electric_field():
    # E = -dA/dt with A = -eta * w * psi(x/l) * primitive(t)
    vp = VectorPotential(Pulse.bump(0.0, 2.0), SpatialProfile("indicator", 2), [3.0, 4.0], 5.0, 0.1)
    assert np.allclose(vp.direction, [0.6, 0.8])
    x = np.array([1.0, -2.0])
    t, h = 0.7, 1e-5
    dA = (vp.potential(t + h, x) - vp.potential(t - h, x)) / (2 * h)
    assert np.allclose(electric_field(vp, t, x), -dA, atol=1e-8)
    assert np.allclose(vp.potential(t, np.array([6.0, 0.0])), 0.0)


def test_bond_line_integral_of_uniform_field():
    vp = VectorPotential(Pulse.bump(0.0, 2.0), SpatialProfile("indicator", 1), [1.0], 10.0, 0.2)
    t = 1.0
    li = vp.bond_line_integrals(t, np.array([[0]]), np.array([[1]]))
    assert li[0] == pytest.approx(-0.2 * float(vp.pulse.primitive(t)))
    rev = vp.bond_line_integrals(t, np.array([[1]]), np.array([[0]]))
    assert rev[0] == pytest.approx(-li[0])
    assert integrated_bond_field(vp, t, ((0,), (1,))) == pytest.approx(0.2 * float(vp.pulse.values(t)))


def test_vector_potential_validation():
    with pytest.raises(ContractError):
        VectorPotential(Pulse.bump(0, 1), SpatialProfile("indicator", 2), [0.0, 0.0], 2.0, 1.0)
    with pytest.raises(ContractError):
        VectorPotential(Pulse.bump(0, 1), SpatialProfile("indicator", 2), [1.0], 2.0, 1.0)


def test_three_by_three_grid_has_24_ordered_bonds():
    assert len(nearest_bonds(build_box(2, 1), "interior")) == 24


def test_segment_average_on_a_straddling_bond():
    # bond crossing the edge of a bump profile: the segment average lies between the endpoint values
    vp = VectorPotential(Pulse.bump(0.0, 1.0), SpatialProfile("bump", 1), [1.0], 4.0, 1.0)
    x1, x2 = np.array([[1.0]]), np.array([[2.0]])
    g = float(vp.bond_profile(x1, x2)[0])
    ref, _ = quad(lambda a: float(vp.profile(np.array([(1.0 + a) / 4.0]))), 0.0, 1.0, epsabs=1e-13)
    assert g == pytest.approx(ref, abs=1e-8)
    ends = sorted(float(vp.profile(np.array([v / 4.0]))) for v in (1.0, 2.0))
    assert ends[0] <= g <= ends[1]


def test_opposite_half_pulses_switch_off_at_the_second_end():
    p = Pulse.superpose([Pulse.bump(0.0, 1.0), Pulse.bump(2.0, 3.0, -1.0)])
    assert p.ac
    assert float(p.primitive(1.5)) == pytest.approx(BUMP_MASS * 0.5)
    assert 2.9 <= check_ac(p) <= 3.0

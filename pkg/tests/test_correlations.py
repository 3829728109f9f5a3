import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from lattice_ohm.correlations import (CurrentElement, correlation_matrix, decay_profile, expectation,
                                      fluctuation_inner, fluctuation_inner_bruteforce, fluctuation_spectral,
                                      four_point, translate_sum_matrix, two_point, wick_truncated)
from lattice_ohm.errors import ContractError, GeometryError
from lattice_ohm.onebody import fermi_symbol

from conftest import make_eig

BETA = 1.0


def test_bond_current_requires_neighbours():
    with pytest.raises(ContractError):
        CurrentElement.bond((0,), (2,))


def test_current_element_matrix_is_hermitian(eig2):
    box = eig2.box
    el = CurrentElement.general({(0, 0): 1.0, (1, 0): 0.5}, {(0, 1): -2.0})
    m = el.matrix(box)
    assert np.allclose(m, m.conj().T)
    assert np.allclose(CurrentElement.bond((0, 0), (1, 0)).matrix(box), -CurrentElement.bond((1, 0), (0, 0)).matrix(box))


def test_translate_sum_matches_explicit_sum(eig1):
    box = eig1.box
    el = CurrentElement.bond((1,), (0,))
    explicit = sum(el.translate((z,)).matrix(box) for z in range(-2, 3))
    assert np.allclose(translate_sum_matrix(box, el, 2), explicit)
    with pytest.raises(GeometryError):
        translate_sum_matrix(box, el, 6)


def test_correlation_matrix_against_matrix_functions(eig1):
    h = eig1.matrix()
    t = 0.6
    u = scipy.linalg.expm(-1j * t * h)
    d = np.linalg.inv(np.eye(eig1.n) + scipy.linalg.expm(BETA * h))
    # alpha = 0 gives the state, alpha = beta the hole symbol
    assert np.allclose(correlation_matrix(eig1, BETA, t, 0.0), u @ d, atol=1e-12)
    assert np.allclose(correlation_matrix(eig1, BETA, t, BETA), u @ (np.eye(eig1.n) - d), atol=1e-12)
    with pytest.raises(ContractError):
        correlation_matrix(eig1, BETA, t, 1.5 * BETA)


def test_two_point_is_an_entry_of_the_correlation_matrix(eig2):
    box = eig2.box
    c = correlation_matrix(eig2, BETA, 0.3, 0.4)
    x1, x2 = (0, 0), (1, -1)
    assert two_point(eig2, BETA, 0.3, 0.4, (x1, x2)) == pytest.approx(c[box.index(x2), box.index(x1)])


def test_two_point_at_zero_time_is_the_state(eig1):
    box = eig1.box
    d = fermi_symbol(eig1, BETA).entries
    # rho(a*_x a_y) = d[y, x]
    assert two_point(eig1, BETA, 0.0, 0.0, ((0,), (1,))) == pytest.approx(d[box.index((1,)), box.index((0,))])


def test_four_point_antisymmetry(eig1):
    x, y = ((0,), (1,)), ((2,), (-1,))
    a = four_point(eig1, BETA, 0.4, 0.3, x, y)
    b = four_point(eig1, BETA, 0.4, 0.3, x[::-1], y)
    c = four_point(eig1, BETA, 0.4, 0.3, x, y[::-1])
    assert b == pytest.approx(-a) and c == pytest.approx(-a)


def test_fluctuation_inner_equals_literal_double_sum():
    eig = make_eig(1, 5, 1.0, seed=8)
    i = CurrentElement.bond((1,), (0,))
    j = CurrentElement.general({(0,): 1.0, (1,): 0.5}, {(2,): 1.0})
    for t in (0.0, 0.7):
        fast = fluctuation_inner(eig, BETA, 1, i, j, t)
        slow = fluctuation_inner_bruteforce(eig, BETA, 1, i, j, t)
        assert fast == pytest.approx(slow, abs=1e-12)


def test_fluctuation_inner_single_site_is_truncated_wick(eig2):
    box = eig2.box
    d = fermi_symbol(eig2, BETA).entries
    a = CurrentElement.bond((0, 0), (1, 0))
    b = CurrentElement.bond((0, 1), (0, 0))
    val = fluctuation_inner(eig2, BETA, 0, a, b)
    assert val == pytest.approx(wick_truncated(d, a.matrix(box), b.matrix(box)), abs=1e-13)


def test_truncated_wick_equals_fock_space_covariance():
    # two modes: build dGamma on the 4-dimensional Fock space and compare
    rng = np.random.default_rng(0)
    h = rng.normal(size=(2, 2))
    h = h + h.T
    a_ = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    b_ = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    # Jordan-Wigner annihilators on C^2 x C^2
    sm = np.array([[0, 1], [0, 0]])
    z = np.diag([1, -1])
    c = [np.kron(sm, np.eye(2)), np.kron(z, sm)]
    dg = lambda m: sum(m[x, y] * c[x].conj().T @ c[y] for x in range(2) for y in range(2))  # noqa: E731
    gibbs = scipy.linalg.expm(-dg(h))
    gibbs /= np.trace(gibbs)
    rho = lambda op: np.trace(gibbs @ op)  # noqa: E731
    dsym = np.linalg.inv(np.eye(2) + scipy.linalg.expm(h)).T  # d[y, x] = rho(a*_x a_y)
    A, B = dg(a_), dg(b_)
    fock = rho(A.conj().T @ B) - rho(A.conj().T) * rho(B)
    assert np.isclose(np.trace(a_ @ dsym), rho(A))
    assert wick_truncated(dsym, a_, b_) == pytest.approx(fock, abs=1e-12)
    assert expectation(dsym, a_) == pytest.approx(rho(A), abs=1e-12)


@given(st.integers(0, 2), st.floats(0.2, 3.0))
@settings(max_examples=10, deadline=None)
def test_fluctuation_form_is_positive(l, beta):
    eig = make_eig(1, 5, 1.0, seed=2)
    el = CurrentElement.bond((1,), (0,))
    val = fluctuation_inner(eig, beta, l, el, el)
    assert abs(val.imag) < 1e-12
    assert val.real >= -1e-12


def test_spectral_form_reproduces_time_dependence(eig1):
    i = CurrentElement.bond((1,), (0,))
    j = CurrentElement.bond((0,), (-1,))
    g, nu = fluctuation_spectral(eig1, BETA, 1, i, j)
    for s in (0.0, 0.5, 1.7):
        assert np.sum(g * np.exp(1j * s * nu)) == pytest.approx(fluctuation_inner(eig1, BETA, 1, i, j, s), abs=1e-12)


def test_correlations_decay_away_from_origin():
    eig = make_eig(1, 20, 5.0, seed=1)
    prof = decay_profile(eig, 2.0, 0.0, 1.0)
    r = np.array([p[0] for p in prof])
    env = np.array([p[1] for p in prof])
    assert r[0] == 0.0 and env[0] <= 1.0
    assert env[-1] < 1e-3 * env[0]
    with pytest.raises(ContractError):
        decay_profile(eig, 2.0, 0.0, 0.0)


@given(st.floats(-3.0, 3.0), st.floats(0.0, 1.0), st.integers(0, 6), st.integers(0, 6))
@settings(max_examples=30, deadline=None)
def test_four_point_map_is_bounded_by_four(t, frac, i, j):
    eig = make_eig(1, 3, 1.0, seed=5)
    sites = [(-3,), (-2,), (-1,), (0,), (1,), (2,), (3,)]
    x = (sites[i], sites[(i + 1) % 7])
    y = (sites[j], sites[(j + 3) % 7])
    assert abs(four_point(eig, BETA, t, frac * BETA, x, y)) <= 4.0 + 1e-12


def test_four_point_matches_hand_expansion_on_clean_three_sites():
    eig = make_eig(1, 1, 0.0)
    h = eig.matrix()
    t, alpha = 0.7, 0.3

    def c(tt, a, u, v):
        # C_{tt + i a}(u, v) = <e_v, exp(-i tt H) F_a(H) e_u>
        m = scipy.linalg.expm(-1j * tt * h) @ scipy.linalg.expm(a * h) @ np.linalg.inv(np.eye(3) + scipy.linalg.expm(BETA * h))
        return m[v + 1, u + 1]

    x1, x2, y1, y2 = -1, 0, 1, 0
    expect = (c(t, alpha, y1, x1) * c(-t, BETA - alpha, x2, y2) - c(t, alpha, y2, x1) * c(-t, BETA - alpha, x2, y1)
              - c(t, alpha, y1, x2) * c(-t, BETA - alpha, x1, y2) + c(t, alpha, y2, x2) * c(-t, BETA - alpha, x1, y1))
    got = four_point(eig, BETA, t, alpha, ((x1,), (x2,)), ((y1,), (y2,)))
    assert got == pytest.approx(expect, abs=1e-12)


def test_two_point_bounds(eig2):
    box = eig2.box
    for x in box.sites[:5]:
        occ = two_point(eig2, BETA, 0.0, 0.0, (tuple(x), tuple(x)))
        assert abs(occ.imag) < 1e-14 and 0 < occ.real < 1
    assert np.abs(correlation_matrix(eig2, BETA, 1.3, 0.4)).max() <= 1.0


def test_clean_correlations_are_real_at_the_symmetric_imaginary_time():
    eig = make_eig(1, 8, 0.0)
    c = correlation_matrix(eig, 2.0, 0.0, 1.0)
    assert np.abs(c.imag).max() < 1e-12


def test_strong_disorder_envelope_decays_exponentially():
    eig = make_eig(1, 20, 5.0, seed=1)
    prof = decay_profile(eig, 2.0, 0.0, 1.0)
    r = np.array([p[0] for p in prof])[1:]
    env = np.log(np.array([p[1] for p in prof])[1:])
    slope, intercept = np.polyfit(r, env, 1)
    assert slope < 0
    fitted = slope * r + intercept
    assert np.all(np.diff(fitted) <= 0)

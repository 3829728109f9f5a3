import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lattice_ohm.disorder import (DisorderSpec, RealizationFailure, ensemble_mean, ensemble_stats, loglog_slope,
                                  map_realizations, sample_realization, self_averaging_diagnostic)
from lattice_ohm.errors import ContractError
from lattice_ohm.lattice_fields import build_box


@given(st.integers(0, 2**32), st.integers(0, 1000))
@settings(max_examples=25)
def test_realization_is_deterministic_and_bounded(seed, index):
    spec = DisorderSpec(master_seed=seed)
    box = build_box(2, 2)
    a = sample_realization(spec, box, index)
    b = sample_realization(spec, box, index)
    assert np.array_equal(a.values, b.values)
    assert np.all(np.abs(a.values) <= 1.0)


@pytest.mark.parametrize("d", [1, 2])
def test_extending_the_box_keeps_the_inner_potential(d):
    # samples are drawn in order of growing sup-norm shells, so a larger box restricts to the smaller one
    spec = DisorderSpec(master_seed=17)
    small, big = build_box(d, 2), build_box(d, 4)
    vs = sample_realization(spec, small, 5)
    vb = sample_realization(spec, big, 5)
    assert np.array_equal(vb.values[big.indices(small.sites)], vs.values)


def test_distinct_indices_give_distinct_realizations():
    spec = DisorderSpec(master_seed=1)
    box = build_box(1, 10)
    assert not np.array_equal(sample_realization(spec, box, 0).values, sample_realization(spec, box, 1).values)


def test_uniform_moments():
    spec = DisorderSpec(master_seed=2)
    v = sample_realization(spec, build_box(1, 9000), 0).values
    assert abs(v.mean()) < 0.02
    assert v.var() == pytest.approx(1.0 / 3.0, abs=0.01)


def test_two_point_and_tabulated_distributions():
    tp = DisorderSpec("two-point", points=(-0.5, 1.0), p=0.25, master_seed=3)
    v = sample_realization(tp, build_box(1, 5000), 0).values
    assert set(np.unique(v)) <= {-0.5, 1.0}
    assert np.mean(v == -0.5) == pytest.approx(0.25, abs=0.02)
    # triangular density on [-1, 1] has mean 0 and variance 1/6
    tab = DisorderSpec("tabulated", grid=(-1.0, 0.0, 1.0), density=(0.0, 1.0, 0.0), master_seed=3)
    w = sample_realization(tab, build_box(1, 9000), 0).values
    assert w.var() == pytest.approx(1.0 / 6.0, abs=0.01)


@pytest.mark.parametrize("kwargs", [dict(distribution="gauss"), dict(lam=-1.0),
                                    dict(distribution="two-point", points=(0.0, 2.0)),
                                    dict(distribution="tabulated", grid=(0.0, 1.0), density=(0.0, 0.0))])
def test_spec_rejects_invalid_input(kwargs):
    with pytest.raises(ContractError):
        DisorderSpec(**kwargs)


def test_degenerate_distribution_has_zero_spread():
    spec = DisorderSpec("two-point", points=(0.0, 0.0), p=0.5)
    box = build_box(1, 3)
    mean, err = ensemble_mean(lambda r: r.values.sum(), spec, box, 5)
    assert mean == 0.0 and err == 0.0


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30))
def test_ensemble_stats_matches_numpy(xs):
    mean, err = ensemble_stats(xs)
    a = np.asarray(xs)
    assert mean == pytest.approx(a.mean(), abs=1e-9)
    assert err == pytest.approx(a.std(ddof=1) / math.sqrt(len(a)), abs=1e-9)


def test_worker_count_does_not_change_results():
    spec = DisorderSpec(master_seed=9)
    box = build_box(1, 6)
    f = lambda i: sample_realization(spec, box, i).values.sum()  # noqa: E731
    assert map_realizations(f, 12, 1) == map_realizations(f, 12, 4)


def test_failures_report_the_realization_index():
    def f(i):
        if i == 3:
            raise RuntimeError("boom")
        return i

    with pytest.raises(RealizationFailure) as exc:
        map_realizations(f, 5)
    assert exc.value.index == 3


def test_loglog_slope_of_power_law():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert loglog_slope(x, 3.0 * x ** -1.5) == pytest.approx(-1.5)


def test_spatial_average_variance_decays_like_inverse_volume():
    spec = DisorderSpec(master_seed=11)
    rows, slope = self_averaging_diagnostic(lambda r, box: r.values.mean(), spec, [8, 32, 128], 200)
    # variance of a mean of V iid uniforms is 1/(3V)
    for l, vol, _, var in rows:
        assert var == pytest.approx(1.0 / (3.0 * vol), rel=0.3)
    assert slope == pytest.approx(-1.0, abs=0.2)
    with pytest.raises(ContractError):
        self_averaging_diagnostic(lambda r, box: 0.0, spec, [4, 8], 5)


def test_second_moment_estimator_is_within_three_standard_errors():
    spec = DisorderSpec(master_seed=23)
    box = build_box(1, 1)
    mean, err = ensemble_mean(lambda r: spec.lam * r.at((0,)) ** 2, spec, box, 10_000)
    assert abs(mean - 1.0 / 3.0) <= 3 * err

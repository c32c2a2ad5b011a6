import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvcool import oscillator as osc
from mvcool import protocol as pr
from mvcool import semiclassical as sc
from mvcool.errors import NoImprovement, TruncationTooSmall
from mvcool.params import ProtocolParams, RoundParams, ThermalSpec


@given(st.floats(0.02, 0.6), st.floats(0.0, 2.0), st.sampled_from(["position", "momentum"]))
@settings(max_examples=30, deadline=None)
def test_kraus_completeness(eps, alpha, quad):
    pair = pr.build_kraus(quad, eps, alpha, 80)
    assert pair.completeness_error() < 1e-10


def test_kraus_probabilities_match_observable():
    state = osc.make_thermal(ThermalSpec(2.0), 80)
    pair = pr.build_kraus("position", 0.2, 0.5, 80)
    obs = pr.measurement_observable(0.2, 80, "position")
    np.testing.assert_allclose(pr.outcome_probabilities(state, pair), obs.probabilities(state), atol=1e-12)
    # the +X kraus operator of a displaced state carries the sin(4 eps q) asymmetry
    d = osc.displacement_matrix(0.8, 80)
    shifted = osc.FockState(d @ state.matrix @ d.conj().T)
    plus, minus = pr.outcome_probabilities(shifted, pair)
    assert minus > plus


def test_truncation_guard():
    with pytest.raises(TruncationTooSmall):
        pr.build_kraus("position", 0.1, 4.0, 40)


def test_rotation_maps_position_contraction_to_momentum():
    dim = 80
    rng = np.random.default_rng(1)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    a[20:, :] = 0
    rho = a @ a.conj().T
    state = osc.FockState(rho / np.trace(rho))
    p = RoundParams(0.2, 0.4)
    lhs = pr.rotate(pr.contract(state, p), math.pi / 2)
    rhs = pr.contract(pr.rotate(state, math.pi / 2), p.at_angle(0.0))
    np.testing.assert_allclose(lhs.matrix[:40, :40], rhs.matrix[:40, :40], atol=1e-10)


def test_rotate_moves_mean_counter_clockwise():
    dim = 60
    d = osc.displacement_matrix(1.0, dim)
    state = osc.FockState(d @ osc.fock_state(0, dim).matrix @ d.conj().T)
    m = osc.moments(pr.rotate(state, math.pi / 2))
    assert m.q == pytest.approx(0.0, abs=1e-9)
    assert m.p == pytest.approx(1.0, abs=1e-9)


def test_displacement_sum_term_counts():
    p = RoundParams(0.2, 0.5)
    assert len(pr.expand_round_to_displacement_sum(p, (1, -1)).terms) == 16
    assert len(pr.expand_round_to_displacement_sum(p).terms) == 64


def test_displacement_sum_matches_fock_path():
    dim = 90
    spec = ThermalSpec(1.5)
    state = osc.make_thermal(spec, dim)
    params = ProtocolParams(RoundParams(0.2, 0.5), RoundParams(0.25, 0.3, 0.0))
    expect = pr.apply_round(state, params).matrix
    got = pr.expand_round_to_displacement_sum(params).apply(state).matrix
    np.testing.assert_allclose(got[:40, :40], expect[:40, :40], atol=1e-9)


@given(st.floats(0.0, 10.0), st.floats(0.05, 0.6), st.floats(0.0, 2.0))
@settings(max_examples=30, deadline=None)
def test_char_func_normalised_and_closed_form(nbar, eps, alpha):
    spec = ThermalSpec(nbar)
    dsum = pr.expand_round_to_displacement_sum(RoundParams(eps, alpha))
    assert pr.char_func(dsum, 0.0, spec) == pytest.approx(1.0, abs=1e-12)
    n = pr.mean_occupation_from_char(dsum, spec)
    assert n + 0.5 == pytest.approx(pr.quantum_energy(eps, alpha, spec), rel=1e-9, abs=1e-12)


def test_quantum_energy_matches_fock_state():
    spec = ThermalSpec(3.0)
    eps, alpha = 0.18, 0.7
    state = pr.apply_round(osc.make_thermal(spec, 120), ProtocolParams.symmetric(eps, alpha))
    assert osc.mean_energy(state) == pytest.approx(pr.quantum_energy(eps, alpha, spec), rel=1e-8)


def test_char_func_of_round_matches_fock_characteristic_function():
    spec = ThermalSpec(2.0)
    p = RoundParams(0.2, 0.6)
    state = pr.apply_round(osc.make_thermal(spec, 120), p)
    betas = np.array([0.1, 0.3j, 0.2 - 0.4j, 0.6 + 0.1j])
    np.testing.assert_allclose(pr.char_func(pr.expand_round_to_displacement_sum(p), betas, spec),
                               osc.characteristic_function(state, betas), atol=1e-9)


def test_optimal_alpha_given_epsilon_is_stationary():
    spec = ThermalSpec(4.0)
    eps = 0.15
    a = pr.optimal_alpha_given_epsilon(eps, spec)
    h = 1e-5
    d = (pr.quantum_energy(eps, a + h, spec) - pr.quantum_energy(eps, a - h, spec)) / (2 * h)
    assert d == pytest.approx(0.0, abs=1e-8)


def test_optimize_epsilon_large_nbar():
    opt = pr.optimize_epsilon(ThermalSpec(50.0))
    assert opt.epsilon == pytest.approx(0.049745, rel=1e-4)
    assert opt.energy == pytest.approx(31.926, rel=1e-4)
    assert opt.ratio == pytest.approx(sc.CONTRACTION, abs=2e-3)


def test_optimize_epsilon_ground_state():
    with pytest.raises(NoImprovement):
        pr.optimize_epsilon(ThermalSpec(0.0))


def test_optimize_epsilon_below_one_still_cools():
    opt = pr.optimize_epsilon(ThermalSpec(0.5))
    assert opt.energy < 1.0


def test_analytic_schedule_round_three():
    res = pr.run_schedule(ThermalSpec(34), 3)
    assert res.rows[3].nbar_analytic == pytest.approx(8.61, abs=0.01)
    assert [r.round for r in res.rows] == [0, 1, 2, 3]


def test_fock_schedule_mean_estimator_equals_exact_occupation():
    res = pr.run_schedule(ThermalSpec(4.0), 2, "fock", estimator="mean")
    for r in res.rows[1:]:
        assert r.nbar_fock == pytest.approx(r.mean_n)


def test_explicit_schedule_length_checked():
    with pytest.raises(ValueError):
        pr.run_schedule(ThermalSpec(4.0), 2, schedule=[ProtocolParams.symmetric(0.1, 0.5)])


def test_thermal_round_nbar_matches_energy():
    p = ProtocolParams.symmetric(0.1, 0.8)
    assert pr.thermal_round_nbar(p, 7.0) + 0.5 == pytest.approx(pr.quantum_energy(0.1, 0.8, ThermalSpec(7.0)))

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvcool import measurement as ms
from mvcool import oscillator as osc
from mvcool.errors import DegenerateData, IdentifiabilityWarning
from mvcool.params import RadialModes, ThermalSpec


@given(st.floats(0.0, 12.0))
@settings(max_examples=12, deadline=None)
def test_leading_readout_of_thermal_state(nbar):
    state = osc.make_thermal(ThermalSpec(nbar), osc.default_dim(nbar, 30))
    a = ms.readout_alphas(nbar, 12)
    np.testing.assert_allclose(ms.readout_probabilities(state, a), ms.thermal_readout(nbar, a), atol=1e-7)


def test_full_order_reduces_to_leading_without_lamb_dicke_corrections():
    state = osc.make_thermal(ThermalSpec(5.0), 150)
    a = np.linspace(-1, 1, 9)
    lead = ms.readout_probabilities(state, a, "leading")
    full = ms.readout_probabilities(state, a, "full", None, eta=0.0)
    np.testing.assert_allclose(full, lead, atol=1e-12)


def test_full_order_readout_is_wider_at_finite_eta():
    nb = 34.0
    state = osc.make_thermal(ThermalSpec(nb))
    a = ms.readout_alphas(nb, 20)
    lead = ms.readout_probabilities(state, a, "leading")
    full = ms.readout_probabilities(state, a, "full", RadialModes.equal_temperature(nb))
    # both the sideband nonlinearity and radial averaging weaken the effective drive
    assert np.all(full >= lead - 1e-12)
    assert ms.fit_nbar(ms.ReadoutCurve(a, full, 0)).nbar < nb


@given(st.floats(0.0, 60.0))
@settings(max_examples=15, deadline=None)
def test_radial_distribution_preserves_mean(nbar):
    radial = RadialModes.equal_temperature(nbar)
    rs, ws = ms.radial_distribution(radial, 16)
    assert ws.sum() == pytest.approx(1.0)
    assert np.all(rs <= 1.0 + 1e-12)
    exact = 1.0
    for nb, eta in zip(radial.nbars, radial.etas):
        # thermal average of exp(-x/2) L_n(x) has the closed form exp(-x (nbar + 1/2))
        exact *= math.exp(-eta * eta * (nb + 0.5))
    # the Fock sums are truncated where exp(-12) of the population remains
    assert np.dot(rs, ws) == pytest.approx(exact, rel=1e-5)


def test_radial_factor_vacuum():
    assert float(ms.radial_factor((0, 0), (0.02, 0.03))) == pytest.approx(math.exp(-(0.02**2 + 0.03**2) / 2))


def test_equal_temperature_occupations():
    radial = RadialModes.equal_temperature(34.0)
    expect = (34.5 * 1.7 / 2.4 - 0.5, 34.5 * 1.7 / 3.2 - 0.5)
    assert radial.nbars == pytest.approx(expect)


def test_gaussian_fit_exact_data():
    a = ms.readout_alphas(20.0)
    curve = ms.ReadoutCurve(a, ms.thermal_readout(20.0, a), 0)
    fit = ms.fit_nbar(curve)
    assert fit.nbar == pytest.approx(20.0, rel=1e-6)
    assert fit.chi2 < 1e-10


def test_gaussian_fit_noisy_interval():
    a = ms.readout_alphas(15.0)
    rng = np.random.default_rng(3)
    state = osc.make_thermal(ThermalSpec(15.0))
    fit = ms.fit_nbar(ms.simulate_readout(state, a, None, "leading", 400, rng))
    assert fit.ci_low < fit.nbar < fit.ci_high
    assert abs(fit.nbar - 15.0) < 3 * fit.stderr


def test_fit_rejects_flat_curve():
    a = np.linspace(-1, 1, 20)
    with pytest.raises(DegenerateData):
        ms.fit_nbar(ms.ReadoutCurve(a, np.full(20, 0.5), 100))


def test_fit_rejects_unknown_model():
    a = ms.readout_alphas(5.0)
    with pytest.raises(ValueError):
        ms.fit_nbar(ms.ReadoutCurve(a, ms.thermal_readout(5.0, a), 0), model="cubic")


def test_binomial_interval_contains_estimate():
    ci = ms.binomial_ci([0.0, 0.3, 1.0], [100, 100, 100])
    assert np.all(ci[:, 0] <= [0.0, 0.3, 1.0])
    assert np.all(ci[:, 1] >= [0.0, 0.3, 1.0])
    assert ci[1, 1] - ci[1, 0] < 0.2


def test_readout_curve_csv_round_trip(tmp_path):
    a = ms.readout_alphas(10.0, 8)
    curve = ms.ReadoutCurve(a, ms.thermal_readout(10.0, a), 250)
    path = tmp_path / "curve.csv"
    curve.to_csv(path)
    back = ms.ReadoutCurve.from_csv(path)
    np.testing.assert_array_equal(back.alphas, curve.alphas)
    np.testing.assert_array_equal(back.probs, curve.probs)
    np.testing.assert_array_equal(back.shots, curve.shots)


def test_thermal_fraction_estimator_on_thermal_state():
    state = osc.make_thermal(ThermalSpec(6.0), 200)
    assert ms.estimate_thermal_fraction(state, 4.0) == pytest.approx(6.0, rel=1e-6)


def test_sideband_rabi_limits():
    n = np.arange(5)
    np.testing.assert_allclose(ms.sideband_rabi(n, 1.0, 1e-6), np.sqrt(n + 1), rtol=1e-9)
    np.testing.assert_allclose(ms.sideband_rabi(n, 1.0, exact=False), np.sqrt(n + 1))
    assert ms.sideband_rabi([0], 2.0, 0.05)[0] == pytest.approx(2.0)


def test_bsb_signal_ground_state():
    t = np.linspace(0, 1e-4, 7)
    p = ms.bsb_signal([1.0], t, 2 * math.pi * 10e3)
    np.testing.assert_allclose(p, 0.5 * (1 + np.cos(2 * math.pi * 10e3 * t)), atol=1e-12)


def test_synthetic_tail_populations():
    pops = ms.synthetic_tail_populations(0.9)
    assert pops.sum() == pytest.approx(1.0)
    assert pops[:4].sum() == pytest.approx(0.9)


def _times(t_max=4e-4, points=120):
    return np.unique(np.r_[np.linspace(0, t_max / 16, points // 4), np.linspace(0, t_max, points - points // 4)])


def test_tail_fit_noise_free():
    pops = ms.synthetic_tail_populations(0.9)
    curve = ms.simulate_bsb(osc.FockState(np.diag(pops).astype(complex)), _times(), 2 * math.pi * 20e3,
                            decay=ms.DecayModel(300.0))
    rep = ms.fit_tails(curve, bootstrap=0)
    assert rep.tail_mass == pytest.approx(0.1, abs=5e-3)
    assert rep.populations.sum() + rep.tail_mass == pytest.approx(1.0)
    assert rep.gamma_exp == pytest.approx(300.0, rel=0.1)


def test_tail_fit_ground_state_interval_touches_zero():
    state = osc.fock_state(0, 10)
    curve = ms.simulate_bsb(state, _times(), 2 * math.pi * 20e3, rng=1, shots=200)
    rep = ms.fit_tails(curve, bootstrap=30, rng=1)
    assert rep.ci[0] == 0.0
    assert rep.tail_mass < 0.03


def test_tail_fit_needs_a_full_flop():
    curve = ms.simulate_bsb(osc.fock_state(0, 10), np.linspace(0, 1e-6, 30), 2 * math.pi * 20e3)
    with pytest.raises(DegenerateData):
        ms.fit_tails(curve, bootstrap=0)


def test_tail_fit_warns_when_levels_unresolved():
    times = np.linspace(0, 6e-5, 60)
    curve = ms.simulate_bsb(osc.fock_state(0, 10), times, 2 * math.pi * 20e3)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ms.fit_tails(curve, max_level=3, bootstrap=0)
    assert any(issubclass(w.category, IdentifiabilityWarning) for w in caught)

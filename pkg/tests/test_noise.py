import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvcool import noise as nz
from mvcool import oscillator as osc
from mvcool import protocol as pr
from mvcool.errors import StepTooCoarse
from mvcool.params import RadialModes, ThermalSpec


def _joint(state):
    return osc.with_spin_up(state)


def test_drive_for_displacement_round_trip():
    for gamma in (0.3, -0.2j, 0.1 - 0.4j):
        d = nz.DriveConfig.for_displacement(gamma, "Y", 2 * math.pi * 1e5)
        assert d.gamma == pytest.approx(gamma, abs=1e-15)
        assert d.spin_phase == pytest.approx(math.pi / 2)


def test_ideal_pulse_is_conditional_displacement():
    dim = 60
    gamma = 0.4 + 0.2j
    drive = nz.DriveConfig.for_displacement(gamma, "X", 2 * math.pi * 1e5)
    out = nz.evolve_pulse(_joint(osc.fock_state(0, dim)), drive, nz.NoiseConfig.ideal())
    # |+Z> = (|+X> + |-X>)/sqrt 2, so each X branch is displaced by +/- gamma with weight 1/2
    d = osc.displacement_matrix(gamma, dim)
    vac = osc.fock_state(0, dim).matrix
    expect = 0.5 * (d @ vac @ d.conj().T + d.conj().T @ vac @ d)
    np.testing.assert_allclose(out.oscillator().matrix, expect, atol=1e-10)


def test_ideal_noise_reproduces_fock_schedule():
    spec = ThermalSpec(3.0)
    noisy = nz.run_noisy_experiment(spec, 2, nz.NoiseConfig.ideal(), estimator="mean")
    exact = pr.run_schedule(spec, 2, "fock", estimator="mean")
    np.testing.assert_allclose(noisy.series(), exact.series(), rtol=1e-8)


def test_spin_coherence_matches_rate():
    noise = nz.NoiseConfig()
    t, h = 1e-3, 1e-8
    dlog = (math.log(nz.spin_coherence(t + h, noise)) - math.log(nz.spin_coherence(t - h, noise))) / (2 * h)
    assert -dlog == pytest.approx(noise.spin_dephasing_rate(t), rel=1e-6)
    assert nz.spin_coherence(0.0, noise) == 1.0


def test_spin_coherence_default_value():
    # g = 1/1.6 ms, K = 1/5 ms evaluated at 1.6 ms
    assert float(nz.spin_coherence(1.6e-3, nz.NoiseConfig())) == pytest.approx(0.165, abs=2e-3)


def test_spin_coherence_markov_limit():
    noise = nz.NoiseConfig(spin_dephasing_g=0.0, spin_markov_rate=50.0)
    assert float(nz.spin_coherence(0.01, noise)) == pytest.approx(math.exp(-1.0))


def test_oscillator_dephasing_idle():
    dim = 10
    psi = np.zeros(dim)
    psi[:2] = 1 / math.sqrt(2)
    state = _joint(osc.FockState(np.outer(psi, psi).astype(complex)))
    noise = nz.NoiseConfig(spin_dephasing_g=0.0, heating_rate=0.0, freq_jitter_sd=0.0, nbar_sd=0.0,
                           recoil=nz.RecoilConfig(enabled=False))
    out = nz.idle(state, noise.osc_coherence_time, noise)
    assert abs(out.matrix[0, 1]) == pytest.approx(0.5 * math.exp(-1.0), rel=1e-9)


def test_heating_follows_anti_damping():
    noise = nz.NoiseConfig(spin_dephasing_g=0.0, osc_coherence_time=math.inf, heating_rate=100.0,
                           freq_jitter_sd=0.0, nbar_sd=0.0)
    out = nz.idle(_joint(osc.fock_state(0, 20)), 1e-3, noise)
    n = osc.mean_occupation(out.oscillator())
    # d<n>/dt = rate (<n> + 1); five first-order steps of 0.02 each
    assert n == pytest.approx(1.02**5 - 1, rel=1e-9)
    assert n == pytest.approx(math.expm1(0.1), rel=0.02)
    out.check()


def test_step_too_coarse():
    noise = nz.NoiseConfig()
    drive = nz.DriveConfig.for_displacement(0.3, "Y", 2 * math.pi * 1e5)
    with pytest.raises(StepTooCoarse):
        nz.evolve_pulse(_joint(osc.fock_state(0, 20)), drive, noise, dt=1e-3)


def test_pulse_with_noise_keeps_state_physical():
    noise = nz.NoiseConfig(mains=(nz.MainsHarmonic(1, 200.0),))
    drive = nz.DriveConfig.for_displacement(0.5, "Y", 2 * math.pi * 2e4)
    draw = nz.TrajectoryDraw(axial_offset=30.0, spin_detuning=50.0)
    out = nz.evolve_pulse(_joint(osc.make_thermal(ThermalSpec(0.5), 40)), drive, noise, draw=draw)
    out.check()


def test_recoil_energy_matches_sampling():
    recoil = nz.RecoilConfig()
    k = nz.sample_recoil(recoil, np.random.default_rng(0), 200_000)
    assert np.mean(k**2) == pytest.approx(nz.mean_recoil_energy(recoil), rel=0.02)
    assert abs(np.mean(k)) < 2e-4


def test_repump_resets_spin_and_heats_lower_branch():
    dim = 40
    m = np.zeros((2 * dim, 2 * dim), complex)
    m[dim, dim] = 1.0  # |-Z>|0>
    recoil = nz.RecoilConfig(samples=4000)
    out = nz.repump(osc.FockState(m, with_spin=True), recoil, 5)
    assert np.allclose(out.block(1, 1), 0) and np.allclose(out.block(0, 1), 0)
    gain = osc.mean_energy(out.oscillator()) - 0.5
    assert gain == pytest.approx(nz.mean_recoil_energy(recoil), rel=0.1)
    out.check()


def test_repump_without_recoil_moves_population():
    dim = 10
    m = np.zeros((2 * dim, 2 * dim), complex)
    m[dim + 2, dim + 2] = 1.0
    out = nz.repump(osc.FockState(m, with_spin=True), nz.RecoilConfig(enabled=False))
    assert out.block(0, 0)[2, 2] == pytest.approx(1.0)


@given(st.integers(0, 10**6), st.integers(0, 50), st.integers(0, 50))
@settings(max_examples=25, deadline=None)
def test_trajectory_streams_are_reproducible(seed, traj, stage):
    a = nz.trajectory_rng(seed, traj, stage).random(4)
    b = nz.trajectory_rng(seed, traj, stage).random(4)
    c = nz.trajectory_rng(seed, traj, stage + 1).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_draws_depend_only_on_seed_and_index():
    noise = nz.NoiseConfig()
    a = nz.draw_trajectory(ThermalSpec(10.0), noise, RadialModes(), 7, 3)
    b = nz.draw_trajectory(ThermalSpec(10.0), noise, RadialModes(), 7, 3)
    assert a == b
    assert a.rabi_scale < 1.0


def test_threads_do_not_change_results():
    spec = ThermalSpec(1.0)
    noise = nz.NoiseConfig(nbar_sd=0.2)
    kw = dict(noise=noise, radial=RadialModes(), n_trajectories=3, seed=11, dim=40)
    one = nz.run_noisy_experiment(spec, 1, threads=1, **kw)
    many = nz.run_noisy_experiment(spec, 1, threads=3, **kw)
    np.testing.assert_array_equal(one.per_trajectory, many.per_trajectory)
    for row in one.rows:
        assert row.ci_low <= row.nbar_mean <= row.ci_high


def test_noise_floor_above_ideal():
    spec = ThermalSpec(2.0)
    ideal = nz.run_noisy_experiment(spec, 3, nz.NoiseConfig.ideal(), estimator="mean", dim=60)
    noisy = nz.run_noisy_experiment(spec, 3, nz.NoiseConfig(nbar_sd=0.0, freq_jitter_sd=0.0),
                                    estimator="mean", dim=60)
    assert noisy.series()[-1] > ideal.series()[-1]


def test_noise_config_validation():
    with pytest.raises(ValueError):
        nz.NoiseConfig(heating_rate=-1.0)
    with pytest.raises(ValueError):
        nz.MainsHarmonic(0, 1.0)


def _ramsey(times, noise):
    dim = 2
    m = np.zeros((2 * dim, 2 * dim), complex)
    for i in (0, dim):
        for j in (0, dim):
            m[i, j] = 0.5
    state, clock, out, last = osc.FockState(m, with_spin=True), nz.SequenceClock(), [], 0.0
    for t in times:
        state = nz.idle(state, t - last, noise, clock)
        last = t
        out.append(abs(state.matrix[0, dim]) / 0.5)
    return np.array(out)


def test_ramsey_envelope_shape():
    noise = nz.NoiseConfig(osc_coherence_time=math.inf, heating_rate=0.0, freq_jitter_sd=0.0, nbar_sd=0.0)
    K = noise.spin_dephasing_k
    early = np.linspace(0.002, 0.04, 20) / K
    log_early = np.log(_ramsey(early, noise))
    # Gaussian regime: log c is quadratic with no linear term (cubic absorbs the K t correction)
    _, quad, lin, _ = np.polyfit(early, log_early, 3)
    assert quad == pytest.approx(-2 * noise.spin_dephasing_g**2, rel=0.05)
    assert abs(lin * early[-1]) < 0.05 * abs(log_early[-1])
    late = np.linspace(6, 15, 10) / K
    log_late = np.log(_ramsey(late, noise))
    slope, icpt = np.polyfit(late, log_late, 1)
    assert np.max(np.abs(np.polyval([slope, icpt], late) - log_late)) < 1e-2 * abs(log_late[0])
    assert -slope == pytest.approx(4 * noise.spin_dephasing_g**2 / K, rel=1e-2)


def test_mains_period_is_twenty_ms():
    noise = nz.NoiseConfig(mains=(nz.MainsHarmonic(1, 80.0, 0.3),))
    t = np.linspace(0, 0.05, 37)
    np.testing.assert_allclose(nz.axial_detuning(t + 0.02, noise), nz.axial_detuning(t, noise), atol=1e-9)
    assert not np.allclose(nz.axial_detuning(t + 0.01, noise), nz.axial_detuning(t, noise))


def test_heating_over_ten_ms_at_default_rate():
    noise = nz.NoiseConfig(spin_dephasing_g=0.0, osc_coherence_time=math.inf, freq_jitter_sd=0.0, nbar_sd=0.0)
    out = nz.idle(_joint(osc.fock_state(0, 20)), 10e-3, noise)
    assert osc.mean_occupation(out.oscillator()) == pytest.approx(math.expm1(0.1), rel=0.02)

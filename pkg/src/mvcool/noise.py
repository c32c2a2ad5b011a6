"""Density-matrix simulation of the full pulse sequence with experimental imperfections.

Each trajectory draws static parameters (initial occupation, radial Fock
numbers, Rabi-frequency and detuning offsets), then propagates the joint
spin (x) oscillator density matrix through every conditional-displacement
pulse and repump. During a pulse the state is advanced by splitting: the drive
is exact in the eigenbasis of sigma_phi (x) X, while detunings and the
dissipators (spin dephasing including a time-dependent non-Markovian term,
oscillator dephasing and heating) act elementwise in the Fock basis.

Frequencies given in Hz are converted to angular units internally; rates are
in 1/s and times in seconds.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import eval_genlaguerre
from scipy.stats import bootstrap

from . import oscillator as osc
from .errors import StepTooCoarse
from .measurement import estimate_thermal_fraction, radial_factor
from .params import AXIAL_LAMB_DICKE, ProtocolParams, RadialModes, ThermalSpec
from .protocol import FOCK_DIM_FACTOR, _as_protocol
from .semiclassical import classical_contraction, schedule_params

MAINS_HZ = 50.0
STEPS_PER_RATE = 50
REFERENCE_WAVELENGTH_NM = 729.0
SPIN_BASES = {"X": 0.0, "Y": math.pi / 2}


# --- configuration -----------------------------------------------------------------


@dataclass(frozen=True)
class DriveConfig:
    """Spin-dependent force H = eta*Omega*sigma_phi_s (sin(phi_m) q - cos(phi_m) p).

    After ``duration`` the ideal pulse is D(gamma sigma_phi_s) with
    gamma = -eta*Omega*t*exp(i phi_m)/2. ``order='full'`` keeps all orders of
    the Lamb-Dicke expansion in the motional operator.
    """

    rabi: float
    lamb_dicke: float = AXIAL_LAMB_DICKE
    spin_phase: float = math.pi / 2
    motional_phase: float = 0.0
    duration: float = 0.0
    order: str = "leading"

    @property
    def gamma(self) -> complex:
        return -self.lamb_dicke * self.rabi * self.duration * np.exp(1j * self.motional_phase) / 2

    @classmethod
    def for_displacement(cls, gamma: complex, spin_basis: str, rabi: float,
                         lamb_dicke: float = AXIAL_LAMB_DICKE, order: str = "leading") -> "DriveConfig":
        """Pulse settings realising D(gamma sigma) for sigma = X or Y."""
        gamma = complex(gamma)
        t = 2 * abs(gamma) / (lamb_dicke * rabi)
        phi_m = float(np.angle(-gamma)) if gamma != 0 else 0.0
        return cls(rabi, lamb_dicke, SPIN_BASES[spin_basis], phi_m, t, order)

    def scaled(self, factor: float) -> "DriveConfig":
        return replace(self, rabi=self.rabi * factor)


@dataclass(frozen=True)
class MainsHarmonic:
    harmonic: int
    amplitude: float  # Hz
    phase: float = 0.0

    def __post_init__(self):
        if int(self.harmonic) != self.harmonic or self.harmonic < 1:
            raise ValueError("mains harmonics must be positive integers")


@dataclass(frozen=True)
class RecoilPhoton:
    """One scattered photon during a repump.

    ``pattern`` is 'dipole' (sin^2 around ``dipole_angle`` from the trap axis),
    'isotropic', or 'beam' (a fixed direction at ``beam_angle`` from the axis).
    """

    wavelength_nm: float
    pattern: str = "isotropic"
    dipole_angle: float = math.pi / 2
    beam_angle: float = 0.0

    def eta(self, reference_eta: float) -> float:
        return reference_eta * REFERENCE_WAVELENGTH_NM / self.wavelength_nm


@dataclass(frozen=True)
class RecoilConfig:
    photons: tuple[RecoilPhoton, ...] = (RecoilPhoton(397.0, "dipole"), RecoilPhoton(854.0, "isotropic"))
    reference_eta: float = AXIAL_LAMB_DICKE
    samples: int = 64
    enabled: bool = True


@dataclass(frozen=True)
class NoiseConfig:
    spin_dephasing_g: float = 1 / 1.6e-3
    spin_dephasing_k: float = 1 / 5e-3
    spin_markov_rate: float = 0.0
    osc_coherence_time: float = 15e-3
    heating_rate: float = 10.0
    mains: tuple[MainsHarmonic, ...] = ()
    freq_jitter_sd: float = 20.0  # Hz
    nbar_sd: float = 2.0
    rabi_sd: float = 0.0  # relative
    detuning_sd: float = 0.0  # Hz, spin transition
    recoil: RecoilConfig = field(default_factory=RecoilConfig)
    repump_time: float = 10e-6

    def __post_init__(self):
        rates = (self.spin_dephasing_g, self.spin_dephasing_k, self.spin_markov_rate, self.heating_rate,
                 self.freq_jitter_sd, self.nbar_sd, self.rabi_sd, self.detuning_sd, self.repump_time)
        if any(r < 0 for r in rates):
            raise ValueError("noise rates and widths must be >= 0")
        if self.osc_coherence_time <= 0:
            raise ValueError("oscillator coherence time must be > 0 (use inf to disable)")

    @classmethod
    def ideal(cls) -> "NoiseConfig":
        return cls(0.0, 0.0, 0.0, math.inf, 0.0, (), 0.0, 0.0, 0.0, 0.0,
                   RecoilConfig(enabled=False), 0.0)

    @property
    def osc_dephasing_rate(self) -> float:
        """gamma_d of the a^dag a dissipator: <m|rho|n> decays as exp(-gamma_d (m-n)^2 t / 2)."""
        return 2 / self.osc_coherence_time

    def spin_dephasing_rate(self, t: float) -> float:
        """Instantaneous decay rate of the spin coherence a time t after the last reset."""
        g, K = self.spin_dephasing_g, self.spin_dephasing_k
        if g == 0:
            return 2 * self.spin_markov_rate
        nm = 4 * g * g * t if K == 0 else 4 * g * g / K * (1 - math.exp(-K * t))
        return nm + 2 * self.spin_markov_rate


def spin_coherence(t, noise: NoiseConfig):
    """|<+Z|rho|-Z>| decay factor after t of free evolution under the dephasing terms.

    The non-Markovian term contributes log c = 4 (g^2/K) ((1 - e^{-Kt})/K - t).
    """
    t = np.asarray(t, float)
    g, K = noise.spin_dephasing_g, noise.spin_dephasing_k
    if K == 0:
        logc = -2 * g * g * t**2
    else:
        logc = 4 * g * g / K * ((1 - np.exp(-K * t)) / K - t)
    return np.exp(logc - 2 * noise.spin_markov_rate * t)


def axial_detuning(t, noise: NoiseConfig, offset: float = 0.0):
    """Axial frequency offset in Hz at absolute time t (mains harmonics plus a static offset)."""
    t = np.asarray(t, float)
    out = np.full_like(t, offset)
    for h in noise.mains:
        out = out + h.amplitude * np.sin(2 * math.pi * MAINS_HZ * h.harmonic * t + h.phase)
    return out


# --- per-trajectory draws ------------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryDraw:
    nbar0: float = 0.0
    radial_levels: tuple[int, ...] = ()
    rabi_scale: float = 1.0
    spin_detuning: float = 0.0  # Hz
    axial_offset: float = 0.0  # Hz


def trajectory_rng(seed: int, trajectory: int, stage: int) -> np.random.Generator:
    """Independent stream keyed by (seed, trajectory, stage), independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence([seed, trajectory, stage]))


def sample_radial_levels(radial: RadialModes, rng) -> tuple[int, ...]:
    return tuple(int(rng.geometric(1 / (nb + 1)) - 1) for nb in radial.nbars)


def sample_radial_rabi_scale(radial: RadialModes, rng) -> float:
    """Draw thermal radial Fock numbers and return prod_j exp(-eta_j^2/2) L_{n_j}(eta_j^2)."""
    levels = sample_radial_levels(radial, rng)
    return float(radial_factor(levels, radial.etas))


# --- master-equation pieces ----------------------------------------------------------


@dataclass
class SequenceClock:
    """Absolute time (for the mains phase) and time since the last spin reset."""

    t: float = 0.0
    since_reset: float = 0.0

    def advance(self, dt: float) -> None:
        self.t += dt
        self.since_reset += dt


@lru_cache(maxsize=32)
def _ladder(dim: int, eta: float, order: str) -> np.ndarray:
    n = np.arange(dim - 1)
    if order == "full" and eta > 0:
        el = math.exp(-eta * eta / 2) * eval_genlaguerre(n, 1, eta * eta) / np.sqrt(n + 1)
    elif order in ("leading", "full"):
        el = np.sqrt(n + 1.0)
    else:
        raise ValueError(f"unknown Lamb-Dicke order {order!r}")
    a = np.diag(el, 1)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=32)
def _motional_eig(dim: int, eta: float, order: str, phi: float):
    a = _ladder(dim, eta, order)
    x = 0.5j * np.exp(-1j * phi) * a
    lam, vec = np.linalg.eigh(x + x.conj().T)
    lam.setflags(write=False)
    vec.setflags(write=False)
    return lam, vec


def drive_unitary(drive: DriveConfig, dim: int, dt: float) -> np.ndarray:
    """exp(-i H dt) on spin (x) oscillator for the spin-dependent force."""
    lam, vec = _motional_eig(dim, float(drive.lamb_dicke), drive.order, float(drive.motional_phase))
    theta = drive.lamb_dicke * drive.rabi * dt
    sig = np.array([[0, np.exp(-1j * drive.spin_phase)], [np.exp(1j * drive.spin_phase), 0]])
    u = np.zeros((2 * dim, 2 * dim), complex)
    for s in (1, -1):
        proj = 0.5 * (np.eye(2) + s * sig)
        block = (vec * np.exp(-1j * theta * s * lam)) @ vec.conj().T
        u += np.kron(proj, block)
    return u


def max_noise_rate(noise: NoiseConfig, t_window: float, draw: TrajectoryDraw | None = None) -> float:
    """Fastest rate (1/s) the stepper must resolve over a window of length t_window after a reset."""
    draw = draw or TrajectoryDraw()
    mains = sum(abs(h.amplitude) for h in noise.mains)
    det = 2 * math.pi * max(abs(draw.axial_offset) + mains, abs(draw.spin_detuning))
    rates = [noise.spin_dephasing_rate(t_window), noise.heating_rate, det]
    if math.isfinite(noise.osc_coherence_time):
        rates.append(noise.osc_dephasing_rate)
    return max(rates)


def _free_step(m: np.ndarray, dim: int, dt: float, noise: NoiseConfig, clock: SequenceClock,
               draw: TrajectoryDraw) -> np.ndarray:
    """Detunings and dissipators over dt, elementwise or by level shifts in the Fock basis."""
    n = np.arange(dim)
    full_n = np.concatenate([n, n])
    spin = np.concatenate([np.ones(dim), -np.ones(dim)])
    t_mid = clock.t + dt / 2
    d_ax = 2 * math.pi * float(axial_detuning(t_mid, noise, draw.axial_offset))
    d_sp = 2 * math.pi * draw.spin_detuning
    energy = 0.5 * d_sp * spin + d_ax * full_n
    if d_ax or d_sp:
        ph = np.exp(-1j * energy * dt)
        m = ph[:, None] * m * ph.conj()[None, :]
    if math.isfinite(noise.osc_coherence_time):
        gd = noise.osc_dephasing_rate
        m = m * np.exp(-0.5 * gd * dt * (full_n[:, None] - full_n[None, :]) ** 2)
    c0 = spin_coherence(clock.since_reset, noise)
    c1 = spin_coherence(clock.since_reset + dt, noise)
    if c1 != c0:
        f = float(c1 / c0)
        m = m.copy()
        m[:dim, dim:] *= f
        m[dim:, :dim] *= f
    if noise.heating_rate > 0:
        m = _heating_euler(m, dim, noise.heating_rate * dt)
    return m


def _heating_euler(m: np.ndarray, dim: int, h: float) -> np.ndarray:
    """First-order step of h * (a^dag rho a - {a a^dag, rho}/2) on each spin block."""
    out = m.copy()
    sq = np.sqrt(np.arange(dim, dtype=float))
    for i in (0, 1):
        for j in (0, 1):
            b = m[i * dim:(i + 1) * dim, j * dim:(j + 1) * dim]
            nb = out[i * dim:(i + 1) * dim, j * dim:(j + 1) * dim]
            np1 = np.arange(1, dim + 1, dtype=float)
            nb -= 0.5 * h * (np1[:, None] + np1[None, :]) * b
            nb[1:, 1:] += h * np.outer(sq[1:], sq[1:]) * b[:-1, :-1]
    return out


def _check_step(dt: float, noise: NoiseConfig, window: float, draw: TrajectoryDraw) -> None:
    rate = max_noise_rate(noise, window, draw)
    if rate > 0 and dt > 1 / (STEPS_PER_RATE * rate) * (1 + 1e-12):
        raise StepTooCoarse(f"dt={dt:.3g} s exceeds 1/(50*{rate:.3g}/s)")


def _steps_for(duration: float, noise: NoiseConfig, window: float, draw: TrajectoryDraw,
               dt: float | None) -> tuple[int, float]:
    if duration <= 0:
        return 0, 0.0
    if dt is not None:
        _check_step(dt, noise, window, draw)
        k = max(1, int(math.ceil(duration / dt - 1e-9)))
        return k, duration / k
    rate = max_noise_rate(noise, window, draw)
    k = 1 if rate == 0 else max(1, int(math.ceil(duration * STEPS_PER_RATE * rate)))
    return k, duration / k


def evolve_pulse(state: osc.FockState, drive: DriveConfig, noise: NoiseConfig, rng=None,
                 clock: SequenceClock | None = None, draw: TrajectoryDraw | None = None,
                 dt: float | None = None) -> osc.FockState:
    """Advance the joint state through one drive pulse (Strang splitting).

    ``rng`` is accepted for interface symmetry; the pulse itself is
    deterministic given the trajectory draw.
    """
    if not state.with_spin:
        raise ValueError("evolve_pulse needs a joint spin-oscillator state")
    clock = SequenceClock() if clock is None else clock
    draw = draw or TrajectoryDraw()
    dim = state.dim
    drive = drive.scaled(draw.rabi_scale) if draw.rabi_scale != 1.0 else drive
    k, h = _steps_for(drive.duration, noise, clock.since_reset + drive.duration, draw, dt)
    m = state.matrix
    if k == 0:
        return state
    u = drive_unitary(drive, dim, h)
    ud = u.conj().T
    for _ in range(k):
        m = _free_step(m, dim, h / 2, noise, clock, draw)
        clock.advance(h / 2)
        m = u @ m @ ud
        m = _free_step(m, dim, h / 2, noise, clock, draw)
        clock.advance(h / 2)
    m = 0.5 * (m + m.conj().T)
    return osc.FockState(m, with_spin=True)


def idle(state: osc.FockState, duration: float, noise: NoiseConfig, clock: SequenceClock | None = None,
         draw: TrajectoryDraw | None = None, dt: float | None = None) -> osc.FockState:
    """Free evolution under detunings and dissipation only."""
    clock = SequenceClock() if clock is None else clock
    draw = draw or TrajectoryDraw()
    k, h = _steps_for(duration, noise, clock.since_reset + duration, draw, dt)
    m = state.matrix
    for _ in range(k):
        m = _free_step(m, state.dim, h, noise, clock, draw)
        clock.advance(h)
    return osc.FockState(m, with_spin=True)


# --- repump --------------------------------------------------------------------------


def _sample_projection(photon: RecoilPhoton, rng, size: int) -> np.ndarray:
    """cos(angle between photon direction and the trap axis), sampled from the emission pattern."""
    if photon.pattern == "beam":
        return np.full(size, math.cos(photon.beam_angle))
    if photon.pattern == "isotropic":
        return rng.uniform(-1, 1, size)
    if photon.pattern == "dipole":
        # rejection-sample directions with weight sin^2 of the angle to the dipole axis
        d = np.array([math.sin(photon.dipole_angle), 0.0, math.cos(photon.dipole_angle)])
        out = np.empty(0)
        while out.size < size:
            v = rng.normal(size=(2 * size, 3))
            v /= np.linalg.norm(v, axis=1)[:, None]
            w = 1 - (v @ d) ** 2
            keep = rng.uniform(size=2 * size) < w
            out = np.concatenate([out, v[keep, 2]])
        return out[:size]
    raise ValueError(f"unknown emission pattern {photon.pattern!r}")


def sample_recoil(recoil: RecoilConfig, rng, size: int | None = None) -> np.ndarray:
    """Total momentum kick along the trap axis (units of the p quadrature) per repump."""
    size = recoil.samples if size is None else size
    k = np.zeros(size)
    for ph in recoil.photons:
        k += ph.eta(recoil.reference_eta) * _sample_projection(ph, rng, size)
    return k


def mean_recoil_energy(recoil: RecoilConfig) -> float:
    """Expected energy gain (units of hbar*omega) from one reset of a |-Z> component: E[k^2]."""
    total = 0.0
    for ph in recoil.photons:
        e2 = ph.eta(recoil.reference_eta) ** 2
        if ph.pattern == "isotropic":
            total += e2 / 3
        elif ph.pattern == "beam":
            total += e2 * math.cos(ph.beam_angle) ** 2
        else:
            # <cos^2> for a sin^2 pattern whose axis makes angle a with the trap axis
            total += e2 * (2 / 5 - math.cos(ph.dipole_angle) ** 2 / 5)
    return total


def repump(state: osc.FockState, recoil: RecoilConfig, rng=None) -> osc.FockState:
    """Return the |-Z> component to |+Z>, kicking its motion by sampled photon recoils.

    The |+Z> component is left unchanged; spin coherences are destroyed.
    """
    if not state.with_spin:
        raise ValueError("repump needs a joint spin-oscillator state")
    dim = state.dim
    up, down = state.block(0, 0), state.block(1, 1)
    if recoil.enabled and recoil.photons and np.abs(down).max() > 0:
        rng = np.random.default_rng(rng)
        ks = sample_recoil(recoil, rng)
        lam, vec = osc.quadrature_eig(dim, math.pi / 2)
        dq = vec.conj().T @ down @ vec
        diff = lam[:, None] - lam[None, :]
        kernel = np.mean(np.exp(2j * np.multiply.outer(ks, diff)), axis=0)
        down = vec @ (dq * kernel) @ vec.conj().T
    m = np.zeros_like(state.matrix)
    m[:dim, :dim] = up + down
    return osc.FockState(m, with_spin=True)


# --- experiment ----------------------------------------------------------------------


@dataclass(frozen=True)
class SequenceSettings:
    rabi: float = 2 * math.pi * 100e3
    lamb_dicke: float = AXIAL_LAMB_DICKE
    order: str = "leading"
    dt: float | None = None


def _contraction(state, params, settings, noise, clock, draw, rng):
    meas = DriveConfig.for_displacement(params.epsilon * np.exp(1j * params.theta_m), "Y",
                                        settings.rabi, settings.lamb_dicke, settings.order)
    corr = DriveConfig.for_displacement(params.alpha * np.exp(1j * params.theta_c), "X",
                                        settings.rabi, settings.lamb_dicke, settings.order)
    state = evolve_pulse(state, meas, noise, clock=clock, draw=draw, dt=settings.dt)
    state = evolve_pulse(state, corr, noise, clock=clock, draw=draw, dt=settings.dt)
    state = repump(state, noise.recoil, rng)
    if noise.repump_time > 0:
        state = idle(state, noise.repump_time, noise, clock, draw, settings.dt)
    clock.since_reset = 0.0
    return state


@dataclass
class NoisyRow:
    round: int
    nbar_mean: float
    ci_low: float
    ci_high: float


@dataclass
class NoisyResult:
    rows: list[NoisyRow]
    per_trajectory: np.ndarray  # (trajectories, rounds + 1)
    draws: list[TrajectoryDraw]

    def series(self) -> list[float]:
        return [r.nbar_mean for r in self.rows]


def draw_trajectory(initial: ThermalSpec, noise: NoiseConfig, radial: RadialModes | None,
                    seed: int, index: int) -> TrajectoryDraw:
    rng = trajectory_rng(seed, index, 0)
    nb0 = max(rng.normal(initial.nbar, noise.nbar_sd), 0.0) if noise.nbar_sd > 0 else initial.nbar
    levels = ()
    if radial is not None:
        levels = sample_radial_levels(RadialModes.equal_temperature(nb0, frequencies=radial.frequencies,
                                                                     etas=radial.etas), rng)
    rfac = float(radial_factor(levels, radial.etas)) if radial is not None else 1.0
    rabi = (1 + rng.normal(0, noise.rabi_sd)) if noise.rabi_sd > 0 else 1.0
    spin_det = rng.normal(0, noise.detuning_sd) if noise.detuning_sd > 0 else 0.0
    ax = rng.normal(0, noise.freq_jitter_sd) if noise.freq_jitter_sd > 0 else 0.0
    return TrajectoryDraw(float(nb0), levels, float(rabi * rfac), float(spin_det), float(ax))


def _schedule_params(schedule, k: int, nb_assumed: float, epsilon_scale: float) -> ProtocolParams:
    if isinstance(schedule, str):
        if schedule != "auto":
            raise ValueError(f"unknown schedule {schedule!r}")
        p = schedule_params(ThermalSpec(nb_assumed).s, epsilon_scale)
        return ProtocolParams.symmetric(p.epsilon, p.alpha)
    return _as_protocol(schedule[k])


def run_trajectory(initial: ThermalSpec, rounds: int, noise: NoiseConfig, settings: SequenceSettings,
                   radial: RadialModes | None, seed: int, index: int, schedule="auto",
                   epsilon_scale: float = 1.0, dim: int | None = None,
                   estimator: str = "thermal-fraction") -> tuple[list[float], TrajectoryDraw]:
    draw = draw_trajectory(initial, noise, radial, seed, index)
    nb_top = max(draw.nbar0, initial.nbar)
    dim = osc.default_dim(nb_top, FOCK_DIM_FACTOR) if dim is None else dim
    state = osc.with_spin_up(osc.make_thermal(ThermalSpec(draw.nbar0), dim))
    clock = SequenceClock()
    contraction = classical_contraction(epsilon_scale)
    nb_assumed = initial.nbar
    out = [draw.nbar0]
    for k in range(rounds):
        params = _schedule_params(schedule, k, nb_assumed, epsilon_scale)
        for stage, half in enumerate(params.halves()):
            rng = trajectory_rng(seed, index, 1 + 2 * k + stage)
            state = _contraction(state, half, settings, noise, clock, draw, rng)
        nb_assumed *= contraction
        osc_state = state.oscillator()
        if estimator == "mean":
            out.append(osc.mean_occupation(osc_state))
        elif estimator == "thermal-fraction":
            out.append(estimate_thermal_fraction(osc_state, max(nb_assumed, 0.05)))
        else:
            raise ValueError(f"unknown estimator {estimator!r}")
    return out, draw


def _bootstrap_ci(values: np.ndarray, seed: int, index: int) -> tuple[float, float]:
    if len(values) < 2 or np.ptp(values) == 0:
        v = float(np.mean(values))
        return v, v
    res = bootstrap((values,), np.mean, n_resamples=999, confidence_level=0.95, method="percentile",
                    random_state=trajectory_rng(seed, 2**31 - 1, index))
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def run_noisy_experiment(initial: ThermalSpec, rounds: int, noise: NoiseConfig | None = None,
                         settings: SequenceSettings | None = None, radial: RadialModes | None = None,
                         n_trajectories: int = 1, seed: int = 0, schedule: str | Sequence = "auto",
                         epsilon_scale: float = 1.0, dim: int | None = None,
                         estimator: str = "thermal-fraction", threads: int = 1) -> NoisyResult:
    """Average occupation per round over trajectories, with 95% bootstrap intervals."""
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be >= 1")
    noise = NoiseConfig() if noise is None else noise
    settings = SequenceSettings() if settings is None else settings

    def one(i):
        return run_trajectory(initial, rounds, noise, settings, radial, seed, i, schedule,
                              epsilon_scale, dim, estimator)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, range(n_trajectories)))
    else:
        results = [one(i) for i in range(n_trajectories)]
    per = np.array([r[0] for r in results])
    rows = []
    for k in range(rounds + 1):
        lo, hi = _bootstrap_ci(per[:, k], seed, k)
        rows.append(NoisyRow(k, float(per[:, k].mean()), lo, hi))
    return NoisyResult(rows, per, [r[1] for r in results])

"""Linearised Doppler cooling and its correspondence with modular-variable cooling.

Near the Doppler limit the excitation probability is linear in momentum,
P(-Z|p) = P_e (1 + 16 Delta eta omega p / (Gamma^2 + 4 Delta^2)), and an
absorption kicks the momentum by eta. Matching that slope to the modular
probability P_e (1 + 4 eps p) with P_e = 1/2 fixes an equivalent pitch eps,
and with alpha = eta the classical modular energy map has the same steady state.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import constants
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from .params import ThermalSpec
from .semiclassical import classical_energy, quadrature_second_moment

AVERAGE_EXCITATION = (math.e - 1) / math.e


@dataclass(frozen=True)
class DopplerConfig:
    """Angular frequencies in rad/s; ``detuning`` is laser minus atomic resonance."""

    gamma: float
    detuning: float
    omega: float
    eta: float = 0.05
    pe: float = AVERAGE_EXCITATION

    def __post_init__(self):
        if self.gamma <= 0 or self.omega <= 0:
            raise ValueError("gamma and omega must be > 0")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if not 0 < self.pe <= 1:
            raise ValueError("pe must lie in (0, 1]")

    @property
    def lorentz(self) -> float:
        return self.gamma**2 + 4 * self.detuning**2

    @property
    def slope(self) -> float:
        """d P(-Z|p)/dp divided by P_e."""
        return 16 * self.detuning * self.eta * self.omega / self.lorentz

    def with_detuning(self, detuning: float) -> "DopplerConfig":
        return DopplerConfig(self.gamma, detuning, self.omega, self.eta, self.pe)


@dataclass(frozen=True)
class Excitation:
    prob: float
    clamped: bool
    linear_ok: bool


def linearized_excitation_prob(p: float, cfg: DopplerConfig) -> Excitation:
    """P(-Z|p) ~ P_e (1 + slope p), clamped to [0, 1] with diagnostic flags."""
    x = cfg.slope * p
    ok = abs(x) < 1
    if not ok:
        warnings.warn(f"linearisation outside its range (|slope*p| = {abs(x):.3g})", RuntimeWarning)
    raw = cfg.pe * (1 + x)
    prob = min(max(raw, 0.0), 1.0)
    return Excitation(prob, prob != raw, ok)


def normalisation(cfg: DopplerConfig) -> float:
    """1/N = P_e (Gamma^2 + 4 Delta^2)."""
    return cfg.pe * cfg.lorentz


def doppler_energy_update(spec: ThermalSpec, cfg: DopplerConfig) -> float:
    """Mean energy (hbar*omega) after one absorption window starting from a thermal state."""
    s2 = spec.s**2
    return 2 * (0.5 * cfg.pe * cfg.eta**2
                + s2 * (1 + cfg.pe * cfg.eta**2 * 16 * cfg.omega * cfg.detuning / cfg.lorentz))


def steady_state_energy(cfg: DopplerConfig) -> float:
    """nbar + 1/2 = 2 s^2 = -(Gamma^2 + 4 Delta^2)/(16 omega Delta); needs Delta < 0."""
    if cfg.detuning >= 0:
        raise ValueError("a steady state requires red detuning (Delta < 0)")
    return -cfg.lorentz / (16 * cfg.omega * cfg.detuning)


def validity(spec: ThermalSpec, cfg: DopplerConfig, width: float = 3.0) -> float:
    """4 eta omega p_max / Gamma at p_max = width*s; the linear model wants this << 1."""
    return 4 * cfg.eta * cfg.omega * width * spec.s / cfg.gamma


@dataclass(frozen=True)
class DopplerLimit:
    detuning: float
    nbar_min: float
    detuning_numeric: float

    @property
    def energy_min(self) -> float:
        return self.nbar_min + 0.5


def doppler_limit(cfg: DopplerConfig) -> DopplerLimit:
    """Optimal detuning -Gamma/2 and nbar_min = Gamma/(4 omega) - 1/2, with a numerical cross-check."""
    g, w = cfg.gamma, cfg.omega
    res = minimize_scalar(lambda d: steady_state_energy(cfg.with_detuning(d * g)),
                          bounds=(-20.0, -1e-3), method="bounded", options={"xatol": 1e-10})
    return DopplerLimit(-g / 2, g / (4 * w) - 0.5, float(res.x) * g)


def epsilon_equivalent(cfg: DopplerConfig) -> float:
    """eps = -4 eta omega Delta / (Gamma^2 + 4 Delta^2)."""
    return -4 * cfg.eta * cfg.omega * cfg.detuning / cfg.lorentz


def modular_steady_state(cfg: DopplerConfig) -> float:
    """nbar + 1/2 at which the classical modular map with (eps_equivalent, alpha = eta) is stationary."""
    eps, alpha = epsilon_equivalent(cfg), cfg.eta
    if eps <= 0:
        raise ValueError("no modular steady state without cooling slope")

    def gap(s2):
        return 2 * quadrature_second_moment(eps, alpha, math.sqrt(s2)) - 2 * s2

    # gap > 0 at s^2 = 0 and falls to its minimum at s^2 = 1/(8 eps^2); the cooling root lies between
    top = 1 / (8 * eps * eps)
    if gap(top) >= 0:
        raise ValueError("recoil too large for a modular steady state")
    s2 = brentq(gap, 1e-12, top, xtol=1e-14, rtol=1e-13)
    return 2 * s2


@dataclass(frozen=True)
class AbsorptionStats:
    tau: float
    pe_avg: float
    mean_wait: float


def absorption_time_stats(tau: float) -> AbsorptionStats:
    """Exponential waiting-time density f(t) = exp(-t/tau)/tau: mean wait and P_e = int_0^tau f."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    # integrate in u = t / tau so the quadrature sees an O(1) integrand
    mean_u, _ = quad(lambda u: u * math.exp(-u), 0, math.inf)
    pe, _ = quad(lambda u: math.exp(-u), 0, 1)
    return AbsorptionStats(tau, pe, tau * mean_u)


def cool_doppler(initial: ThermalSpec, cfg: DopplerConfig, cycles: int) -> np.ndarray:
    """nbar after each absorption window, iterating the linearised energy map."""
    out = [initial.nbar]
    spec = initial
    for _ in range(cycles):
        e = doppler_energy_update(spec, cfg)
        spec = ThermalSpec(max(e - 0.5, 0.0))
        out.append(spec.nbar)
    return np.array(out)


def doppler_temperature(gamma: float) -> float:
    """T_min = hbar Gamma / (4 k_B) in kelvin."""
    return constants.hbar * gamma / (4 * constants.k)


def thermal_nbar(temperature: float, omega: float) -> float:
    """Bose-Einstein occupation 1/(exp(hbar omega / k_B T) - 1)."""
    return 1 / math.expm1(constants.hbar * omega / (constants.k * temperature))


def comparison_rows(cfg: DopplerConfig) -> list[dict]:
    """One row per method: steady-state nbar and the energy change per cycle at that point."""
    lim = doppler_limit(cfg)
    at = cfg.with_detuning(lim.detuning)
    e_d = steady_state_energy(at)
    e_m = modular_steady_state(at)
    eps = epsilon_equivalent(at)
    start = ThermalSpec(2 * e_d)
    rows = [
        {"method": "doppler", "detuning": at.detuning, "nbar_steady": e_d - 0.5,
         "epsilon": float("nan"), "delta_energy": doppler_energy_update(start, at) - start.energy},
        {"method": "modular", "detuning": at.detuning, "nbar_steady": e_m - 0.5,
         "epsilon": eps, "delta_energy": classical_energy(eps, at.eta, start) - start.energy},
    ]
    return rows

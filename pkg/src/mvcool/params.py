"""Small value types shared by the simulators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

POSITION = math.pi / 2
MOMENTUM = 0.0


@dataclass(frozen=True)
class ThermalSpec:
    """Thermal oscillator state described by its mean occupation."""

    nbar: float

    def __post_init__(self):
        if not self.nbar >= 0:
            raise ValueError(f"nbar must be >= 0, got {self.nbar}")

    @property
    def s(self) -> float:
        """Gaussian width of either quadrature, sqrt((nbar + 1/2) / 2)."""
        return math.sqrt((self.nbar + 0.5) / 2)

    @property
    def energy(self) -> float:
        """Mean energy in units of hbar*omega."""
        return self.nbar + 0.5

    @classmethod
    def from_s(cls, s: float) -> "ThermalSpec":
        return cls(max(2 * s * s - 0.5, 0.0))


@dataclass(frozen=True)
class RoundParams:
    """Settings of one contraction (measurement + correction displacement).

    ``theta_m`` selects the quadrature being measured: pi/2 contracts position,
    0 contracts momentum. The correction angle defaults to ``theta_m - pi/2``.
    """

    epsilon: float
    alpha: float
    theta_m: float = POSITION
    theta_c: float | None = None

    def __post_init__(self):
        if self.epsilon < 0 or self.alpha < 0:
            raise ValueError("epsilon and alpha must be non-negative")
        if self.theta_c is None:
            object.__setattr__(self, "theta_c", self.theta_m - math.pi / 2)

    def at_angle(self, theta_m: float) -> "RoundParams":
        return RoundParams(self.epsilon, self.alpha, theta_m)


@dataclass(frozen=True)
class ProtocolParams:
    """A full cooling round: a position contraction followed by a momentum contraction."""

    position: RoundParams
    momentum: RoundParams = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.momentum is None:
            object.__setattr__(self, "momentum", self.position.at_angle(MOMENTUM))

    @classmethod
    def symmetric(cls, epsilon: float, alpha: float) -> "ProtocolParams":
        return cls(RoundParams(epsilon, alpha, POSITION), RoundParams(epsilon, alpha, MOMENTUM))

    def halves(self) -> tuple[RoundParams, RoundParams]:
        return self.position, self.momentum


AXIAL_FREQUENCY = 2 * math.pi * 1.7e6
AXIAL_LAMB_DICKE = 0.05


@dataclass(frozen=True)
class RadialModes:
    """Spectator radial modes that rescale the Rabi frequency of axial drives.

    Angular frequencies in rad/s; occupations are thermal means.
    """

    frequencies: tuple[float, ...] = (2 * math.pi * 2.4e6, 2 * math.pi * 3.2e6)
    etas: tuple[float, ...] = (0.02, 0.03)
    nbars: tuple[float, ...] = (0.0, 0.0)

    def __post_init__(self):
        if not len(self.frequencies) == len(self.etas) == len(self.nbars):
            raise ValueError("radial mode fields must have equal length")
        if any(e < 0 for e in self.etas) or any(n < 0 for n in self.nbars):
            raise ValueError("radial eta and nbar must be >= 0")

    @classmethod
    def equal_temperature(cls, axial_nbar: float, axial_frequency: float = AXIAL_FREQUENCY,
                          **kw) -> "RadialModes":
        """Radial occupations sharing the axial mode's temperature (high-temperature limit)."""
        base = cls(**kw)
        nb = tuple(max((axial_nbar + 0.5) * axial_frequency / w - 0.5, 0.0) for w in base.frequencies)
        return cls(base.frequencies, base.etas, nb)

    def with_nbars(self, nbars) -> "RadialModes":
        return RadialModes(self.frequencies, self.etas, tuple(float(n) for n in nbars))

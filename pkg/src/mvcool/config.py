"""Experiment configuration schema (YAML in, validated models out)."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import noise as nz
from .errors import ConfigError
from .params import AXIAL_FREQUENCY, AXIAL_LAMB_DICKE, ProtocolParams, RadialModes, RoundParams

Kind = Literal["optimize", "cool-classical", "cool-quantum", "cool-noisy", "readout-fit", "bsb-fit",
               "doppler-compare"]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class InitialCfg(Strict):
    nbar: float = Field(34.0, ge=0)


class TrapCfg(Strict):
    omega: float = Field(AXIAL_FREQUENCY, gt=0, description="axial angular frequency, rad/s")
    eta: float = Field(AXIAL_LAMB_DICKE, ge=0)


class RoundCfg(Strict):
    epsilon: float = Field(ge=0)
    alpha: float = Field(ge=0)
    momentum_epsilon: Optional[float] = Field(None, ge=0)
    momentum_alpha: Optional[float] = Field(None, ge=0)

    def to_params(self) -> ProtocolParams:
        me = self.epsilon if self.momentum_epsilon is None else self.momentum_epsilon
        ma = self.alpha if self.momentum_alpha is None else self.momentum_alpha
        return ProtocolParams(RoundParams(self.epsilon, self.alpha), RoundParams(me, ma, 0.0))


class MainsCfg(Strict):
    harmonic: int = Field(ge=1)
    amplitude: float = Field(description="Hz")
    phase: float = 0.0


class PhotonCfg(Strict):
    wavelength_nm: float = Field(gt=0)
    pattern: Literal["dipole", "isotropic", "beam"] = "isotropic"
    dipole_angle: float = math.pi / 2
    beam_angle: float = 0.0


class RecoilCfg(Strict):
    enabled: bool = True
    photons: list[PhotonCfg] = Field(default_factory=lambda: [
        PhotonCfg(wavelength_nm=397.0, pattern="dipole"), PhotonCfg(wavelength_nm=854.0)])
    reference_eta: float = Field(AXIAL_LAMB_DICKE, ge=0)
    samples: int = Field(64, ge=1)


class NoiseCfg(Strict):
    enabled: bool = True
    spin_dephasing_g: float = Field(1 / 1.6e-3, ge=0)
    spin_dephasing_k: float = Field(1 / 5e-3, ge=0)
    spin_markov_rate: float = Field(0.0, ge=0)
    osc_coherence_time: float = Field(15e-3, gt=0)
    heating_rate: float = Field(10.0, ge=0)
    mains: list[MainsCfg] = Field(default_factory=list)
    freq_jitter_sd: float = Field(20.0, ge=0)
    nbar_sd: float = Field(2.0, ge=0)
    rabi_sd: float = Field(0.0, ge=0)
    detuning_sd: float = Field(0.0, ge=0)
    repump_time: float = Field(10e-6, ge=0)
    recoil: RecoilCfg = Field(default_factory=RecoilCfg)

    def build(self) -> nz.NoiseConfig:
        if not self.enabled:
            return nz.NoiseConfig.ideal()
        r = self.recoil
        recoil = nz.RecoilConfig(tuple(nz.RecoilPhoton(**p.model_dump()) for p in r.photons),
                                 r.reference_eta, r.samples, r.enabled)
        d = self.model_dump(exclude={"enabled", "mains", "recoil"})
        return nz.NoiseConfig(**d, mains=tuple(nz.MainsHarmonic(**m.model_dump()) for m in self.mains),
                              recoil=recoil)


class RadialCfg(Strict):
    enabled: bool = True
    frequencies: list[float] = Field(default_factory=lambda: [2 * math.pi * 2.4e6, 2 * math.pi * 3.2e6])
    etas: list[float] = Field(default_factory=lambda: [0.02, 0.03])

    def build(self) -> RadialModes | None:
        if not self.enabled:
            return None
        return RadialModes(tuple(self.frequencies), tuple(self.etas), tuple(0.0 for _ in self.etas))


class SequenceCfg(Strict):
    rabi: float = Field(2 * math.pi * 100e3, gt=0, description="carrier Rabi frequency, rad/s")
    order: Literal["leading", "full"] = "leading"
    dt: Optional[float] = Field(None, gt=0)
    trajectories: int = Field(4, ge=1)
    estimator: Literal["thermal-fraction", "mean"] = "thermal-fraction"


class ReadoutCfg(Strict):
    data: Optional[str] = None
    nbar_true: float = Field(51.0, ge=0, description="occupation of the synthetic curve when no data file is given")
    synthetic_order: Literal["leading", "full"] = "full"
    model: Literal["gaussian", "full"] = "full"
    shots: int = Field(400, ge=1)
    points: int = Field(50, ge=4)


class BsbCfg(Strict):
    data: Optional[str] = None
    rabi_0: float = Field(2 * math.pi * 20e3, gt=0, description="ground-state sideband Rabi frequency, rad/s")
    max_level: int = Field(3, ge=0)
    bootstrap: int = Field(100, ge=0)
    low_population: float = Field(0.974, ge=0, le=1)
    low_nbar: float = Field(0.2, ge=0)
    tail_center: float = Field(40.0, gt=0)
    tail_width: float = Field(12.0, gt=0)
    shots: int = Field(200, ge=1)
    points: int = Field(120, ge=8)
    t_max: float = Field(4e-4, gt=0, description="s")
    gamma_exp: float = Field(300.0, ge=0)


class DopplerCfg(Strict):
    gamma_over_omega: float = Field(100.0, gt=0)
    eta: float = Field(AXIAL_LAMB_DICKE, ge=0)
    pe: float = Field((math.e - 1) / math.e, gt=0, le=1)


class OutputCfg(Strict):
    dir: str = "out"


class ExperimentConfig(Strict):
    kind: Kind
    seed: int = 0
    initial: InitialCfg = Field(default_factory=InitialCfg)
    rounds: int = Field(3, ge=0)
    schedule: Union[Literal["auto", "optimize"], list[RoundCfg]] = "auto"
    epsilon_scale: float = Field(1.0, gt=0)
    mode: Literal["analytic", "fock"] = "analytic"
    dim: Optional[int] = Field(None, ge=8)
    trap: TrapCfg = Field(default_factory=TrapCfg)
    noise: NoiseCfg = Field(default_factory=NoiseCfg)
    radial: RadialCfg = Field(default_factory=RadialCfg)
    sequence: SequenceCfg = Field(default_factory=SequenceCfg)
    readout: ReadoutCfg = Field(default_factory=ReadoutCfg)
    bsb: BsbCfg = Field(default_factory=BsbCfg)
    doppler: DopplerCfg = Field(default_factory=DopplerCfg)
    output: OutputCfg = Field(default_factory=OutputCfg)

    @field_validator("schedule")
    @classmethod
    def _schedule_nonempty(cls, v):
        if isinstance(v, list) and not v:
            raise ValueError("explicit schedule must list at least one round")
        return v

    def protocol_schedule(self):
        if isinstance(self.schedule, str):
            return self.schedule
        if len(self.schedule) < self.rounds:
            raise ConfigError(f"schedule lists {len(self.schedule)} rounds but rounds={self.rounds}")
        return [r.to_params() for r in self.schedule]

    def resolved_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"{loc}: {first['msg']}") from exc


def load_config(path) -> ExperimentConfig:
    """Read and validate a YAML config. OSError propagates for missing/unreadable files."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML parse error: {exc}".replace("\n", " ")) from exc
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")
    return parse_config(data)

"""Quantum description of modular-variable cooling rounds.

A contraction measures the modular quadrature with a spin-conditional
displacement of size epsilon, corrects with a perpendicular displacement of
size alpha, and resets the spin. Averaged over the spin outcome its action on
the oscillator is the Kraus pair

    K_+/- = D(+/- alpha e^{i theta_c}) cos(2 eps X_theta +/- pi/4),

with X_theta = sin(theta) q - cos(theta) p (theta = pi/2 contracts position,
theta = 0 momentum). A full round applies the position contraction followed
by the momentum contraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from . import oscillator as osc
from .errors import NoImprovement, TruncationTooSmall
from .optim import golden_section
from .params import MOMENTUM, POSITION, ProtocolParams, RoundParams, ThermalSpec
from .semiclassical import classical_contraction, classical_energy, schedule_params

# rounds grow non-Gaussian tails, so propagated states need more headroom than thermal ones
FOCK_DIM_FACTOR = 20.0

_QUADRATURES = {"position": POSITION, "q": POSITION, "momentum": MOMENTUM, "p": MOMENTUM}


def _angle(quadrature) -> float:
    if isinstance(quadrature, str):
        try:
            return _QUADRATURES[quadrature]
        except KeyError:
            raise ValueError(f"unknown quadrature {quadrature!r}") from None
    return float(quadrature)


@dataclass(frozen=True, eq=False)
class KrausPair:
    params: RoundParams
    plus: np.ndarray
    minus: np.ndarray

    @property
    def operators(self) -> tuple[np.ndarray, np.ndarray]:
        return self.plus, self.minus

    @property
    def dim(self) -> int:
        return self.plus.shape[0]

    def completeness_error(self, block: int | None = None) -> float:
        """max |K+^dag K+ + K-^dag K- - I| on the lowest ``block`` levels (default N/2)."""
        b = self.dim // 2 if block is None else block
        s = self.plus.conj().T @ self.plus + self.minus.conj().T @ self.minus
        return float(np.max(np.abs(s[:b, :b] - np.eye(b))))


def _check_truncation(params: RoundParams, dim: int) -> None:
    for amp in (params.alpha, params.epsilon):
        if amp**2 > dim / 8:
            raise TruncationTooSmall(f"amplitude {amp:g} too large for dim={dim}")


def kraus_for(params: RoundParams, dim: int) -> KrausPair:
    _check_truncation(params, dim)
    eps, th = params.epsilon, params.theta_m
    shift = osc.displacement_matrix(params.alpha * np.exp(1j * params.theta_c), dim)
    ops = []
    for sign, d in ((1, shift), (-1, shift.conj().T)):
        c = osc.function_of_quadrature(dim, th, lambda lam: np.cos(2 * eps * lam + sign * math.pi / 4))
        ops.append(d @ c)
    return KrausPair(params, ops[0], ops[1])


def build_kraus(quadrature, epsilon: float, alpha: float, dim: int,
                theta_c: float | None = None) -> KrausPair:
    """Kraus pair for one contraction of ``quadrature`` ('position', 'momentum' or an angle)."""
    return kraus_for(RoundParams(epsilon, alpha, _angle(quadrature), theta_c), dim)


def apply_kraus(state: osc.FockState, pair: KrausPair) -> osc.FockState:
    rho = state.matrix
    out = sum(k @ rho @ k.conj().T for k in pair.operators)
    return osc.FockState(out)


def outcome_probabilities(state: osc.FockState, pair: KrausPair) -> tuple[float, float]:
    """(P(+X), P(-X)) from the Kraus decomposition."""
    rho = state.oscillator().matrix
    return tuple(float(np.real(np.trace(k @ rho @ k.conj().T))) for k in pair.operators)


@dataclass(frozen=True, eq=False)
class MeasurementObservable:
    """O = sin(4 eps X_theta); spin outcome probabilities are (1 -/+ <O>)/2."""

    epsilon: float
    theta_m: float
    matrix: np.ndarray

    def probabilities(self, state: osc.FockState) -> tuple[float, float]:
        o = float(np.real(np.trace(self.matrix @ state.oscillator().matrix)))
        return 0.5 * (1 - o), 0.5 * (1 + o)


def measurement_observable(epsilon: float, dim: int, quadrature=POSITION) -> MeasurementObservable:
    th = _angle(quadrature)
    m = osc.function_of_quadrature(dim, th, lambda lam: np.sin(4 * epsilon * lam))
    return MeasurementObservable(epsilon, th, m)


def _as_protocol(params) -> ProtocolParams:
    if isinstance(params, ProtocolParams):
        return params
    if isinstance(params, RoundParams):
        return ProtocolParams.symmetric(params.epsilon, params.alpha)
    raise TypeError(f"expected ProtocolParams or RoundParams, got {type(params).__name__}")


def contract(state: osc.FockState, params: RoundParams) -> osc.FockState:
    """One contraction (half round)."""
    return apply_kraus(state, kraus_for(params, state.dim))


def apply_round(state: osc.FockState, params, tail_tol: float | None = osc.TAIL_TOL) -> osc.FockState:
    """Position contraction followed by momentum contraction."""
    if state.with_spin:
        raise ValueError("apply_round acts on oscillator-only states")
    p = _as_protocol(params)
    out = contract(contract(state, p.position), p.momentum)
    if tail_tol is not None and out.tail_mass() > tail_tol:
        raise TruncationTooSmall(
            f"post-round tail mass {out.tail_mass():.3g} exceeds {tail_tol:g} at dim={state.dim}"
        )
    return out


def rotate(state: osc.FockState, phi: float) -> osc.FockState:
    """Rotate the phase-space distribution counter-clockwise by ``phi`` (<a> -> e^{i phi} <a>)."""
    ph = np.exp(1j * phi * np.arange(state.dim))
    rho = state.oscillator().matrix
    return osc.FockState(ph[:, None] * rho * ph.conj()[None, :])


# --- displacement-sum calculus --------------------------------------------------


@dataclass(frozen=True)
class DisplacementTerm:
    """coeff * D(left) rho0 D(right)^dag."""

    coeff: complex
    left: complex
    right: complex


@dataclass(frozen=True, eq=False)
class DisplacementSum:
    terms: tuple[DisplacementTerm, ...]

    def __len__(self) -> int:
        return len(self.terms)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = np.array([t.coeff for t in self.terms], complex)
        l = np.array([t.left for t in self.terms], complex)
        r = np.array([t.right for t in self.terms], complex)
        return c, l, r

    def __add__(self, other: "DisplacementSum") -> "DisplacementSum":
        return DisplacementSum(self.terms + other.terms)

    def apply(self, state: osc.FockState) -> osc.FockState:
        """Matrix realisation of sum coeff D(l) rho D(r)^dag (for cross-checks)."""
        N = state.dim
        out = np.zeros((N, N), complex)
        for t in self.terms:
            dl = osc.displacement_matrix(t.left, N)
            dr = osc.displacement_matrix(t.right, N)
            out += t.coeff * dl @ state.matrix @ dr.conj().T
        return osc.FockState(out)


def _mul(a, b):
    """Product of operators written as lists of (coeff, gamma) meaning coeff * D(gamma)."""
    return [(ca * cb * osc.compose_phase(ga, gb), ga + gb) for ca, ga in a for cb, gb in b]


def _kraus_terms(params: RoundParams, sign: int):
    shift = sign * params.alpha * np.exp(1j * params.theta_c)
    g = params.epsilon * np.exp(1j * params.theta_m)
    # cos(2 eps X +/- pi/4) = (e^{+/- i pi/4} D(g) + e^{-/+ i pi/4} D(-g)) / 2
    cosine = [(0.5 * np.exp(sign * 1j * math.pi / 4), g), (0.5 * np.exp(-sign * 1j * math.pi / 4), -g)]
    return _mul([(1.0 + 0j, shift)], cosine)


def expand_round_to_displacement_sum(params, outcome: tuple[int, int] | None = None) -> DisplacementSum:
    """Expand a round into displacement terms acting on the input state.

    Each spin-outcome branch (mu, nu) contributes 16 terms of weight 1/16 times
    a phase. With ``outcome=None`` the four branches are summed (64 terms).
    """
    p = _as_protocol(params)
    outcomes = [outcome] if outcome is not None else list(product((1, -1), repeat=2))
    terms = []
    for mu, nu in outcomes:
        left = _mul(_kraus_terms(p.momentum, nu), _kraus_terms(p.position, mu))
        for (ci, gi), (cj, gj) in product(left, left):
            terms.append(DisplacementTerm(complex(ci * np.conj(cj)), complex(gi), complex(gj)))
    return DisplacementSum(tuple(terms))


def char_func(dsum: DisplacementSum, beta, spec: ThermalSpec):
    """Normal-ordered characteristic function of the displaced thermal state."""
    c, l, r = dsum.arrays()
    b = np.asarray(beta, dtype=complex)
    bb = b[..., None]
    u = bb - r
    phase = (-r * np.conj(bb)).imag + (u * np.conj(l)).imag
    ups = u + l
    vals = c * np.exp(1j * phase - np.abs(ups) ** 2 * (spec.nbar + 0.5))
    return vals.sum(axis=-1) * np.exp(np.abs(b) ** 2 / 2)


def mean_occupation_from_char(dsum: DisplacementSum, spec: ThermalSpec) -> float:
    """<n> = -d^2 chi / d beta d beta^* at beta = 0, differentiated term by term."""
    c, l, r = dsum.arrays()
    A = spec.nbar + 0.5
    d = l - r
    w = l + r
    g0 = -1j * (r * np.conj(l)).imag - A * np.abs(d) ** 2
    gx = -2 * A * d.real - 1j * w.imag
    gy = -2 * A * d.imag + 1j * w.real
    lap = c * np.exp(g0) * (-4 * spec.nbar + gx**2 + gy**2)
    return float(np.real(-0.25 * lap.sum()))


# --- closed forms and optimisation ----------------------------------------------


def quantum_energy(epsilon: float, alpha: float, spec: ThermalSpec) -> float:
    """Exact mean energy (units of hbar*omega) after one round on a thermal state."""
    s = spec.s
    damp = math.exp(-8 * epsilon**2 * s * s)
    x = 4 * epsilon**2
    corr = epsilon**2 - alpha * epsilon * damp * (4 * s * s * (math.cos(x) - 1) + math.sin(x))
    return classical_energy(epsilon, alpha, spec) + 2 * corr


def optimal_alpha_given_epsilon(epsilon: float, spec: ThermalSpec) -> float:
    s = spec.s
    x = 4 * epsilon**2
    return 0.5 * epsilon * math.exp(-8 * epsilon**2 * s * s) * (4 * s * s * (1 + math.cos(x)) + math.sin(x))


@dataclass(frozen=True)
class EpsilonOptimum:
    epsilon: float
    alpha: float
    energy: float
    initial_energy: float

    @property
    def ratio(self) -> float:
        return self.energy / self.initial_energy

    @property
    def nbar(self) -> float:
        return self.energy - 0.5

    def params(self) -> ProtocolParams:
        return ProtocolParams.symmetric(self.epsilon, self.alpha)


def epsilon_bracket(spec: ThermalSpec) -> tuple[float, float]:
    st = max(spec.s, 1.0)
    return 1e-4 / st, 4.0 / st


def optimize_epsilon(spec: ThermalSpec, bracket: tuple[float, float] | None = None) -> EpsilonOptimum:
    """Minimise the quantum energy over epsilon with alpha slaved to its optimum."""
    lo, hi = epsilon_bracket(spec) if bracket is None else bracket
    st = max(spec.s, 1.0)

    def energy(e):
        return quantum_energy(e, optimal_alpha_given_epsilon(e, spec), spec)

    res = golden_section(energy, lo, hi, xtol=1e-6 / st, max_iter=200)
    e0 = spec.energy
    # gains at round-off level (e.g. from the ground state) are not improvements
    if not res.fun < e0 * (1 - 1e-12):
        raise NoImprovement(f"best energy {res.fun:.6g} does not improve on {e0:.6g}")
    return EpsilonOptimum(res.x, optimal_alpha_given_epsilon(res.x, spec), res.fun, e0)


def thermal_round_nbar(params, nbar: float) -> float:
    """Exact <n> after one round applied to a thermal state of occupation ``nbar``."""
    return mean_occupation_from_char(expand_round_to_displacement_sum(params), ThermalSpec(nbar))


# --- multi-round schedules -------------------------------------------------------


@dataclass
class ScheduleRow:
    round: int
    nbar_analytic: float
    nbar_fock: float | None = None
    mean_n: float | None = None
    energy: float | None = None
    epsilon: float | None = None
    alpha: float | None = None

    @property
    def nbar(self) -> float:
        return self.nbar_fock if self.nbar_fock is not None else self.nbar_analytic


@dataclass
class ScheduleResult:
    mode: str
    rows: list[ScheduleRow]
    state: osc.FockState | None = None

    def series(self, column: str = "nbar") -> list[float]:
        return [getattr(r, column) for r in self.rows]


def run_schedule(initial: ThermalSpec, rounds: int, mode: str = "analytic",
                 schedule: str | Sequence[ProtocolParams] = "auto", epsilon_scale: float = 1.0,
                 dim: int | None = None, estimator: str = "thermal-fraction") -> ScheduleResult:
    """Occupation after each cooling round.

    ``analytic`` re-assumes a thermal state before every round and scales the
    occupation by the exact single-round energy ratio (the semiclassical
    dashed-line model). ``fock`` propagates the true density matrix; its
    occupation is estimated like in the experiment, from a Gaussian fit to the
    characteristic function (``thermal-fraction``), or as the exact mean
    (``mean``).

    ``schedule='auto'`` chooses epsilon = scale/(4 s) with s updated assuming the
    nominal contraction each round; ``'optimize'`` re-optimises epsilon for the
    current estimate; a sequence gives explicit per-round parameters.
    """
    from .measurement import estimate_thermal_fraction

    if mode not in ("analytic", "fock"):
        raise ValueError(f"unknown mode {mode!r}")
    if estimator not in ("thermal-fraction", "mean"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if not isinstance(schedule, str) and len(schedule) < rounds:
        raise ValueError("explicit schedule shorter than the number of rounds")

    nb_analytic = initial.nbar
    nb_assumed = initial.nbar
    state = None
    row0 = ScheduleRow(0, initial.nbar)
    if mode == "fock":
        state = osc.make_thermal(initial, osc.default_dim(initial.nbar, FOCK_DIM_FACTOR) if dim is None else dim)
        row0.nbar_fock = initial.nbar
        row0.mean_n = osc.mean_occupation(state)
        row0.energy = osc.mean_energy(state)
    rows = [row0]
    estimate = initial.nbar
    contraction = classical_contraction(epsilon_scale)

    for k in range(1, rounds + 1):
        if schedule == "auto":
            params = ProtocolParams.symmetric(*_ea(schedule_params(ThermalSpec(nb_assumed).s, epsilon_scale)))
        elif schedule == "optimize":
            src = estimate if mode == "fock" else nb_analytic
            params = optimize_epsilon(ThermalSpec(max(src, 1e-3))).params()
        elif isinstance(schedule, str):
            raise ValueError(f"unknown schedule {schedule!r}")
        else:
            params = _as_protocol(schedule[k - 1])

        e0 = nb_analytic + 0.5
        nb_analytic = nb_analytic * (thermal_round_nbar(params, nb_analytic) + 0.5) / e0
        nb_assumed *= contraction
        row = ScheduleRow(k, nb_analytic, epsilon=params.position.epsilon, alpha=params.position.alpha)
        if mode == "fock":
            state = apply_round(state, params)
            row.mean_n = osc.mean_occupation(state)
            row.energy = osc.mean_energy(state)
            if estimator == "mean":
                estimate = row.mean_n
            else:
                guess = nb_assumed if schedule == "auto" else max(estimate * contraction, 0.05)
                estimate = estimate_thermal_fraction(state, max(guess, 0.05))
            row.nbar_fock = estimate
        rows.append(row)
    return ScheduleResult(mode, rows, state)


def _ea(p: RoundParams) -> tuple[float, float]:
    return p.epsilon, p.alpha

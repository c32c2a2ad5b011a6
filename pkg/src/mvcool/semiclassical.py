"""Classical Bayesian picture of one contraction on a sampled 1-D density.

The oscillator quadrature is treated as a classical random variable. The spin
outcome +X/-X arrives with probability (1 -/+ sin(4 eps q))/2, the density is
updated by Bayes' rule, and each branch is shifted back towards the origin by
+/-alpha. Position and momentum are independent, so the momentum quadrature
reuses exactly the same code on a second density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import GridTooNarrow
from .params import RoundParams, ThermalSpec

CONTRACTION = (math.e - 1) / math.e
DEFAULT_SPAN = 10.0
DEFAULT_POINTS = 8192
CLIP_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Probability density sampled on a uniform grid."""

    xs: np.ndarray
    fs: np.ndarray

    @property
    def dx(self) -> float:
        return float(self.xs[1] - self.xs[0])

    def integral(self) -> float:
        return float(np.trapezoid(self.fs, self.xs))

    def normalized(self) -> "GridDensity":
        return GridDensity(self.xs, self.fs / self.integral())

    def moment(self, k: int) -> float:
        return float(np.trapezoid(self.xs**k * self.fs, self.xs))

    def mean(self) -> float:
        return self.moment(1)

    def second_moment(self) -> float:
        return self.moment(2)

    def peak(self) -> float:
        return float(self.xs[np.argmax(self.fs)])

    def to_csv_rows(self):
        return zip(self.xs.tolist(), self.fs.tolist())


def uniform_grid(half_width: float, points: int = DEFAULT_POINTS) -> np.ndarray:
    # odd point count keeps x = 0 on the grid
    return np.linspace(-half_width, half_width, points + 1 - points % 2)


def gaussian_density(s: float, xs: np.ndarray | None = None) -> GridDensity:
    xs = uniform_grid(DEFAULT_SPAN * s) if xs is None else xs
    fs = np.exp(-(xs**2) / (2 * s * s)) / (s * math.sqrt(2 * math.pi))
    return GridDensity(xs, fs).normalized()


def conditional_prob(x, epsilon: float):
    """(P(+X|x), P(-X|x)) for the modular measurement of pitch epsilon."""
    sn = np.sin(4 * epsilon * np.asarray(x, dtype=float))
    minus = 0.5 * (1 + sn)
    return 1 - minus, minus


@dataclass(frozen=True, eq=False)
class BayesRound:
    """All intermediate quantities of one Bayesian contraction."""

    prior: GridDensity
    p_plus: float
    p_minus: float
    m_plus: GridDensity
    m_minus: GridDensity
    posterior: GridDensity


def _shift(fs: np.ndarray, xs: np.ndarray, shift: float) -> np.ndarray:
    """Sample f(x - shift) by linear interpolation (zero outside the grid)."""
    return np.interp(xs - shift, xs, fs, left=0.0, right=0.0)


def _clipped_mass(f: GridDensity, shift: float) -> float:
    if shift == 0:
        return 0.0
    xs = f.xs
    if shift > 0:
        sel = xs >= xs[-1] - shift
    else:
        sel = xs <= xs[0] - shift
    if sel.sum() < 2:
        return float(f.fs[sel].sum() * f.dx)
    return float(np.trapezoid(f.fs[sel], xs[sel]))


def bayes_round_detail(f: GridDensity, params: RoundParams) -> BayesRound:
    eps, alpha = params.epsilon, params.alpha
    plus, minus = conditional_prob(f.xs, eps)
    wp, wm = plus * f.fs, minus * f.fs
    p_plus = float(np.trapezoid(wp, f.xs))
    p_minus = float(np.trapezoid(wm, f.xs))
    m_plus = GridDensity(f.xs, wp / p_plus if p_plus > 0 else wp)
    m_minus = GridDensity(f.xs, wm / p_minus if p_minus > 0 else wm)
    clipped = p_plus * _clipped_mass(m_plus, alpha) + p_minus * _clipped_mass(m_minus, -alpha)
    if clipped > CLIP_TOL:
        raise GridTooNarrow(f"shift by alpha={alpha:g} clips mass {clipped:.3g}")
    # +X outcome is followed by a shift of +alpha, -X by -alpha
    fs = _shift(wp, f.xs, alpha) + _shift(wm, f.xs, -alpha)
    fs = np.clip(fs, 0.0, None)
    post = GridDensity(f.xs, fs).normalized()
    return BayesRound(f, p_plus, p_minus, m_plus, m_minus, post)


def bayes_round(f: GridDensity, params: RoundParams) -> GridDensity:
    """Posterior density after one measurement + feedback contraction."""
    return bayes_round_detail(f, params).posterior


def tail_mass(f: GridDensity, k: float, s_ref: float) -> float:
    """Probability of |x| > k * s_ref."""
    sel = np.abs(f.xs) > k * s_ref
    return float(np.sum(f.fs[sel]) * f.dx)


# --- closed forms --------------------------------------------------------------


def quadrature_second_moment(epsilon: float, alpha: float, s: float) -> float:
    """<q^2> after one classical contraction of a Gaussian of width s."""
    return alpha**2 + s * s * (1 - 8 * alpha * epsilon * math.exp(-8 * epsilon**2 * s * s))


def classical_energy(epsilon: float, alpha: float, spec: ThermalSpec) -> float:
    """Mean energy (units of hbar*omega) after contracting both quadratures."""
    return 2 * quadrature_second_moment(epsilon, alpha, spec.s)


def classical_alpha_given_epsilon(epsilon: float, s: float) -> float:
    """Correction minimising the classical energy at fixed epsilon."""
    return 4 * epsilon * s * s * math.exp(-8 * epsilon**2 * s * s)


def optimal_classical_params(spec: ThermalSpec) -> RoundParams:
    """alpha = s / sqrt(e), epsilon = 1 / (4 s)."""
    if spec.nbar <= 0:
        raise ValueError("optimal classical parameters need nbar > 0")
    s = spec.s
    return RoundParams(epsilon=1 / (4 * s), alpha=s / math.sqrt(math.e))


def minimize_classical_energy(spec: ThermalSpec) -> tuple[float, float, float]:
    """Numerical 2-D minimisation of the classical energy; returns (epsilon, alpha, energy).

    Independent of the closed-form optimum, used to cross-check it.
    """
    s = spec.s

    # work in the scale-free variables (eps*s, alpha/s)
    def obj(v):
        return classical_energy(v[0] / s, v[1] * s, spec) / (2 * s * s)

    res = minimize(obj, x0=[0.3, 0.5], method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    e, a = res.x
    return e / s, a * s, classical_energy(e / s, a * s, spec)


def classical_contraction(epsilon_scale: float = 1.0) -> float:
    """Energy ratio of a Gaussian round with epsilon = scale/(4s) and matched alpha.

    Independent of s; equals (e - 1)/e at scale 1.
    """
    u = epsilon_scale**2 / 16  # (eps s)^2
    return 1 - 16 * u * math.exp(-16 * u)


def schedule_params(s: float, epsilon_scale: float = 1.0) -> RoundParams:
    """Round settings for an assumed width s, with epsilon = scale/(4 s)."""
    eps = epsilon_scale / (4 * s)
    return RoundParams(eps, classical_alpha_given_epsilon(eps, s))


def cool_classical(initial: ThermalSpec, rounds: int, epsilon_scale: float = 1.0,
                   points: int = DEFAULT_POINTS) -> list[dict]:
    """Iterate the Bayesian round on both quadratures.

    Parameters at each round are re-optimised for the width of the current
    density (assumed Gaussian). Returns one row per round, row 0 being the input.
    """
    s0 = initial.s
    xs = uniform_grid(DEFAULT_SPAN * s0, points)
    fq = gaussian_density(s0, xs)
    fp = gaussian_density(s0, xs)
    rows = [{"round": 0, "q2": fq.second_moment(), "p2": fp.second_moment()}]
    for k in range(1, rounds + 1):
        sq = math.sqrt(fq.second_moment())
        sp = math.sqrt(fp.second_moment())
        fq = bayes_round(fq, schedule_params(sq, epsilon_scale))
        fp = bayes_round(fp, schedule_params(sp, epsilon_scale))
        rows.append({"round": k, "q2": fq.second_moment(), "p2": fp.second_moment()})
    for r in rows:
        r["energy"] = r["q2"] + r["p2"]
        r["nbar"] = r["energy"] - 0.5
    return rows

"""Diagnostic measurements: characteristic-function readout and blue-sideband flopping.

Readout. A spin-dependent displacement of real amplitude alpha maps the real
part of the characteristic function onto the spin, P(+Z) = (1 + Re<D(alpha)>)/2.
For a thermal state this is (1 + exp(-alpha^2 (nbar + 1/2)))/2, a Gaussian whose
width shrinks as nbar grows. Beyond leading order in the Lamb-Dicke parameter
the drive generator is replaced by a nonlinear quadrature built from the exact
sideband matrix elements, and spectator radial modes rescale its strength.

Blue sideband. Driving |+Z,n> <-> |-Z,n+1> makes each Fock level flop at its
own Rabi frequency; low-level populations and the weight of the high-energy
tail are recovered by fitting the flop signal.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import least_squares
from scipy.special import eval_genlaguerre, eval_laguerre
from scipy.stats import binomtest

from . import oscillator as osc
from .errors import DegenerateData, FitDidNotConverge, IdentifiabilityWarning
from .params import AXIAL_FREQUENCY, AXIAL_LAMB_DICKE, RadialModes

Z95 = 1.959963984540054
RADIAL_BINS_FIT = 32
RADIAL_BINS_DATA = 256
BOUND_SNAP = 1e-8


# --- radial Rabi-frequency scaling ----------------------------------------------


def radial_factor(levels, etas) -> np.ndarray:
    """prod_j exp(-eta_j^2/2) L_{n_j}(eta_j^2) for radial Fock numbers n_j (broadcasts)."""
    out = 1.0
    for n, eta in zip(levels, etas):
        x = eta * eta
        out = out * math.exp(-x / 2) * eval_laguerre(np.asarray(n), x)
    return np.asarray(out, dtype=float)


def radial_distribution(radial: RadialModes | None, bins: int = RADIAL_BINS_FIT):
    """Discrete distribution (scales, weights) of the radial Rabi factor.

    The exact distribution over all radial Fock configurations is compressed
    into ``bins`` equal-weight quantile bins, each represented by its mean.
    """
    if radial is None:
        return np.ones(1), np.ones(1)
    rs, ws = np.ones(1), np.ones(1)
    for nb, eta in zip(radial.nbars, radial.etas):
        dim = osc.default_dim(nb)
        p = osc.thermal_populations(nb, dim)
        f = math.exp(-eta * eta / 2) * eval_laguerre(np.arange(dim), eta * eta)
        rs = np.outer(rs, f).ravel()
        ws = np.outer(ws, p).ravel()
    order = np.argsort(rs)
    rs, ws = rs[order], ws[order]
    cum = np.cumsum(ws) / ws.sum()
    idx = np.minimum((cum * bins).astype(int), bins - 1)
    wsum = np.bincount(idx, ws, bins)
    rsum = np.bincount(idx, ws * rs, bins)
    keep = wsum > 0
    return rsum[keep] / wsum[keep], wsum[keep] / wsum.sum()


# --- readout ---------------------------------------------------------------------


@dataclass
class ReadoutCurve:
    alphas: np.ndarray
    probs: np.ndarray
    shots: np.ndarray
    ci: np.ndarray = field(default=None)  # (n, 2) lower/upper

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, float)
        self.probs = np.asarray(self.probs, float)
        self.shots = np.broadcast_to(np.asarray(self.shots, int), self.alphas.shape).copy()
        if np.any((self.probs < 0) | (self.probs > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.ci is None:
            self.ci = binomial_ci(self.probs, self.shots)

    def to_csv(self, path) -> None:
        _write_curve(path, "alpha", "dimensionless", self.alphas, self.probs, self.shots)

    @classmethod
    def from_csv(cls, path) -> "ReadoutCurve":
        x, p, n = read_curve(path)
        return cls(x, p, n)


def binomial_ci(probs, shots) -> np.ndarray:
    """95% Wilson intervals; points with zero shots get a degenerate interval."""
    probs = np.asarray(probs, float)
    shots = np.asarray(shots, int)
    out = np.column_stack([probs, probs])
    for i, (p, n) in enumerate(zip(probs, shots)):
        if n > 0:
            k = int(round(p * n))
            ci = binomtest(k, n).proportion_ci(0.95, method="wilson")
            out[i] = ci.low, ci.high
    return out


def readout_alphas(nbar_guess: float, points: int = 50, span: float = 1.5, inner: float = 0.35) -> np.ndarray:
    """Symmetric displacement grid scaled to the expected Gaussian width."""
    half = np.linspace(inner, span, points // 2) / math.sqrt(nbar_guess + 0.5)
    return np.concatenate([-half[::-1], half])


def thermal_readout(nbar: float, alphas) -> np.ndarray:
    """Leading-order readout of a thermal state, (1 + exp(-alpha^2 (nbar + 1/2)))/2."""
    a = np.asarray(alphas, float)
    return 0.5 * (1 + np.exp(-(a**2) * (nbar + 0.5)))


@lru_cache(maxsize=16)
def nonlinear_quadrature_eig(dim: int, eta: float):
    """Eigen-decomposition of P_eta = (A - A^dag)/(2i) with exact sideband elements.

    <n|A|n+1> = exp(-eta^2/2) L_n^1(eta^2)/sqrt(n+1), which tends to sqrt(n+1)
    as eta -> 0 so P_eta reduces to the momentum quadrature.
    """
    n = np.arange(dim - 1)
    if eta > 0:
        el = math.exp(-eta * eta / 2) * eval_genlaguerre(n, 1, eta * eta) / np.sqrt(n + 1)
    else:
        el = np.sqrt(n + 1.0)
    # diag(i^n) turns the purely imaginary tridiagonal P_eta into a real one
    lam, vec = eigh_tridiagonal(np.zeros(dim), el / 2)
    vec = (1j ** (np.arange(dim) % 4))[:, None] * vec
    lam.setflags(write=False)
    vec.setflags(write=False)
    return lam, vec


def _full_probs(diag_weights, lam, alphas, rs, ws) -> np.ndarray:
    ph = np.cos(2 * np.multiply.outer(np.outer(alphas, rs), lam))  # (alpha, r, k)
    return 0.5 * (1 + np.einsum("ark,k,r->a", ph, diag_weights, ws))


def readout_probabilities(state: osc.FockState, alphas, order: str = "leading",
                          radial: RadialModes | None = None, eta: float = AXIAL_LAMB_DICKE,
                          radial_bins: int = RADIAL_BINS_DATA) -> np.ndarray:
    """Noise-free P(+Z) for each displacement amplitude."""
    alphas = np.asarray(alphas, float)
    if order == "leading":
        chi = osc.characteristic_function(state, alphas.astype(complex), ordering="symmetric")
        return np.clip(0.5 * (1 + np.real(chi)), 0.0, 1.0)
    if order != "full":
        raise ValueError(f"unknown order {order!r}")
    rho = state.oscillator().matrix
    lam, vec = nonlinear_quadrature_eig(state.dim, float(eta))
    d = np.real(np.einsum("ki,kl,li->i", vec.conj(), rho, vec))
    rs, ws = radial_distribution(radial, radial_bins)
    return np.clip(_full_probs(d, lam, alphas, rs, ws), 0.0, 1.0)


def simulate_readout(state: osc.FockState, alphas, radial: RadialModes | None = None,
                     order: str = "leading", shots: int | None = 400, rng=None,
                     eta: float = AXIAL_LAMB_DICKE) -> ReadoutCurve:
    """Readout curve with binomial shot noise (``shots=None`` gives exact probabilities).

    Each shot draws its own radial Fock configuration; since shots are
    independent this is the same as a binomial draw at the radially averaged
    probability, which is what is sampled here.
    """
    p = readout_probabilities(state, alphas, order, radial, eta)
    if shots is None:
        return ReadoutCurve(alphas, p, np.zeros(len(p), int))
    rng = np.random.default_rng(rng)
    k = rng.binomial(shots, p)
    return ReadoutCurve(alphas, k / shots, np.full(len(p), shots))


@dataclass(frozen=True)
class NbarFit:
    nbar: float
    ci_low: float
    ci_high: float
    stderr: float
    model: str
    chi2: float
    dof: int
    nfev: int

    def to_dict(self) -> dict:
        return asdict(self)


class _FullModel:
    """Thermal-state readout at full Lamb-Dicke order, with radial averaging."""

    def __init__(self, alphas, radial, eta, nbar_max):
        self.alphas = alphas
        self.dim = osc.default_dim(nbar_max)
        self.lam, vec = nonlinear_quadrature_eig(self.dim, float(eta))
        self.absv2 = (np.abs(vec) ** 2).T
        self.rs, self.ws = radial_distribution(radial, RADIAL_BINS_FIT)
        self._ph = np.cos(2 * np.multiply.outer(np.outer(alphas, self.rs), self.lam))
        self._phw = np.einsum("ark,r->ak", self._ph, self.ws)

    def __call__(self, nbar: float) -> np.ndarray:
        p = osc.thermal_populations(max(nbar, 0.0), self.dim)
        d = self.absv2 @ (p / p.sum())
        return 0.5 * (1 + self._phw @ d)


def coarse_nbar_guess(alphas, probs) -> float:
    grid = np.geomspace(1e-2, 1e3, 121)
    cost = [np.sum((thermal_readout(g, alphas) - probs) ** 2) for g in grid]
    return float(grid[int(np.argmin(cost))])


def fit_nbar(curve: ReadoutCurve, model: str = "gaussian", radial: RadialModes | str | None = None,
             eta: float = AXIAL_LAMB_DICKE, nbar0: float | None = None, sweeps: int = 3,
             radial_base: RadialModes | None = None, axial_frequency: float = AXIAL_FREQUENCY) -> NbarFit:
    """Weighted least-squares estimate of nbar with a 95% confidence interval.

    Weights follow the binomial variance of the model prediction. The start
    value comes from a coarse scan of the Gaussian model, so the fit is
    deterministic. With ``radial='equal-temperature'`` the radial occupations
    follow the axial estimate and the fit is repeated ``sweeps`` times until
    the two agree; ``radial_base`` supplies the mode frequencies and etas.
    """
    a, y = curve.alphas, curve.probs
    if len(a) < 3 or np.ptp(y) < 1e-3 or np.ptp(np.abs(a)) == 0:
        raise DegenerateData("readout curve is flat or has too few points")
    shots = np.where(curve.shots > 0, curve.shots, 0)
    start = coarse_nbar_guess(a, y) if nbar0 is None else float(nbar0)
    if model not in ("gaussian", "full"):
        raise ValueError(f"unknown model {model!r}")
    if model == "gaussian":
        return _fit_once(a, y, shots, lambda nb: thermal_readout(nb, a), start, model)
    if isinstance(radial, str):
        if radial != "equal-temperature":
            raise ValueError(f"unknown radial option {radial!r}")
        base = {} if radial_base is None else {"frequencies": radial_base.frequencies, "etas": radial_base.etas}
        fit = _fit_once(a, y, shots, lambda nb: thermal_readout(nb, a), start, model)
        top = max(3 * fit.nbar, 3 * start, 5.0)
        for _ in range(sweeps):
            modes = RadialModes.equal_temperature(fit.nbar, axial_frequency, **base)
            fit = _fit_once(a, y, shots, _FullModel(a, modes, eta, top), fit.nbar, model)
        return fit
    return _fit_once(a, y, shots, _FullModel(a, radial, eta, max(3 * start, 5.0)), start, model)


def _fit_once(a, y, shots, predict, start: float, model: str) -> NbarFit:
    def sigma(m):
        if np.all(shots == 0):
            return np.ones_like(m)
        return np.sqrt(np.clip(m * (1 - m), 1e-4, None) / np.maximum(shots, 1))

    def resid(v):
        m = predict(v[0])
        return (m - y) / sigma(m)

    res = least_squares(resid, [start], bounds=([0.0], [np.inf]), x_scale=[max(start, 1.0)],
                        diff_step=1e-6)
    if not res.success:
        raise FitDidNotConverge(f"nbar fit failed: {res.message}")
    nb = float(res.x[0])
    dof = max(len(a) - 1, 1)
    chi2 = float(np.sum(res.fun**2))
    jtj = float(res.jac[:, 0] @ res.jac[:, 0])
    scale = chi2 / dof if np.all(shots == 0) else max(chi2 / dof, 1.0)
    se = math.sqrt(scale / jtj) if jtj > 0 else math.inf
    return NbarFit(nb, max(nb - Z95 * se, 0.0), nb + Z95 * se, se, model, chi2, dof, int(res.nfev))


def estimate_thermal_fraction(state: osc.FockState, nbar_guess: float, points: int = 50) -> float:
    """nbar from a Gaussian fit to the noise-free leading-order readout over [0, 3/sqrt(nbar+1/2)].

    This mirrors how the occupation is inferred in the experiment; for
    non-thermal states it tracks the Gaussian core and ignores the tails.
    """
    a = np.linspace(0.0, 3.0 / math.sqrt(nbar_guess + 0.5), points)
    y = np.real(osc.characteristic_function(state, a.astype(complex), ordering="symmetric"))
    res = least_squares(lambda v: np.exp(-(a**2) * (v[0] + 0.5)) - y, [nbar_guess], x_scale=[max(nbar_guess, 0.1)])
    return float(res.x[0])


# --- blue-sideband flopping ------------------------------------------------------


@dataclass(frozen=True)
class DecayModel:
    """Envelope exp(-gamma_exp t - (gamma_gauss t)^2) applied to the flop contrast (rates in 1/s)."""

    gamma_exp: float = 0.0
    gamma_gauss: float = 0.0

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        return np.exp(-self.gamma_exp * t - (self.gamma_gauss * t) ** 2)


def sideband_rabi(levels, rabi_0: float, eta: float = AXIAL_LAMB_DICKE, exact: bool = True) -> np.ndarray:
    """Omega_{n,n+1}, normalised so that level 0 flops at ``rabi_0``.

    ``exact`` uses the Laguerre matrix element L_n^1(eta^2)/sqrt(n+1); otherwise
    the Lamb-Dicke sqrt(n+1) scaling.
    """
    n = np.asarray(levels, float)
    if exact and eta > 0:
        return rabi_0 * eval_genlaguerre(n, 1, eta * eta) / np.sqrt(n + 1)
    return rabi_0 * np.sqrt(n + 1)


@dataclass
class BsbCurve:
    times: np.ndarray
    probs: np.ndarray
    shots: np.ndarray
    rabi_0: float
    eta: float = AXIAL_LAMB_DICKE
    decay: DecayModel = field(default_factory=DecayModel)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.probs = np.asarray(self.probs, float)
        self.shots = np.broadcast_to(np.asarray(self.shots, int), self.times.shape).copy()
        if np.any(self.times < 0):
            raise ValueError("times must be >= 0")
        if np.any((self.probs < 0) | (self.probs > 1)):
            raise ValueError("probabilities must lie in [0, 1]")

    def to_csv(self, path) -> None:
        _write_curve(path, "time", "s", self.times, self.probs, self.shots)


def bsb_signal(populations, times, rabi_0: float, eta: float = AXIAL_LAMB_DICKE,
               decay: DecayModel | None = None, radial: RadialModes | None = None,
               exact: bool = True, radial_bins: int = RADIAL_BINS_FIT) -> np.ndarray:
    """P(+Z) = (1 + env(t) sum_n rho_nn <cos(r Omega_n t)>_r)/2."""
    pops = np.asarray(populations, float)
    t = np.asarray(times, float)
    om = sideband_rabi(np.arange(len(pops)), rabi_0, eta, exact)
    rs, ws = radial_distribution(radial, radial_bins)
    c = np.zeros_like(t)
    for r, w in zip(rs, ws):
        c += w * (np.cos(np.outer(t, r * om)) @ pops)
    env = 1.0 if decay is None else decay(t)
    return 0.5 * (1 + env * c)


def simulate_bsb(state: osc.FockState, times, rabi_0: float, radial: RadialModes | None = None,
                 decay: DecayModel | None = None, rng=None, shots: int | None = None,
                 eta: float = AXIAL_LAMB_DICKE, exact: bool = True) -> BsbCurve:
    p = np.clip(bsb_signal(state.populations(), times, rabi_0, eta, decay, radial, exact), 0, 1)
    decay = decay or DecayModel()
    if shots is None:
        return BsbCurve(times, p, np.zeros(len(p), int), rabi_0, eta, decay)
    k = np.random.default_rng(rng).binomial(shots, p)
    return BsbCurve(times, k / shots, np.full(len(p), shots), rabi_0, eta, decay)


def tail_profile(center: float, width: float, levels: np.ndarray) -> np.ndarray:
    """Broad normalised distribution over ``levels`` used for the unresolved tail."""
    w = np.exp(-0.5 * ((levels - center) / width) ** 2)
    return w / w.sum()


def synthetic_tail_populations(low_total: float, max_level: int = 3, low_nbar: float = 0.2,
                               tail_center: float = 40.0, tail_width: float = 12.0,
                               top: int = 160) -> np.ndarray:
    """Fock populations with ``low_total`` in levels 0..max_level (thermal shape) and the rest in a broad tail."""
    low = osc.thermal_populations(low_nbar, max_level + 1)
    low = low_total * low / low.sum()
    tail = (1 - low_total) * tail_profile(tail_center, tail_width, np.arange(max_level + 1, top))
    return np.concatenate([low, tail])


@dataclass
class TailReport:
    populations: np.ndarray
    tail_mass: float
    ci: tuple[float, float]
    tail_center: float
    gamma_exp: float
    gamma_gauss: float
    chi2: float
    bootstrap: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "populations": [float(x) for x in self.populations],
            "tail_mass": self.tail_mass,
            "ci": list(self.ci),
            "tail_center": self.tail_center,
            "gamma_exp": self.gamma_exp,
            "gamma_gauss": self.gamma_gauss,
            "chi2": self.chi2,
        }


class _TailModel:
    """Low levels 0..L fitted individually; everything above as one broad tail."""

    def __init__(self, times, rabi_0, eta, max_level, top):
        self.t = times
        self.L = max_level
        self.tail_levels = np.arange(max_level + 1, top)
        om_low = sideband_rabi(np.arange(max_level + 1), rabi_0, eta)
        om_tail = sideband_rabi(self.tail_levels, rabi_0, eta)
        self.cos_low = np.cos(np.outer(times, om_low))
        self.cos_tail = np.cos(np.outer(times, om_tail))

    def unpack(self, v):
        # v = [rho_1..rho_L, tail, center, width, gamma_exp*t_scale, gamma_gauss*t_scale]
        L = self.L
        rho_rest = v[:L]
        tail = v[L]
        tail = 0.0 if tail < BOUND_SNAP else tail  # trf stops a hair inside active bounds
        rho0 = 1.0 - tail - rho_rest.sum()
        return np.concatenate([[rho0], rho_rest]), tail, v[L + 1], v[L + 2], v[L + 3], v[L + 4]

    def __call__(self, v, t_scale):
        pops, tail, c, w, ge, gg = self.unpack(v)
        env = np.exp(-ge * self.t / t_scale - (gg * self.t / t_scale) ** 2)
        s = self.cos_low @ pops + tail * (self.cos_tail @ tail_profile(c, w, self.tail_levels))
        return 0.5 * (1 + env * s)


def _fit_tail_model(model: _TailModel, y, sigma, v0, lo, hi, t_scale):
    def resid(v):
        pops = model.unpack(v)[0]
        r = (model(v, t_scale) - y) / sigma
        return np.concatenate([r, [1e3 * min(pops[0], 0.0)]])

    return least_squares(resid, v0, bounds=(lo, hi), x_scale="jac", max_nfev=4000)


def fit_tails(curve: BsbCurve, max_level: int = 3, bootstrap: int = 100, rng=None,
              tail_top: int = 160) -> TailReport:
    """Fit low-level populations, a broad high-energy tail and the decay envelope.

    The tail mass is 1 minus the fitted populations of levels 0..max_level; its
    95% interval comes from a parametric bootstrap around the best fit.
    """
    t, y = curve.times, curve.probs
    span = float(np.ptp(t))
    om = sideband_rabi(np.arange(max_level + 1), curve.rabi_0, curve.eta)
    if span * om[0] < 2 * math.pi:
        raise DegenerateData("time span does not cover one full flop of the ground state")
    if max_level >= 1 and span * abs(om[-1] - om[-2]) < 2 * math.pi:
        warnings.warn(f"levels up to {max_level} are not resolved over the time span", IdentifiabilityWarning)
    shots = curve.shots
    model = _TailModel(t, curve.rabi_0, curve.eta, max_level, tail_top)
    t_scale = span
    L = max_level
    lo = np.r_[np.zeros(L), 0.0, L + 2.0, 2.0, 0.0, 0.0]
    hi = np.r_[np.ones(L), 1.0, tail_top - 10.0, 40.0, 50.0, 50.0]

    def sig(m):
        if np.all(shots == 0):
            return np.full_like(m, 1e-3)
        return np.sqrt(np.clip(m * (1 - m), 0.25 / shots.max(), None) / np.maximum(shots, 1))

    best = None
    # deterministic multi-start over the tail weight and centre
    for tail0 in (0.02, 0.1, 0.3):
        for c0 in (20.0, 40.0, 70.0):
            v0 = np.r_[np.full(L, 0.2 * (1 - tail0) / max(L, 1)), tail0, c0, 10.0, 0.5, 0.5]
            v0[:L] = np.minimum(v0[:L], (1 - tail0) / (L + 1))
            res = _fit_tail_model(model, y, sig(np.clip(y, 0.01, 0.99)), v0, lo, hi, t_scale)
            if best is None or res.cost < best.cost:
                best = res
    # refine with model-based weights
    res = _fit_tail_model(model, y, sig(model(best.x, t_scale)), best.x, lo, hi, t_scale)
    if not res.success:
        raise FitDidNotConverge(f"tail fit failed: {res.message}")
    pops, tail, c, w, ge, gg = model.unpack(res.x)

    rng = np.random.default_rng(rng)
    boots = []
    if bootstrap and not np.all(shots == 0):
        m = np.clip(model(res.x, t_scale), 0, 1)
        sd = sig(m)
        for _ in range(bootstrap):
            yb = rng.binomial(shots, m) / shots
            rb = _fit_tail_model(model, yb, sd, res.x, lo, hi, t_scale)
            boots.append(model.unpack(rb.x)[1])
    boots = np.array(boots)
    ci = (float(np.percentile(boots, 2.5)), float(np.percentile(boots, 97.5))) if len(boots) else (tail, tail)
    return TailReport(pops, float(tail), ci, float(c), ge / t_scale, gg / t_scale,
                      float(2 * res.cost), boots)


# --- plain-text I/O --------------------------------------------------------------


def _write_curve(path, xname, xunit, xs, ps, shots) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([xname, "prob", "shots"])
        w.writerow([xunit, "dimensionless", "count"])
        for row in zip(xs, ps, shots):
            w.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2])])


def read_curve(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    data = [r for r in rows[1:] if r and _is_number(r[0])]
    arr = np.array([[float(v) for v in r[:3]] for r in data])
    return arr[:, 0], arr[:, 1], arr[:, 2].astype(int)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_report(path, report) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


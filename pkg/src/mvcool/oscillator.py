"""Phase-space conventions and truncated Fock-space linear algebra.

Quadratures are q = (a + a^dag)/2 and p = (a - a^dag)/(2i), so [q, p] = i/2 and
the energy in units of hbar*omega is q^2 + p^2 = n + 1/2. Displacements follow

    D(gamma) = exp(2i (Im(gamma) q - Re(gamma) p)) = exp(gamma a^dag - gamma^* a),

which shifts <q> by Re(gamma) and <p> by Im(gamma).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .errors import TruncationTooSmall
from .params import ThermalSpec

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-9
POSITIVITY_TOL = -1e-9
# mass allowed in the top 10% of Fock levels before a state is considered truncated
TAIL_TOL = 1e-4


def default_dim(nbar: float, factor: float = 12.0, minimum: int = 32) -> int:
    """Truncation heuristic: max(minimum, ceil(factor * (nbar + 1)))."""
    return max(minimum, int(math.ceil(factor * (nbar + 1))))


def thermal_populations(nbar: float, dim: int) -> np.ndarray:
    """Unnormalised thermal populations p_n = nbar^n / (nbar+1)^(n+1) for n < dim."""
    n = np.arange(dim)
    if nbar == 0:
        return (n == 0).astype(float)
    return np.exp(n * math.log(nbar / (nbar + 1))) / (nbar + 1)


@dataclass(frozen=True, eq=False)
class FockState:
    """Density matrix in a truncated Fock basis, optionally joint with a spin.

    With ``with_spin`` the matrix has shape (2N, 2N) and is ordered
    spin (x) oscillator, spin index 0 being |+Z> and 1 being |-Z>.
    """

    matrix: np.ndarray
    with_spin: bool = False

    @property
    def dim(self) -> int:
        """Oscillator truncation N."""
        d = self.matrix.shape[0]
        return d // 2 if self.with_spin else d

    def oscillator(self) -> "FockState":
        """Reduced oscillator state (partial trace over the spin)."""
        if not self.with_spin:
            return self
        N = self.dim
        return FockState(self.matrix[:N, :N] + self.matrix[N:, N:])

    def block(self, i: int, j: int) -> np.ndarray:
        N = self.dim
        return self.matrix[i * N:(i + 1) * N, j * N:(j + 1) * N]

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.oscillator().matrix)).copy()

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def tail_mass(self, fraction: float = 0.1) -> float:
        """Population in the top ``fraction`` of Fock levels."""
        p = self.populations()
        cut = int(math.floor(len(p) * (1 - fraction)))
        return float(p[cut:].sum())

    def check(self, tail_tol: float | None = None) -> None:
        """Raise ``ValueError`` on invariant violations; ``TruncationTooSmall`` on tail mass."""
        m = self.matrix
        herm = np.max(np.abs(m - m.conj().T))
        if herm > HERMITIAN_TOL:
            raise ValueError(f"density matrix not Hermitian (max deviation {herm:.3g})")
        if abs(self.trace() - 1) > TRACE_TOL:
            raise ValueError(f"trace {self.trace():.12f} differs from 1")
        lo = np.linalg.eigvalsh((m + m.conj().T) / 2)[0]
        if lo < POSITIVITY_TOL:
            raise ValueError(f"negative eigenvalue {lo:.3g}")
        if tail_tol is not None and self.tail_mass() > tail_tol:
            raise TruncationTooSmall(
                f"tail mass {self.tail_mass():.3g} in top 10% of {self.dim} levels exceeds {tail_tol:g}"
            )

    def with_matrix(self, matrix: np.ndarray) -> "FockState":
        return FockState(matrix, self.with_spin)


def make_thermal(spec: ThermalSpec, dim: int | None = None) -> FockState:
    """Diagonal thermal state, renormalised to unit trace after truncation."""
    dim = default_dim(spec.nbar) if dim is None else dim
    p = thermal_populations(spec.nbar, dim)
    lost = 1.0 - p.sum()
    if lost > 1e-4:
        raise TruncationTooSmall(f"thermal nbar={spec.nbar} loses mass {lost:.3g} at dim={dim}")
    return FockState(np.diag(p / p.sum()).astype(complex))


def fock_state(n: int, dim: int) -> FockState:
    m = np.zeros((dim, dim), complex)
    m[n, n] = 1
    return FockState(m)


def with_spin_up(state: FockState) -> FockState:
    """|+Z><+Z| (x) rho."""
    N = state.dim
    m = np.zeros((2 * N, 2 * N), complex)
    m[:N, :N] = state.matrix
    return FockState(m, with_spin=True)


# --- operators ---------------------------------------------------------------


@lru_cache(maxsize=64)
def annihilation(dim: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)
    a.setflags(write=False)
    return a


def quadrature(dim: int, theta: float) -> np.ndarray:
    """X_theta = sin(theta) q - cos(theta) p, the generator with D(t e^{i theta}) = exp(2i t X_theta)."""
    a = annihilation(dim)
    # X_theta = (i e^{-i theta} a - i e^{i theta} a^dag) / 2
    x = 0.5j * np.exp(-1j * theta) * a
    return x + x.conj().T


@lru_cache(maxsize=64)
def quadrature_eig(dim: int, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of the truncated quadrature X_theta (cached)."""
    lam, vec = np.linalg.eigh(quadrature(dim, theta))
    lam.setflags(write=False)
    vec.setflags(write=False)
    return lam, vec


def position(dim: int) -> np.ndarray:
    return quadrature(dim, math.pi / 2)


def momentum(dim: int) -> np.ndarray:
    return -quadrature(dim, 0.0)


def function_of_quadrature(dim: int, theta: float, fn) -> np.ndarray:
    """Matrix fn(X_theta) through the cached eigen-decomposition."""
    lam, vec = quadrature_eig(dim, theta)
    return (vec * fn(lam)) @ vec.conj().T


@dataclass(frozen=True, eq=False)
class DisplacementOperator:
    gamma: complex
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _split(gamma: complex) -> tuple[float, float]:
    gamma = complex(gamma)
    return abs(gamma), (math.atan2(gamma.imag, gamma.real) if gamma != 0 else 0.0)


def displacement_matrix(gamma: complex, dim: int) -> np.ndarray:
    t, theta = _split(gamma)
    if t == 0:
        return np.eye(dim, dtype=complex)
    return function_of_quadrature(dim, theta, lambda lam: np.exp(2j * t * lam))


def displacement(gamma: complex, dim: int) -> DisplacementOperator:
    """Truncated D(gamma), exponentiated through the quadrature eigenbasis."""
    if abs(gamma) ** 2 > dim / 8:
        raise TruncationTooSmall(f"|gamma|^2 = {abs(gamma) ** 2:.3g} exceeds dim/8 = {dim / 8:g}")
    return DisplacementOperator(complex(gamma), displacement_matrix(gamma, dim))


def displacement_element(m: int, n: int, gamma: complex) -> complex:
    """Exact <m|D(gamma)|n> from the associated-Laguerre closed form."""
    gamma = complex(gamma)
    x = abs(gamma) ** 2
    if m >= n:
        k = m - n
        pref = math.exp(0.5 * (gammaln(n + 1) - gammaln(m + 1)))
        return pref * gamma**k * math.exp(-x / 2) * eval_genlaguerre(n, k, x)
    k = n - m
    pref = math.exp(0.5 * (gammaln(m + 1) - gammaln(n + 1)))
    return pref * (-gamma.conjugate()) ** k * math.exp(-x / 2) * eval_genlaguerre(m, k, x)


def compose_phase(a: complex, b: complex) -> complex:
    """Phase factor in D(a) D(b) = exp(i Im(a b^*)) D(a + b)."""
    return np.exp(1j * (a * np.conj(b)).imag)


def characteristic_function(state: FockState, beta, ordering: str = "normal") -> np.ndarray:
    """Tr(D(beta) rho), times exp(|beta|^2/2) for normal ordering.

    ``beta`` may be a scalar or array; values sharing a direction reuse one
    eigen-decomposition.
    """
    rho = state.oscillator().matrix
    N = state.dim
    betas = np.atleast_1d(np.asarray(beta, dtype=complex))
    out = np.empty(betas.shape, complex)
    angles = np.where(betas == 0, 0.0, np.angle(betas))
    for theta in np.unique(angles):
        sel = angles == theta
        lam, vec = quadrature_eig(N, float(theta))
        diag = np.einsum("ki,kl,li->i", vec.conj(), rho, vec)
        out[sel] = np.exp(2j * np.outer(np.abs(betas[sel]), lam)) @ diag
    if ordering == "normal":
        out = out * np.exp(np.abs(betas) ** 2 / 2)
    elif ordering != "symmetric":
        raise ValueError(f"unknown ordering {ordering!r}")
    return out if np.ndim(beta) else out[0]


# --- expectation values ------------------------------------------------------


@dataclass(frozen=True)
class Moments:
    q: float
    p: float
    q2: float
    p2: float
    n: float

    @property
    def energy(self) -> float:
        return self.q2 + self.p2


def moments(state: FockState) -> Moments:
    rho = state.oscillator().matrix
    N = state.dim
    a = annihilation(N)
    ea = np.trace(a @ rho)
    ea2 = np.trace(a @ a @ rho)
    pops = np.real(np.diag(rho))
    n = float(np.dot(np.arange(N), pops))
    # q^2 = (a^2 + a^dag^2 + 2n + 1)/4, p^2 = (2n + 1 - a^2 - a^dag^2)/4
    re_a2 = float(np.real(ea2))
    return Moments(
        q=float(np.real(ea)),
        p=float(np.imag(ea)),
        q2=(2 * re_a2 + 2 * n + 1) / 4,
        p2=(2 * n + 1 - 2 * re_a2) / 4,
        n=n,
    )


def mean_energy(state: FockState) -> float:
    """Tr(rho (n + 1/2)) in units of hbar*omega."""
    p = state.populations()
    return float(np.dot(np.arange(len(p)) + 0.5, p))


def mean_occupation(state: FockState) -> float:
    return mean_energy(state) - 0.5


# --- entropy ---------------------------------------------------------------


def entropy_thermal(nbar: float) -> float:
    """Von Neumann entropy (nats) of a thermal state."""
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    if nbar == 0:
        return 0.0
    return -nbar * math.log(nbar / (nbar + 1)) + math.log(nbar + 1)


def entropy_large_nbar(nbar: float) -> float:
    return math.log(nbar)


def entropy_after_resets(nbar: float, resets: int = 2) -> float:
    """Thermal entropy minus the ln 2 that each spin reset can carry away."""
    return entropy_thermal(nbar) - resets * math.log(2)


def ideal_reduction_factor(resets: int = 2) -> float:
    """Occupation reduction permitted by the entropy budget of ``resets`` resets (large nbar)."""
    return 2.0**resets


def efficiency_gap(contraction: float = (math.e - 1) / math.e, resets: int = 2) -> float:
    """How far an achieved occupation contraction is from the entropy-limited one."""
    return ideal_reduction_factor(resets) * contraction

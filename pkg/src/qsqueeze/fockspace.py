"""Dense linear algebra in a truncated Fock basis.

Conventions: hbar = 1, quadratures ``I = a + a^dag`` and ``Q = -i (a - a^dag)``,
so the vacuum and every coherent state have unit quadrature variance and a
state is squeezed when ``Var(I) < 1``.

States are plain numpy arrays: a 1-d complex vector for a pure state and a
2-d matrix for a density matrix. Every routine that builds a state checks the
top two Fock populations against :data:`TRUNCATION_TOL` and raises
:class:`~qsqueeze.errors.TruncationError` instead of silently losing norm.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from .errors import ConfigurationError, ContractError, TruncationError

TRUNCATION_TOL = 1e-8
HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class HilbertConfig:
    """Number of Fock levels kept in the oscillator basis."""

    dim: int = 40

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ConfigurationError(f"dim must be an integer >= 2, got {self.dim!r}")


class Operators(NamedTuple):
    a: np.ndarray
    adag: np.ndarray
    n: np.ndarray
    I: np.ndarray
    Q: np.ndarray


class Moments(NamedTuple):
    mean: float
    variance: float


def _frozen(m: np.ndarray) -> np.ndarray:
    m.setflags(write=False)
    return m


def _dim(cfg: HilbertConfig | int) -> int:
    if isinstance(cfg, HilbertConfig):
        return cfg.dim
    return HilbertConfig(int(cfg)).dim


@lru_cache(maxsize=32)
def _operators(dim: int) -> Operators:
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
    adag = a.conj().T.copy()
    return Operators(
        a=_frozen(a),
        adag=_frozen(adag),
        n=_frozen(adag @ a),
        I=_frozen(a + adag),
        Q=_frozen(-1j * (a - adag)),
    )


def build_operators(cfg: HilbertConfig | int) -> Operators:
    """Ladder, number and quadrature operators for ``cfg.dim`` levels.

    ``a[m, m+1] = sqrt(m+1)``; the returned arrays are read-only and cached.
    """
    return _operators(_dim(cfg))


@lru_cache(maxsize=32)
def _quadrature_eig(dim: int) -> tuple[np.ndarray, np.ndarray]:
    lam, vecs = np.linalg.eigh(_operators(dim).I)
    return _frozen(lam), _frozen(vecs)


def quadrature_eigensystem(cfg: HilbertConfig | int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors (columns) of the truncated ``I``.

    Any function of ``I`` is diagonal in this basis, which is how the
    measurement operators are applied cheaply.
    """
    return _quadrature_eig(_dim(cfg))


def hermitian_function(op: np.ndarray, func) -> np.ndarray:
    """``func(op)`` for Hermitian ``op`` via its eigendecomposition."""
    lam, vecs = np.linalg.eigh(op)
    return (vecs * func(lam)) @ vecs.conj().T


def expm_antihermitian(generator: np.ndarray) -> np.ndarray:
    """Exponential of an anti-Hermitian matrix; the result is unitary."""
    herm = 1j * generator
    if np.max(np.abs(herm - herm.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(herm))):
        raise ContractError("generator is not anti-Hermitian")
    herm = 0.5 * (herm + herm.conj().T)
    return hermitian_function(herm, lambda lam: np.exp(-1j * lam))


def populations(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state)
    if state.ndim == 1:
        return np.abs(state) ** 2
    return np.real(np.diag(state))


def check_truncation(state: np.ndarray, tol: float = TRUNCATION_TOL, what: str = "state") -> None:
    """Raise :class:`TruncationError` if either of the top two levels is populated."""
    p = populations(state)
    top = p[-2:]
    if np.any(top >= tol):
        raise TruncationError(
            f"{what} has population {top.max():.3e} in the top two of {p.size} Fock levels; "
            "increase dim"
        )


def fock_state(n: int, cfg: HilbertConfig | int) -> np.ndarray:
    dim = _dim(cfg)
    if not 0 <= n < dim:
        raise ConfigurationError(f"Fock level {n} outside 0..{dim - 1}")
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def vacuum(cfg: HilbertConfig | int) -> np.ndarray:
    return fock_state(0, cfg)


def coherent_state(alpha: complex, cfg: HilbertConfig | int) -> np.ndarray:
    """Coherent state ``|alpha>`` from its Poisson amplitudes, renormalized after truncation."""
    dim = _dim(cfg)
    alpha = complex(alpha)
    if alpha == 0:
        return vacuum(dim)
    n = np.arange(dim)
    log_mag = -0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    amps = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    check_truncation(amps, what=f"coherent state alpha={alpha}")
    return amps / np.linalg.norm(amps)


def displacement_operator(beta: complex, cfg: HilbertConfig | int) -> np.ndarray:
    """``exp(beta a^dag - beta^* a)`` in the truncated basis."""
    ops = build_operators(cfg)
    beta = complex(beta)
    if beta == 0:
        return np.eye(ops.a.shape[0], dtype=complex)
    return expm_antihermitian(beta * ops.adag - np.conj(beta) * ops.a)


def squeeze_operator(eps: complex, cfg: HilbertConfig | int) -> np.ndarray:
    """``exp(eps^* a^2 / 2 - eps a^dag^2 / 2)``; real ``eps > 0`` squeezes ``I``.

    Raises :class:`TruncationError` when the squeezed vacuum does not fit.
    """
    ops = build_operators(cfg)
    eps = complex(eps)
    dim = ops.a.shape[0]
    if eps == 0:
        return np.eye(dim, dtype=complex)
    gen = 0.5 * (np.conj(eps) * ops.a @ ops.a - eps * ops.adag @ ops.adag)
    s = expm_antihermitian(gen)
    check_truncation(s[:, 0], what=f"squeezed vacuum eps={eps}")
    return s


def _check_normalized(state: np.ndarray) -> None:
    if state.ndim == 1:
        norm = np.vdot(state, state).real
    else:
        norm = np.trace(state).real
    if abs(norm - 1.0) > 1e-8:
        raise ContractError(f"state is not normalized (norm {norm:.12g})")


def expectation(state: np.ndarray, op: np.ndarray) -> complex:
    state = np.asarray(state)
    if state.ndim == 1:
        return np.vdot(state, op @ state)
    return np.trace(op @ state)


def moments(state: np.ndarray, op: np.ndarray) -> Moments:
    """Mean and variance of a Hermitian operator in a pure or mixed state."""
    state = np.asarray(state)
    op = np.asarray(op)
    if np.max(np.abs(op - op.conj().T)) > HERMITIAN_TOL * max(1.0, np.max(np.abs(op))):
        raise ContractError("moments() requires a Hermitian operator")
    _check_normalized(state)
    m1 = expectation(state, op)
    m2 = expectation(state, op @ op)
    scale = max(1.0, abs(m2))
    if abs(m1.imag) > 1e-10 * scale or abs(m2.imag) > 1e-10 * scale:
        raise ContractError("expectation of a Hermitian operator has an imaginary part")
    mean = m1.real
    return Moments(mean, m2.real - mean**2)


def fidelity(x: np.ndarray, y: np.ndarray) -> float:
    """``|<x|y>|^2`` for normalized pure states."""
    return float(min(1.0, abs(np.vdot(x, y)) ** 2))


def thermal_state(nbar: float, cfg: HilbertConfig | int) -> np.ndarray:
    """Diagonal Bose-Einstein density matrix with mean occupation ``nbar``."""
    dim = _dim(cfg)
    if nbar < 0:
        raise ConfigurationError("nbar must be non-negative")
    if nbar == 0:
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        return rho
    ratio = nbar / (1.0 + nbar)
    p = ratio ** np.arange(dim) / (1.0 + nbar)
    check_truncation(p, what=f"thermal state nbar={nbar}")
    return np.diag(p / p.sum()).astype(complex)


def projector(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, psi.conj())


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.vdot(rho, rho)))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``(1/2) * ||rho - sigma||_1`` for Hermitian arguments."""
    diff = rho - sigma
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def check_density_matrix(rho: np.ndarray, trace_tol=1e-8, herm_tol=1e-10, pos_tol=1e-8) -> None:
    """Assert the density-matrix invariants; raise :class:`ContractError` otherwise."""
    tr = np.trace(rho).real
    if abs(tr - 1) > trace_tol:
        raise ContractError(f"trace {tr:.12g} differs from 1")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ContractError("density matrix is not Hermitian")
    lam_min = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lam_min < -pos_tol:
        raise ContractError(f"density matrix has negative eigenvalue {lam_min:.3e}")

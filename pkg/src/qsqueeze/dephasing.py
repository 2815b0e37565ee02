"""Qubit pure dephasing from 1/f frequency noise.

The qubit transition frequency fluctuates as ``delta_omega(t)`` with power
spectral density ``S(omega) = A / |omega|``. During one measurement block the
CPMG sign modulation ``chi(t)`` filters this noise into a single random phase
``phi_noise`` that multiplies the ``D^dag`` branch of the Kraus operators.
Averaging the conditioned pure state over Gaussian phases with covariance
``W`` turns it into a density matrix.

Phase normalization: ``phi_noise = phase_factor * int chi(t) delta_omega(t) dt``
with ``phase_factor = 1/2`` by default, the phase of one qubit branch under
``-(omega + delta_omega) sigma_z / 2``. With this choice the integrated
covariance agrees with the closed form ``0.424 A (pi/omega_r)^2 N_p``. Use
``phase_factor = 1`` for the relative branch phase, which gives four times
the covariance.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, linalg
from scipy.special import comb

from . import analytic
from .errors import ConfigurationError, ContractError, NumericError, UnderflowError
from .fockspace import HilbertConfig, coherent_state, quadrature_eigensystem, check_truncation
from .measurement import InitialState, kraus_amplitudes, suggested_dim

DEFAULT_PHASE_FACTOR = 0.5
CLOSED_FORM_COEFF = 0.424
EXACT_MAX_STEPS = 24
BRUTE_MAX_STEPS = 8


@dataclass(frozen=True)
class NoiseSpectrum:
    """``S(omega) = a_omega / |omega|`` on ``omega_min <= |omega| <= omega_max``, zero elsewhere."""

    a_omega: float
    omega_min: float
    omega_max: float

    def __post_init__(self):
        if self.a_omega < 0:
            raise ConfigurationError("a_omega must be non-negative")
        if not 0 < self.omega_min < self.omega_max:
            raise ConfigurationError("need 0 < omega_min < omega_max")

    def psd(self, omega) -> np.ndarray:
        w = np.abs(np.asarray(omega, dtype=float))
        inside = (w >= self.omega_min) & (w <= self.omega_max)
        return np.where(inside, self.a_omega / np.where(w > 0, w, 1.0), 0.0)

    @classmethod
    def for_protocol(cls, a_omega: float, timing: ProtocolTiming, s: int, u: float = 10, v: float = 10):
        """Band ``[2 pi / (v T), u N_p 2 pi / T_e]`` with ``T`` the duration of ``s`` blocks."""
        duration = s * timing.period
        return cls(a_omega, 2 * math.pi / (v * duration), u * timing.n_p * 2 * math.pi / timing.t_e)

    @staticmethod
    def amplitude_from_flux_noise(sqrt_a_flux: float, epsilon: float, omega_ge: float, i_p: float) -> float:
        """``A_omega`` from the flux-noise amplitude ``sqrt(A_Phi)`` given in units of the flux quantum.

        ``sqrt(A_omega) = 2 pi (epsilon / omega_ge) (I_p / e) sqrt(A_Phi)``.
        """
        from scipy.constants import e

        if omega_ge <= 0 or i_p <= 0 or sqrt_a_flux < 0:
            raise ConfigurationError("flux-noise parameters must be positive")
        return (2 * math.pi * (epsilon / omega_ge) * (i_p / e) * sqrt_a_flux) ** 2


@dataclass(frozen=True)
class ProtocolTiming:
    """CPMG block timing. ``t_e`` defaults to ``n_p * pi / omega_r``."""

    n_p: int
    omega_r: float
    t_e: float | None = None
    repetition_gap: float = 0.0

    def __post_init__(self):
        if int(self.n_p) != self.n_p or self.n_p < 1:
            raise ConfigurationError("n_p must be a positive integer")
        if self.omega_r <= 0:
            raise ConfigurationError("omega_r must be positive")
        if self.repetition_gap < 0:
            raise ConfigurationError("repetition_gap must be non-negative")
        ideal = self.n_p * math.pi / self.omega_r
        if self.t_e is None:
            object.__setattr__(self, "t_e", ideal)
        elif abs(self.t_e - ideal) > 1e-9 * ideal:
            raise ConfigurationError(f"t_e={self.t_e!r} differs from n_p*pi/omega_r={ideal!r}")

    @property
    def pulse_spacing(self) -> float:
        return math.pi / self.omega_r

    @property
    def period(self) -> float:
        return self.t_e + self.repetition_gap

    def block_starts(self, s: int) -> np.ndarray:
        return np.arange(s) * self.period

    def pulse_times(self) -> np.ndarray:
        """Centres of the pi pulses within a block, at odd multiples of half the spacing."""
        return (np.arange(1, self.n_p + 1) - 0.5) * self.pulse_spacing

    def phi(self, g: float) -> float:
        """Interaction phase ``(2/pi) g T_e`` for coupling ``g`` in rad/s."""
        return 2.0 / math.pi * g * self.t_e


def _segments(timing: ProtocolTiming) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    edges = np.concatenate([[0.0], timing.pulse_times(), [timing.t_e]])
    signs = (-1.0) ** np.arange(timing.n_p + 1)
    return edges[:-1], edges[1:], signs


def cpmg_filter(timing: ProtocolTiming) -> Callable[[np.ndarray], np.ndarray]:
    """Fourier transform ``chi~(omega) = int_0^T_e chi(t) exp(i omega t) dt``.

    ``chi`` is +1 until the first pi pulse and flips sign at every pulse.
    """
    start, stop, signs = _segments(timing)
    length = stop - start
    mid = 0.5 * (start + stop)

    def chi_tilde(omega):
        w = np.asarray(omega, dtype=float)
        wc = w[..., None]
        # np.sinc(x) = sin(pi x) / (pi x)
        terms = signs * length * np.exp(1j * wc * mid) * np.sinc(wc * length / (2 * np.pi))
        return terms.sum(axis=-1)

    return chi_tilde


@dataclass(frozen=True)
class NoiseTrajectory:
    """``delta_omega(t) = sum_n a_n exp(i omega_n t)`` with ``a_{-n} = conj(a_n)``.

    Only the ``n >= 1`` coefficients are stored; ``a_0 = 0``.
    """

    coefficients: np.ndarray
    omega_grid: np.ndarray
    t_bar: float

    def full_coefficients(self) -> np.ndarray:
        """Two-sided coefficients ordered ``n = -N..N``."""
        c = self.coefficients
        return np.concatenate([c[::-1].conj(), [0.0], c])

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty(t.shape)
        for k in range(0, t.size, 256):
            chunk = t.flat[k : k + 256]
            out.flat[k : k + 256] = 2 * np.real(np.exp(1j * np.outer(chunk, self.omega_grid)) @ self.coefficients)
        return out

    def on_grid(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Values at ``t_k = k T / m`` via an inverse real FFT."""
        n = self.coefficients.size
        if m < 2 * n + 2:
            raise ConfigurationError(f"need at least {2 * n + 2} grid points")
        half = np.zeros(m // 2 + 1, dtype=complex)
        half[1 : n + 1] = self.coefficients
        return np.arange(m) * self.t_bar / m, m * np.fft.irfft(half, m)

    def block_phases(self, timing: ProtocolTiming, s: int, phase_factor: float = DEFAULT_PHASE_FACTOR) -> np.ndarray:
        """Filtered phase of each of ``s`` blocks, computed exactly from the Fourier modes."""
        chi = cpmg_filter(timing)(self.omega_grid)
        starts = timing.block_starts(s)
        modes = self.coefficients * chi
        return phase_factor * 2 * np.real(np.exp(1j * np.outer(starts, self.omega_grid)) @ modes)


def synthesize_noise(spec: NoiseSpectrum, t_bar: float, rng: np.random.Generator) -> NoiseTrajectory:
    """Random Fourier synthesis with ``<|a_n|^2> = (2 pi / t_bar) S(omega_n)``.

    ``t_bar`` must be much longer than the simulated experiment; it sets the
    grid spacing ``2 pi / t_bar``, which has to resolve ``omega_min``.
    """
    if t_bar <= 0:
        raise ConfigurationError("t_bar must be positive")
    spacing = 2 * math.pi / t_bar
    if spacing > spec.omega_min:
        raise ConfigurationError(
            f"grid too coarse: 2*pi/t_bar = {spacing:.4g} rad/s exceeds omega_min = {spec.omega_min:.4g}"
        )
    n_max = int(spec.omega_max / spacing)
    omega = spacing * np.arange(1, n_max + 1)
    var = spacing * spec.psd(omega)
    z = rng.standard_normal((2, n_max))
    coeffs = np.sqrt(var / 2) * (z[0] + 1j * z[1])
    return NoiseTrajectory(coeffs, omega, t_bar)


@dataclass(frozen=True)
class CorrelationMatrix:
    """Covariance of the block phases, rad^2."""

    w: np.ndarray
    lags: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ContractError("correlation matrix must be square")
        if np.max(np.abs(w - w.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(w), initial=0.0)):
            raise ContractError("correlation matrix is not symmetric")
        w = 0.5 * (w + w.T)
        lam = np.linalg.eigvalsh(w) if w.size else np.zeros(1)
        if lam.min() < -1e-10 * max(lam.max(), 0.0) - 1e-300:
            raise ContractError(f"correlation matrix is not positive semidefinite (min eigenvalue {lam.min():.3e})")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def size(self) -> int:
        return self.w.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.w)

    def is_diagonal(self, rtol: float = 1e-12) -> bool:
        off = self.w - np.diag(self.diagonal)
        return bool(np.max(np.abs(off), initial=0.0) <= rtol * max(np.max(self.diagonal, initial=0.0), 1e-300))

    def max_offdiag_ratio(self) -> float:
        """``max_{i != j} |W_ij| / W_ii``; zero for a 1x1 or all-zero matrix."""
        if self.size < 2 or not np.any(self.diagonal > 0):
            return 0.0
        off = np.abs(self.w - np.diag(self.diagonal))
        return float(np.max(off / self.diagonal[:, None]))

    def diagonal_part(self) -> CorrelationMatrix:
        return CorrelationMatrix(np.diag(self.diagonal))


def _filtered_integral(chi_tilde, lo: float, hi: float, lag: float, piece: float) -> float:
    """``int_lo^hi |chi~|^2 cos(omega lag) / omega d omega`` piece by piece."""
    edges = np.arange(math.ceil(lo / piece), math.floor(hi / piece) + 1) * piece
    edges = np.unique(np.concatenate([[lo], edges[(edges > lo) & (edges < hi)], [hi]]))

    def f(w):
        return abs(chi_tilde(w)) ** 2 / w

    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            try:
                if lag == 0:
                    val, _ = integrate.quad(f, a, b, limit=200)
                else:
                    val, _ = integrate.quad(f, a, b, weight="cos", wvar=lag, limit=200)
            except integrate.IntegrationWarning as exc:
                raise NumericError(
                    f"quadrature did not converge on [{a:.6g}, {b:.6g}] rad/s at lag {lag:.6g} s: {exc}"
                ) from exc
            total += val
    return total


def correlation_matrix(
    spec: NoiseSpectrum,
    timing: ProtocolTiming,
    s: int,
    phase_factor: float = DEFAULT_PHASE_FACTOR,
) -> CorrelationMatrix:
    """``W_ij = phase_factor^2 int S(omega) exp(i omega (t_j - t_i)) |chi~(omega)|^2 d omega``.

    The integrand is even in ``omega`` so the integral is twice the positive
    band. Blocks are equally spaced, hence ``W`` is Toeplitz and only ``s``
    lags are integrated. Pieces are one filter lobe (``2 pi / T_e``) wide.
    """
    if s < 1:
        raise ConfigurationError("s must be >= 1")
    lags = timing.block_starts(s)
    if spec.a_omega == 0:
        return CorrelationMatrix(np.zeros((s, s)), lags)
    chi_tilde = cpmg_filter(timing)
    piece = 2 * math.pi / timing.t_e
    scale = 2 * spec.a_omega * phase_factor**2
    col = np.array([scale * _filtered_integral(chi_tilde, spec.omega_min, spec.omega_max, lag, piece) for lag in lags])
    return CorrelationMatrix(linalg.toeplitz(col), lags)


def diagonal_approx(spec: NoiseSpectrum, timing: ProtocolTiming) -> float:
    """Closed-form diagonal element ``0.424 A (pi / omega_r)^2 N_p``."""
    return CLOSED_FORM_COEFF * spec.a_omega * (math.pi / timing.omega_r) ** 2 * timing.n_p


class DephasedState(NamedTuple):
    """Noise-averaged conditioned state; ``rho`` has unit trace, ``prob`` is the record probability."""

    rho: np.ndarray
    prob: float


def _as_matrix(w, s: int) -> np.ndarray:
    if isinstance(w, CorrelationMatrix):
        mat = w.w
    else:
        arr = np.asarray(w, dtype=float)
        if arr.ndim == 0:
            arr = np.full(s, float(arr))
        mat = CorrelationMatrix(np.diag(arr) if arr.ndim == 1 else arr).w
    if mat.shape != (s, s):
        raise ConfigurationError(f"correlation matrix shape {mat.shape} does not match record length {s}")
    return mat


def _check_results(results) -> np.ndarray:
    r = np.asarray(results, dtype=int).ravel()
    if r.size == 0 or not np.all(np.abs(r) == 1):
        raise ConfigurationError("results must be a non-empty sequence of +1/-1")
    return r


def _displaced_kets(s: int, phi: float, alpha0: complex, cfg: HilbertConfig) -> tuple[np.ndarray, np.ndarray]:
    """Columns ``D^(s - 2t) |alpha0>`` for ``t = 0..s`` in the eigenbasis of ``I``."""
    lam, vecs = quadrature_eigensystem(cfg)
    psi = vecs.conj().T @ coherent_state(alpha0, cfg)
    powers = s - 2 * np.arange(s + 1)
    return np.exp(1j * phi * np.outer(lam, powers)) * psi[:, None], vecs


def _finish(rho_eig: np.ndarray, vecs: np.ndarray) -> DephasedState:
    rho = vecs @ rho_eig @ vecs.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    prob = float(np.trace(rho).real)
    if not prob > 1e-300:
        raise UnderflowError(f"record probability {prob:.3e} underflows")
    rho = rho / prob
    check_truncation(rho, what="dephased conditioned state")
    return DephasedState(rho, prob)


def coefficient_table(results, w_diag) -> np.ndarray:
    """``c[t1, t2]`` of the generating polynomial for diagonal ``W``.

    Each step multiplies by ``1 + x y + i^r e^{-W/2} x + i^-r e^{-W/2} y``.
    """
    r = _check_results(results)
    w_diag = np.broadcast_to(np.asarray(w_diag, dtype=float), r.shape)
    s = r.size
    c = np.zeros((s + 1, s + 1), dtype=complex)
    c[0, 0] = 1.0
    for j, (rj, wj) in enumerate(zip(r, w_diag)):
        damp = math.exp(-0.5 * wj)
        ph = 1j if rj > 0 else -1j
        k = j + 1
        new = c.copy()
        new[1 : k + 1, 1 : k + 1] += c[:k, :k]
        new[1 : k + 1, : k + 1] += ph * damp * c[:k, : k + 1]
        new[: k + 1, 1 : k + 1] += np.conj(ph) * damp * c[: k + 1, :k]
        c = new
    return c


def _exact(r, phi, w, alpha0, cfg) -> DephasedState:
    s = r.size
    kets, vecs = _displaced_kets(s, phi, alpha0, cfg)
    c = coefficient_table(r, np.diag(w)) / 4.0**s
    return _finish(kets @ c @ kets.conj().T, vecs)


def _brute(r, phi, w, alpha0, cfg) -> DephasedState:
    s = r.size
    kets, vecs = _displaced_kets(s, phi, alpha0, cfg)
    q = (np.arange(2**s)[:, None] >> np.arange(s)) & 1
    t = q.sum(axis=1)
    phase = (1j ** (q * r) ).prod(axis=1)
    acc = np.zeros((s + 1, s + 1), dtype=complex)
    for a in range(2**s):
        d = q[a] - q
        damp = np.exp(-0.5 * np.einsum("ki,ij,kj->k", d, w, d))
        np.add.at(acc, (t[a], t), phase[a] * np.conj(phase) * damp)
    return _finish(kets @ (acc / 4.0**s) @ kets.conj().T, vecs)


def _monte_carlo(r, phi, w, alpha0, cfg, n_samples, rng, chunk=4096) -> DephasedState:
    lam, vecs = quadrature_eigensystem(cfg)
    psi0 = vecs.conj().T @ coherent_state(alpha0, cfg)
    evals, evecs = np.linalg.eigh(w)
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    acc = np.zeros((lam.size, lam.size), dtype=complex)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        noise = rng.standard_normal((m, r.size)) @ root.T
        psi = np.broadcast_to(psi0, (m, lam.size)).copy()
        for j, rj in enumerate(r):
            d_g, d_e = kraus_amplitudes(phi, lam[None, :], noise[:, j : j + 1])
            psi *= d_e if rj > 0 else d_g
        acc += psi.T @ psi.conj()
        done += m
    return _finish(acc / n_samples, vecs)


def dephased_density_matrix(
    results: Sequence[int],
    phi: float,
    w,
    alpha0: complex = 0.0,
    cfg: HilbertConfig | None = None,
    method: str = "auto",
    n_samples: int = 100_000,
    rng: np.random.Generator | None = None,
) -> DephasedState:
    """Conditioned state for record ``results`` averaged over Gaussian noise phases.

    ``w`` is a :class:`CorrelationMatrix`, an ``s x s`` array, a vector of
    diagonal entries or a scalar. ``method``:

    ``exact``
        generating-polynomial contraction, diagonal ``W`` only, O(s^2) terms;
    ``brute``
        direct sum over all ``4^s`` index pairs, any ``W``, small ``s``;
    ``monte_carlo``
        average of pure conditioned states over sampled noise vectors;
    ``auto``
        ``exact`` when ``W`` is diagonal, otherwise ``monte_carlo``.
    """
    r = _check_results(results)
    s = r.size
    if phi <= 0:
        raise ConfigurationError("phi must be positive")
    mat = _as_matrix(w, s)
    if cfg is None:
        cfg = HilbertConfig(suggested_dim(phi, s, InitialState.coherent(alpha0)))
    diagonal = CorrelationMatrix(mat).is_diagonal()
    if method == "auto":
        method = "exact" if diagonal else "monte_carlo"
    if method == "exact":
        if not diagonal:
            raise ConfigurationError("exact contraction needs a diagonal correlation matrix")
        if s > EXACT_MAX_STEPS:
            raise ConfigurationError(f"exact contraction supports s <= {EXACT_MAX_STEPS}")
        return _exact(r, phi, mat, alpha0, cfg)
    if method == "brute":
        if s > BRUTE_MAX_STEPS:
            raise ConfigurationError(f"brute-force sum supports s <= {BRUTE_MAX_STEPS}")
        return _brute(r, phi, mat, alpha0, cfg)
    if method == "monte_carlo":
        if rng is None:
            raise ConfigurationError("monte_carlo needs an rng")
        return _monte_carlo(r, phi, mat, alpha0, cfg, int(n_samples), rng)
    raise ConfigurationError(f"unknown method {method!r}")


@dataclass(frozen=True)
class VarianceCurve:
    """Quadrature variance versus number of measurements, with and without noise.

    ``weighted`` columns average ``Var(I)`` over records with their
    probabilities; ``most_likely`` columns use the most probable outcome count.
    """

    s: np.ndarray
    w_ii: float
    noiseless_weighted: np.ndarray
    noisy_weighted: np.ndarray
    noiseless_most_likely: np.ndarray
    noisy_most_likely: np.ndarray

    def degradation(self) -> np.ndarray:
        """Relative increase of the weighted variance caused by the noise."""
        return (self.noisy_weighted - self.noiseless_weighted) / self.noiseless_weighted


def _noisy_distribution(s, phi, w_ii, alpha0, cfg) -> tuple[float, float]:
    """Weighted and most-likely ``Var(I)`` over outcome counts for scalar diagonal ``W``.

    Records with the same count of ``+1`` give the same state, so each count is
    contracted once and weighted by its multiplicity.
    """
    lam, vecs = quadrature_eigensystem(cfg)
    kets, _ = _displaced_kets(s, phi, alpha0, cfg)
    ops_i = vecs * lam @ vecs.conj().T
    weights, variances = [], []
    for n in range(s + 1):
        r = np.array([1] * n + [-1] * (s - n))
        c = coefficient_table(r, w_ii) / 4.0**s
        st = _finish(kets @ c @ kets.conj().T, vecs)
        m1 = np.trace(ops_i @ st.rho).real
        m2 = np.trace(ops_i @ ops_i @ st.rho).real
        weights.append(comb(s, n, exact=True) * st.prob)
        variances.append(m2 - m1**2)
    weights = np.array(weights)
    variances = np.array(variances)
    total = weights.sum()
    if abs(total - 1) > 1e-8:
        raise NumericError(f"outcome weights sum to {total:.12g}")
    return float(weights @ variances / total), float(variances[np.argmax(weights)])


def noisy_variance_curve(
    s_max: int,
    phi: float,
    w_ii: float,
    alpha0: float = 0.0,
    cfg: HilbertConfig | None = None,
    s_values: Sequence[int] | None = None,
) -> VarianceCurve:
    """Variance of ``I`` against ``s`` for a diagonal ``W = w_ii * 1``.

    Outcome counts are enumerated exactly, so the curve carries no sampling
    error. The noiseless columns come from the analytic single-sum formulas.
    """
    if not 1 <= s_max <= EXACT_MAX_STEPS:
        raise ConfigurationError(f"s_max must be in 1..{EXACT_MAX_STEPS}")
    if w_ii < 0:
        raise ConfigurationError("w_ii must be non-negative")
    s_values = np.array(s_values if s_values is not None else range(1, s_max + 1), dtype=int)
    if cfg is None:
        cfg = HilbertConfig(suggested_dim(phi, s_max, InitialState.coherent(alpha0)))
    cols = [[], [], [], []]
    for s in s_values:
        clean = analytic.outcome_distribution(int(s), phi, re_alpha0=float(np.real(alpha0)))
        cols[0].append(clean.weighted_variance)
        cols[2].append(clean.most_likely_variance)
        if w_ii == 0:
            cols[1].append(clean.weighted_variance)
            cols[3].append(clean.most_likely_variance)
        else:
            wv, mv = _noisy_distribution(int(s), phi, w_ii, alpha0, cfg)
            cols[1].append(wv)
            cols[3].append(mv)
    return VarianceCurve(s_values, float(w_ii), *(np.array(c) for c in (cols[0], cols[1], cols[2], cols[3])))

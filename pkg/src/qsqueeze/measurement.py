"""Repeated qubit-mediated measurement of the oscillator quadrature ``I``.

One repetition (Ramsey-type CPMG block, qubit readout, qubit reset) acts on
the oscillator through the Kraus pair::

    D   = exp(i phi I)          (displacement by i*phi)
    D_g = -(D - i D^dag) / 2    result r = -1 (qubit found in |g>)
    D_e = -(D + i D^dag) / 2    result r = +1 (qubit found in |e>)

Both are functions of ``I``, so they commute with each other and with ``I``.
Trajectories are therefore propagated in the eigenbasis of the truncated
``I`` where the update is an elementwise product; :func:`measure_step` is the
plain Fock-basis version of the same update.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _rng
from .errors import ConfigurationError, NumericError, UnderflowError
from .fockspace import (
    HilbertConfig,
    build_operators,
    check_truncation,
    coherent_state,
    displacement_operator,
    quadrature_eigensystem,
    thermal_state,
)

LOG_UNDERFLOW = math.log(1e-300)


def kraus_amplitudes(phi: float, lam, noise_phase=0.0):
    """Eigenvalues ``(d_g, d_e)`` of the Kraus operators at quadrature value(s) ``lam``.

    ``noise_phase`` is the random qubit phase picked up during the block;
    it multiplies the ``D^dag`` branch by ``exp(i * noise_phase)``.
    """
    fwd = np.exp(1j * phi * lam)
    bwd = 1j * np.exp(1j * noise_phase) * np.exp(-1j * phi * lam)
    return -0.5 * (fwd - bwd), -0.5 * (fwd + bwd)


@dataclass(frozen=True)
class KrausPair:
    d_g: np.ndarray
    d_e: np.ndarray
    phi: float

    def completeness_residual(self, margin: int = 2) -> float:
        """Max entry of ``|D_g^dag D_g + D_e^dag D_e - 1|`` below the top ``margin`` levels."""
        total = self.d_g.conj().T @ self.d_g + self.d_e.conj().T @ self.d_e
        k = total.shape[0] - margin
        return float(np.max(np.abs(total[:k, :k] - np.eye(k))))

    def commutation_residual(self) -> float:
        return float(np.max(np.abs(self.d_g @ self.d_e - self.d_e @ self.d_g)))

    def operator(self, result: int) -> np.ndarray:
        return self.d_e if result > 0 else self.d_g


def kraus_pair(phi: float, cfg: HilbertConfig) -> KrausPair:
    if not phi > 0:
        raise ConfigurationError("phi must be positive")
    d = displacement_operator(1j * phi, cfg)
    ddag = d.conj().T
    return KrausPair(d_g=-0.5 * (d - 1j * ddag), d_e=-0.5 * (d + 1j * ddag), phi=float(phi))


@dataclass(frozen=True)
class InitialState:
    """Oscillator preparation: ``vacuum``, ``coherent`` (``alpha``) or ``thermal`` (``nbar``)."""

    kind: str = "vacuum"
    alpha: complex = 0.0
    nbar: float = 0.0

    def __post_init__(self):
        if self.kind not in ("vacuum", "coherent", "thermal"):
            raise ConfigurationError(f"unknown initial state {self.kind!r}")
        if self.nbar < 0:
            raise ConfigurationError("nbar must be non-negative")

    @classmethod
    def vacuum(cls):
        return cls("vacuum")

    @classmethod
    def coherent(cls, alpha: complex):
        return cls("coherent", alpha=complex(alpha))

    @classmethod
    def thermal(cls, nbar: float):
        return cls("thermal", nbar=float(nbar))

    @property
    def is_pure(self) -> bool:
        return self.kind != "thermal"

    def prepare(self, cfg: HilbertConfig) -> np.ndarray:
        if self.kind == "vacuum":
            return coherent_state(0, cfg)
        if self.kind == "coherent":
            return coherent_state(self.alpha, cfg)
        return thermal_state(self.nbar, cfg)


@dataclass(frozen=True)
class ProtocolParams:
    phi: float
    steps: int
    initial: InitialState = field(default_factory=InitialState)
    seed: int = 0
    hilbert: HilbertConfig = field(default_factory=HilbertConfig)

    def __post_init__(self):
        if not self.phi > 0:
            raise ConfigurationError("phi must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigurationError("steps must be a positive integer")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")


@dataclass
class TrajectoryRecord:
    results: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    p_excited: np.ndarray
    final_state: np.ndarray

    def __post_init__(self):
        n = len(self.results)
        if not (len(self.means) == len(self.variances) == len(self.p_excited) == n):
            raise ValueError("trajectory arrays must have equal length")


class StepResult(NamedTuple):
    result: int
    post: np.ndarray
    p_e: float


def suggested_dim(phi: float, steps: int, initial: InitialState | None = None, tail=1e-11) -> int:
    """Fock cutoff large enough for the conditioned states of a run.

    The back-action inflates ``Var(Q)`` by ``4 phi^2`` per step; the state is
    treated as a squeezed state with that anti-squeezed variance and the
    cutoff is placed where its photon-number tail drops below ``tail``.
    """
    initial = initial or InitialState()
    var_q = 2 * initial.nbar + 1 + 4 * phi**2 * steps
    r = 0.5 * math.log(var_q)
    n = 2
    if r > 0:
        log_t = math.log(math.tanh(r))
        # P(2m) ~ tanh(r)^(2m) / (cosh(r) sqrt(pi m))
        while -math.log(math.cosh(r)) + n * log_t - 0.5 * math.log(math.pi * n / 2) > math.log(tail):
            n += 2
    shift = abs(initial.alpha) + 3 * math.sqrt(2 * initial.nbar + 1)
    return int(n + 4 * shift**2 + 20)


def measure_step(state: np.ndarray, kp: KrausPair, rng: np.random.Generator) -> StepResult:
    """One measurement repetition in the Fock basis.

    Draws one uniform variate ``u`` and returns ``r = +1`` when ``u < P_e``.
    Works for pure states (vectors) and density matrices.
    """
    u = rng.random()
    mixed = state.ndim == 2
    if mixed:
        post_e = kp.d_e @ state @ kp.d_e.conj().T
        post_g = kp.d_g @ state @ kp.d_g.conj().T
        p_e, p_g = np.trace(post_e).real, np.trace(post_g).real
    else:
        post_e, post_g = kp.d_e @ state, kp.d_g @ state
        p_e, p_g = np.vdot(post_e, post_e).real, np.vdot(post_g, post_g).real
    if abs(p_e + p_g - 1.0) > 1e-8:
        raise NumericError(f"P_g + P_e = {p_e + p_g:.12g}; Kraus pair is not complete on this state")
    result = 1 if u < p_e else -1
    p_r, post = (p_e, post_e) if result > 0 else (p_g, post_g)
    if p_r < 1e-14:
        raise NumericError("drawn branch has vanishing probability")
    post = post / p_r if mixed else post / math.sqrt(p_r)
    return StepResult(result, post, float(p_e))


def run_trajectory(params: ProtocolParams, index: int = 0) -> TrajectoryRecord:
    """Simulate ``params.steps`` repetitions with Born-rule sampling.

    The random stream is ``(params.seed, index)``; the same pair always gives
    the same record. Moments of ``I`` are recorded after every step.
    """
    rng = _rng.stream(params.seed, index)
    cfg = params.hilbert
    lam, vecs = quadrature_eigensystem(cfg)
    d_g, d_e = kraus_amplitudes(params.phi, lam)
    w_e = np.abs(d_e) ** 2
    lam2 = lam**2
    state0 = params.initial.prepare(cfg)
    pure = state0.ndim == 1
    if pure:
        c = vecs.conj().T @ state0
        weights = np.abs(c) ** 2
    else:
        c = vecs.conj().T @ state0 @ vecs
        weights = np.real(np.diag(c)).copy()

    s = params.steps
    results = np.empty(s, dtype=np.int8)
    means = np.empty(s)
    variances = np.empty(s)
    p_exc = np.empty(s)
    u = rng.random(s)
    for k in range(s):
        p_e = float(np.dot(w_e, weights))
        p_exc[k] = p_e
        if u[k] < p_e:
            results[k], amp = 1, d_e
        else:
            results[k], amp = -1, d_g
        if pure:
            c = c * amp
            weights = np.abs(c) ** 2
        else:
            c = (amp[:, None] * c) * amp.conj()[None, :]
            weights = np.real(np.diag(c)).copy()
        wsum = weights.sum()
        weights /= wsum
        c /= math.sqrt(wsum) if pure else wsum
        m = float(np.dot(lam, weights))
        means[k] = m
        variances[k] = float(np.dot(lam2, weights)) - m * m

    final = vecs @ c if pure else vecs @ c @ vecs.conj().T
    check_truncation(final, what="final conditioned state")
    return TrajectoryRecord(results, means, variances, p_exc, final)


@dataclass
class EnsembleStatistics:
    final_means: np.ndarray
    final_variances: np.ndarray
    readout_averages: np.ndarray
    hist_mean: tuple[np.ndarray, np.ndarray]
    hist_var: tuple[np.ndarray, np.ndarray]
    readout_correlation: float
    records: list[TrajectoryRecord] | None = None


def ensemble_statistics(
    params: ProtocolParams,
    n_traj: int,
    last: int = 50,
    bins: int = 30,
    workers: int | None = None,
    keep_records: bool = False,
) -> EnsembleStatistics:
    """Run ``n_traj`` independent trajectories and summarize their endpoints.

    Trajectory ``i`` uses stream ``(params.seed, i)``, so the output does not
    depend on ``workers``. ``readout_averages`` is the mean of the last
    ``last`` results of each trajectory.
    """
    if n_traj < 1:
        raise ConfigurationError("n_traj must be >= 1")
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda i: run_trajectory(params, i), range(n_traj)))
    else:
        records = [run_trajectory(params, i) for i in range(n_traj)]
    means = np.array([r.means[-1] for r in records])
    variances = np.array([r.variances[-1] for r in records])
    tail = min(last, params.steps)
    readout = np.array([r.results[-tail:].mean() for r in records])
    if n_traj > 1 and np.std(readout) > 0 and np.std(means) > 0:
        corr = float(np.corrcoef(readout, means)[0, 1])
    else:
        corr = float("nan")
    return EnsembleStatistics(
        final_means=means,
        final_variances=variances,
        readout_averages=readout,
        hist_mean=np.histogram(means, bins=bins),
        hist_var=np.histogram(variances, bins=bins),
        readout_correlation=corr,
        records=records if keep_records else None,
    )


class ConditionedState(NamedTuple):
    state: np.ndarray
    prob: float
    log_prob: float


def apply_record(results, initial: np.ndarray, kp: KrausPair) -> ConditionedState:
    """Apply the Kraus operators for ``results`` (sequence of +-1) to a pure state.

    Returns the normalized state and the probability of the record.
    """
    v = np.array(initial, dtype=complex)
    log_prob = 0.0
    for r in results:
        v = kp.operator(r) @ v
        nrm2 = np.vdot(v, v).real
        if nrm2 <= 0:
            raise UnderflowError("record has zero probability")
        log_prob += math.log(nrm2)
        v /= math.sqrt(nrm2)
    if log_prob < LOG_UNDERFLOW:
        raise UnderflowError(f"record probability underflows; log_prob = {log_prob:.6g}")
    check_truncation(v, what="conditioned state")
    return ConditionedState(v, math.exp(log_prob), log_prob)


def conditioned_state(s: int, n: int, alpha0: complex, phi: float, cfg: HilbertConfig) -> ConditionedState:
    """Brute-force ``D_e^n D_g^(s-n) |alpha0>`` in the truncated Fock basis.

    ``prob`` is the probability of one particular record with ``n`` results
    ``+1`` (any ordering gives the same value).
    """
    if not 0 <= n <= s:
        raise ConfigurationError("need 0 <= n <= s")
    kp = kraus_pair(phi, cfg)
    record = [-1] * (s - n) + [1] * n
    return apply_record(record, coherent_state(alpha0, cfg), kp)


def quadrature_moments(state: np.ndarray, cfg: HilbertConfig) -> tuple[float, float]:
    """``(<I>, Var I)`` of a normalized pure state or density matrix."""
    ops = build_operators(cfg)
    if state.ndim == 1:
        iv = ops.I @ state
        m1 = np.vdot(state, iv).real
        m2 = np.vdot(iv, iv).real
    else:
        m1 = np.trace(ops.I @ state).real
        m2 = np.trace(ops.I @ ops.I @ state).real
    return float(m1), float(m2 - m1 * m1)

"""Closed-form statistics of measurement records and checks of their derivation.

For ``s`` repetitions with ``n`` results ``+1`` starting from a coherent state,
the record probability and the first two moments of ``I`` are single sums over
``q = 0..2s``::

    P      = i^(s-2n) 4^-s  sum_q i^q c_q f_q
    <I>  P = i^(s-2n) 4^-s  sum_q i^q c_q 2 z_q f_q
    <I^2>P = i^(s-2n) 4^-s  sum_q i^q c_q (1 + 4 z_q^2) f_q

with ``z_q = Re(alpha0) + i phi (s - q)``, ``f_q = exp(2 z_q^2 - 2 Re(alpha0)^2)``
and exact integers ``c_q = [x^q] (1 - x)^(2(s-n)) (1 + x)^(2n)``. Only the real
part of ``alpha0`` enters.

The terms alternate in sign for ``n != s/2`` and their magnitudes exceed the
result by up to ``~2^s``; every evaluation records the condition number
``sum |term| / |sum|`` and switches to ``mpmath`` when double precision cannot
resolve it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np

from .errors import ConfigurationError, PrecisionError
from .fockspace import (
    HilbertConfig,
    coherent_state,
    displacement_operator,
    fidelity,
    squeeze_operator,
)

DOUBLE_CONDITION_LIMIT = 1e12
AUTO_CONDITION_LIMIT = 1e4
IMAG_TOL = 1e-8


@lru_cache(maxsize=512)
def coefficient_vector(s: int, n: int) -> tuple[int, ...]:
    """Exact ``c_q``, ``q = 0..2s``: coefficients of ``(1-x)^(2(s-n)) (1+x)^(2n)``."""
    if not 0 <= n <= s:
        raise ConfigurationError("need 0 <= n <= s")
    m = 2 * (s - n)
    left = [(-1) ** k * math.comb(m, k) for k in range(m + 1)]
    right = [math.comb(2 * n, l) for l in range(2 * n + 1)]
    out = [0] * (2 * s + 1)
    for k, ck in enumerate(left):
        for l, cl in enumerate(right):
            out[k + l] += ck * cl
    return tuple(out)


@dataclass(frozen=True)
class OutcomeStatistics:
    s: int
    n: int
    phi: float
    re_alpha0: float
    prob: float
    log_prob: float
    mean_I: float
    mean_I2: float
    variance: float
    condition: float = 1.0
    precision: str = "double"


def _parse_precision(precision) -> tuple[str, int | None]:
    if precision in (None, "auto"):
        return "auto", None
    if precision == "double":
        return "double", None
    if isinstance(precision, str) and precision.startswith("extended"):
        inner = precision[len("extended"):].strip("():")
        return "extended", int(inner) if inner else None
    if isinstance(precision, int):
        return "extended", precision
    raise ConfigurationError(f"unknown precision mode {precision!r}")


def _phase_power(k: int) -> complex:
    return (1, 1j, -1, -1j)[k % 4]


def _sums_double(s, n, phi, x0):
    c = np.array(coefficient_vector(s, n), dtype=float)
    q = np.arange(2 * s + 1)
    m = s - q
    z = x0 + 1j * phi * m
    f = np.exp(4j * phi * m * x0 - 2 * (phi * m) ** 2)
    t0 = np.array([_phase_power(k) for k in q]) * c * f
    t1 = 2 * z * t0
    t2 = (1 + 4 * z * z) * t0
    sums = t0.sum(), t1.sum(), t2.sum()
    scale = np.abs(t0).sum(), np.abs(t1).sum(), np.abs(t2).sum()
    return sums, scale


def _sums_extended(s, n, phi, x0, bits):
    c = coefficient_vector(s, n)
    with mpmath.workprec(bits):
        phi_m = mpmath.mpf(phi)
        x0_m = mpmath.mpf(x0)
        s0 = s1 = s2 = mpmath.mpc(0)
        a0 = a1 = a2 = mpmath.mpf(0)
        for q, cq in enumerate(c):
            if cq == 0:
                continue
            m = s - q
            z = mpmath.mpc(x0_m, phi_m * m)
            f = mpmath.exp(mpmath.mpc(-2 * (phi_m * m) ** 2, 4 * phi_m * m * x0_m))
            t0 = mpmath.mpc(_phase_power(q)) * cq * f
            t1 = 2 * z * t0
            t2 = (1 + 4 * z * z) * t0
            s0 += t0
            s1 += t1
            s2 += t2
            a0 += abs(t0)
            a1 += abs(t1)
            a2 += abs(t2)
        return (s0, s1, s2), (a0, a1, a2)


def _conditions(sums, scale) -> tuple[float, float]:
    """Condition numbers of the probability sum and of the two moment sums.

    The moment figure is an absolute one (moments of ``I`` are O(1)).
    """
    denom = abs(sums[0])
    if denom == 0:
        return math.inf, math.inf
    second = max(1.0, abs(sums[2] / sums[0]))
    return float(scale[0] / denom), float(max(scale[1], scale[2] / second) / denom)


def _check_real(value, what: str, floor: float = 0.0) -> None:
    value = complex(value)
    if abs(value.imag) > IMAG_TOL * max(abs(value), floor):
        raise PrecisionError(f"{what} has imaginary residue {value.imag:.3e}; increase precision")


def outcome_statistics(s: int, n: int, phi: float, re_alpha0: float = 0.0, precision="auto") -> OutcomeStatistics:
    """Probability of one record with ``n`` of ``s`` results ``+1`` and the moments of ``I``.

    ``precision`` is ``"double"``, ``"extended"``/``"extended(bits)"``/an int
    number of bits, or ``"auto"`` (double if well conditioned, otherwise
    ``4s + 64`` bits). ``"double"`` raises :class:`PrecisionError` when the
    condition number reaches ``1e12``. ``condition`` in the result is the
    probability sum's ``sum |term| / |sum|``.
    """
    if s < 0 or not 0 <= n <= s:
        raise ConfigurationError("need 0 <= n <= s")
    if phi < 0:
        raise ConfigurationError("phi must be non-negative")
    mode, bits = _parse_precision(precision)
    x0 = float(np.real(re_alpha0))
    pref_phase = _phase_power(s - 2 * n)

    if mode in ("double", "auto"):
        sums, scale = _sums_double(s, n, phi, x0)
        cond_p, cond_m = _conditions(sums, scale)
        worst = max(cond_p, cond_m)
        if mode == "double" and worst >= DOUBLE_CONDITION_LIMIT:
            raise PrecisionError(
                f"condition number {worst:.3e} too large for double precision; retry with extended precision"
            )
        if mode == "double" or worst < AUTO_CONDITION_LIMIT:
            p_sum = pref_phase * sums[0]
            mean, mean2 = sums[1] / sums[0], sums[2] / sums[0]
            _check_real(p_sum, "probability")
            _check_real(mean, "mean", floor=1.0)
            _check_real(mean2, "second moment", floor=1.0)
            if p_sum.real <= 0:
                raise PrecisionError("non-positive probability; retry with extended precision")
            log_prob = math.log(p_sum.real) - 2 * s * math.log(2)
            mean, mean2 = mean.real, mean2.real
            return OutcomeStatistics(
                s, n, float(phi), x0, math.exp(log_prob), log_prob, mean, mean2, mean2 - mean**2, cond_p, "double"
            )

    bits = bits or 4 * s + 64
    sums, scale = _sums_extended(s, n, phi, x0, bits)
    with mpmath.workprec(bits):
        cond_p, cond_m = _conditions(sums, scale)
        if max(cond_p, cond_m) * 2.0 ** (-bits) > 1e-15:
            raise PrecisionError(f"condition number {max(cond_p, cond_m):.3e} exceeds what {bits} bits resolve")
        p_sum = mpmath.mpc(pref_phase) * sums[0]
        mean = sums[1] / sums[0]
        mean2 = sums[2] / sums[0]
        _check_real(p_sum / abs(p_sum), "probability")
        _check_real(mean, "mean", floor=1.0)
        _check_real(mean2, "second moment", floor=1.0)
        if p_sum.real <= 0:
            raise PrecisionError("non-positive probability; increase precision")
        log_prob = float(mpmath.log(p_sum.real) - 2 * s * mpmath.log(2))
        variance = float(mean2.real - mean.real**2)
        return OutcomeStatistics(
            s, n, float(phi), x0, math.exp(log_prob), log_prob, float(mean.real), float(mean2.real), variance,
            cond_p, f"extended({bits})",
        )


def variance_approx(phi, s):
    """Large-``s`` quadrature variance ``1 / (1 + 4 phi^2 s)`` (vectorized)."""
    return 1.0 / (1.0 + 4.0 * np.square(phi) * np.asarray(s, dtype=float))


@dataclass
class OutcomeDistribution:
    """Per-``n`` statistics for all records of length ``s``.

    ``weight[n] = C(s, n) * prob[n]`` is the probability of observing ``n``
    results ``+1`` in any order.
    """

    s: int
    phi: float
    re_alpha0: float
    n: np.ndarray
    weight: np.ndarray
    prob: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    stats: list[OutcomeStatistics] = field(repr=False, default_factory=list)

    @property
    def weighted_variance(self) -> float:
        return float(np.dot(self.weight, self.variance) / self.weight.sum())

    @property
    def most_likely_variance(self) -> float:
        return float(self.variance[int(np.argmax(self.weight))])


def outcome_distribution(s: int, phi: float, re_alpha0: float = 0.0, precision="auto") -> OutcomeDistribution:
    if s < 1:
        raise ConfigurationError("s must be >= 1")
    stats = [outcome_statistics(s, n, phi, re_alpha0, precision) for n in range(s + 1)]
    ns = np.arange(s + 1)
    log_w = np.array([math.log(math.comb(s, int(k))) + st.log_prob for k, st in zip(ns, stats)])
    return OutcomeDistribution(
        s=s,
        phi=float(phi),
        re_alpha0=float(re_alpha0),
        n=ns,
        weight=np.exp(log_w),
        prob=np.array([st.prob for st in stats]),
        mean=np.array([st.mean_I for st in stats]),
        variance=np.array([st.variance for st in stats]),
        stats=stats,
    )


def target_amplitude(mean_I: float, convention: str = "half") -> float:
    """Displacement amplitude for the squeezed comparison state.

    ``"half"`` uses ``mean_I / 2`` so the target has the same ``<I>``;
    ``"literal"`` uses ``mean_I`` itself, whose ``<I>`` is twice as large.
    """
    if convention == "half":
        return 0.5 * mean_I
    if convention == "literal":
        return mean_I
    raise ConfigurationError(f"unknown displacement convention {convention!r}")


def squeezed_target_fidelity(
    s: int,
    n: int,
    phi: float,
    cfg: HilbertConfig | None = None,
    convention: str = "half",
    re_alpha0: float = 0.0,
) -> float:
    """Overlap of the conditioned state with ``D(beta) S(-log dI) |0>``.

    The record starts from the coherent state ``|re_alpha0>``.

    The conditioned state and its moments come from the Fock-space oracle; the
    target has the same ``Var(I)`` and, with the default convention, the same ``<I>``.
    """
    from .measurement import InitialState, apply_record, kraus_pair, quadrature_moments, suggested_dim

    cfg = cfg or HilbertConfig(suggested_dim(phi, s, InitialState.coherent(re_alpha0)))
    kp = kraus_pair(phi, cfg)
    cond = apply_record([-1] * (s - n) + [1] * n, coherent_state(re_alpha0, cfg), kp)
    mean, var = quadrature_moments(cond.state, cfg)
    squeezed_vac = squeeze_operator(-math.log(math.sqrt(var)), cfg)[:, 0]
    target = displacement_operator(target_amplitude(mean, convention), cfg) @ squeezed_vac
    # conditioned states carry a global phase; fidelity ignores it
    return fidelity(cond.state, target)


@dataclass
class CheckResult:
    name: str
    passed: bool | None
    value: float
    tolerance: float | None
    detail: str = ""

    @property
    def status(self) -> str:
        return {True: "PASS", False: "FAIL", None: "INFO"}[self.passed]

    def line(self) -> str:
        tol = "" if self.tolerance is None else f" (tol {self.tolerance:g})"
        return f"[{self.status}] {self.name}: {self.value:.6g}{tol} {self.detail}".rstrip()


@dataclass
class DerivationReport:
    s: int
    phi: float
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def __str__(self) -> str:
        return "\n".join(c.line() for c in self.checks)


def _prob_moments_mp(s, n, phi, x0, bits):
    """``(P, <I>, <I^2>)`` as mpmath numbers at ``bits`` precision."""
    sums, _ = _sums_extended(s, n, phi, x0, bits)
    with mpmath.workprec(bits):
        p = (mpmath.mpc(_phase_power(s - 2 * n)) * sums[0]).real / mpmath.mpf(4) ** s
        return p, (sums[1] / sums[0]).real, (sums[2] / sums[0]).real


def recurrence_residual(s: int, n: int, phi: float, re_alpha0: float = 0.0, h: float = 1e-5) -> float:
    """Relative residual of ``(1/P) d(phi P)/dphi = <I^2> - 2 Re(alpha0) <I>``.

    The derivative is a central difference with step ``h``; one Richardson
    extrapolation (``h`` and ``h/2``) is applied if the plain difference misses 1e-6.
    """
    bits = 4 * s + 128
    p, m1, m2 = _prob_moments_mp(s, n, phi, re_alpha0, bits)
    with mpmath.workprec(bits):
        rhs = m2 - 2 * mpmath.mpf(re_alpha0) * m1

        def deriv(step):
            step = mpmath.mpf(step)
            up = (phi + step) * _prob_moments_mp(s, n, phi + step, re_alpha0, bits)[0]
            dn = (phi - step) * _prob_moments_mp(s, n, phi - step, re_alpha0, bits)[0]
            return (up - dn) / (2 * step)

        d1 = deriv(h)
        res = abs(d1 / p - rhs) / abs(rhs)
        if res > 1e-6:
            d2 = deriv(h / 2)
            res = abs(((4 * d2 - d1) / 3) / p - rhs) / abs(rhs)
        return float(res)


def r_function(s: int, q: int) -> Fraction:
    """Exact ``R(q) = i^q 4^-s sum_k (-1)^k C(s,k) C(s,q-k)`` (real for the even ``q`` where it is non-zero)."""
    total = sum((-1) ** k * math.comb(s, k) * math.comb(s, q - k) for k in range(max(0, q - s), min(q, s) + 1))
    if q % 2:
        if total != 0:
            raise ArithmeticError("R(q) should vanish for odd q")
        return Fraction(0)
    return Fraction((-1) ** (q // 2) * total, 4**s)


def derivation_checks(s: int, phi: float) -> DerivationReport:
    """Machine-check each step from the double sums to ``1/(1 + 4 phi^2 s)``.

    Legs: (a) derivative identity via finite differences for every ``n``;
    (b) ``R(s-a) = C(s, (s+a)/2) / 4^s`` exactly, plus symmetry and the peak
    at ``q = s``; (b') ``R`` matches the ``n = s/2`` coefficient vector;
    normal and theta-function approximations (informational);
    (c) ``P(s/2, s/2)`` against ``2^-s / sqrt(1 + 4 phi^2 s)``;
    (d) ``Var(I)`` at ``n = s/2`` against the variance law;
    (e) all ``n = s/2`` vacuum terms are non-negative (condition number 1);
    fidelity of an off-centre record under both displacement conventions.
    """
    if s < 2 or s % 2:
        raise ConfigurationError("derivation checks need an even s >= 2")
    checks: list[CheckResult] = []
    half = s // 2

    worst = max(recurrence_residual(s, n, phi) for n in range(s + 1))
    worst_shift = max(recurrence_residual(s, n, phi, 0.4) for n in (0, half, s))
    checks.append(CheckResult("recurrence (alpha0=0, all n)", worst < 1e-6, worst, 1e-6))
    checks.append(CheckResult("recurrence (Re alpha0=0.4)", worst_shift < 1e-6, worst_shift, 1e-6))

    exact = all(
        r_function(s, s - a) == Fraction(math.comb(s, (s + a) // 2), 4**s)
        for a in range(-s, s + 1)
        if (s + a) % 2 == 0
    )
    checks.append(CheckResult("R(s-a) = C(s,(s+a)/2)/4^s", exact, float(exact), None, "exact integers"))
    values = [r_function(s, q) for q in range(2 * s + 1)]
    symmetric = all(values[s - a] == values[s + a] for a in range(s + 1))
    peak = max(range(2 * s + 1), key=lambda q: values[q]) == s
    checks.append(CheckResult("R symmetric about q=s with maximum there", symmetric and peak, float(symmetric and peak), None))
    coeff = coefficient_vector(s, half)
    match = all(Fraction(int(_phase_power(q).real) * coeff[q], 4**s) == values[q] for q in range(2 * s + 1))
    checks.append(CheckResult("R(q) = i^q c_q / 4^s at n=s/2", match, float(match), None))

    normal_dev = max(
        abs(math.sqrt(2 / (s * math.pi)) * math.exp(-a * a / (2 * s)) * 2.0**-s / float(values[s - a]) - 1)
        for a in range(-int(math.isqrt(s)), int(math.isqrt(s)) + 1)
        if (s + a) % 2 == 0
    )
    checks.append(CheckResult("normal approximation of R, |a| <= sqrt(s)", None, normal_dev, None, "max rel. dev."))
    beta = 2 / s + 8 * phi**2
    theta = sum(math.exp(-beta * b * b) for b in range(-half, half + 1))
    theta_approx = math.sqrt(s * math.pi / 2) / math.sqrt(1 + 4 * phi**2 * s)
    checks.append(CheckResult("theta-sum approximation", None, abs(theta / theta_approx - 1), None, "rel. dev."))

    st = outcome_statistics(s, half, phi, 0.0, precision=4 * s + 64)
    applicable = s >= 32 and phi * math.sqrt(s) >= 0.5
    dev_p = abs(st.prob * 2.0**s * math.sqrt(1 + 4 * phi**2 * s) - 1)
    checks.append(
        CheckResult("P(s/2,s/2) vs 2^-s/sqrt(1+4 phi^2 s)", (dev_p < 0.02) if applicable else None, dev_p, 0.02 if applicable else None)
    )
    dev_v = abs(st.variance / float(variance_approx(phi, s)) - 1)
    checks.append(
        CheckResult("Var(s/2,s/2) vs 1/(1+4 phi^2 s)", (dev_v < 0.02) if applicable else None, dev_v, 0.02 if applicable else None)
    )
    checks.append(CheckResult("n=s/2 vacuum sum has no cancellation", st.condition == 1.0 or abs(st.condition - 1) < 1e-12, st.condition, None, "condition number"))

    n_off = min(s, half + max(1, s // 8))
    fid_half = squeezed_target_fidelity(s, n_off, phi, convention="half")
    fid_lit = squeezed_target_fidelity(s, n_off, phi, convention="literal")
    checks.append(CheckResult(f"fidelity n={n_off}, beta=<I>/2", None, fid_half, None))
    checks.append(CheckResult(f"fidelity n={n_off}, beta=<I>", None, fid_lit, None))
    return DerivationReport(s, float(phi), checks)

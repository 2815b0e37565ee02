import math

import numpy as np
import pytest

from qsqueeze import _rng, analytic
from qsqueeze.dephasing import (
    CorrelationMatrix,
    NoiseSpectrum,
    ProtocolTiming,
    coefficient_table,
    correlation_matrix,
    cpmg_filter,
    dephased_density_matrix,
    diagonal_approx,
    noisy_variance_curve,
    synthesize_noise,
)
from qsqueeze.errors import ConfigurationError, ContractError
from qsqueeze.fockspace import HilbertConfig, projector, purity, trace_distance
from qsqueeze.measurement import conditioned_state

OMEGA_R = 2 * math.pi * 200e6
PAPER = ProtocolTiming(50, OMEGA_R)
A_PAPER = 1.2e7**2
CFG = HilbertConfig(40)


def test_timing_derives_and_checks_t_e():
    assert PAPER.t_e == pytest.approx(1.25e-7, rel=1e-12)
    with pytest.raises(ConfigurationError):
        ProtocolTiming(50, OMEGA_R, t_e=1.3e-7)
    assert PAPER.phi(1e6) == pytest.approx(2 / math.pi * 1e6 * 1.25e-7)
    np.testing.assert_allclose(PAPER.pulse_times()[:2] * OMEGA_R, [math.pi / 2, 3 * math.pi / 2])


def test_filter_vanishes_at_zero_for_even_pulses():
    for n_p in (2, 8, 50):
        tm = ProtocolTiming(n_p, OMEGA_R)
        assert abs(cpmg_filter(tm)(np.array([0.0]))[0]) < 1e-12 * tm.t_e


def test_filter_parseval():
    tm = ProtocolTiming(4, 1.0)
    chi = cpmg_filter(tm)

    def band(top):
        w = np.linspace(0, top, 400_001)
        return 2 * np.trapezoid(np.abs(chi(w)) ** 2, w)

    # the |chi~|^2 tail falls as 1/omega^2, so the truncation error is c / top
    total = (4 * band(2000.0) - band(500.0)) / 3
    assert total == pytest.approx(2 * math.pi * tm.t_e, rel=1e-4)


def test_filter_peak_at_oscillator_frequency():
    w = np.linspace(1e-3, 10, 100_001) * OMEGA_R
    peak = w[np.argmax(np.abs(cpmg_filter(PAPER)(w)))]
    assert abs(peak / OMEGA_R - 1) < 0.02


def test_closed_form_values():
    spec = NoiseSpectrum(A_PAPER, 1.0, 1e12)
    base = diagonal_approx(spec, PAPER)
    assert base == pytest.approx(0.0191, abs=5e-5)
    strong = diagonal_approx(NoiseSpectrum(2.4e7**2, 1.0, 1e12), PAPER)
    assert strong == pytest.approx(4 * base, rel=1e-12)
    # 0.0765 is four times the rounded 0.0191
    assert strong == pytest.approx(0.0765, rel=5e-3)
    doubled = diagonal_approx(spec, ProtocolTiming(100, OMEGA_R))
    assert doubled == pytest.approx(2 * base, rel=1e-12)


def test_flux_noise_converter():
    a = NoiseSpectrum.amplitude_from_flux_noise(1e-6, 1.0, 1.0, 300e-9)
    assert math.sqrt(a) == pytest.approx(1.18e7, rel=0.01)
    eps = 2 * math.pi * math.sqrt(10.8**2 - 4**2) * 1e9
    partial = NoiseSpectrum.amplitude_from_flux_noise(1e-6, eps, 2 * math.pi * 10.8e9, 300e-9)
    assert partial == pytest.approx(a * (eps / (2 * math.pi * 10.8e9)) ** 2)


def test_spectrum_validation():
    with pytest.raises(ConfigurationError):
        NoiseSpectrum(-1.0, 1.0, 2.0)
    with pytest.raises(ConfigurationError):
        NoiseSpectrum(1.0, 2.0, 1.0)
    spec = NoiseSpectrum(3.0, 1.0, 10.0)
    np.testing.assert_allclose(spec.psd([-2.0, 0.5, 5.0, 11.0]), [1.5, 0.0, 0.6, 0.0])


def test_correlation_matrix_small_block_count():
    spec = NoiseSpectrum.for_protocol(A_PAPER, PAPER, 18)
    w = correlation_matrix(spec, PAPER, 2)
    assert abs(w.diagonal[0] / 0.0191 - 1) < 0.15
    assert np.all(np.linalg.eigvalsh(w.w) >= -1e-15)
    assert w.max_offdiag_ratio() < 0.5
    full = correlation_matrix(spec, PAPER, 2, phase_factor=1.0)
    np.testing.assert_allclose(full.w, 4 * w.w, rtol=1e-10)
    zero = correlation_matrix(NoiseSpectrum(0.0, spec.omega_min, spec.omega_max), PAPER, 3)
    np.testing.assert_array_equal(zero.w, np.zeros((3, 3)))


def test_correlation_matrix_contracts():
    with pytest.raises(ContractError):
        CorrelationMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ContractError):
        CorrelationMatrix(np.array([[1.0, 0.1], [0.0, 1.0]]))
    cm = CorrelationMatrix(np.array([[2.0, 0.5], [0.5, 1.0]]))
    assert cm.max_offdiag_ratio() == pytest.approx(0.5)
    assert cm.diagonal_part().is_diagonal()


def test_zero_noise_trajectory():
    spec = NoiseSpectrum(0.0, 1.0, 100.0)
    tr = synthesize_noise(spec, 2 * math.pi / 0.5, _rng.stream(0))
    assert np.all(tr.coefficients == 0)
    np.testing.assert_array_equal(tr(np.linspace(0, 3, 7)), 0)


def test_grid_too_coarse():
    spec = NoiseSpectrum(1.0, 1.0, 100.0)
    with pytest.raises(ConfigurationError, match="grid too coarse"):
        synthesize_noise(spec, 2 * math.pi / 2.0, _rng.stream(0))


def test_on_grid_matches_direct_sum():
    spec = NoiseSpectrum(2.0, 1.0, 50.0)
    tr = synthesize_noise(spec, 2 * math.pi / 0.5, _rng.stream(2))
    t, x = tr.on_grid(512)
    np.testing.assert_allclose(x, tr(t), atol=1e-10 * np.max(np.abs(x)))
    full = tr.full_coefficients()
    assert full.size == 2 * tr.coefficients.size + 1
    np.testing.assert_allclose(full[::-1], full.conj())


def test_periodogram_slope_and_parseval():
    spec = NoiseSpectrum(2.0, 1.0, 1000.0)
    spacing = 0.5
    t_bar = 2 * math.pi / spacing
    m, n_traj = 4096, 10_000
    acc = np.zeros(m // 2 + 1)
    at_zero = np.empty(n_traj)
    for k in range(n_traj):
        tr = synthesize_noise(spec, t_bar, _rng.stream(5, k))
        _, x = tr.on_grid(m)
        at_zero[k] = x[0]
        acc += np.abs(np.fft.rfft(x) / m) ** 2
    acc /= n_traj
    omega = spacing * np.arange(m // 2 + 1)
    sel = (omega >= 10 * spec.omega_min) & (omega <= spec.omega_max / 10)
    slope = np.polyfit(np.log(omega[sel]), np.log(acc[sel]), 1)[0]
    assert abs(slope + 1) < 0.1
    grid = spacing * np.arange(1, int(spec.omega_max / spacing) + 1)
    expected = 2 * np.sum(spacing * spec.psd(grid))
    # the sample variance of a Gaussian has standard error var * sqrt(2 / N)
    assert abs(at_zero.var() - expected) < 4 * expected * math.sqrt(2 / n_traj)


def test_block_phase_covariance_matches_integral():
    tm = ProtocolTiming(4, 1.0)
    spec = NoiseSpectrum(1e-3, 0.01, 20.0)
    n_traj = 2000
    phases = np.array([
        synthesize_noise(spec, 2 * math.pi / 0.005, _rng.stream(1, k)).block_phases(tm, 2)
        for k in range(n_traj)
    ])
    w = correlation_matrix(spec, tm, 2).w
    emp = np.cov(phases.T)
    tol = 4 * w[0, 0] * math.sqrt(2 / n_traj)
    assert abs(emp[0, 0] - w[0, 0]) < tol
    assert abs(emp[1, 1] - w[1, 1]) < tol
    assert abs(emp[0, 1] - w[0, 1]) < tol


def test_no_noise_gives_pure_conditioned_state():
    r = [1, -1, -1, 1, 1]
    st = dephased_density_matrix(r, 0.159, 0.0, cfg=CFG)
    pure = conditioned_state(5, 3, 0, 0.159, CFG)
    assert purity(st.rho) == pytest.approx(1.0, abs=1e-10)
    assert trace_distance(st.rho, projector(pure.state)) < 1e-10
    assert st.prob == pytest.approx(pure.prob, rel=1e-10)


def test_noise_mixes_state():
    st = dephased_density_matrix([1, -1, 1], 0.159, [0.0, 0.02, 0.0], cfg=CFG)
    assert purity(st.rho) < 1 - 1e-6


def test_exact_matches_brute_force():
    rng = np.random.default_rng(4)
    for s in (3, 6):
        r = rng.choice([-1, 1], size=s)
        w_diag = rng.uniform(0, 0.05, size=s)
        a = dephased_density_matrix(r, 0.159, w_diag, alpha0=0.2, cfg=CFG, method="exact")
        b = dephased_density_matrix(r, 0.159, w_diag, alpha0=0.2, cfg=CFG, method="brute")
        assert trace_distance(a.rho, b.rho) < 1e-12
        assert a.prob == pytest.approx(b.prob, rel=1e-10)


def test_brute_force_matches_sampling_with_correlations():
    w = np.array([[0.03, 0.01, 0.0], [0.01, 0.03, 0.01], [0.0, 0.01, 0.03]])
    r = [1, 1, -1]
    b = dephased_density_matrix(r, 0.2, w, cfg=CFG, method="brute")
    mc = dephased_density_matrix(r, 0.2, w, cfg=CFG, method="monte_carlo", n_samples=40_000, rng=_rng.stream(8))
    assert trace_distance(b.rho, mc.rho) < 5e-3
    with pytest.raises(ConfigurationError):
        dephased_density_matrix(r, 0.2, w, cfg=CFG, method="exact")
    with pytest.raises(ConfigurationError):
        dephased_density_matrix(r, 0.2, w, cfg=CFG)


def test_scalar_noise_is_order_free():
    a = dephased_density_matrix([1, 1, -1, -1], 0.159, 0.02, cfg=CFG)
    b = dephased_density_matrix([-1, 1, -1, 1], 0.159, 0.02, cfg=CFG)
    assert trace_distance(a.rho, b.rho) < 1e-12


def test_bad_inputs():
    with pytest.raises(ContractError):
        dephased_density_matrix([1, -1], 0.159, np.array([[0.1, 0.2], [0.2, 0.1]]), cfg=CFG)
    with pytest.raises(ConfigurationError):
        dephased_density_matrix([1, 0], 0.159, 0.0, cfg=CFG)
    with pytest.raises(ConfigurationError):
        dephased_density_matrix([1, -1], 0.159, np.zeros((3, 3)), cfg=CFG)


def test_coefficient_table_without_noise():
    # W = 0 turns each step into (1 + i^r x)(1 + i^-r y), a product of two binomials
    c = coefficient_table([1, 1, -1], 0.0)
    x = np.convolve(np.convolve([1, 1j], [1, 1j]), [1, -1j])
    np.testing.assert_allclose(c, np.outer(x, x.conj()), atol=1e-14)


def test_noiseless_curve_identical():
    curve = noisy_variance_curve(6, 0.159, 0.0)
    np.testing.assert_allclose(curve.noisy_weighted, curve.noiseless_weighted, atol=1e-10)
    np.testing.assert_allclose(curve.degradation(), 0, atol=1e-10)
    ref = [analytic.outcome_distribution(s, 0.159).weighted_variance for s in range(1, 7)]
    np.testing.assert_allclose(curve.noiseless_weighted, ref, rtol=1e-12)


def test_noisy_curve_matches_exact_enumeration_at_zero_noise():
    # the enumeration path itself, forced on with a negligible W, agrees with the analytic sums
    curve = noisy_variance_curve(5, 0.159, 1e-14)
    np.testing.assert_allclose(curve.noisy_weighted, curve.noiseless_weighted, rtol=1e-8)
    noisy = noisy_variance_curve(5, 0.159, 0.05)
    assert np.all(noisy.degradation() > 0)

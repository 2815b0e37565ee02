import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qsqueeze import _rng
from qsqueeze.errors import ConfigurationError
from qsqueeze.fockspace import HilbertConfig, coherent_state, projector, thermal_state, vacuum
from qsqueeze.measurement import (
    InitialState,
    ProtocolParams,
    apply_record,
    conditioned_state,
    ensemble_statistics,
    kraus_amplitudes,
    kraus_pair,
    measure_step,
    quadrature_moments,
    run_trajectory,
    suggested_dim,
)

CFG40 = HilbertConfig(40)


@pytest.mark.parametrize("phi", [0.01, 0.08, 0.159, 0.3])
def test_povm_residuals(phi):
    kp = kraus_pair(phi, CFG40)
    assert kp.completeness_residual() < 1e-8
    assert kp.commutation_residual() < 1e-8


def test_small_phi_limit():
    kp = kraus_pair(1e-9, CFG40)
    psi = coherent_state(0.7 + 0.2j, CFG40)
    for op in (kp.d_g, kp.d_e):
        assert np.linalg.norm(op @ psi) ** 2 == pytest.approx(0.5, abs=1e-8)


def test_vacuum_is_unbiased():
    kp = kraus_pair(0.159, CFG40)
    step = measure_step(vacuum(CFG40), kp, _rng.stream(0))
    assert abs(step.p_e - 0.5) < 1e-10


def test_excited_result_shifts_quadrature_up():
    kp = kraus_pair(0.159, CFG40)
    post = kp.d_e @ vacuum(CFG40)
    post /= np.linalg.norm(post)
    mean, _ = quadrature_moments(post, CFG40)
    assert mean > 0


def test_excited_sign_three_levels():
    # on three levels D_e|0> is a short hand-checkable vector; <I> must still come out positive
    kp = kraus_pair(0.1, HilbertConfig(3))
    psi = kp.d_e[:, 0] / np.linalg.norm(kp.d_e[:, 0])
    mean, _ = quadrature_moments(psi, HilbertConfig(3))
    assert mean > 0


def test_kraus_operators_commute_on_state():
    kp = kraus_pair(0.159, CFG40)
    psi = coherent_state(0.3, CFG40)
    np.testing.assert_allclose(kp.d_g @ (kp.d_e @ psi), kp.d_e @ (kp.d_g @ psi), atol=1e-10)


def test_interleaved_records_agree():
    kp = kraus_pair(0.159, CFG40)
    psi = coherent_state(0.2, CFG40)
    a = apply_record([-1, 1, -1, 1], psi, kp)
    b = apply_record([-1, -1, 1, 1], psi, kp)
    np.testing.assert_allclose(a.state, b.state, atol=1e-10)
    assert a.prob == pytest.approx(b.prob, rel=1e-12)


def test_kraus_amplitudes_match_matrices():
    kp = kraus_pair(0.2, HilbertConfig(30))
    from qsqueeze.fockspace import quadrature_eigensystem

    lam, vecs = quadrature_eigensystem(30)
    d_g, d_e = kraus_amplitudes(0.2, lam)
    np.testing.assert_allclose((vecs * d_g) @ vecs.conj().T, kp.d_g, atol=1e-10)
    np.testing.assert_allclose((vecs * d_e) @ vecs.conj().T, kp.d_e, atol=1e-10)


def test_measure_step_mixed_matches_pure():
    kp = kraus_pair(0.159, CFG40)
    psi = coherent_state(0.4, CFG40)
    a = measure_step(psi, kp, _rng.stream(3))
    b = measure_step(projector(psi), kp, _rng.stream(3))
    assert a.result == b.result
    np.testing.assert_allclose(projector(a.post), b.post, atol=1e-12)


def test_small_phi_record_probability():
    for s in (1, 3, 6):
        for n in range(s + 1):
            assert conditioned_state(s, n, 0, 1e-7, CFG40).prob == pytest.approx(2.0**-s, rel=1e-8)


def test_params_validation():
    with pytest.raises(ConfigurationError):
        ProtocolParams(phi=-0.1, steps=3)
    with pytest.raises(ConfigurationError):
        ProtocolParams(phi=0.1, steps=0)
    with pytest.raises(ConfigurationError):
        InitialState("squeezed")


def test_single_step_unbiased_over_seeds():
    params = [ProtocolParams(phi=0.159, steps=1, seed=k, hilbert=HilbertConfig(20)) for k in range(2000)]
    ups = sum(run_trajectory(p).results[0] == 1 for p in params)
    # 3 sigma band of a fair coin
    assert abs(ups - 1000) < 3 * math.sqrt(2000) / 2


def test_trajectory_settles():
    phi, s = 0.159, 500
    cfg = HilbertConfig(suggested_dim(phi, s))
    for seed in range(3):
        rec = run_trajectory(ProtocolParams(phi=phi, steps=s, seed=seed, hilbert=cfg))
        assert 0.01 <= rec.variances[-1] <= 0.08
        assert np.std(rec.means[-100:]) < 0.2


def test_trajectory_matches_fock_update():
    params = ProtocolParams(phi=0.159, steps=12, seed=11, initial=InitialState.coherent(0.3), hilbert=CFG40)
    rec = run_trajectory(params)
    cond = apply_record(rec.results, coherent_state(0.3, CFG40), kraus_pair(0.159, CFG40))
    assert abs(np.vdot(cond.state, rec.final_state)) ** 2 == pytest.approx(1, abs=1e-10)
    mean, var = quadrature_moments(cond.state, CFG40)
    assert rec.means[-1] == pytest.approx(mean, abs=1e-9)
    assert rec.variances[-1] == pytest.approx(var, abs=1e-9)


def test_thermal_trajectory_matches_density_update():
    cfg = HilbertConfig(40)
    params = ProtocolParams(phi=0.2, steps=6, seed=5, initial=InitialState.thermal(0.8), hilbert=cfg)
    rec = run_trajectory(params)
    kp = kraus_pair(0.2, cfg)
    rho = thermal_state(0.8, cfg)
    for r in rec.results:
        op = kp.operator(int(r))
        rho = op @ rho @ op.conj().T
        rho /= np.trace(rho).real
    np.testing.assert_allclose(rec.final_state, rho, atol=1e-10)


def test_trajectory_determinism():
    p = ProtocolParams(phi=0.159, steps=50, seed=42, hilbert=HilbertConfig(suggested_dim(0.159, 50)))
    a, b = run_trajectory(p, 3), run_trajectory(p, 3)
    np.testing.assert_array_equal(a.results, b.results)
    np.testing.assert_array_equal(a.means, b.means)
    c = run_trajectory(p, 4)
    assert not np.array_equal(a.results, c.results)


def test_ensemble_independent_of_workers():
    p = ProtocolParams(phi=0.159, steps=40, seed=9, hilbert=HilbertConfig(suggested_dim(0.159, 40)))
    serial = ensemble_statistics(p, 12)
    threaded = ensemble_statistics(p, 12, workers=4)
    np.testing.assert_array_equal(serial.final_means, threaded.final_means)
    np.testing.assert_array_equal(serial.readout_averages, threaded.readout_averages)


def test_suggested_dim_grows():
    assert suggested_dim(0.159, 500) > suggested_dim(0.159, 50)
    assert suggested_dim(0.159, 10, InitialState.thermal(1.0)) > suggested_dim(0.159, 10)


@settings(max_examples=20, deadline=None)
@given(
    phi=st.floats(0.01, 0.4),
    results=st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=8),
    alpha=st.floats(-0.8, 0.8),
)
def test_record_probability_is_order_free(phi, results, alpha):
    cfg = HilbertConfig(45)
    kp = kraus_pair(phi, cfg)
    psi = coherent_state(alpha, cfg)
    a = apply_record(results, psi, kp)
    b = apply_record(sorted(results), psi, kp)
    assert a.log_prob == pytest.approx(b.log_prob, abs=1e-9)
    assert 0 < a.prob <= 1


@settings(max_examples=20, deadline=None)
@given(phi=st.floats(0.01, 0.4), alpha=st.floats(-1.0, 1.0))
def test_outcome_probabilities_sum_to_one(phi, alpha):
    cfg = HilbertConfig(40)
    kp = kraus_pair(phi, cfg)
    psi = coherent_state(alpha, cfg)
    p_e = np.linalg.norm(kp.d_e @ psi) ** 2
    p_g = np.linalg.norm(kp.d_g @ psi) ** 2
    assert p_e + p_g == pytest.approx(1, abs=1e-10)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qsqueeze import analytic
from qsqueeze.errors import ConfigurationError, PrecisionError
from qsqueeze.fockspace import HilbertConfig
from qsqueeze.measurement import conditioned_state, quadrature_moments

CFG40 = HilbertConfig(40)


def _oracle(s, n, phi, x0=0.0):
    cond = conditioned_state(s, n, x0, phi, CFG40)
    mean, var = quadrature_moments(cond.state, CFG40)
    return cond.prob, mean, var


def test_two_step_matches_oracle():
    st_ = analytic.outcome_statistics(2, 1, 0.159)
    prob, mean, var = _oracle(2, 1, 0.159)
    assert st_.prob == pytest.approx(prob, rel=1e-8)
    assert st_.mean_I == pytest.approx(mean, abs=1e-8)
    assert st_.variance == pytest.approx(var, abs=1e-8)
    assert st_.mean_I2 == pytest.approx(var + mean**2, abs=1e-8)


def test_no_back_action_limit():
    for s, n, x0 in ((3, 1, 0.0), (6, 6, 0.4), (9, 2, -0.3)):
        st_ = analytic.outcome_statistics(s, n, 0.0, x0)
        assert st_.prob == pytest.approx(2.0**-s, rel=1e-12)
        assert st_.variance == pytest.approx(1.0, abs=1e-12)
        assert st_.mean_I == pytest.approx(2 * x0, abs=1e-12)


def test_half_record_variance_near_law():
    st_ = analytic.outcome_statistics(10, 5, 0.159)
    law = float(analytic.variance_approx(0.159, 10))
    assert law == pytest.approx(0.4972, abs=1e-4)
    assert abs(st_.variance - law) / law < 0.05
    assert st_.variance == pytest.approx(0.48422, abs=1e-5)


def test_variance_approx_values():
    assert float(analytic.variance_approx(0.159, 500)) == pytest.approx(0.0194, abs=1e-4)
    assert float(analytic.variance_approx(0.159, 64)) == pytest.approx(0.1338, abs=1e-4)
    assert float(analytic.variance_approx(0.159, 0)) == 1.0
    np.testing.assert_allclose(analytic.variance_approx(0.1, [0, 25]), [1.0, 0.5])


def test_imaginary_part_of_alpha_is_ignored():
    a = analytic.outcome_statistics(6, 2, 0.159, 0.3)
    b = analytic.outcome_statistics(6, 2, 0.159, 0.3 + 0.7j)
    assert a == b


def test_precision_modes_agree():
    ref = analytic.outcome_statistics(24, 7, 0.159, precision="extended(256)")
    assert ref.precision == "extended(256)"
    for mode in ("double", "auto", "extended", 200):
        st_ = analytic.outcome_statistics(24, 7, 0.159, precision=mode)
        assert st_.prob == pytest.approx(ref.prob, rel=1e-9)
        assert st_.variance == pytest.approx(ref.variance, abs=1e-9)


def test_double_precision_refuses_ill_conditioned_sum():
    with pytest.raises(PrecisionError):
        analytic.outcome_statistics(64, 0, 0.08, precision="double")
    st_ = analytic.outcome_statistics(64, 0, 0.08)
    assert st_.precision.startswith("extended")
    assert st_.condition > 1e9


def test_bad_arguments():
    with pytest.raises(ConfigurationError):
        analytic.outcome_statistics(4, 5, 0.1)
    with pytest.raises(ConfigurationError):
        analytic.outcome_statistics(4, 1, -0.1)
    with pytest.raises(ConfigurationError):
        analytic.outcome_statistics(4, 1, 0.1, precision="quad")


def test_distribution_symmetry_and_band():
    d = analytic.outcome_distribution(64, 0.159)
    assert d.weight.sum() == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(d.weight, d.weight[::-1], atol=1e-10)
    np.testing.assert_allclose(d.mean, -d.mean[::-1], atol=1e-8)
    assert abs(d.mean[32]) < 1e-10
    law = float(analytic.variance_approx(0.159, 64))
    assert 0.9 * law <= d.weighted_variance <= 1.1 * law
    assert d.most_likely_variance == pytest.approx(d.variance[32])


def test_fidelity_examples():
    assert analytic.squeezed_target_fidelity(64, 32, 0.159) >= 0.99
    assert analytic.squeezed_target_fidelity(0, 0, 0.159) == pytest.approx(1.0, abs=1e-12)
    a = analytic.squeezed_target_fidelity(20, 6, 0.159)
    b = analytic.squeezed_target_fidelity(20, 14, 0.159)
    assert a == pytest.approx(b, abs=1e-10)


def test_fidelity_convention_matters_off_centre():
    half = analytic.squeezed_target_fidelity(32, 22, 0.159, convention="half")
    literal = analytic.squeezed_target_fidelity(32, 22, 0.159, convention="literal")
    assert half > 0.99
    assert literal < half
    with pytest.raises(ConfigurationError):
        analytic.target_amplitude(1.0, "double")


def test_r_function_identity():
    s = 8
    for a in range(-s, s + 1, 2):
        assert analytic.r_function(s, s - a) == analytic.Fraction(math.comb(s, (s + a) // 2), 4**s)
    assert analytic.r_function(s, 3) == 0


def test_derivation_legs():
    small = analytic.derivation_checks(8, 0.159)
    by_name = {c.name: c for c in small.checks}
    assert by_name["R(s-a) = C(s,(s+a)/2)/4^s"].passed
    rep = analytic.derivation_checks(4, 0.08)
    assert rep.checks[0].value < 1e-6
    big = analytic.derivation_checks(64, 0.159)
    assert big.passed
    leg_c = next(c for c in big.checks if c.name.startswith("P(s/2,s/2)"))
    assert leg_c.passed and leg_c.value < 0.02
    assert all(c.status in ("PASS", "INFO") for c in big.checks)
    with pytest.raises(ConfigurationError):
        analytic.derivation_checks(7, 0.1)


@settings(max_examples=15, deadline=None)
@given(
    s=st.integers(1, 8),
    frac=st.floats(0, 1),
    phi=st.floats(0.02, 0.35),
    x0=st.floats(-0.6, 0.6),
)
def test_matches_fock_oracle(s, frac, phi, x0):
    n = round(frac * s)
    st_ = analytic.outcome_statistics(s, n, phi, x0)
    prob, mean, var = _oracle(s, n, phi, x0)
    assert abs(st_.prob - prob) / prob < 1e-8
    assert st_.mean_I == pytest.approx(mean, abs=1e-6)
    assert st_.variance == pytest.approx(var, abs=1e-6)


@settings(max_examples=15, deadline=None)
@given(s=st.integers(1, 30), phi=st.floats(0.02, 0.3))
def test_weights_normalized(s, phi):
    d = analytic.outcome_distribution(s, phi)
    assert d.weight.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(d.variance > 0) and np.all(d.variance <= 1 + 1e-12)

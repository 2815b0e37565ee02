"""1/f flux noise filtered by the pulse train, and its effect on the variance.

Run with ``python demos/dephasing.py``.
"""
import numpy as np

from qsqueeze.dephasing import NoiseSpectrum, ProtocolTiming, correlation_matrix, diagonal_approx, noisy_variance_curve

timing = ProtocolTiming(50, 2 * np.pi * 200e6)
phi = timing.phi(1e6)
print(f"t_e {timing.t_e:.3e} s, phi {phi:.4f}")

for a in (1.2e7**2, 2.4e7**2):
    spec = NoiseSpectrum.for_protocol(a, timing, 18)
    w = correlation_matrix(spec, timing, 18)
    print(f"\nA = ({np.sqrt(a):.1e})^2: W_ii {w.diagonal[0]:.5f} rad^2 (closed form {diagonal_approx(spec, timing):.5f}), "
          f"max |W_ij|/W_ii {w.max_offdiag_ratio():.2e}")
    curve = noisy_variance_curve(18, phi, w.diagonal[0], s_values=[2, 6, 10, 14, 18])
    for s, clean, noisy, deg in zip(curve.s, curve.noiseless_weighted, curve.noisy_weighted, curve.degradation()):
        print(f"  s={s:2d}: Var {clean:.4f} -> {noisy:.4f} ({deg:+.2%})")

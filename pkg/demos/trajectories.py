"""Repeated weak quadrature measurements on a single oscillator trajectory.

Run with ``python demos/trajectories.py``.
"""
import numpy as np

from qsqueeze import analytic
from qsqueeze.fockspace import HilbertConfig
from qsqueeze.measurement import ProtocolParams, ensemble_statistics, run_trajectory, suggested_dim

PHI, STEPS = 0.159, 300

params = ProtocolParams(phi=PHI, steps=STEPS, seed=3, hilbert=HilbertConfig(suggested_dim(PHI, STEPS)))
rec = run_trajectory(params)
print(f"dim {params.hilbert.dim}, record starts {''.join('+' if r > 0 else '-' for r in rec.results[:40])}")
print(" step   <I>      Var(I)   1/(1+4 phi^2 s)")
for s in (1, 10, 50, 100, 200, 300):
    law = float(analytic.variance_approx(PHI, s))
    print(f"{s:5d} {rec.means[s - 1]:+8.4f} {rec.variances[s - 1]:8.4f} {law:8.4f}")

ens = ensemble_statistics(params, n_traj=100, last=50)
print(f"\n100 trajectories: mean final <I> {ens.final_means.mean():+.3f} (sd {ens.final_means.std():.3f})")
print(f"largest final variance {ens.final_variances.max():.4f}")
print(f"correlation of <I> with the last-50 readout average {ens.readout_correlation:.3f}")
print(f"final <I> histogram counts {np.array2string(ens.hist_mean[0], max_line_width=120)}")

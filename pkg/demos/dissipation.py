"""The measurement protocol with oscillator damping and qubit relaxation switched on.

A short run (a few blocks, two trajectories) so it finishes in about a minute.
Run with ``python demos/dissipation.py``.
"""
from qsqueeze.dephasing import ProtocolTiming
from qsqueeze.fockspace import HilbertConfig
from qsqueeze.measurement import InitialState
from qsqueeze.open_system import DeviceParams, LindbladRates, protocol_with_dissipation, stable_step

dev = DeviceParams()
rates = LindbladRates.from_device(dev)
cfg = HilbertConfig(40)
timing = ProtocolTiming(8, dev.omega_r)
print(f"thermal occupation {dev.n_ho:.3f}, phi per block {timing.phi(dev.g):.4f}, "
      f"RK4 step {stable_step(dev, rates, cfg):.2e} s")

for label, r in (("closed", LindbladRates()), ("dissipative", rates)):
    run = protocol_with_dissipation(6, dev, r, timing, InitialState.thermal(dev.n_ho), cfg, n_traj=2, seed=1)
    steps = " ".join(f"{v:.3f}" for v in run.mean_variance)
    print(f"{label:12s} Var(I) per block: {steps}")

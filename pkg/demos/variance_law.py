"""Closed-form outcome statistics and where double precision gives out.

Run with ``python demos/variance_law.py``.
"""
from qsqueeze import analytic
from qsqueeze.errors import PrecisionError

PHI = 0.159

print(" s   Var(n=s/2)  law      P(s/2) 2^s sqrt(1+4phi^2 s)")
for s in (4, 16, 32, 64):
    st = analytic.outcome_statistics(s, s // 2, PHI)
    law = float(analytic.variance_approx(PHI, s))
    scaled = st.prob * 2.0**s * (1 + 4 * PHI**2 * s) ** 0.5
    print(f"{s:3d} {st.variance:10.5f} {law:8.5f} {scaled:8.5f}   [{st.precision}, cond {st.condition:.1e}]")

d = analytic.outcome_distribution(64, PHI)
print(f"\ns=64: weighted variance {d.weighted_variance:.4f}, most likely {d.most_likely_variance:.4f}")
for n in (24, 28, 32, 36, 40):
    print(f"  n={n}: weight {d.weight[n]:.4f}, <I> {d.mean[n]:+.3f}, "
          f"fidelity to squeezed target {analytic.squeezed_target_fidelity(64, n, PHI):.5f}")

try:
    analytic.outcome_statistics(64, 0, 0.08, precision="double")
except PrecisionError as exc:
    print(f"\ndouble precision refused: {exc}")
st = analytic.outcome_statistics(64, 0, 0.08)
print(f"auto precision used {st.precision}: variance {st.variance:.6f}")

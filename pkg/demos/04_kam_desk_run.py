"""
A desk-scale KAM run
====================

Three steps on modes [-3, 3] at sigma=2.5, with the nonlinearity scaled so
the removable part starts at norm 1e-8.  Frequencies are frozen so the
final normal form rotates at the prescribed omega.  Takes about 30 s.
"""

from nlskam import RunConfig, run

cfg = RunConfig(sigma=2.5, gamma=1e-3, window=3, steps=3, r0_target=1e-8, seed=0)
report = run(cfg)
print("status:", report.status)
print("initial norms:", report.initial["norms"])

for st in report.steps:
    b, a = st["norms_before"], st["norms_after"]
    print(f"step {st['s']}: R0 {b['R0']:.2e} -> {a['R0']:.2e}  R1 {b['R1']:.2e} -> {a['R1']:.2e}  "
          f"R2 {a['R2']:.3e}  solved {st['solved']}  shift {st['shift_sup']:.1e}")
    print("   targets:", st["targets"])

print("freeze residuals:", report.freeze["residuals"])
print(f"torus residual {report.final['torus_residual']:.3e} vs eps_S^0.5 = {report.final['eps_S'] ** 0.5:.3e}")

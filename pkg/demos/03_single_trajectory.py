"""One seeded path of the truncated stochastic heat equation.

Runs the exponential-Euler scheme for du = u_xx dt + u^(3/2) dW with white
noise on [0, pi] (Neumann), prints the running diagnostics, and shows the
discrete mass identity integral u = I + clamped mass holding at round-off.
"""

import numpy as np

from stochheat import (
    DomainSpec,
    SigmaSpec,
    SimConfig,
    WhiteNoise,
    run_trajectory,
    write_trajectory_csv,
)

config = SimConfig(
    domain=DomainSpec(1, "neumann", 128),
    noise=WhiteNoise(),
    sigma=SigmaSpec(scale=1.0, growth=1.5, truncation=64.0),
    dt=2e-4,
    horizon=0.1,
    mass_bound=1e12,
    init_kind="constant",
    init_value=4.0,
)

record = run_trajectory(config, seed=2024)

print(f"steps run   : {record.steps}")
print(f"stop        : {record.stop_flag} at t = {record.stop_time:.4f}")
print(f"max sup-norm: {record.max_sup_norm:.4f}  (truncation level 64)")
print()
print("   t      sup |u|    |u|_L1       I(t)       Q(t)    clamped")
for s in range(0, len(record.t), len(record.t) // 10 or 1):
    print(f"{record.t[s]:6.3f}  {record.sup_norm[s]:9.4f}  {record.l1_norm[s]:9.4f}"
          f"  {record.I[s]:9.4f}  {record.Q[s]:9.4f}  {record.clamped_mass[s]:.2e}")

gap = np.max(np.abs(record.l1_norm - record.I - record.clamped_mass))
print()
print(f"mass identity |L1 - I - clamp| over all steps: {gap:.2e} (round-off)")

write_trajectory_csv(record, "trajectory_seed2024.csv")
print("full per-step series written to trajectory_seed2024.csv")

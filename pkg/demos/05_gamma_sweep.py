"""Probing the critical growth exponent with a gamma sweep.

White noise in d=1 has gamma_c = 3/2: coefficients growing slower never
explode, faster ones are conjectured to.  True explosion is unobservable
numerically, so the operational proxy is the fraction of paths whose
sup-norm exits dyadic thresholds before the horizon; that fraction should
climb steeply as gamma crosses gamma_c.
"""

import math

from stochheat import (
    DomainSpec,
    SigmaSpec,
    SimConfig,
    WhiteNoise,
    sweep_gamma,
)

config = SimConfig(
    domain=DomainSpec(1, "periodic", 64),
    noise=WhiteNoise(),
    sigma=SigmaSpec(scale=1.0, growth=1.5, truncation=1024.0),
    dt=1e-4,
    horizon=0.05,
    mass_bound=8 * 8 * math.pi,
    paths=100,
    base_seed=1,
    init_kind="constant",
    init_value=8.0,
    workers=2,
)

gammas = [1.3, 1.5, 1.7, 2.0]
thresholds = [16.0, 64.0, 256.0, 1024.0]
sweep = sweep_gamma(config, gammas, thresholds)

print("exit fraction before T = 0.05 (100 paths per gamma, shared noise):")
print()
header = "gamma  " + "".join(f"  thr {int(t):>5}" for t in thresholds)
print(header)
print("-" * len(header))
for g in gammas:
    cells = "".join(f"  {f:9.3f}" for f in sweep.exit_fractions[g])
    tag = " <- gamma_c" if g == 1.5 else ""
    print(f"{g:5.2f} {cells}{tag}")

print()
print("doubling statistics (dyadic up-crossings above the m0 threshold):")
for g in gammas:
    d = sweep.doubling[g]
    print(f"  gamma {g:4.2f}: mean count above m0={d['m0']}: "
          f"{d['mean_up_events_above_m0']:.3f}  "
          f"(fast/slow vs deterministic window: {d['fast_up_events']}/{d['slow_up_events']})")
print()
print("Fractions rise with gamma and fall with threshold level; runaway")
print("growth above gamma_c shows up as positive exit fractions at 2^10.")

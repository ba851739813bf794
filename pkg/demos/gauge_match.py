"""Gauge-fix a 4.3:1 spheroid against a 4:1 spheroid and track the neutral mode."""

import numpy as np

from ovals.experiment import ExperimentConfig, simulate_many
from ovals.match import GaugeParams, RescaledRun, neutral_mode_track, zero_projections

cfgs = [ExperimentConfig(initial={"kind": "spheroid", "a": a, "b": 1.0}, N=256) for a in (4.0, 4.3)]
hA, hB = (RescaledRun(r) for r in simulate_many(cfgs))
res = zero_projections(hA, hB, -13.0, 0.4)
b, G, A = res.gauge.bGA
print(f"b={b:.5f} Gamma={G:.5f} A={A:.2e} residual={res.residual:.1e} in_box={res.in_box} "
      f"admissible={res.admissible['all']}")
for name, g in (("gauged", res.gauge), ("naive", GaugeParams(tau0=-13.0))):
    # the ungauged 4.3:1 run ends at tau = -12.09
    tr = neutral_mode_track(hA, hB, g, 0.4, (-14.0, -12.2))
    print(f"{name:>6}: max|a| = {np.max(np.abs(tr.a)):.3e}, integral residual {tr.integral_residual:.3f}")

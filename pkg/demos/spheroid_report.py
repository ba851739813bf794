"""Evolve a 4:1 spheroid and print the asymptotics report at tau = -12 ... -15."""

from ovals.experiment import ExperimentConfig, run_experiment

cfg = ExperimentConfig(initial={"kind": "spheroid", "a": 4.0, "b": 1.0}, N=256)
run, rep = run_experiment(cfg)
print(f"T = {rep.T:.6f}, {len(run)} snapshots")
print(f"{'tau':>8} {'c2_ratio':>9} {'inter_err':>9} {'tip_err':>8} {'hmax_law':>8}")
for r in rep.records:
    print(f"{r['tau']:8.3f} {r['c2_ratio']:9.4f} {r['inter_err']:9.4f} {r['tip_err']:8.4f} {r['hmax_law']:8.4f}")
print("trend toward target:", rep.trends)

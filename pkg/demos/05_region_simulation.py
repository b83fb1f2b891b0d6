"""Mobility experiment: migration counts and fairness, with vs without
regions, written to CSV exactly like the command-line sweep.

Run: python demos/05_region_simulation.py
"""

from pathlib import Path

from megw.sim import (Policy, SimConfig, run_experiment, write_metadata,
                      write_rows_csv)

base = SimConfig(regions_count=3, mecs_per_region=4, capacities=(1, 1, 2, 2),
                 users_per_capacity=500, migration_rate=0, seed=7)
rates = [0.01, 0.02, 0.05, 0.10, 0.20]

print(f"population {base.population}, 12 MECs in 3 regions, 60 minutes, "
      f"20 replications per point")
result = run_experiment(base, rates, replications=20, steps=60)

print(f"\n{'rate':>6} {'migrations w/':>14} {'migrations w/o':>15} "
      f"{'ratio':>7} {'fairness w/':>12} {'fairness w/o':>13}")
for rate in rates:
    w = result.mean_cumulative(Policy.WITH_REGIONS, rate)
    wo = result.mean_cumulative(Policy.WITHOUT_REGIONS, rate)
    fw = result.mean_ratio_series(Policy.WITH_REGIONS, rate)[-1]
    fwo = result.mean_ratio_series(Policy.WITHOUT_REGIONS, rate)[-1]
    print(f"{rate:6.2f} {w:14.0f} {wo:15.0f} {w / wo:7.3f} "
          f"{fw:12.3f} {fwo:13.3f}")

out = Path("region_sim_results.csv")
write_rows_csv(out, result.rows)
write_metadata(out.with_suffix(".meta.json"), result.metadata)
print(f"\nper-step rows: {out}   metadata: {out.with_suffix('.meta.json')}")
print("columns: policy,rate,replication,step,migrations,"
      "cumulative_migrations,min_max_ratio")

#!/usr/bin/env python3
"""The batch workflow end to end: write a config, run it, read the CSV back,
emit a plot script.

Everything here can also be driven from the shell:

    pgcsim sweep --config sweep.ini --out results/
"""
import csv
import subprocess
import sys
import tempfile
from pathlib import Path

from pgcsim import experiments

workdir = Path(tempfile.mkdtemp(prefix="pgcsim_demo_"))
config = workdir / "sweep.ini"
config.write_text("""\
[experiment]
kind = free_rider_sweep
emit_plots = true

[sweep]
n_values = 1 2 3 4 6 8 12 16
""")

code = experiments.run(config, out_dir=workdir / "results")
print(f"runner exit code: {code}")

csv_path = workdir / "results" / "free_rider_sweep.csv"
with open(csv_path) as f:
    lines = [ln for ln in f if not ln.startswith("#")]
rows = list(csv.DictReader(lines))
print(f"{csv_path.name}: {len(rows)} rows")
print(f"{'n':>4} {'ratio':>10} {'l0':>10} {'kappa':>10}")
for r in rows:
    print(f"{r['n_agents']:>4} {float(r['ratio']):>10.6f} "
          f"{float(r['l0']):>10.6f} {float(r['kappa']):>10.6f}")

script = workdir / "results" / "plot_free_rider_sweep_ratio_vs_n.py"
print(f"\nemitted plot script: {script.name}; running it...")
done = subprocess.run([sys.executable, script.name], cwd=script.parent,
                      capture_output=True, text=True)
print(done.stdout.strip())
print(f"artifacts in {workdir}/results")

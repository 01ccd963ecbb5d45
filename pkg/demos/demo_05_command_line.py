"""
The command-line pipeline
=========================

The same steps through the ``dpwo`` command, run here in-process on a
temporary directory. From a shell the calls read, for example,
``dpwo gen --kind intervals --universe 6 --out w.csv``.
"""

import json
import tempfile
from pathlib import Path

from dpwo.cli import cli_main

work = Path(tempfile.mkdtemp())
w, design, bench = work / "w.csv", work / "design.json", work / "bench.csv"

cli_main(["gen", "--kind", "intervals", "--universe", "6", "--out", str(w)])
print(len(w.read_text().splitlines()), "interval queries written")

cli_main(["optimize", "--workload", str(w), "--n", "6", "--epsilon", "0.5", "--out", str(design)])
d = json.loads(design.read_text())
print("k =", d["k"], " kyfan =", round(d["kyfan_value"], 4), " gap =", f"{d['gap']:.1e}")

cli_main(["run", "--workload", str(w), "--n", "6", "--epsilon", "0.5", "--design", str(design),
          "--seed", "1", "--out", str(work / "run.json")])
run = json.loads((work / "run.json").read_text())
print("noisy rmse", round(run["noisy_rmse"], 3), "-> projected rmse", round(run["projected_rmse"], 3))

cli_main(["bench", "--workload", str(w), "--n", "6", "--epsilon", "0.5", "--trials", "200",
          "--format", "csv", "--out", str(bench)])
print(bench.read_text())

# Usage errors exit with status 1, runtime failures with status 2.
print("missing --workload ->", cli_main(["bench", "--n", "6", "--epsilon", "0.5"]))

# %% LLN / CLT / LIL along one long path, through the command-line front end
import json
import subprocess
import sys
from pathlib import Path

cfg = {
    "model": {"kind": "mixture", "atoms": [[1, 1 / 3], [-1, 2 / 3]]},
    "params": {"f": "indicator_zero", "n_steps": 2_000_000, "batch_size": 2000, "exact_x_max": 60,
               "lil_window": [100_000, 2_000_000]},
    "seed": 42,
    "workers": 1,
}
Path("clt_config.json").write_text(json.dumps(cfg))

# %% JSON report; the exit code is 0 when every hard check passes
run = subprocess.run([sys.executable, "-m", "induct_mc.cli", "clt", "--config", "clt_config.json",
                      "--out", "clt_report.json"], capture_output=True, text=True)
print(run.stdout)
print("exit code", run.returncode)
result = json.loads(Path("clt_report.json").read_text())["result"]
print("sigma2:", result["sigma2_limit"], "batch means:", result["sigma2_batch_means"])

# %% CSV series n, sigma2_n, L_n for plotting elsewhere
subprocess.run([sys.executable, "-m", "induct_mc.cli", "clt", "--config", "clt_config.json",
                "--format", "csv", "--out", "clt_series.csv"], check=True, capture_output=True)
print(Path("clt_series.csv").read_text().splitlines()[-3:])

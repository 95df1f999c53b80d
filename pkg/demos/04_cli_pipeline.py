"""Drive the whole pipeline through the command line.

Writes a JSON run configuration, then walks generate -> train -> evaluate ->
reconstruct -> forecast as subprocesses, the way a batch job would. All
artifacts land in ./cli_demo_output and reruns are byte-identical.

Run:  python demos/04_cli_pipeline.py
"""

import json
import subprocess
import sys
from pathlib import Path

out = Path("cli_demo_output").resolve()
out.mkdir(exist_ok=True)

config = {
    "seed": 11,
    "generate": {"kind": "traveling_wave", "rows": 24, "cols": 32,
                 "steps": 400, "speed": 0.5, "wavelength": 16.0},
    "manager": {"lags": 20, "train_size": 0.8, "val_size": 0.1,
                "test_size": 0.1},
    "fields": [{"path": str(out / "X.shdf"), "id": "X",
                "sensors": {"kind": "random", "count": 3}}],
    "model": {"hidden_size": 32, "num_layers": 1, "decoder_hidden": [128],
              "latent_forecaster": {"kind": "recurrent", "window": 10,
                                    "epochs": 100}},
    "train": {"epochs": 15, "batch_size": 16, "lr": 3e-3},
    "forecast": {"horizon": 25, "split": "train"},
    "out": str(out),
}
cfg = out / "run.json"
cfg.write_text(json.dumps(config, indent=2))
print(f"wrote {cfg}")


def run(*args):
    cmd = [sys.executable, "-m", "shredkit.cli", *args]
    print(f"\n$ {' '.join(cmd[2:])}")
    subprocess.run(cmd, check=True)


run("generate", "--config", str(cfg))
run("train", "--config", str(cfg), "--out", str(out / "run"))
run("evaluate", "--config", str(cfg), "--checkpoint", str(out / "run"),
    "--out", str(out / "run"))
run("reconstruct", "--config", str(cfg), "--checkpoint", str(out / "run"),
    "--out", str(out / "run"))
run("forecast", "--config", str(cfg), "--checkpoint", str(out / "run"),
    "--out", str(out / "run"))
print(f"\nartifacts in {out / 'run'}:")
for p in sorted((out / "run").iterdir()):
    print(f"  {p.name}")

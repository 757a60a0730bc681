# 06_cli_walkthrough.py
# ---------------------------------------------------------------------------
# The whole experiment workflow through the command-line interface.
#
# The CLI wraps the library in five subcommands:
#
#   prepare   decode + augment + resize a covid/ + normal/ image tree into
#             a binary sample cache (IMG1 files + manifest.json)
#   train     cross-validated training; writes a run directory containing
#             config.json, per-fold checkpoints, history.csv, report.json
#   evaluate  score any checkpoint against any prepared dataset
#   predict   classify a single image file
#   report    export history as CSV, metrics as JSON, or curves as SVG
#
# Everything is seeded: rerunning this script reproduces every byte of the
# run directory. The script shells out exactly like a user would.
# ---------------------------------------------------------------------------
import json
import subprocess
import sys
from pathlib import Path

from sobelcnn.synthetic import write_image_dir

OUT = Path(__file__).parent / "output" / "cli_walkthrough"
OUT.mkdir(parents=True, exist_ok=True)


def run(*args: str) -> str:
    cmd = [sys.executable, "-m", "sobelcnn.cli", *args]
    print(f"\n$ sobelcnn {' '.join(args)}")
    proc = subprocess.run(cmd, capture_output=True, text=True)
    sys.stdout.write(proc.stdout)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise SystemExit(f"command failed with exit code {proc.returncode}")
    return proc.stdout


# 1. a small synthetic image tree standing in for a real dataset
raw = OUT / "images"
write_image_dir(raw, n_covid=8, n_normal=10, side=48, seed=12)
print(f"synthetic dataset at {raw}")

# 2. prepare: x4 augmentation, resize to 32x32, cache as IMG1 samples
prep = OUT / "prepared"
run("prepare", "--input", str(raw), "--output", str(prep),
    "--seed", "5", "--input-size", "32")

# 3. train: 2 folds x 10 epochs of the sigmoid+sobel arm
run_dir = OUT / "run_sigmoid_sobel"
run("train", "--data", str(prep), "--out", str(run_dir),
    "--head", "sigmoid", "--sobel", "on", "--folds", "2",
    "--epochs", "10", "--batch", "16", "--seed", "3")

# 4. evaluate the first fold's checkpoint on the full prepared set
run("evaluate", "--model", str(run_dir / "fold_00.ckpt"), "--data", str(prep))

# 5. predict a single file
an_image = next((raw / "covid").glob("*.png"))
run("predict", "--model", str(run_dir / "fold_00.ckpt"),
    "--image", str(an_image))

# 6. export the curve charts and inspect the report
run("report", "--run", str(run_dir), "--format", "svg")
report = json.loads((run_dir / "report.json").read_text())
pooled = report["pooled"]["metrics"]
print(f"\npooled accuracy from report.json: {pooled['accuracy']:.4f}")
print(f"artifacts under {run_dir}")

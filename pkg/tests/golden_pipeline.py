"""End-to-end deterministic pipeline used for golden-file testing.

Running this module regenerates tests/golden/; the acceptance suite replays
the same commands into a temp directory and compares bytes.
"""

from __future__ import annotations

import shutil
import subprocess
import sys
from pathlib import Path

GOLDEN_DIR = Path(__file__).parent / "golden"

SUBJECTS = 40
SEED = 7

# files compared byte-for-byte (relative to the pipeline workdir)
GOLDEN_FILES = [
    "population.csv",
    "betas.csv",
    "ratings.csv",
    "measured.csv",
    "pred_betas.csv",
    "fitted.csv",
    "fitloss.csv",
    "eval_fitted.json",
    "eval_fitted.csv",
    "eval_predicted.json",
    "eval_predicted.csv",
    "report/report.csv",
    "report/report.md",
]


def run_cli(args: list[str], cwd: Path | None = None) -> subprocess.CompletedProcess:
    cmd = [sys.executable, "-m", "anthrokit", "--deterministic", *map(str, args)]
    proc = subprocess.run(cmd, cwd=cwd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(
            f"CLI failed ({proc.returncode}): {' '.join(cmd)}\n"
            f"stdout: {proc.stdout}\nstderr: {proc.stderr}"
        )
    return proc


def run_pipeline(work: Path) -> list[Path]:
    work = Path(work)
    run_cli(["fixture", "--out", work, "--subjects", SUBJECTS, "--seed", SEED])
    run_cli(["measure", "--model", work / "model", "--betas", work / "betas.csv",
             "--out", work / "measured.csv"])
    for variant in ("A2S", "S2A", "AHC2S"):
        run_cli(["fit-mapper", "--train", work / "population.csv", "--variant", variant,
                 "--out", work / "mappers" / variant])
    run_cli(["predict", "--mapper", work / "mappers" / "A2S",
             "--input", work / "population.csv", "--out", work / "pred_betas.csv"])
    run_cli(["fit-shape", "--model", work / "model", "--targets", work / "population.csv",
             "--mappers", work / "mappers", "--out", work / "fitted.csv",
             "--report", work / "fitloss.csv"])
    run_cli(["eval", "--model", work / "model", "--pred", work / "fitted.csv",
             "--gt", work / "betas.csv", "--out-json", work / "eval_fitted.json",
             "--out-csv", work / "eval_fitted.csv"])
    run_cli(["eval", "--model", work / "model", "--pred", work / "pred_betas.csv",
             "--gt", work / "betas.csv", "--out-json", work / "eval_predicted.json",
             "--out-csv", work / "eval_predicted.csv"])
    run_cli(["report", "--eval", work / "eval_fitted.json",
             "--eval", work / "eval_predicted.json", "--out", work / "report"])
    return [work / name for name in GOLDEN_FILES]


def regenerate_golden() -> None:
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        files = run_pipeline(Path(tmp))
        if GOLDEN_DIR.exists():
            shutil.rmtree(GOLDEN_DIR)
        for src in files:
            rel = src.relative_to(Path(tmp))
            dst = GOLDEN_DIR / rel
            dst.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(src, dst)
    print(f"wrote {len(files)} golden files to {GOLDEN_DIR}")


if __name__ == "__main__":
    regenerate_golden()

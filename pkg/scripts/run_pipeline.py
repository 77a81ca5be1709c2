#!/usr/bin/env python3
"""End-to-end demo: generate data, train, explain, segment, evaluate.

Runs the whole weak-supervision loop through the CLI into a work directory
and prints the per-method metric table plus the PR-curve summary. Everything
is seeded, so repeated runs produce identical artifacts.

Usage: python scripts/run_pipeline.py [workdir] [--quick]
"""

import argparse
import csv
import shutil
import subprocess
import sys
from pathlib import Path


def sh(*args):
    cmd = [sys.executable, "-m", "lrpseg"] + [str(a) for a in args]
    print("+", " ".join(cmd[2:]))
    subprocess.run(cmd, check=True)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("workdir", nargs="?", default="pipeline_out")
    ap.add_argument("--quick", action="store_true", help="smaller dataset, fewer epochs")
    args = ap.parse_args()
    work = Path(args.workdir)
    n, epochs = (20, 6) if args.quick else (100, 40)

    data = work / "data"
    weights = work / "toy.lrpw"
    sh("gen-data", "--out", data, "--n-pos", n, "--n-neg", n, "--seed", 22,
       "--width-min", 3.0, "--width-max", 4.0, "--contrast-min", 0.4, "--contrast-max", 0.6,
       "--noise", 0.03, "--points-min", 3, "--points-max", 5)
    sh("train-toy", "--data", data, "--out", weights, "--csv", work / "train_log.csv",
       "--epochs", epochs, "--lr-head", 0.003, "--lr-conv", 0.0003, "--seed", 3)
    sh("classify", "--weights", weights, "--image", data / "images", "--csv", work / "labels.csv")

    # Segment only the test images the classifier flags as damaged: that is
    # the system's operating mode (classify first, then explain the decision).
    split_of = {r["id"]: r["split"] for r in csv.DictReader(open(data / "manifest.csv"))}
    flagged = [r["id"] for r in csv.DictReader(open(work / "labels.csv"))
               if r["label"] == "damage" and split_of.get(r["id"]) == "test"]
    subset = work / "test_damage"
    subset.mkdir(parents=True, exist_ok=True)
    for sid in flagged:
        shutil.copy(data / "images" / f"{sid}.png", subset / f"{sid}.png")
    print(f"classifier flagged {len(flagged)} test images as damaged")

    sh("explain", "--weights", weights, "--image", subset, "--rules", "ours",
       "--class", "damage", "--out", work / "heat")
    for method in ("simple", "gmm", "bmm"):
        sh("segment", "--relevance", work / "heat", "--method", method, "--seed", 7,
           "--out", work / f"masks_{method}")
        extra = []
        if method != "simple":  # simple emits no per-pixel score, hence no PR curve
            extra = ["--scores", work / f"masks_{method}", "--pr-csv", work / f"pr_{method}.csv"]
        sh("evaluate", "--pred", work / f"masks_{method}", "--truth", data / "masks",
           "--csv", work / f"eval_{method}.csv", *extra)
    print(f"\nartifacts in {work}/")


if __name__ == "__main__":
    main()

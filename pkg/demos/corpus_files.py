#!/usr/bin/env python3
"""Every file format in one place.

Writes a miniature corpus plus one of each artifact the toolkit produces:
PGM images, the manifest CSV, a minutiae template, a binary ridge feature
map with its JSON debug dump, orientation/mask debug rasters, an external
quality CSV, and a score CSV. Have a look at the output directory afterwards.
"""

import sys
from pathlib import Path

from fpkit.cli import main as fpkit

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_output")
corpus = out / "corpus"
small = ["--set", "synth_width=192", "--set", "synth_height=224"]

print(f"writing everything under {out}/\n")
fpkit([*small, "--seed", "9", "synth", "--fingers", "4", "--impressions", "2",
       "--levels", "3", "--out", str(corpus), "--force"])

first = sorted(corpus.glob("*.pgm"))[0]
print(f"\nextracting features from {first.name}")
fpkit([*small, "extract", str(first), "--kind", "minutiae",
       "--out", str(out / "template.mnt")])
fpkit([*small, "extract", str(first), "--kind", "ridge",
       "--out", str(out / "features.frf")])
fpkit([*small, "extract", str(first), "--kind", "ridge", "--json",
       "--out", str(out / "features.json")])
fpkit([*small, "extract", str(first), "--kind", "orientation",
       "--out", str(out / "orientation_debug.pgm")])
fpkit([*small, "extract", str(first), "--kind", "mask",
       "--out", str(out / "mask_debug.pgm")])

print("\nscoring image quality for the whole corpus")
fpkit([*small, "quality", "--manifest", str(corpus / "manifest.csv"),
       "--measure", "all", "--out", str(out / "quality.csv")])

print("\nan external (hand-labelled) quality file uses the same CSV shape:")
ext = out / "manual_quality.csv"
rows = ["# range=0:1 direction=ascending", "image_id,score"]
rows += [f"{p.stem},{0.1 * (i % 10):.1f}" for i, p in
         enumerate(sorted(corpus.glob("*.pgm")))]
ext.write_text("\n".join(rows) + "\n")
print(ext.read_text())

print("running the benchmark to produce score CSVs, a report, and DET data")
fpkit([*small, "--jobs", "2", "bench", "--manifest", str(corpus / "manifest.csv"),
       "--quality-measure", "local", "--groups", "2", "--matcher", "both",
       "--out", str(out / "bench")])

print("\nEER recomputed offline from the stored ridge scores:")
fpkit(["det", "--scores", str(out / "bench" / "scores_ridge.csv"),
       "--out", str(out / "det")])

print("\nfiles written:")
for p in sorted(out.rglob("*")):
    if p.is_file():
        print(f"  {p.relative_to(out)}  ({p.stat().st_size} bytes)")

#!/usr/bin/env python3
"""Quality-stratified verification benchmark on a small synthetic corpus.

Builds 15 fingers x 3 impressions spanning five degradation levels, runs the
full enrollment protocol for both matchers (template = impression 1, genuine
vs the remaining impressions, impostor vs every other finger's template),
splits fingers into five quality groups by mean genuine pair quality, and
prints the per-group equal error rates.

The headline: the minutiae matcher falls apart as quality drops while the
Gabor-grid ridge matcher barely moves.
"""

import tempfile
import time

from fpkit.config import RunConfig
from fpkit.evaluation import (compute_eer, load_manifest, per_group_report,
                              rank_fingers_by_quality, run_matchers,
                              split_quality_groups)
from fpkit.synth import make_corpus, write_corpus

cfg = RunConfig()
t0 = time.time()

corpus = make_corpus(n_fingers=15, impressions=3, seed=5, levels=5)
levels = {c.finger_id: c.level for c in corpus}
with tempfile.TemporaryDirectory() as tmp:
    manifest = load_manifest(write_corpus(corpus, tmp))
    score_sets = run_matchers(manifest, ("minutiae", "ridge"),
                              quality_measure="local", cfg=cfg, jobs=2)

print(f"scored {len(score_sets['ridge'].genuine)} genuine and "
      f"{len(score_sets['ridge'].impostor)} impostor pairs per matcher "
      f"in {time.time() - t0:.0f}s\n")

ranking = rank_fingers_by_quality(score_sets["minutiae"])
print("quality ranking recovers the hidden degradation levels (worst first):")
print(" ", [levels[f] for f in ranking], "\n")

groups = split_quality_groups(ranking, 5)
report = per_group_report(score_sets, {"local": groups})
print(report.to_text())

for m in ("minutiae", "ridge"):
    ss = score_sets[m]
    overall, _ = compute_eer(ss.scores("genuine"), ss.scores("impostor"))
    gap = (report.get("local", m, 1).eer - report.get("local", m, 5).eer)
    print(f"{m:>9}: overall EER {100 * overall:5.2f}%   "
          f"group I - group V gap {100 * gap:5.2f} points")

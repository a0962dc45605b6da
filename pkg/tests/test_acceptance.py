"""Acceptance gate: every criterion prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline.
The trend criteria run a full 30-finger x 5-impression benchmark and are the
slowest part of the suite.
"""

import csv
import math
import time

import numpy as np
import pytest
from scipy import stats

from fpkit.cli import main as cli_main
from fpkit.config import RunConfig
from fpkit.evaluation import (DatasetManifest, ManifestEntry, PairScore, ScoreSet,
                              compute_eer, enumerate_pairs, load_manifest,
                              per_group_report, rank_fingers_by_quality,
                              run_matchers, split_quality_groups)
from fpkit.image import GrayImage
from fpkit.minutiae import match_minutiae, normalize_minutiae_score
from fpkit.pipeline import minutiae_from_image, preprocess
from fpkit.preprocessing import estimate_orientation
from fpkit.quality import (energy_concentration_score, global_quality,
                           local_quality, ring_band_energies)
from fpkit.ridge import normalize_ridge_score, verify_ridge
from fpkit.synth import SynthParams, finger_seed, generate_fingerprint, make_corpus, write_corpus

from conftest import vertical_grating
from test_evaluation import brute_force_eer

CFG = RunConfig()


def report(criterion, ok, detail):
    print(f"\n[ACCEPTANCE {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"acceptance criterion {criterion} failed: {detail}"


# --------------------------------------------------------------------------
# 1. protocol arithmetic on a stub 750 x 10 manifest (enumeration only)

def test_criterion_1_protocol_arithmetic():
    t0 = time.monotonic()
    entries = [
        ManifestEntry(f"f{f:04d}_i{i}", f"unused/f{f:04d}_i{i}.pgm", f"f{f:04d}", i)
        for f in range(750) for i in range(1, 11)
    ]
    manifest = DatasetManifest(entries)
    genuine, impostor = enumerate_pairs(manifest)

    # deterministic stub qualities stand in for an external measure
    quality = {e.image_id: 0.05 + 0.9 * ((int(e.finger_id[1:]) * 37
               + e.impression) % 101) / 100.0 for e in entries}
    gen_scores = [PairScore("genuine", t.finger_id, p.finger_id, p.impression,
                            0.0, math.sqrt(quality[t.image_id] * quality[p.image_id]))
                  for t, p in genuine]
    imp_scores = [PairScore("impostor", t.finger_id, p.finger_id, p.impression,
                            0.0, math.sqrt(quality[t.image_id] * quality[p.image_id]))
                  for t, p in impostor]
    score_set = ScoreSet(gen_scores, imp_scores)
    ranking = rank_fingers_by_quality(score_set)
    groups = split_quality_groups(ranking, 5)

    group_of = {f: gi for gi, grp in enumerate(groups) for f in grp}
    per_group_gen = [0] * 5
    per_group_imp = [0] * 5
    for p in gen_scores:
        per_group_gen[group_of[p.template_finger]] += 1
    for p in imp_scores:
        per_group_imp[group_of[p.template_finger]] += 1
    elapsed = time.monotonic() - t0

    ok = (len(genuine) == 6750 and len(impostor) == 561750
          and [len(g) for g in groups] == [150] * 5
          and per_group_gen == [1350] * 5 and per_group_imp == [112350] * 5
          and elapsed < 5.0)
    report(1, ok, f"6750/{len(genuine)} genuine, 561750/{len(impostor)} impostor, "
                  f"groups {[len(g) for g in groups]}, per-group "
                  f"{set(per_group_gen)}/{set(per_group_imp)}, {elapsed:.2f}s")


# --------------------------------------------------------------------------
# 2. closed-form score normalizations

def test_criterion_2_normalization_closed_forms():
    worst = 0.0
    for c in (0.35, 1.0, 2.5):
        checks = [
            (normalize_minutiae_score(0.0, c), 0.0),
            (normalize_minutiae_score(c, c), math.tanh(1.0)),
            (normalize_minutiae_score(3 * c, c), math.tanh(3.0)),
            (normalize_ridge_score(0.0, c), 1.0),
            (normalize_ridge_score(c, c), math.exp(-1.0)),
            (normalize_ridge_score(3 * c, c), math.exp(-3.0)),
        ]
        worst = max(worst, max(abs(a - b) for a, b in checks))
    report(2, worst <= 1e-12, f"max deviation from analytic values {worst:.3e}")


# --------------------------------------------------------------------------
# 3. quality extremes

def test_criterion_3_quality_extremes():
    grating = vertical_grating(160, 160, period=10, amplitude=100)
    f_grating = estimate_orientation(grating, 16)
    coh_err = abs(float(f_grating.coherence.max()) - 1.0)
    coh_err = max(coh_err, abs(float(f_grating.coherence.min()) - 1.0))

    flat = GrayImage(np.full((160, 160), 80, dtype=np.uint8))
    f_flat = estimate_orientation(flat, 16)
    coh_flat = float(np.abs(f_flat.coherence).max())

    # single-ring and ring-uniform spectra through the ring binning
    h = w = 128
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    r = np.sqrt(fx * fx + fy * fy)
    width = (0.25 - 0.02) / 15
    single = np.where((r >= 0.02 + 6 * width) & (r < 0.02 + 7 * width), 2.0, 0.0)
    uniform = np.zeros((h, w))
    for t in range(15):
        sel = (r >= 0.02 + t * width) & (r < 0.02 + (t + 1) * width)
        uniform[sel] = 1.0 / sel.sum()
    s_single = energy_concentration_score(ring_band_energies(single, 15, 0.02, 0.25))
    s_uniform = energy_concentration_score(ring_band_energies(uniform, 15, 0.02, 0.25))

    ok = (coh_err <= 1e-6 and coh_flat <= 1e-6
          and abs(s_single - 1.0) <= 1e-9 and abs(s_uniform) <= 1e-9)
    report(3, ok, f"grating coherence err {coh_err:.2e}, flat coherence {coh_flat:.2e}, "
                  f"single-ring {s_single:.12f}, ring-uniform {s_uniform:.2e}")


# --------------------------------------------------------------------------
# 4. EER oracle equivalence

def test_criterion_4_eer_oracle_equivalence():
    rng = np.random.default_rng(4242)
    worst = 0.0
    for trial in range(500):
        n_g = int(rng.integers(1, 100))
        n_i = int(rng.integers(1, 100))
        style = trial % 3
        if style == 0:
            genuine = list(rng.normal(0.65, 0.2, n_g))
            impostor = list(rng.normal(0.35, 0.2, n_i))
        elif style == 1:  # heavy ties
            genuine = list(np.round(rng.random(n_g), 1))
            impostor = list(np.round(rng.random(n_i), 1))
        else:
            genuine = list(rng.random(n_g))
            impostor = list(rng.random(n_i))
        eer, _ = compute_eer(genuine, impostor)
        worst = max(worst, abs(eer - brute_force_eer(genuine, impostor)))

    sep, _ = compute_eer([0.8, 0.9], [0.1, 0.2])
    same_scores = list(np.random.default_rng(7).random(40))
    same, _ = compute_eer(same_scores, list(same_scores))
    ok = worst <= 1e-12 and sep == 0.0 and abs(same - 0.5) <= 1e-12
    report(4, ok, f"500 random sets, worst |impl - oracle| {worst:.3e}; "
                  f"separated {sep}, identical {same}")


# --------------------------------------------------------------------------
# 5. quality-degradation trend at desk scale

@pytest.fixture(scope="module")
def trend_run(tmp_path_factory):
    t0 = time.monotonic()
    corpus = make_corpus(n_fingers=30, impressions=5, seed=202, levels=5)
    out_dir = tmp_path_factory.mktemp("acceptance") / "corpus"
    manifest = load_manifest(write_corpus(corpus, out_dir))
    score_sets = run_matchers(manifest, ("minutiae", "ridge"), "local", CFG, jobs=2)
    elapsed = time.monotonic() - t0
    return corpus, manifest, score_sets, elapsed


def test_criterion_5_trend_reproduction(trend_run):
    corpus, manifest, score_sets, elapsed = trend_run
    t0 = time.monotonic()

    ranking = rank_fingers_by_quality(score_sets["minutiae"])
    groups = split_quality_groups(ranking, 5)
    report_obj = per_group_report(score_sets, {"local": groups})

    eer = {m: [report_obj.get("local", m, g).eer for g in range(1, 6)]
           for m in ("minutiae", "ridge")}
    min_gap = eer["minutiae"][0] - eer["minutiae"][4]
    ridge_gap = eer["ridge"][0] - eer["ridge"][4]
    cond_a = (eer["minutiae"][0] >= 2.0 * eer["minutiae"][4]
              and eer["minutiae"][0] > eer["minutiae"][4])
    cond_b = ridge_gap < min_gap

    # (c) both quality measures rank degradation levels correctly
    level_of = {c.image_id: c.level for c in corpus}
    by_level_local = {lv: [] for lv in range(5)}
    by_level_global = {lv: [] for lv in range(5)}
    for entry in manifest.entries:
        img_path = manifest.resolve_path(entry)
        from fpkit.image import load_image
        img = load_image(img_path)
        pre = preprocess(img, CFG)
        lv = level_of[entry.image_id]
        by_level_local[lv].append(local_quality(pre.image, pre.mask, pre.field).value)
        by_level_global[lv].append(global_quality(pre.image, pre.mask).value)
    rho_local = stats.spearmanr(range(5),
                                [np.mean(by_level_local[lv]) for lv in range(5)]).statistic
    rho_global = stats.spearmanr(range(5),
                                 [np.mean(by_level_global[lv]) for lv in range(5)]).statistic
    cond_c = rho_local <= -0.8 and rho_global <= -0.8

    total = elapsed + (time.monotonic() - t0)
    ok = cond_a and cond_b and cond_c and total < 600.0
    report(5, ok,
           f"minutiae EER I..V {[round(e, 3) for e in eer['minutiae']]}, "
           f"ridge EER I..V {[round(e, 3) for e in eer['ridge']]}; "
           f"(a) {eer['minutiae'][0]:.3f} >= 2x{eer['minutiae'][4]:.3f}: {cond_a}; "
           f"(b) ridge gap {ridge_gap:.3f} < minutiae gap {min_gap:.3f}: {cond_b}; "
           f"(c) spearman local {rho_local:.2f}, global {rho_global:.2f}: {cond_c}; "
           f"runtime {total:.0f}s < 600s")


# --------------------------------------------------------------------------
# 6. self-match identities on 20 seeded synthetic fingers

def test_criterion_6_self_match_identities():
    ridge_exact = True
    minutiae_exact = True
    detail = []
    for f in range(20):
        params = SynthParams(seed=finger_seed(900, f))
        img = generate_fingerprint(params, 1)
        if verify_ridge(img, img) != 1.0:
            ridge_exact = False
            detail.append(f"ridge f{f}")
        template = minutiae_from_image(img, CFG)
        raw = match_minutiae(template, template)
        if raw != 1.0 or normalize_minutiae_score(raw, CFG.c_m) != math.tanh(1.0 / CFG.c_m):
            minutiae_exact = False
            detail.append(f"minutiae f{f} raw={raw}")
    ok = ridge_exact and minutiae_exact
    report(6, ok, "ridge self-similarity exactly 1.0 and minutiae raw self-score "
                  f"exactly 1 on 20 fingers{'; ' + ', '.join(detail) if detail else ''}")


# --------------------------------------------------------------------------
# 7. EER invariance under strictly increasing transforms

def test_criterion_7_eer_monotone_invariance(trend_run):
    _, _, score_sets, _ = trend_run
    ss = score_sets["minutiae"]
    genuine = ss.scores("genuine")
    impostor = ss.scores("impostor")
    base, _ = compute_eer(genuine, impostor)
    worst = 0.0
    transforms = [
        lambda s: math.tanh(s / 0.35),
        lambda s: 1.0 - math.exp(-4.0 * s),
        lambda s: 7.0 * s - 2.0,
        lambda s: s ** 3 + 0.5 * s,
    ]
    for fn in transforms:
        eer, _ = compute_eer([fn(s) for s in genuine], [fn(s) for s in impostor])
        worst = max(worst, abs(eer - base))
    report(7, worst <= 1e-12,
           f"base EER {base:.6f}, worst shift under 4 monotone maps {worst:.3e}")


# --------------------------------------------------------------------------
# 8. benchmark determinism

def test_criterion_8_bench_determinism(tmp_path):
    small = ["--set", "synth_width=192", "--set", "synth_height=224"]
    corpus_dir = tmp_path / "corpus"
    assert cli_main([*small, "--seed", "31", "synth", "--fingers", "6",
                     "--impressions", "2", "--levels", "3",
                     "--out", str(corpus_dir)]) == 0
    outs = []
    for name in ("run1", "run2"):
        out = tmp_path / name
        code = cli_main([*small, "--jobs", "2", "bench",
                         "--manifest", str(corpus_dir / "manifest.csv"),
                         "--quality-measure", "local", "--groups", "3",
                         "--matcher", "both", "--out", str(out)])
        assert code == 0
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    diffs = [str(rel) for rel in files
             if (outs[0] / rel).read_bytes() != (outs[1] / rel).read_bytes()]
    ok = bool(files) and not diffs
    report(8, ok, f"{len(files)} report files byte-identical across reruns"
                  + (f"; differing: {diffs}" if diffs else ""))

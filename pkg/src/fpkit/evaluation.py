"""Verification protocol, EER/DET computation, and quality-group reporting.

Impression 1 of every finger is the enrolled template. Genuine matchings
compare it to the remaining impressions of the same finger; impostor
matchings compare it to impression 1 of every other finger, giving exactly
N*(k-1) genuine and N*(N-1) impostor scores. Fingers are ranked by the mean
pair quality of their genuine matchings and split into equal-size groups,
group I being the lowest quality.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import EmptyForegroundError, InsufficientOverlapError, ManifestError
from .image import load_image
from .minutiae import MinutiaeTemplate, match_minutiae, normalize_minutiae_score
from .pipeline import (make_bank, make_match_params, minutiae_from_image,
                       preprocess, probe_assets_from_image, quality_of_image,
                       ridge_map_from_image)
from .preprocessing import estimate_ridge_frequency
from .quality import QualityScore, pair_quality
from .ridge import (RidgeFeatureMap, match_ridge, normalize_ridge_score,
                    scan_displacements)

MATCHERS = ("minutiae", "ridge")


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    path: str
    finger_id: str
    impression: int


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    quality_maps: dict[str, dict[str, QualityScore]] = field(default_factory=dict)
    base_dir: Path | None = None

    def resolve_path(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        if not p.is_absolute() and self.base_dir is not None:
            return self.base_dir / p
        return p

    def fingers(self) -> list[str]:
        return sorted({e.finger_id for e in self.entries})


def validate_manifest(manifest: DatasetManifest) -> tuple[int, int]:
    """Check the protocol preconditions; returns (finger count, impressions)."""
    if not manifest.entries:
        raise ManifestError("manifest has no entries")
    ids = [e.image_id for e in manifest.entries]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ManifestError(f"duplicate image ids: {', '.join(dup[:5])}")
    by_finger: dict[str, list[int]] = {}
    for e in manifest.entries:
        by_finger.setdefault(e.finger_id, []).append(e.impression)
    counts = {len(v) for v in by_finger.values()}
    if len(counts) != 1:
        raise ManifestError(f"fingers have unequal impression counts: {sorted(counts)}")
    k = counts.pop()
    if k < 2:
        raise ManifestError("need at least 2 impressions per finger")
    for finger, imps in sorted(by_finger.items()):
        if sorted(imps) != list(range(1, k + 1)):
            raise ManifestError(f"finger {finger!r}: impressions must be 1..{k}, "
                                f"got {sorted(imps)}")
    return len(by_finger), k


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a CSV manifest: image_id,path,finger_id,impression."""
    p = Path(path)
    entries = []
    with open(p, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["image_id", "path", "finger_id", "impression"]
        if header is None or [c.strip() for c in header[:4]] != expected:
            raise ManifestError(f"{p}: expected header {','.join(expected)}")
        for lineno, row in enumerate(reader, 2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) < 4:
                raise ManifestError(f"{p}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                imp = int(row[3])
            except ValueError:
                raise ManifestError(f"{p}:{lineno}: bad impression index {row[3]!r}")
            entries.append(ManifestEntry(row[0].strip(), row[1].strip(),
                                         row[2].strip(), imp))
    return DatasetManifest(entries, base_dir=p.parent)


def enumerate_pairs(manifest: DatasetManifest
                    ) -> tuple[list[tuple[ManifestEntry, ManifestEntry]],
                               list[tuple[ManifestEntry, ManifestEntry]]]:
    """Protocol pair lists (template entry, probe entry), no images touched."""
    validate_manifest(manifest)
    by_finger: dict[str, dict[int, ManifestEntry]] = {}
    for e in manifest.entries:
        by_finger.setdefault(e.finger_id, {})[e.impression] = e
    fingers = sorted(by_finger)
    genuine = []
    impostor = []
    for f in fingers:
        template = by_finger[f][1]
        for imp in sorted(by_finger[f]):
            if imp != 1:
                genuine.append((template, by_finger[f][imp]))
        for g in fingers:
            if g != f:
                impostor.append((template, by_finger[g][1]))
    return genuine, impostor


@dataclass(frozen=True)
class PairScore:
    kind: str  # "genuine" | "impostor"
    template_finger: str
    probe_finger: str
    probe_impression: int
    score: float
    pair_quality: float
    failed: bool = False


@dataclass
class ScoreSet:
    genuine: list[PairScore]
    impostor: list[PairScore]

    def scores(self, kind: str) -> list[float]:
        return [p.score for p in (self.genuine if kind == "genuine" else self.impostor)]


# ---------------------------------------------------------------------------
# protocol execution


@dataclass(frozen=True)
class _TemplateData:
    finger_id: str
    image_id: str
    quality: float | None
    minutiae: MinutiaeTemplate | None
    ridge_map: RidgeFeatureMap | None
    ok: bool


def _prepare_template(entry: ManifestEntry, path: str, cfg: RunConfig, bank,
                      matchers: tuple[str, ...], measure: str) -> _TemplateData:
    img = load_image(path)
    pre = preprocess(img, cfg)
    computed = measure in ("local", "global")
    if not pre.mask.any_foreground():
        # externally supplied scores stand even for unusable images
        return _TemplateData(entry.finger_id, entry.image_id,
                             0.0 if computed else None, None, None, False)
    quality = quality_of_image(img, measure, cfg, pre=pre).value if computed else None
    minw = ridge_map = None
    if "minutiae" in matchers:
        minw = minutiae_from_image(img, cfg, pre=pre)
    if "ridge" in matchers:
        ridge_map = ridge_map_from_image(img, cfg, bank, pre=pre)
    return _TemplateData(entry.finger_id, entry.image_id, quality, minw, ridge_map, True)


def _score_probe_chunk(args):
    """Worker: score a chunk of probe entries against their opponent templates."""
    chunk, templates, cfg, bank, matchers, measure = args
    results = []
    for entry, path, opponents in chunk:
        quality = None
        scores = []
        try:
            img = load_image(path)
            pre = preprocess(img, cfg)
            if not pre.mask.any_foreground():
                raise EmptyForegroundError()
        except (EmptyForegroundError, OSError):
            if measure in ("local", "global"):
                quality = 0.0
            for fid in opponents:
                for m in matchers:
                    scores.append((m, fid, 0.0, True))
            results.append((entry.image_id, quality, scores))
            continue
        if measure in ("local", "global"):
            quality = quality_of_image(img, measure, cfg, pre=pre).value
        probe_min = probe_assets = None
        if "minutiae" in matchers:
            probe_min = minutiae_from_image(img, cfg, pre=pre)
        if "ridge" in matchers:
            probe_assets = probe_assets_from_image(img, cfg, bank, pre=pre)
        mparams = make_match_params(cfg)
        for fid in opponents:
            tdata = templates[fid]
            for m in matchers:
                if m == "minutiae":
                    if not tdata.ok or tdata.minutiae is None:
                        scores.append((m, fid, 0.0, True))
                        continue
                    raw = match_minutiae(tdata.minutiae, probe_min, mparams)
                    scores.append((m, fid, normalize_minutiae_score(raw, cfg.c_m), False))
                else:
                    if not tdata.ok or tdata.ridge_map is None:
                        scores.append((m, fid, 0.0, True))
                        continue
                    try:
                        shift = scan_displacements(tdata.ridge_map, probe_assets,
                                                   cfg.search_radius, cfg.search_step,
                                                   cfg.min_overlap)
                        f_probe = probe_assets.extract(shift)
                        s_r = match_ridge(tdata.ridge_map, f_probe)
                        scores.append((m, fid, normalize_ridge_score(s_r, cfg.c_r), False))
                    except InsufficientOverlapError:
                        scores.append((m, fid, 0.0, True))
        results.append((entry.image_id, quality, scores))
    return results


def _effective_bank(manifest: DatasetManifest, cfg: RunConfig):
    """Shared Gabor bank; optionally tuned to the corpus median ridge frequency.

    Estimating per image would give every template a different grid geometry,
    so the estimate is pooled over all template impressions.
    """
    if not cfg.use_estimated_frequency:
        return make_bank(cfg)
    medians = []
    for e in manifest.entries:
        if e.impression != 1:
            continue
        img = load_image(manifest.resolve_path(e))
        pre = preprocess(img, cfg)
        if not pre.mask.any_foreground():
            continue
        freq = estimate_ridge_frequency(pre.image, pre.field, pre.mask)
        medians.append(float(np.median(freq.values[pre.mask.blocks])))
    if not medians:
        return make_bank(cfg)
    pooled = min(max(float(np.median(medians)), 0.02), 0.5)
    return make_bank(cfg, frequency=pooled)


def _external_qualities(manifest: DatasetManifest, name: str) -> dict[str, float]:
    if name not in manifest.quality_maps:
        raise ManifestError(f"manifest has no external quality map {name!r}")
    qmap = manifest.quality_maps[name]
    missing = sorted({e.image_id for e in manifest.entries} - qmap.keys())
    if missing:
        raise ManifestError(f"external quality {name!r} missing "
                            f"{len(missing)} image(s): {', '.join(missing[:10])}")
    return {k: v.value for k, v in qmap.items()}


def run_matchers(manifest: DatasetManifest, matchers: tuple[str, ...],
                 quality_measure: str = "local", cfg: RunConfig = RunConfig(),
                 jobs: int = 1) -> dict[str, ScoreSet]:
    """Execute the protocol for one or more matchers in a single pass."""
    for m in matchers:
        if m not in MATCHERS:
            raise ValueError(f"unknown matcher {m!r}")
    genuine_pairs, impostor_pairs = enumerate_pairs(manifest)

    if quality_measure.startswith("external:"):
        qualities = dict(_external_qualities(manifest, quality_measure.split(":", 1)[1]))
        measure = "external"
    elif quality_measure in ("local", "global"):
        qualities = {}
        measure = quality_measure
    else:
        raise ValueError(f"unknown quality measure {quality_measure!r}")

    by_finger: dict[str, dict[int, ManifestEntry]] = {}
    for e in manifest.entries:
        by_finger.setdefault(e.finger_id, {})[e.impression] = e
    fingers = sorted(by_finger)

    bank = _effective_bank(manifest, cfg)
    templates: dict[str, _TemplateData] = {}
    for f in fingers:
        entry = by_finger[f][1]
        templates[f] = _prepare_template(entry, str(manifest.resolve_path(entry)),
                                         cfg, bank, matchers, measure)
        if templates[f].quality is not None:
            qualities[entry.image_id] = templates[f].quality

    # one work unit per probe image: genuine probes meet their own template,
    # impression-1 probes meet every other finger's template
    units = []
    for f in fingers:
        for imp in sorted(by_finger[f]):
            entry = by_finger[f][imp]
            if imp == 1:
                opponents = [g for g in fingers if g != f]
            else:
                opponents = [f]
            units.append((entry, str(manifest.resolve_path(entry)), opponents))

    n_chunks = max(1, min(len(units), jobs * 4)) if jobs > 1 else 1
    chunks = [units[i::n_chunks] for i in range(n_chunks)]
    tasks = [(chunk, templates, cfg, bank, matchers, measure)
             for chunk in chunks if chunk]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunk_results = list(pool.map(_score_probe_chunk, tasks))
    else:
        chunk_results = [_score_probe_chunk(t) for t in tasks]

    score_lookup: dict[tuple[str, str, str], tuple[float, bool]] = {}
    for results in chunk_results:
        for image_id, quality, scores in results:
            if quality is not None:
                qualities[image_id] = quality
            for m, fid, score, failed in scores:
                score_lookup[(m, fid, image_id)] = (score, failed)

    out: dict[str, ScoreSet] = {}
    for m in matchers:
        genuine = []
        for template, probe in genuine_pairs:
            score, failed = score_lookup[(m, template.finger_id, probe.image_id)]
            pq = math.sqrt(qualities[template.image_id] * qualities[probe.image_id])
            genuine.append(PairScore("genuine", template.finger_id, probe.finger_id,
                                     probe.impression, score, pq, failed))
        impostor = []
        for template, probe in impostor_pairs:
            score, failed = score_lookup[(m, template.finger_id, probe.image_id)]
            pq = math.sqrt(qualities[template.image_id] * qualities[probe.image_id])
            impostor.append(PairScore("impostor", template.finger_id, probe.finger_id,
                                      probe.impression, score, pq, failed))
        out[m] = ScoreSet(genuine, impostor)
    return out


def run_protocol(manifest: DatasetManifest, matcher: str,
                 quality_measure: str = "local", cfg: RunConfig = RunConfig(),
                 jobs: int = 1) -> ScoreSet:
    """Protocol scores for a single matcher identifier."""
    return run_matchers(manifest, (matcher,), quality_measure, cfg, jobs)[matcher]


# ---------------------------------------------------------------------------
# ranking, grouping, EER


def rank_fingers_by_quality(score_set: ScoreSet) -> list[str]:
    """Fingers sorted ascending by mean genuine pair quality (ties by id)."""
    sums: dict[str, list[float]] = {}
    for p in score_set.genuine:
        sums.setdefault(p.template_finger, []).append(p.pair_quality)
    all_fingers = {p.template_finger for p in score_set.genuine} \
        | {p.template_finger for p in score_set.impostor}
    missing = sorted(all_fingers - sums.keys())
    if missing:
        raise ValueError(f"fingers with no genuine matchings: {', '.join(missing[:5])}")
    return sorted(sums, key=lambda f: (sum(sums[f]) / len(sums[f]), f))


def split_quality_groups(ranking: list[str], group_count: int) -> list[list[str]]:
    """Consecutive ranking slices, group I (index 0) lowest quality.

    When the finger count is not divisible, the remainder goes to the
    lowest-quality groups first (sizes like [3, 2, 2, 2, 2] for 11 and 5).
    """
    n = len(ranking)
    if group_count < 1 or group_count > n:
        raise ValueError(f"cannot split {n} fingers into {group_count} groups")
    base, rem = divmod(n, group_count)
    groups = []
    pos = 0
    for g in range(group_count):
        size = base + (1 if g < rem else 0)
        groups.append(list(ranking[pos:pos + size]))
        pos += size
    return groups


@dataclass(frozen=True)
class DetCurve:
    """(FMR, FNMR) at every swept threshold."""

    thresholds: np.ndarray
    fmr: np.ndarray
    fnmr: np.ndarray


def compute_eer(genuine: list[float], impostor: list[float]
                ) -> tuple[float, DetCurve]:
    """Equal error rate with the declared threshold-sweep rule.

    Thresholds are the sorted unique observed scores; FMR(t) is the fraction
    of impostor scores >= t and FNMR(t) the fraction of genuine scores < t.
    The EER sits where the two curves cross: exactly at a swept threshold if
    FMR == FNMR there, otherwise linearly interpolated over the bracketing
    thresholds where FMR - FNMR changes sign; with no sign change it is the
    average at the threshold minimizing |FMR - FNMR|.
    """
    g = np.sort(np.asarray(genuine, dtype=float))
    i = np.sort(np.asarray(impostor, dtype=float))
    if g.size == 0 or i.size == 0:
        raise ValueError("empty score list")
    thr = np.unique(np.concatenate([g, i]))
    fmr = (i.size - np.searchsorted(i, thr, side="left")) / i.size
    fnmr = np.searchsorted(g, thr, side="left") / g.size
    diff = fmr - fnmr  # non-increasing along thr
    zero = np.flatnonzero(diff == 0.0)
    if zero.size:
        k = int(zero[0])
        eer = (fmr[k] + fnmr[k]) / 2.0
    else:
        change = np.flatnonzero((diff[:-1] > 0.0) & (diff[1:] < 0.0))
        if change.size:
            j = int(change[0])
            lam = diff[j] / (diff[j] - diff[j + 1])
            eer = fmr[j] + lam * (fmr[j + 1] - fmr[j])
        else:
            k = int(np.argmin(np.abs(diff)))
            eer = (fmr[k] + fnmr[k]) / 2.0
    return float(eer), DetCurve(thr, fmr, fnmr)


# ---------------------------------------------------------------------------
# per-group reporting


_ROMAN = ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X",
          "XI", "XII", "XIII", "XIV", "XV", "XVI", "XVII", "XVIII", "XIX", "XX"]


def roman(n: int) -> str:
    return _ROMAN[n - 1] if 1 <= n <= len(_ROMAN) else str(n)


@dataclass(frozen=True)
class GroupResult:
    criterion: str
    matcher: str
    group_index: int  # 1-based; 1 = lowest quality
    fingers: tuple[str, ...]
    eer: float
    genuine_count: int
    impostor_count: int
    det: DetCurve


@dataclass
class QualityGroupReport:
    results: list[GroupResult]

    def get(self, criterion: str, matcher: str, group_index: int) -> GroupResult:
        for r in self.results:
            if (r.criterion, r.matcher, r.group_index) == (criterion, matcher, group_index):
                return r
        raise KeyError((criterion, matcher, group_index))

    def to_json_dict(self) -> dict:
        return {
            "results": [
                {
                    "criterion": r.criterion,
                    "matcher": r.matcher,
                    "group": r.group_index,
                    "group_label": roman(r.group_index),
                    "fingers": list(r.fingers),
                    "eer": r.eer,
                    "genuine_count": r.genuine_count,
                    "impostor_count": r.impostor_count,
                }
                for r in self.results
            ]
        }

    def to_text(self) -> str:
        header = f"{'criterion':<18}{'matcher':<10}{'group':<7}{'fingers':>8}" \
                 f"{'genuine':>9}{'impostor':>10}{'EER %':>9}"
        lines = [header, "-" * len(header)]
        for r in self.results:
            lines.append(f"{r.criterion:<18}{r.matcher:<10}{roman(r.group_index):<7}"
                         f"{len(r.fingers):>8}{r.genuine_count:>9}"
                         f"{r.impostor_count:>10}{100.0 * r.eer:>9.2f}")
        return "\n".join(lines) + "\n"

    def write_det_files(self, out_dir: str | Path) -> list[Path]:
        """One 'fmr fnmr threshold' data file per (criterion, matcher, group)."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for r in self.results:
            name = f"det_{r.criterion.replace(':', '-')}_{r.matcher}_g{r.group_index}.txt"
            lines = [f"{f:.17g} {n:.17g} {t:.17g}"
                     for f, n, t in zip(r.det.fmr, r.det.fnmr, r.det.thresholds)]
            path = out / name
            path.write_text("\n".join(lines) + "\n", encoding="ascii")
            paths.append(path)
        return paths


def per_group_report(score_sets: dict[str, ScoreSet],
                     groups_by_criterion: dict[str, list[list[str]]]
                     ) -> QualityGroupReport:
    """EER per (criterion, matcher, group); scores follow the template finger."""
    results = []
    for criterion in sorted(groups_by_criterion):
        groups = groups_by_criterion[criterion]
        flat = [f for grp in groups for f in grp]
        if len(set(flat)) != len(flat):
            raise ValueError(f"criterion {criterion!r}: groups overlap")
        for matcher in sorted(score_sets):
            ss = score_sets[matcher]
            fingers_in_scores = {p.template_finger for p in ss.genuine}
            if set(flat) != fingers_in_scores:
                raise ValueError(f"criterion {criterion!r}: groups do not cover the "
                                 "score set's fingers exactly")
            for gi, grp in enumerate(groups, start=1):
                if not grp:
                    raise ValueError(f"criterion {criterion!r}: group {gi} is empty")
                members = set(grp)
                gen = [p.score for p in ss.genuine if p.template_finger in members]
                imp = [p.score for p in ss.impostor if p.template_finger in members]
                eer, det = compute_eer(gen, imp)
                results.append(GroupResult(criterion, matcher, gi, tuple(grp),
                                           eer, len(gen), len(imp), det))
    return QualityGroupReport(results)


# ---------------------------------------------------------------------------
# score persistence


_SCORE_HEADER = ["type", "template_finger", "probe_finger", "probe_impression",
                 "score", "pair_quality"]


def write_scores_csv(score_set: ScoreSet, path: str | Path) -> None:
    """Canonical score CSV for one matcher, sorted for byte-stable output."""
    rows = [(p.kind, p.template_finger, p.probe_finger, p.probe_impression,
             p.score, p.pair_quality)
            for p in score_set.genuine + score_set.impostor]
    rows.sort()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_SCORE_HEADER)
        for kind, tf, pf, imp, score, pq in rows:
            writer.writerow([kind, tf, pf, imp, repr(score), repr(pq)])


def read_scores_csv(path: str | Path) -> ScoreSet:
    genuine: list[PairScore] = []
    impostor: list[PairScore] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:6]] != _SCORE_HEADER:
            raise ValueError(f"{path}: not a score CSV")
        for row in reader:
            if not row:
                continue
            kind, tf, pf, imp, score, pq = row[:6]
            p = PairScore(kind, tf, pf, int(imp), float(score), float(pq))
            (genuine if kind == "genuine" else impostor).append(p)
    return ScoreSet(genuine, impostor)

"""Command-line entry point.

Subcommands: quality, extract, match, bench, synth, det. Exit codes are a
stable contract: 0 success, 1 usage or validation error, 2 processing
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_overrides, load_config
from .errors import ConfigError, EmptyForegroundError, ImageFormatError, ManifestError
from .evaluation import (load_manifest, per_group_report, rank_fingers_by_quality,
                         read_scores_csv, run_matchers, split_quality_groups,
                         write_scores_csv, compute_eer)
from .image import GrayImage, load_image, save_image
from .minutiae import match_minutiae, normalize_minutiae_score, save_template
from .pipeline import (bank_for_image, make_bank, make_match_params,
                       make_ridge_params, minutiae_from_image, preprocess,
                       quality_of_image, ridge_map_from_image)
from .quality import ingest_external_quality
from .ridge import feature_map_debug_dump, save_feature_map, verify_ridge
from .synth import SynthParams, degrade_ladder, make_corpus, write_corpus

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PROCESSING = 2


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.exit_with(message))

    def exit_with(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return EXIT_USAGE


def _build_parser() -> _Parser:
    parser = _Parser(prog="fpkit", description=__doc__)
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--jobs", type=int, help="worker processes (0 = auto)")
    parser.add_argument("--print-config", action="store_true",
                        help="print the effective configuration and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("quality", help="score image quality to CSV")
    p.add_argument("images", nargs="*", help="image files (PGM or 8-bit gray PNG)")
    p.add_argument("--manifest", help="score every image of a manifest instead")
    p.add_argument("--measure", default="all", choices=["local", "global", "all"])
    p.add_argument("--out", help="output CSV (default: stdout)")

    p = sub.add_parser("extract", help="extract features or debug dumps from one image")
    p.add_argument("image")
    p.add_argument("--kind", required=True,
                   choices=["minutiae", "ridge", "orientation", "mask"],
                   help="feature kind; orientation/mask write PGM debug dumps")
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true",
                   help="write a JSON debug dump instead of the binary layout (ridge)")

    p = sub.add_parser("match", help="match two images")
    p.add_argument("template_image")
    p.add_argument("probe_image")
    p.add_argument("--matcher", default="both", choices=["minutiae", "ridge", "both"])

    p = sub.add_parser("bench", help="run the full verification benchmark")
    p.add_argument("--manifest", required=True)
    p.add_argument("--quality-measure", default="local",
                   help="local, global, or external:<name>")
    p.add_argument("--groups", type=int, help="quality group count (default from config)")
    p.add_argument("--matcher", default="both", choices=["minutiae", "ridge", "both"])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--external-quality", action="append", default=[],
                   metavar="NAME=PATH", help="attach an external quality CSV")

    p = sub.add_parser("synth", help="generate a synthetic corpus plus manifest")
    p.add_argument("--fingers", type=int, required=True)
    p.add_argument("--impressions", type=int, required=True)
    p.add_argument("--levels", type=int, help="degradation levels (default from config)")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true",
                   help="write into a non-empty directory")

    p = sub.add_parser("det", help="EER and DET data from a score CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--out", help="directory for the DET data file")
    return parser


def _effective_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    cfg = apply_overrides(cfg, overrides)
    if args.seed is not None:
        cfg = apply_overrides(cfg, {"seed": str(args.seed)})
    if args.jobs is not None:
        cfg = apply_overrides(cfg, {"jobs": str(args.jobs)})
    return cfg


def _resolve_jobs(cfg: RunConfig) -> int:
    if cfg.jobs > 0:
        return cfg.jobs
    import os
    return max(1, os.cpu_count() or 1)


def _cmd_quality(args, cfg: RunConfig) -> int:
    rows = []
    failures = 0
    targets: list[tuple[str, Path]] = []
    if args.manifest:
        manifest = load_manifest(args.manifest)
        targets = [(e.image_id, manifest.resolve_path(e)) for e in manifest.entries]
    for path in args.images:
        targets.append((Path(path).stem, Path(path)))
    measures = ["local", "global"] if args.measure == "all" else [args.measure]
    for image_id, path in targets:
        try:
            img = load_image(path)
            pre = preprocess(img, cfg)
            for measure in measures:
                q = quality_of_image(img, measure, cfg, pre=pre)
                rows.append((image_id, measure, q.value))
        except (ImageFormatError, EmptyForegroundError, ValueError, OSError) as exc:
            print(f"fpkit quality: {path}: {exc}", file=sys.stderr)
            failures += 1
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["image_id", "measure", "score"])
        for image_id, measure, score in rows:
            writer.writerow([image_id, measure, repr(score)])
    finally:
        if args.out:
            out.close()
    return EXIT_PROCESSING if failures else EXIT_OK


def _cmd_extract(args, cfg: RunConfig) -> int:
    img = load_image(args.image)
    if args.kind == "minutiae":
        template = minutiae_from_image(img, cfg)
        save_template(template, args.out)
    elif args.kind == "ridge":
        fmap = ridge_map_from_image(img, cfg, make_bank(cfg))
        if args.json:
            Path(args.out).write_text(feature_map_debug_dump(fmap), encoding="utf-8")
        else:
            save_feature_map(fmap, args.out)
    else:  # block-level debug dumps rendered at pixel resolution
        pre = preprocess(img, cfg)
        bs = cfg.block_size
        if args.kind == "orientation":
            values = np.rint(pre.field.theta / np.pi * 255.0)
        else:
            values = pre.mask.blocks * 255.0
        raster = np.repeat(np.repeat(values, bs, axis=0), bs, axis=1)
        raster = raster[:img.height, :img.width].astype(np.uint8)
        save_image(GrayImage(raster, dpi=img.dpi), args.out)
    return EXIT_OK


def _cmd_match(args, cfg: RunConfig) -> int:
    img_t = load_image(args.template_image)
    img_p = load_image(args.probe_image)
    matchers = ["minutiae", "ridge"] if args.matcher == "both" else [args.matcher]
    for m in matchers:
        if m == "minutiae":
            t = minutiae_from_image(img_t, cfg)
            p = minutiae_from_image(img_p, cfg)
            raw = match_minutiae(t, p, make_match_params(cfg))
            score = normalize_minutiae_score(raw, cfg.c_m)
        else:
            bank = bank_for_image(img_t, cfg) if cfg.use_estimated_frequency \
                else make_bank(cfg)
            score = verify_ridge(img_t, img_p, bank=bank,
                                 params=make_ridge_params(cfg),
                                 block_size=cfg.block_size,
                                 var_threshold=cfg.var_threshold,
                                 target_mean=cfg.target_mean,
                                 target_var=cfg.target_var)
        print(f"{m}={score!r}")
    return EXIT_OK


def _cmd_bench(args, cfg: RunConfig) -> int:
    manifest = load_manifest(args.manifest)
    for item in args.external_quality:
        if "=" not in item:
            raise ConfigError(f"--external-quality expects NAME=PATH, got {item!r}")
        name, _, path = item.partition("=")
        expected = {e.image_id for e in manifest.entries}
        manifest.quality_maps[name] = ingest_external_quality(path, name, expected)
    matchers = ("minutiae", "ridge") if args.matcher == "both" else (args.matcher,)
    groups_n = args.groups if args.groups is not None else cfg.group_count
    jobs = _resolve_jobs(cfg)

    score_sets = run_matchers(manifest, matchers, args.quality_measure, cfg, jobs=jobs)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for m in matchers:
        write_scores_csv(score_sets[m], out_dir / f"scores_{m}.csv")

    ranking = rank_fingers_by_quality(score_sets[matchers[0]])
    groups = split_quality_groups(ranking, groups_n)
    with open(out_dir / "groups.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["finger_id", "criterion", "group"])
        for gi, grp in enumerate(groups, start=1):
            for finger in grp:
                writer.writerow([finger, args.quality_measure, gi])

    report = per_group_report(score_sets, {args.quality_measure: groups})
    (out_dir / "report.json").write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    report.write_det_files(out_dir / "det")
    print(report.to_text(), end="")
    return EXIT_OK


def _cmd_synth(args, cfg: RunConfig) -> int:
    out_dir = Path(args.out)
    if out_dir.exists() and any(out_dir.iterdir()) and not args.force:
        print(f"fpkit synth: output directory {out_dir} is not empty "
              "(use --force to overwrite)", file=sys.stderr)
        return EXIT_USAGE
    if args.fingers < 2 or args.impressions < 2:
        print("fpkit synth: need at least 2 fingers and 2 impressions",
              file=sys.stderr)
        return EXIT_USAGE
    levels = args.levels if args.levels is not None else cfg.degrade_levels
    params = SynthParams(seed=0, width=cfg.synth_width, height=cfg.synth_height,
                         ridge_period=cfg.ridge_period,
                         orientation_model=cfg.orientation_model,
                         jitter_translation=cfg.jitter_translation,
                         jitter_rotation_deg=cfg.jitter_rotation_deg)
    corpus = make_corpus(args.fingers, args.impressions, cfg.seed, levels=levels,
                         params=params, ladder=degrade_ladder(max(levels, 1)))
    manifest = write_corpus(corpus, out_dir)
    print(f"wrote {len(corpus)} images and {manifest}")
    return EXIT_OK


def _cmd_det(args, cfg: RunConfig) -> int:
    score_set = read_scores_csv(args.scores)
    eer, det = compute_eer(score_set.scores("genuine"), score_set.scores("impostor"))
    print(f"eer={eer!r}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = [f"{f:.17g} {n:.17g} {t:.17g}"
                 for f, n, t in zip(det.fmr, det.fnmr, det.thresholds)]
        (out / "det.txt").write_text("\n".join(lines) + "\n", encoding="ascii")
    return EXIT_OK


_COMMANDS = {
    "quality": _cmd_quality,
    "extract": _cmd_extract,
    "match": _cmd_match,
    "bench": _cmd_bench,
    "synth": _cmd_synth,
    "det": _cmd_det,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _effective_config(args)
        if args.print_config:
            print(cfg.to_text(), end="")
            return EXIT_OK
        if not args.command:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return _COMMANDS[args.command](args, cfg)
    except (ConfigError, ManifestError) as exc:
        print(f"fpkit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ImageFormatError, EmptyForegroundError, ValueError, OSError) as exc:
        print(f"fpkit: {exc}", file=sys.stderr)
        return EXIT_PROCESSING


if __name__ == "__main__":
    raise SystemExit(main())

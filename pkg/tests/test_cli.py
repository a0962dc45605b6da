import csv
import math

import numpy as np
import pytest

from fpkit.cli import main
from fpkit.image import GrayImage, save_image
from fpkit.synth import SynthParams, generate_fingerprint

from conftest import vertical_grating

# small images keep CLI benchmarks fast; passed to every invocation
SMALL = ["--set", "synth_width=192", "--set", "synth_height=224"]


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "corpus"
    code = run_cli(*SMALL, "--seed", "21", "synth", "--fingers", "6",
                   "--impressions", "2", "--levels", "3", "--out", str(out))
    assert code == 0
    return out


def test_print_config_lists_defaults(capsys):
    assert run_cli("--print-config") == 0
    out = capsys.readouterr().out
    assert "c_m = 0.35" in out
    assert "search_radius = 56" in out


def test_unknown_set_key_is_usage_error(capsys):
    assert run_cli("--set", "bogus=1", "--print-config") == 1


def test_unknown_subcommand_is_usage_error():
    assert run_cli("frobnicate") == 1


def test_synth_writes_corpus_and_manifest(corpus_dir):
    files = sorted(p.name for p in corpus_dir.iterdir())
    assert "manifest.csv" in files
    assert len([f for f in files if f.endswith(".pgm")]) == 12
    rows = list(csv.reader(open(corpus_dir / "manifest.csv")))
    assert rows[0] == ["image_id", "path", "finger_id", "impression"]
    assert len(rows) == 13


def test_synth_refuses_nonempty_dir(corpus_dir):
    assert run_cli(*SMALL, "synth", "--fingers", "2", "--impressions", "2",
                   "--out", str(corpus_dir)) == 1


def test_synth_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run_cli(*SMALL, "--seed", "4", "synth", "--fingers", "2",
                       "--impressions", "2", "--out", str(out)) == 0
    for name in sorted(p.name for p in a.iterdir()):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_quality_on_grating(tmp_path, capsys):
    img_path = tmp_path / "grating.pgm"
    save_image(vertical_grating(160, 160, period=10, amplitude=60), img_path)
    assert run_cli("quality", str(img_path), "--measure", "global") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "image_id,measure,score"
    image_id, measure, score = lines[1].split(",")
    assert image_id == "grating"
    assert measure == "global"
    assert float(score) >= 0.7


def test_quality_empty_list_is_header_only(capsys):
    assert run_cli("quality") == 0
    assert capsys.readouterr().out.strip() == "image_id,measure,score"


def test_quality_unreadable_path_exits_2(tmp_path, capsys):
    missing = tmp_path / "nope.pgm"
    assert run_cli("quality", str(missing)) == 2
    assert "nope.pgm" in capsys.readouterr().err


def test_match_self_scores(tmp_path, capsys):
    img = generate_fingerprint(SynthParams(seed=5, width=192, height=224), 1)
    path = tmp_path / "self.pgm"
    save_image(img, path)
    assert run_cli(*SMALL, "match", str(path), str(path), "--matcher", "both") == 0
    out = dict(line.split("=") for line in capsys.readouterr().out.strip().splitlines())
    assert float(out["ridge"]) == 1.0
    assert abs(float(out["minutiae"]) - math.tanh(1.0 / 0.35)) < 1e-12


def test_match_unrelated_below_self(tmp_path, capsys):
    a = generate_fingerprint(SynthParams(seed=6, width=192, height=224), 1)
    b = generate_fingerprint(SynthParams(seed=7, width=192, height=224), 1)
    pa, pb = tmp_path / "a.pgm", tmp_path / "b.pgm"
    save_image(a, pa)
    save_image(b, pb)
    run_cli(*SMALL, "match", str(pa), str(pa))
    self_out = dict(l.split("=") for l in capsys.readouterr().out.strip().splitlines())
    run_cli(*SMALL, "match", str(pa), str(pb))
    cross_out = dict(l.split("=") for l in capsys.readouterr().out.strip().splitlines())
    for m in ("minutiae", "ridge"):
        assert float(cross_out[m]) < float(self_out[m])


def test_match_unsegmentable_image_exits_2(tmp_path):
    flat = tmp_path / "flat.pgm"
    save_image(GrayImage(np.full((96, 96), 128, dtype=np.uint8)), flat)
    assert run_cli("match", str(flat), str(flat), "--matcher", "minutiae") == 2


def test_extract_minutiae_template(tmp_path):
    img = generate_fingerprint(SynthParams(seed=8, width=192, height=224), 1)
    ipath = tmp_path / "f.pgm"
    save_image(img, ipath)
    out = tmp_path / "f.mnt"
    assert run_cli(*SMALL, "extract", str(ipath), "--kind", "minutiae",
                   "--out", str(out)) == 0
    from fpkit.minutiae import load_template
    assert len(load_template(out)) > 0


def test_extract_debug_dumps(tmp_path):
    img = generate_fingerprint(SynthParams(seed=8, width=192, height=224), 1)
    ipath = tmp_path / "f.pgm"
    save_image(img, ipath)
    from fpkit.image import load_image
    for kind in ("orientation", "mask"):
        out = tmp_path / f"{kind}.pgm"
        assert run_cli(*SMALL, "extract", str(ipath), "--kind", kind,
                       "--out", str(out)) == 0
        dump = load_image(out)
        assert dump.pixels.shape == img.pixels.shape
    mask_dump = load_image(tmp_path / "mask.pgm")
    assert set(np.unique(mask_dump.pixels)) <= {0, 255}


def test_quality_from_manifest(corpus_dir, tmp_path):
    out = tmp_path / "q.csv"
    assert run_cli(*SMALL, "quality", "--manifest",
                   str(corpus_dir / "manifest.csv"), "--measure", "all",
                   "--out", str(out)) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["image_id", "measure", "score"]
    assert len(rows) == 1 + 12 * 2  # every image, both measures
    assert all(0.0 <= float(r[2]) <= 1.0 for r in rows[1:])


def test_extract_ridge_map_binary_and_json(tmp_path):
    img = generate_fingerprint(SynthParams(seed=8, width=192, height=224), 1)
    ipath = tmp_path / "f.pgm"
    save_image(img, ipath)
    bin_out = tmp_path / "f.frf"
    assert run_cli(*SMALL, "extract", str(ipath), "--kind", "ridge",
                   "--out", str(bin_out)) == 0
    from fpkit.ridge import load_feature_map
    fmap = load_feature_map(bin_out)
    assert fmap.valid.any()
    json_out = tmp_path / "f.json"
    assert run_cli(*SMALL, "extract", str(ipath), "--kind", "ridge",
                   "--out", str(json_out), "--json") == 0
    import json
    doc = json.loads(json_out.read_text())
    assert doc["cell_size"] == 16


def test_bench_end_to_end(corpus_dir, tmp_path, capsys):
    out = tmp_path / "bench"
    code = run_cli(*SMALL, "--jobs", "1", "bench",
                   "--manifest", str(corpus_dir / "manifest.csv"),
                   "--quality-measure", "local", "--groups", "3",
                   "--matcher", "both", "--out", str(out))
    assert code == 0
    scores = list(csv.reader(open(out / "scores_ridge.csv")))
    assert scores[0] == ["type", "template_finger", "probe_finger",
                         "probe_impression", "score", "pair_quality"]
    kinds = [r[0] for r in scores[1:]]
    assert kinds.count("genuine") == 6 * 1
    assert kinds.count("impostor") == 6 * 5
    groups = list(csv.reader(open(out / "groups.csv")))
    assert len(groups) == 1 + 6
    import json
    report = json.loads((out / "report.json").read_text())
    assert len(report["results"]) == 3 * 2  # groups x matchers
    det_files = list((out / "det").iterdir())
    assert len(det_files) == 6


def test_bench_determinism(corpus_dir, tmp_path):
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        code = run_cli(*SMALL, "--jobs", "2", "bench",
                       "--manifest", str(corpus_dir / "manifest.csv"),
                       "--quality-measure", "local", "--groups", "3",
                       "--out", str(out))
        assert code == 0
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel


def test_bench_invalid_manifest_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("image_id,path,finger_id,impression\nx,x.pgm,f0,1\n")
    assert run_cli("bench", "--manifest", str(bad), "--out",
                   str(tmp_path / "o")) == 1


def test_bench_external_quality(corpus_dir, tmp_path):
    rows = list(csv.reader(open(corpus_dir / "manifest.csv")))[1:]
    qpath = tmp_path / "ext.csv"
    lines = ["# range=1:5 direction=descending", "image_id,score"]
    lines += [f"{r[0]},{(i % 5) + 1}" for i, r in enumerate(rows)]
    qpath.write_text("\n".join(lines) + "\n")
    out = tmp_path / "bench_ext"
    code = run_cli(*SMALL, "--jobs", "1", "bench",
                   "--manifest", str(corpus_dir / "manifest.csv"),
                   "--quality-measure", "external:nist",
                   "--external-quality", f"nist={qpath}",
                   "--groups", "2", "--matcher", "minutiae", "--out", str(out))
    assert code == 0
    assert (out / "scores_minutiae.csv").exists()


def test_det_subcommand(corpus_dir, tmp_path, capsys):
    bench_out = tmp_path / "bench_for_det"
    assert run_cli(*SMALL, "--jobs", "1", "bench",
                   "--manifest", str(corpus_dir / "manifest.csv"),
                   "--matcher", "ridge", "--groups", "2",
                   "--out", str(bench_out)) == 0
    capsys.readouterr()
    det_out = tmp_path / "det_data"
    assert run_cli("det", "--scores", str(bench_out / "scores_ridge.csv"),
                   "--out", str(det_out)) == 0
    out = capsys.readouterr().out
    assert out.startswith("eer=")
    assert 0.0 <= float(out.strip().split("=")[1]) <= 1.0
    assert (det_out / "det.txt").exists()

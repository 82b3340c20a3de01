"""End-to-end command-line surface, driven through click's CliRunner."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from prodreid.evaluation import ConfusionMatrix, accuracy
from prodreid.features import FeatureVector
from prodreid.frontdoor.cli import main
from prodreid.index import GallerySnapshot, load, save


@pytest.fixture(scope="module")
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture(scope="module")
def dataset(tmp_path_factory, runner) -> Path:
    root = tmp_path_factory.mktemp("data") / "bottles"
    res = runner.invoke(
        main, ["--seed", "3", "synth", "--out", str(root), "--images-per-class", "3", "--jitter", "4"]
    )
    assert res.exit_code == 0, res.output
    assert json.loads(res.output) == {
        "out": str(root),
        "classes": 18,
        "images": 54,
        "seed": 3,
        "lookalikes": False,
    }
    return root

FAST = ["--side", "32"]


@pytest.fixture(scope="module")
def index_file(tmp_path_factory, runner, dataset) -> Path:
    out = tmp_path_factory.mktemp("idx") / "gallery.prid"
    res = runner.invoke(main, ["index", str(dataset), "--out", str(out), *FAST])
    assert res.exit_code == 0, res.output
    summary = json.loads(res.output)
    assert summary == {
        "path": str(out),
        "records": 54,
        "classes": 18,
        "dim": 144,
        "partitions": 1,
    }
    return out


def digests(root: Path) -> dict:
    return {
        p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


# -------------------------------------------------------------------- index


def test_index_rebuild_byte_identical(runner, dataset, index_file, tmp_path):
    again = tmp_path / "again.prid"
    res = runner.invoke(main, ["index", str(dataset), "--out", str(again), *FAST])
    assert res.exit_code == 0, res.output
    assert again.read_bytes() == index_file.read_bytes()


def test_index_empty_dir_fails(runner, tmp_path):
    empty = tmp_path / "none"
    empty.mkdir()
    res = runner.invoke(main, ["index", str(empty), "--out", str(tmp_path / "x.prid")])
    assert res.exit_code == 1
    err = json.loads(res.stderr)
    assert err["error"] == "NoImages"
    assert not (tmp_path / "x.prid").exists()


def test_index_env_var_default(runner, dataset, tmp_path):
    out = tmp_path / "env.prid"
    res = runner.invoke(main, ["index", str(dataset), *FAST], env={"PRODREID_INDEX": str(out)})
    assert res.exit_code == 0, res.output
    assert out.exists()


# -------------------------------------------------------------------- query


def gallery_image(dataset: Path) -> Path:
    return sorted((dataset / "red01").glob("*.png"))[0]


def test_query_exact_image_is_rank1_zero(runner, dataset, index_file):
    res = runner.invoke(
        main,
        ["query", "--index", str(index_file), "--image", str(gallery_image(dataset)), "-k", "5", *FAST],
    )
    assert res.exit_code == 0, res.output
    out = json.loads(res.output)
    assert set(out) == {
        "verdict", "class", "confidence", "nearest_distance",
        "hits", "timings_us", "empty_gallery",
    }
    assert out["verdict"] == "Known"
    assert out["class"] == "red01"
    assert out["nearest_distance"] == 0.0
    assert out["empty_gallery"] is False
    assert len(out["hits"]) == 5
    dists = [h["distance"] for h in out["hits"]]
    assert dists == sorted(dists)
    assert out["hits"][0]["id"] == "red01/red01_000.png"
    assert all(v >= 0 for v in out["timings_us"].values())


def test_query_tau_zero_perturbed_is_new_category(runner, index_file, tmp_path):
    snap = load(index_file)
    values = snap.records[0].values.copy()
    values[0] += 0.05
    probe = tmp_path / "probe.prid"
    save(GallerySnapshot((FeatureVector(id="probe", label="", values=values),)), probe)
    res = runner.invoke(
        main, ["query", "--index", str(index_file), "--vector", str(probe), "--tau", "0"]
    )
    assert res.exit_code == 0, res.output
    out = json.loads(res.output)
    assert out["verdict"] == "NewCategory"
    assert out["class"] is None
    assert out["nearest_distance"] > 0.0


def test_query_vector_uses_first_record(runner, index_file, tmp_path):
    snap = load(index_file)
    probe = tmp_path / "first.prid"
    save(GallerySnapshot(snap.records[:2]), probe)
    res = runner.invoke(main, ["query", "--index", str(index_file), "--vector", str(probe)])
    out = json.loads(res.output)
    assert out["nearest_distance"] == 0.0
    assert out["hits"][0]["id"] == snap.records[0].id


def test_query_requires_exactly_one_source(runner, dataset, index_file, tmp_path):
    res = runner.invoke(main, ["query", "--index", str(index_file)])
    assert res.exit_code == 1
    assert json.loads(res.stderr)["error"] == "BadRequest"
    res = runner.invoke(
        main,
        [
            "query", "--index", str(index_file),
            "--image", str(gallery_image(dataset)),
            "--vector", str(index_file),
        ],
    )
    assert res.exit_code == 1
    assert json.loads(res.stderr)["error"] == "BadRequest"


def test_query_csv_format(runner, dataset, index_file):
    res = runner.invoke(
        main,
        ["--format", "csv", "query", "--index", str(index_file),
         "--image", str(gallery_image(dataset)), "-k", "3", *FAST],
    )
    assert res.exit_code == 0, res.output
    lines = res.output.strip().splitlines()
    assert lines[0] == "id,label,distance"
    assert len(lines) == 4
    assert lines[1].split(",")[:2] == ["red01/red01_000.png", "red01"]
    dists = [float(l.rsplit(",", 1)[1]) for l in lines[1:]]
    assert dists == sorted(dists)


def test_query_env_var_index(runner, dataset, index_file):
    res = runner.invoke(
        main,
        ["query", "--image", str(gallery_image(dataset)), *FAST],
        env={"PRODREID_INDEX": str(index_file)},
    )
    assert res.exit_code == 0, res.output
    assert json.loads(res.output)["class"] == "red01"


def test_query_topology_matches_flat(runner, dataset, index_file):
    flat = runner.invoke(
        main, ["query", "--index", str(index_file), "--image", str(gallery_image(dataset)), *FAST]
    )
    fanned = runner.invoke(
        main,
        ["query", "--index", str(index_file), "--image", str(gallery_image(dataset)),
         "--brokers", "3", "--searchers", "2", *FAST],
    )
    a, b = json.loads(flat.output), json.loads(fanned.output)
    a.pop("timings_us"), b.pop("timings_us")
    assert a == b


# ------------------------------------------------------------------- enroll


def test_enroll_then_query_known(runner, dataset, tmp_path):
    idx = tmp_path / "enroll.prid"
    res = runner.invoke(main, ["index", str(dataset), "--out", str(idx), *FAST])
    assert res.exit_code == 0
    before = json.loads(res.output)["records"]

    # Orange sits far from every palette color, so the enrolled class cannot
    # collide with an existing one the way the near-white pair would.
    from prodreid.imaging import write_ppm
    from prodreid.synthesis import BottleShape, ClassSpec, render_bottle

    spec = ClassSpec("orange", (250, 130, 30), BottleShape(0.7, 0.4, 0.3), jitter=0)
    novel = []
    for i in range(2):
        p = tmp_path / f"orange_{i}.ppm"
        write_ppm(render_bottle(spec, (96, 128), (0, 168, 0)), p)
        novel.append(p)

    res = runner.invoke(
        main, ["enroll", "--index", str(idx), "--label", "fresh", *map(str, novel), *FAST]
    )
    assert res.exit_code == 0, res.output
    summary = json.loads(res.output)
    assert summary == {
        "label": "fresh",
        "added": 2,
        "records": before + 2,
        "version": summary["version"],
    }
    assert summary["version"] >= 2

    res = runner.invoke(
        main, ["query", "--index", str(idx), "--image", str(novel[0]), "--tau", "0.05", *FAST]
    )
    out = json.loads(res.output)
    assert (out["verdict"], out["class"], out["nearest_distance"]) == ("Known", "fresh", 0.0)


def test_enroll_existing_class_fails(runner, dataset, index_file, tmp_path):
    idx = tmp_path / "dup.prid"
    idx.write_bytes(index_file.read_bytes())
    res = runner.invoke(
        main, ["enroll", "--index", str(idx), "--label", "red01", str(gallery_image(dataset)), *FAST]
    )
    assert res.exit_code == 1
    assert json.loads(res.stderr)["error"] == "ClassExists"
    assert idx.read_bytes() == index_file.read_bytes()  # index untouched


def test_enroll_no_images_fails(runner, index_file):
    res = runner.invoke(main, ["enroll", "--index", str(index_file), "--label", "x"])
    assert res.exit_code == 1
    assert json.loads(res.stderr)["error"] == "NoImages"


# ----------------------------------------------------------------- evaluate


def test_evaluate_fixture_summaries(runner):
    expected = {"vgg16": (0.88, 3), "alexnet": (0.84, 4), "alpha_alexnet": (0.88, 3)}
    for name, (acc, mislabels) in expected.items():
        res = runner.invoke(main, ["evaluate", "--fixture", name])
        assert res.exit_code == 0, res.output
        out = json.loads(res.output)
        assert out["accuracy"] == acc
        assert out["mislabels"] == mislabels
        assert (out["classes"], out["total"]) == (18, 25)


def test_evaluate_fixture_csv_round_trip(runner):
    res = runner.invoke(main, ["--format", "csv", "evaluate", "--fixture", "alexnet"])
    assert res.exit_code == 0
    m = ConfusionMatrix.from_csv(res.output)
    assert accuracy(m) == 0.84


def test_evaluate_writes_report_artifacts(runner, tmp_path):
    out_dir = tmp_path / "rep"
    res = runner.invoke(main, ["evaluate", "--fixture", "vgg16", "--out", str(out_dir)])
    assert res.exit_code == 0, res.output
    out = json.loads(res.output)
    assert out["csv"] == str(out_dir / "report.csv")
    payload = json.loads((out_dir / "report.json").read_text())
    assert payload["accuracy"] == 0.88
    assert len(payload["mislabels"]) == 3
    m = ConfusionMatrix.from_csv((out_dir / "report.csv").read_text())
    assert m.total == 25


def test_evaluate_source_exclusivity(runner, dataset):
    res = runner.invoke(main, ["evaluate"])
    assert res.exit_code == 1
    assert json.loads(res.stderr)["error"] == "BadRequest"
    res = runner.invoke(main, ["evaluate", "--fixture", "vgg16", "--data", str(dataset)])
    assert res.exit_code == 1
    assert json.loads(res.stderr)["error"] == "BadRequest"


def test_evaluate_data_mode_deterministic(runner, dataset):
    args = ["--seed", "9", "evaluate", "--data", str(dataset), "--tau", "0.5", *FAST]
    first = runner.invoke(main, args)
    assert first.exit_code == 0, first.output
    second = runner.invoke(main, args)
    a, b = json.loads(first.output), json.loads(second.output)
    assert a == b
    assert a["total"] == 18  # one withheld query per 3-image class
    assert 0.0 <= a["accuracy"] <= 1.0


# -------------------------------------------------------------------- synth


def test_synth_deterministic_per_seed(runner, tmp_path):
    outs = []
    for sub, seed in (("a", "4"), ("b", "4"), ("c", "5")):
        res = runner.invoke(
            main,
            ["--seed", seed, "synth", "--out", str(tmp_path / sub), "--images-per-class", "2"],
        )
        assert res.exit_code == 0, res.output
        outs.append(digests(tmp_path / sub))
    assert outs[0] == outs[1]
    assert outs[0] != outs[2]


def test_version_flag(runner):
    res = runner.invoke(main, ["--version"])
    assert res.exit_code == 0
    assert "0.1.0" in res.output

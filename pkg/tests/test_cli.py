import json
import hashlib
from pathlib import Path

import numpy as np
import pytest

from triphase.cli import main
from triphase.config import ConfigError, config_hash, load_config, validate_config
from triphase.synthgen import SynthConfig, generate, grayscale_render
from triphase.volume import GrayscaleVolume, load_volume, save_volume


BOUNDS = {
    "1": {"intensity": [0, 70], "gradient": [0.0, 1e9]},
    "2": {"intensity": [90, 180], "gradient": [0.0, 1e9]},
    "3": {"intensity": [200, 255], "gradient": [0.0, 1e9]},
}


def _write_config(path, **overrides):
    cfg = {
        "seed": 9,
        "out_dir": str(path.parent / "out"),
        "segment": {"bounds": BOUNDS},
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return path


def _make_gray_fixture(tmp_path, name="vol", dims=(16, 16, 16), seed=3):
    seg = generate(SynthConfig(dims=dims, seed=seed))
    gray = grayscale_render(seg, noise_std=0.0)
    path = tmp_path / f"{name}.mvol"
    save_volume(gray, path)
    return path, seg


# --- config ------------------------------------------------------------------

def test_config_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown config key: frobnicate"):
        validate_config({"frobnicate": 1})


def test_config_nested_unknown_key_rejected():
    with pytest.raises(ConfigError, match="synth.frob"):
        validate_config({"synth": {"frob": 2}})


def test_config_type_check():
    with pytest.raises(ConfigError, match="seed"):
        validate_config({"seed": "zero"})


def test_config_hash_stable_and_sensitive():
    a = validate_config({"seed": 1})
    b = validate_config({"seed": 1})
    c = validate_config({"seed": 2})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)


def test_bad_json_is_config_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(ConfigError, match="valid JSON"):
        load_config(p)


def test_invalid_fractions_rejected_before_work(tmp_path):
    cfg = _write_config(
        tmp_path / "cfg.json",
        synth={"count": 1, "dims": [8, 8, 8], "fractions": [0.5, 0.4, 0.4]},
    )
    assert main(["synth", "--config", str(cfg)]) == 2


# --- ingest ------------------------------------------------------------------

def test_ingest_roundtrip_and_exit_codes(tmp_path, capsys):
    src, _ = _make_gray_fixture(tmp_path)
    cfg = _write_config(tmp_path / "cfg.json", ingest={"volumes": [str(src)]})
    assert main(["ingest", "--config", str(cfg)]) == 0
    produced = tmp_path / "out" / "ingested" / "vol.mvol"
    assert produced.read_bytes() == src.read_bytes()
    # re-ingest of the produced file is byte-identical
    cfg2 = _write_config(
        tmp_path / "cfg2.json",
        ingest={"volumes": [str(produced)]},
        out_dir=str(tmp_path / "out2"),
    )
    assert main(["ingest", "--config", str(cfg2)]) == 0
    again = tmp_path / "out2" / "ingested" / "vol.mvol"
    assert again.read_bytes() == produced.read_bytes()


def test_ingest_corrupt_header_diagnostic(tmp_path, capsys):
    src, _ = _make_gray_fixture(tmp_path)
    blob = bytearray(src.read_bytes())
    blob[0] = 0x58
    bad = tmp_path / "bad.mvol"
    bad.write_bytes(bytes(blob))
    cfg = _write_config(tmp_path / "cfg.json", ingest={"volumes": [str(bad)]})
    assert main(["ingest", "--config", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "byte offset 0" in err


def test_ingest_pgm_stack(tmp_path):
    rng = np.random.default_rng(0)
    paths = []
    for k in range(3):
        p = tmp_path / f"s{k}.pgm"
        img = rng.integers(0, 256, size=(5, 4), dtype=np.uint8)  # h=5, w=4
        p.write_bytes(b"P5\n4 5\n255\n" + img.tobytes())
        paths.append(str(p))
    cfg = _write_config(
        tmp_path / "cfg.json",
        ingest={"stacks": [{"name": "stackvol", "slices": paths, "spacing": 0.1}]},
    )
    assert main(["ingest", "--config", str(cfg)]) == 0
    vol = load_volume(tmp_path / "out" / "ingested" / "stackvol.mvol")
    assert vol.dims == (4, 5, 3)
    assert vol.spacing == 0.1


# --- segment / metrics --------------------------------------------------------

def test_segment_and_metrics_commands(tmp_path):
    src, seg_truth = _make_gray_fixture(tmp_path)
    cfg = _write_config(
        tmp_path / "cfg.json",
        segment={"bounds": BOUNDS, "inputs": [str(src)]},
    )
    assert main(["segment", "--config", str(cfg)]) == 0
    seg_path = tmp_path / "out" / "segmented" / "vol_seg.mvol"
    seg = load_volume(seg_path)
    assert np.array_equal(seg.data, seg_truth.data)  # noiseless recovery

    cfg2 = _write_config(
        tmp_path / "cfg2.json",
        metrics={"inputs": [str(seg_path)]},
        out_dir=str(tmp_path / "out"),
    )
    assert main(["metrics", "--config", str(cfg2)]) == 0
    csv_path = tmp_path / "out" / "metrics" / "metrics.csv"
    lines = csv_path.read_text().strip().split("\n")
    assert lines[0].startswith("id,nx,ny,nz,")
    assert lines[1].split(",")[0] == "vol_seg"
    assert lines[-2].split(",")[0] == "MEAN"
    assert lines[-1].split(",")[0] == "STD"
    assert (tmp_path / "out" / "metrics" / "vol_seg.json").exists()


def test_segment_batch_partial_failure(tmp_path):
    good, _ = _make_gray_fixture(tmp_path, "good")
    flat = GrayscaleVolume(np.full((8, 8, 8), 128, dtype=np.uint8))
    bad = tmp_path / "bad.mvol"
    save_volume(flat, bad)  # no phase-1/3 seeds possible
    cfg = _write_config(
        tmp_path / "cfg.json",
        segment={"bounds": BOUNDS, "inputs": [str(good), str(bad)]},
    )
    assert main(["segment", "--config", str(cfg)]) == 1
    assert (tmp_path / "out" / "segmented" / "good_seg.mvol").exists()
    assert not (tmp_path / "out" / "segmented" / "bad_seg.mvol").exists()


def test_segment_parallel_jobs_identical(tmp_path):
    paths = []
    for k in range(3):
        src, _ = _make_gray_fixture(tmp_path, f"v{k}", seed=30 + k)
        paths.append(str(src))
    for jobs, out_name in (("1", "out1"), ("2", "out2")):
        cfg = _write_config(
            tmp_path / f"cfg{jobs}.json",
            segment={"bounds": BOUNDS, "inputs": paths},
            out_dir=str(tmp_path / out_name),
        )
        assert main(["segment", "--config", str(cfg), "--jobs", jobs]) == 0
    for k in range(3):
        a = (tmp_path / "out1" / "segmented" / f"v{k}_seg.mvol").read_bytes()
        b = (tmp_path / "out2" / "segmented" / f"v{k}_seg.mvol").read_bytes()
        assert a == b


def test_segment_density_map_export(tmp_path):
    src, _ = _make_gray_fixture(tmp_path)
    cfg = _write_config(
        tmp_path / "cfg.json",
        segment={"bounds": BOUNDS, "inputs": [str(src)]},
    )
    assert main(["segment", "--config", str(cfg), "--density-maps"]) == 0
    density = tmp_path / "out" / "density_maps" / "vol_density.csv"
    text = density.read_text()
    assert text.startswith("intensity_bin,gradient_bin,count")
    total = sum(int(r.split(",")[2]) for r in text.strip().split("\n")[1:])
    assert total == 16 ** 3


def test_metrics_rerun_identical(tmp_path):
    src, _ = _make_gray_fixture(tmp_path)
    seg = generate(SynthConfig(dims=(12, 12, 12), seed=5))
    seg_path = tmp_path / "seg.mvol"
    save_volume(seg, seg_path)
    cfg = _write_config(tmp_path / "cfg.json", metrics={"inputs": [str(seg_path)]})
    assert main(["metrics", "--config", str(cfg)]) == 0
    first = (tmp_path / "out" / "metrics" / "metrics.csv").read_bytes()
    assert main(["metrics", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "metrics" / "metrics.csv").read_bytes() == first


# --- synth ---------------------------------------------------------------------

def test_synth_octants_and_reproducibility(tmp_path):
    cfg = _write_config(
        tmp_path / "cfg.json",
        synth={"count": 1, "dims": [16, 16, 16], "octants": True},
    )
    assert main(["synth", "--config", str(cfg)]) == 0
    files = sorted((tmp_path / "out" / "synth").iterdir())
    assert len(files) == 8
    vols = [load_volume(f) for f in files]
    assert all(v.dims == (8, 8, 8) for v in vols)
    hashes1 = [hashlib.sha256(f.read_bytes()).hexdigest() for f in files]
    # rerun into a fresh directory reproduces identical bytes
    cfg2 = _write_config(
        tmp_path / "cfg2.json",
        synth={"count": 1, "dims": [16, 16, 16], "octants": True},
        out_dir=str(tmp_path / "out2"),
    )
    assert main(["synth", "--config", str(cfg2)]) == 0
    files2 = sorted((tmp_path / "out2" / "synth").iterdir())
    hashes2 = [hashlib.sha256(f.read_bytes()).hexdigest() for f in files2]
    assert hashes1 == hashes2


def test_synth_render_outputs_grayscale(tmp_path):
    cfg = _write_config(
        tmp_path / "cfg.json",
        synth={"count": 1, "dims": [12, 12, 12],
               "render": {"noise_std": 0.0}},
    )
    assert main(["synth", "--config", str(cfg)]) == 0
    gray = load_volume(tmp_path / "out" / "synth_gray" / "synth_000.mvol")
    assert isinstance(gray, GrayscaleVolume)
    assert set(np.unique(gray.data)) <= {20, 128, 230}


# --- compare ---------------------------------------------------------------------

def _metrics_csv_for(tmp_path, name, seeds, dims=(12, 12, 12)):
    seg_paths = []
    for s in seeds:
        seg = generate(SynthConfig(dims=dims, seed=s))
        p = tmp_path / f"{name}_{s}.mvol"
        save_volume(seg, p)
        seg_paths.append(str(p))
    out = tmp_path / f"out_{name}"
    cfg = _write_config(
        tmp_path / f"cfg_{name}.json",
        metrics={"inputs": seg_paths},
        out_dir=str(out),
    )
    assert main(["metrics", "--config", str(cfg)]) == 0
    return out / "metrics" / "metrics.csv"


def test_compare_requires_two_sources(tmp_path):
    csv_a = _metrics_csv_for(tmp_path, "a", [1, 2])
    cfg = _write_config(
        tmp_path / "cfg.json", compare={"inputs": {"a": str(csv_a)}}
    )
    assert main(["compare", "--config", str(cfg)]) == 2


def test_compare_identical_csv_perfect_overlap(tmp_path):
    csv_a = _metrics_csv_for(tmp_path, "a", [1, 2, 3])
    cfg = _write_config(
        tmp_path / "cfg.json",
        compare={"inputs": {"x": str(csv_a), "y": str(csv_a)}},
    )
    assert main(["compare", "--config", str(cfg)]) == 0
    report = json.loads((tmp_path / "out" / "compare" / "report.json").read_text())
    assert len(report["metrics"]) == 16  # headline panel set
    for entry in report["metrics"].values():
        for pair in entry["pairs"]:
            assert pair["distance"] == 0.0
            assert pair["iqr_overlap"] == 1.0


def test_compare_schema_mismatch(tmp_path):
    csv_a = _metrics_csv_for(tmp_path, "a", [1, 2])
    bad = tmp_path / "bad.csv"
    bad.write_text("id,whatever\nx,1\n")
    cfg = _write_config(
        tmp_path / "cfg.json",
        compare={"inputs": {"a": str(csv_a), "b": str(bad)}},
    )
    assert main(["compare", "--config", str(cfg)]) == 2


# --- pipeline ---------------------------------------------------------------------

def _pipeline_config(tmp_path, out_name="out"):
    src, _ = _make_gray_fixture(tmp_path, dims=(24, 24, 24), seed=21)
    return _write_config(
        tmp_path / "pipeline.json",
        ingest={"volumes": [str(src)]},
        subvolume={"edge": 12, "count": 4},
        segment={"bounds": BOUNDS},
        synth={"count": 4, "dims": [12, 12, 12]},
        out_dir=str(tmp_path / out_name),
    )


def test_pipeline_end_to_end_manifest(tmp_path):
    cfg = _pipeline_config(tmp_path)
    assert main(["pipeline", "--config", str(cfg)]) == 0
    run_dirs = list((tmp_path / "out").iterdir())
    assert len(run_dirs) == 1
    manifest = json.loads((run_dirs[0] / "manifest.json").read_text())
    stages = {s["name"]: s for s in manifest["stages"]}
    assert set(stages) == {
        "ingest", "subvolumes", "segment", "metrics_original",
        "synth", "metrics_ellipsoid", "compare",
    }
    assert all(s["status"] == "ok" for s in stages.values())


def test_pipeline_rerun_bit_exact(tmp_path):
    cfg = _pipeline_config(tmp_path)
    assert main(["pipeline", "--config", str(cfg)]) == 0
    run_dir = next((tmp_path / "out").iterdir())
    manifest1 = json.loads((run_dir / "manifest.json").read_text())
    hashes1 = {
        f["path"]: f["sha256"] for s in manifest1["stages"] for f in s["outputs"]
    }
    assert main(["pipeline", "--config", str(cfg)]) == 0
    manifest2 = json.loads((run_dir / "manifest.json").read_text())
    hashes2 = {
        f["path"]: f["sha256"] for s in manifest2["stages"] for f in s["outputs"]
    }
    assert hashes1 == hashes2
    m1 = {k: v for k, v in manifest1.items() if k != "created"}
    m2 = {k: v for k, v in manifest2.items() if k != "created"}
    assert m1 == m2


def test_pipeline_config_hash_changes_directory(tmp_path):
    cfg = _pipeline_config(tmp_path)
    assert main(["pipeline", "--config", str(cfg)]) == 0
    first = {p.name for p in (tmp_path / "out").iterdir()}
    assert len(first) == 1
    # a seed override is part of the effective config: new directory
    assert main(["pipeline", "--config", str(cfg), "--seed", "77"]) == 0
    second = {p.name for p in (tmp_path / "out").iterdir()}
    assert len(second) == 2 and first < second
    # changing the config itself creates a third directory, old untouched
    raw = json.loads(cfg.read_text())
    raw["subvolume"]["count"] = 5
    cfg.write_text(json.dumps(raw))
    assert main(["pipeline", "--config", str(cfg)]) == 0
    third = {p.name for p in (tmp_path / "out").iterdir()}
    assert len(third) == 3 and second < third

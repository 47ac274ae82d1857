import json

import numpy as np
import pytest

from gdsr.bench import (
    BenchRecord,
    DatasetEntry,
    DatasetManifest,
    PipelineConfig,
    fit_image_lambda,
    load_manifest,
    rmse,
    run_bench,
    run_image,
    CSV_HEADER,
    MEAN_ROW_ID,
    ERROR_MARKER,
)
from gdsr.feature_bank import save_params
from gdsr.image_core import DepthMap

from scenes import make_scene, write_scene_files


def build_manifest(tmp_path, n=2, seed=90, M=64, N=64, name="synth"):
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n):
        gt, rgb = make_scene(rng, M, N, n_shapes=3)
        entries.append(write_scene_files(tmp_path, f"img{i:02d}", gt, rgb))
    doc = {"name": name, "entries": entries}
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(doc))
    return load_manifest(path)


def test_rmse_basics():
    gt = DepthMap(np.zeros((2, 2)))
    assert rmse(gt, gt) == 0.0
    pred = DepthMap(np.full((2, 2), 2.0))
    assert rmse(pred, gt) == 2.0
    spike = DepthMap(np.array([[3.0, 0.0], [0.0, 0.0]]))
    assert rmse(spike, gt) == 1.5  # sqrt(9/4)


def test_rmse_units_and_border():
    gt = DepthMap(np.zeros((6, 6)), unit_scale=100.0)
    data = np.zeros((6, 6))
    data[0, 0] = 1.0
    pred = DepthMap(data, unit_scale=100.0)
    full = rmse(pred, gt)
    assert abs(full - 100.0 * np.sqrt(1 / 36)) < 1e-12
    assert rmse(pred, gt, crop_border=1) == 0.0  # corner excluded
    with pytest.raises(ValueError, match="border"):
        rmse(pred, gt, crop_border=3)
    with pytest.raises(ValueError, match="unit scales"):
        rmse(DepthMap(data, unit_scale=1.0), gt)


def test_manifest_validation(tmp_path):
    manifest = build_manifest(tmp_path)
    assert len(manifest.entries) == 2
    assert manifest.split("train") == manifest.entries
    with pytest.raises(FileNotFoundError):
        DatasetManifest("x", (DatasetEntry("a", "missing.ppm", "missing.pgm"),))
    e = manifest.entries[0]
    with pytest.raises(ValueError, match="unique"):
        DatasetManifest("x", (e, e))
    with pytest.raises(ValueError, match="split"):
        DatasetEntry("a", e.rgb_path, e.depth_path, split="holdout")


def test_config_hash_deterministic_and_sensitive():
    a = PipelineConfig(method="image_domain", lam=2.0, scale=4)
    b = PipelineConfig(method="image_domain", lam=2.0, scale=4)
    c = PipelineConfig(method="image_domain", lam=2.5, scale=4)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert a.with_scale(8).config_hash() != a.config_hash()
    with pytest.raises(ValueError):
        PipelineConfig(method="magic")


def test_run_image_constant_depth_is_exact(tmp_path):
    from gdsr.image_core import RgbImage
    from gdsr.imgio import save_image

    depth = DepthMap(np.full((32, 32), 0.5))
    plane = np.full((32, 32), 0.25)
    save_image(depth, tmp_path / "d.pgm", "pgm16")
    save_image(RgbImage(plane, plane, plane), tmp_path / "r.ppm", "ppm8")
    entry = DatasetEntry("const", str(tmp_path / "r.ppm"), str(tmp_path / "d.pgm"))
    for method in ("bicubic", "image_domain", "feature_domain"):
        cfg = PipelineConfig(method=method, lam=1.0, scale=4)
        _, rec = run_image(entry, cfg, "t")
        assert rec.rmse <= 1e-12  # zero at double precision


def test_image_domain_lambda_zero_equals_bicubic(tmp_path):
    manifest = build_manifest(tmp_path)
    entry = manifest.entries[0]
    pred_b, rec_b = run_image(entry, PipelineConfig(method="bicubic", scale=4), "t")
    pred_i, rec_i = run_image(entry, PipelineConfig(method="image_domain", lam=0.0, scale=4), "t")
    assert np.array_equal(pred_b.data, pred_i.data)
    assert rec_b.rmse == rec_i.rmse


def test_feature_identity_params_reduce_to_image_domain(tmp_path):
    # a fitted-parameter file pinning lambda_0 to the image-domain lambda
    # and a passthrough head makes the C=1 slice of the feature pipeline
    # coincide with the image-domain pipeline
    manifest = build_manifest(tmp_path, n=1)
    entry = manifest.entries[0]
    lam = 1.3
    params = tmp_path / "p.json"
    save_params(params, {
        "method": "feature",
        "bank": "id1",
        "lambdas": [lam] + [0.0] * 7,
        "head_weights": [1.0] + [0.0] * 7,
        "head_bias": 0.0,
        "head_gamma": 0.0,
        "config_hash": "manual",
    })
    cfg_f = PipelineConfig(method="feature_domain", params_path=str(params), scale=4)
    cfg_i = PipelineConfig(method="image_domain", lam=lam, scale=4)
    pred_f, rec_f = run_image(entry, cfg_f, "t")
    pred_i, rec_i = run_image(entry, cfg_i, "t")
    assert np.abs(pred_f.data - pred_i.data).max() < 1e-10
    assert abs(rec_f.rmse - rec_i.rmse) < 1e-10


def test_run_image_requires_scale(tmp_path):
    manifest = build_manifest(tmp_path, n=1)
    with pytest.raises(ValueError, match="scale"):
        run_image(manifest.entries[0], PipelineConfig(method="bicubic"), "t")


def test_run_bench_counting_and_aggregates(tmp_path):
    manifest = build_manifest(tmp_path, n=1)
    configs = [PipelineConfig(method="bicubic"),
               PipelineConfig(method="image_domain", lam=1.0)]
    records = run_bench(manifest, [4], configs, threads=1, timing=False)
    details = [r for r in records if r.image_id != MEAN_ROW_ID]
    means = [r for r in records if r.image_id == MEAN_ROW_ID]
    assert len(details) == 2 and len(means) == 2
    for mean in means:
        group = [r.rmse for r in details if r.config_hash == mean.config_hash]
        assert mean.rmse == float(np.mean(group))


def test_run_bench_deterministic_csv(tmp_path):
    manifest = build_manifest(tmp_path, n=2)
    configs = [PipelineConfig(method="image_domain", lam=2.0)]
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    run_bench(manifest, [2, 4], configs, out1, threads=2, timing=False)
    run_bench(manifest, [2, 4], configs, out2, threads=2, timing=False)
    blob1, blob2 = out1.read_bytes(), out2.read_bytes()
    assert blob1 == blob2
    lines = blob1.decode().strip().split("\n")
    assert lines[0] == CSV_HEADER
    # 2 entries x 2 scales x 1 config details + 2 aggregates
    assert len(lines) == 1 + 4 + 2


def test_run_bench_thread_count_does_not_change_results(tmp_path):
    manifest = build_manifest(tmp_path, n=2)
    configs = [PipelineConfig(method="image_domain", lam=1.0)]
    r1 = run_bench(manifest, [4], configs, threads=1, timing=False)
    r4 = run_bench(manifest, [4], configs, threads=4, timing=False)
    assert [(r.image_id, r.rmse) for r in r1] == [(r.image_id, r.rmse) for r in r4]


def test_run_bench_error_rows_do_not_abort(tmp_path):
    manifest = build_manifest(tmp_path, n=2)
    bad = PipelineConfig(method="feature_domain", params_path=str(tmp_path / "nope.json"))
    good = PipelineConfig(method="bicubic")
    out = tmp_path / "err.csv"
    records = run_bench(manifest, [4], [bad, good], out, threads=1, timing=False)
    details = [r for r in records if r.image_id != MEAN_ROW_ID]
    assert sum(r.rmse is None for r in details) == 2
    assert sum(r.rmse is not None for r in details) == 2
    text = out.read_text()
    assert ERROR_MARKER in text
    # aggregate over an all-failed group carries the marker too
    mean_rows = [ln for ln in text.strip().split("\n")[1:] if f",{MEAN_ROW_ID}," in ln]
    assert any(ERROR_MARKER in ln for ln in mean_rows)


def test_csv_roundtrip_mean_exact(tmp_path):
    manifest = build_manifest(tmp_path, n=3)
    out = tmp_path / "table.csv"
    run_bench(manifest, [4], [PipelineConfig(method="image_domain", lam=3.0)],
              out, threads=1, timing=False)
    rows = [ln.split(",") for ln in out.read_text().strip().split("\n")[1:]]
    details = [float(r[5]) for r in rows if r[1] != MEAN_ROW_ID]
    mean = [float(r[5]) for r in rows if r[1] == MEAN_ROW_ID]
    assert len(details) == 3 and len(mean) == 1
    assert abs(np.mean(details) - mean[0]) < 1e-12


def test_fit_image_lambda_never_worse_than_unguided(tmp_path):
    manifest = build_manifest(tmp_path, n=3, M=64, N=64, seed=91)
    cfg = PipelineConfig(method="image_domain", scale=8)
    lam = fit_image_lambda(manifest, cfg, 8, grid_points=9)

    def pooled(lam_value):
        cfg_l = PipelineConfig(method="image_domain", lam=lam_value, scale=8)
        recs = [run_image(e, cfg_l, "t")[1].rmse for e in manifest.entries]
        return float(np.sqrt(np.mean(np.square(recs))))

    assert pooled(lam) <= pooled(0.0) + 1e-12


def test_bench_record_validation():
    with pytest.raises(ValueError):
        BenchRecord("d", "i", 4, "bicubic", "h", -1.0, 0.0)
    with pytest.raises(ValueError):
        BenchRecord("d", "i", 4, "bicubic", "h", 1.0, -5.0)

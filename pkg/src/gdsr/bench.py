"""Benchmark harness: manifests, pipeline orchestration, RMSE, CSV tables.

A bench run crosses manifest entries with scale factors and pipeline
configurations, producing one record per combination plus one aggregate
(mean) record per (dataset, scale, config) group. Entries may be
processed by a worker pool, but records are always emitted in canonical
order (manifest order x scales x configs), so parallelism never changes
output bytes. Wall-clock timings are reported by default and can be
disabled to make the CSV byte-reproducible across runs.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .feature_bank import (
    FilterBank,
    ReconstructionHead,
    apply_head,
    channel_solve,
    default_bank,
    extract,
    fit_head,
    fit_lambda,
    load_params,
    INIT_LOG_LAMBDA,
    LOG_LAMBDA_BOUNDS,
)
from .guidance import EdgeWeightConfig, edge_weight, luminance, multichannel_edge_weight
from .image_core import DepthMap, RgbImage, elementwise_combine
from .imgio import load_image
from .resample import check_scale, crop_to_multiple, degrade
from .spectral import FIVE_POINT, build_rhs, derived_symbol, laplacian_apply, paper_symbol, solve_screened

__all__ = [
    "DatasetEntry",
    "DatasetManifest",
    "load_manifest",
    "PipelineConfig",
    "BenchRecord",
    "rmse",
    "predict",
    "run_image",
    "run_bench",
    "write_csv",
    "fit_image_lambda",
    "fit_feature_params",
    "CSV_HEADER",
]

CSV_HEADER = "dataset,image_id,scale,method,config_hash,rmse,runtime_ms"
MEAN_ROW_ID = "__mean__"
ERROR_MARKER = "ERROR"

_METHODS = ("bicubic", "image_domain", "feature_domain")


@dataclass(frozen=True)
class DatasetEntry:
    id: str
    rgb_path: str
    depth_path: str
    depth_unit_scale: float = 1.0
    split: str = "test"

    def __post_init__(self):
        if self.depth_unit_scale <= 0:
            raise ValueError(f"depth_unit_scale must be positive, got {self.depth_unit_scale}")
        if self.split not in ("train", "val", "test"):
            raise ValueError(f"split must be train/val/test, got {self.split!r}")


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    entries: tuple[DatasetEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        if len(entries) == 0:
            raise ValueError("manifest has no entries")
        ids = [e.id for e in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest ids must be unique")
        for e in entries:
            for p in (e.rgb_path, e.depth_path):
                if not Path(p).exists():
                    raise FileNotFoundError(f"manifest path does not exist: {p}")
        object.__setattr__(self, "entries", entries)

    def split(self, tag: str) -> tuple[DatasetEntry, ...]:
        return tuple(e for e in self.entries if e.split == tag)


def load_manifest(path) -> DatasetManifest:
    """Read a JSON manifest: {"name": ..., "entries": [{id, rgb_path,
    depth_path, depth_unit_scale, split}, ...]}. Relative paths resolve
    against the manifest's directory."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    base = path.parent
    entries = []
    for raw in doc["entries"]:
        entries.append(DatasetEntry(
            id=str(raw["id"]),
            rgb_path=str(base / raw["rgb_path"]),
            depth_path=str(base / raw["depth_path"]),
            depth_unit_scale=float(raw.get("depth_unit_scale", 1.0)),
            split=str(raw.get("split", "test")),
        ))
    return DatasetManifest(str(doc.get("name", path.stem)), tuple(entries))


@dataclass(frozen=True)
class PipelineConfig:
    """One method configuration; hashes deterministically for the CSV."""

    method: str = "bicubic"
    lam: float = 1.0
    params_path: str | None = None
    edge_mode: str = "hard"
    tau_quantile: float = 0.9
    steepness: float = 50.0
    symbol_mode: str = "derived"
    scale: int | None = None
    crop_border: int = 0
    antialias: bool = True

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}, got {self.method!r}")
        if not (np.isfinite(self.lam) and self.lam >= 0.0):
            raise ValueError(f"lam must be finite and >= 0, got {self.lam}")
        if self.crop_border < 0:
            raise ValueError(f"crop_border must be >= 0, got {self.crop_border}")
        if self.scale is not None:
            check_scale(self.scale)
        # Validate edge fields eagerly.
        self.edge_config()

    def edge_config(self) -> EdgeWeightConfig:
        return EdgeWeightConfig(self.edge_mode, self.tau_quantile, self.steepness)

    def with_scale(self, s: int) -> "PipelineConfig":
        if self.scale == s:
            return self
        d = asdict(self)
        d["scale"] = s
        return PipelineConfig(**d)

    def config_hash(self) -> str:
        canonical = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("ascii")).hexdigest()[:12]


@dataclass(frozen=True)
class BenchRecord:
    """One evaluation result; rmse is None when the entry failed."""

    dataset: str
    image_id: str
    scale: int
    method: str
    config_hash: str
    rmse: float | None
    runtime_ms: float

    def __post_init__(self):
        if self.rmse is not None and not (np.isfinite(self.rmse) and self.rmse >= 0):
            raise ValueError(f"rmse must be finite and >= 0, got {self.rmse}")
        if not (np.isfinite(self.runtime_ms) and self.runtime_ms >= 0):
            raise ValueError(f"runtime_ms must be finite and >= 0, got {self.runtime_ms}")


def rmse(pred: DepthMap, gt: DepthMap, crop_border: int = 0) -> float:
    """Root-mean-square error in metric units over the border-cropped region."""
    if pred.shape != gt.shape:
        raise ValueError(f"dimension mismatch: {pred.shape} vs {gt.shape}")
    if pred.unit_scale != gt.unit_scale:
        raise ValueError("rmse requires matching unit scales")
    b = int(crop_border)
    M, N = gt.shape
    if b < 0 or 2 * b >= min(M, N):
        raise ValueError(f"crop border {b} too large for {gt.shape}")
    diff = pred.data[b : M - b, b : N - b] - gt.data[b : M - b, b : N - b]
    return float(np.sqrt(np.mean(diff * diff))) * gt.unit_scale


def _load_feature_params(cfg: PipelineConfig, channels: int):
    """Fitted lambdas and head for the feature pipeline, or passthrough
    defaults (lambda_c = e^0.1, head = channel 0 verbatim) when no
    parameter file is configured."""
    if cfg.params_path is not None:
        params = load_params(cfg.params_path)
        if params.get("method") != "feature":
            raise ValueError(f"parameter file {cfg.params_path} is not a feature fit")
        lambdas = np.asarray(params["lambdas"], dtype=np.float64)
        head = ReconstructionHead(
            np.asarray(params["head_weights"], dtype=np.float64),
            float(params["head_bias"]),
            float(params.get("head_gamma", 0.0)),
        )
        return lambdas, head
    weights = np.zeros(channels)
    weights[0] = 1.0
    return np.full(channels, math.exp(INIT_LOG_LAMBDA)), ReconstructionHead(weights, 0.0)


def _image_lambda(cfg: PipelineConfig) -> float:
    if cfg.params_path is not None:
        params = load_params(cfg.params_path)
        if params.get("method") != "image":
            raise ValueError(f"parameter file {cfg.params_path} is not an image-domain fit")
        return float(params["lambda"])
    return cfg.lam


def predict(up: DepthMap, rgb: RgbImage, cfg: PipelineConfig,
            bank: FilterBank | None = None) -> DepthMap:
    """Super-resolve an upsampled depth map under one configuration.

    ``up`` must already have the guide's dimensions.
    """
    if up.shape != rgb.shape:
        raise ValueError(f"depth {up.shape} does not match guide {rgb.shape}")
    if cfg.method == "bicubic":
        return up
    M, N = up.shape
    if cfg.symbol_mode == "paper":
        symbol = paper_symbol(M, N)
    else:
        symbol = derived_symbol(FIVE_POINT, M, N)
    lum = luminance(rgb)
    edge_cfg = cfg.edge_config()
    if cfg.method == "image_domain":
        lam = _image_lambda(cfg)
        w = edge_weight(lum, edge_cfg)
        target = elementwise_combine(laplacian_apply(lum), w, "mul")
        e = build_rhs(up.data, target, lam)
        h = solve_screened(e, lam, symbol)
    else:
        bank = bank if bank is not None else default_bank()
        lambdas, head = _load_feature_params(cfg, len(bank))
        phi_l = extract(up.data, bank, "depth")
        phi_r = extract(lum, bank, "guide")
        w = multichannel_edge_weight(phi_r, edge_cfg)
        phi_h = channel_solve(phi_l, phi_r, w, lambdas, symbol)
        h = apply_head(phi_h, head)
    return DepthMap(np.maximum(h, 0.0), up.unit_scale)


def run_image(entry: DatasetEntry, cfg: PipelineConfig, dataset: str = "",
              bank: FilterBank | None = None) -> tuple[DepthMap, BenchRecord]:
    """Degrade one manifest entry, super-resolve it, and measure RMSE.

    The ground truth is cropped bottom/right to a multiple of the scale
    before degradation and the RMSE is evaluated on the cropped grid.
    Runtime covers the reconstruction only, not file I/O or degradation.
    """
    if cfg.scale is None:
        raise ValueError("config carries no scale; use cfg.with_scale(s)")
    s = cfg.scale
    try:
        rgb = load_image(entry.rgb_path)
        depth = load_image(entry.depth_path)
        if not isinstance(rgb, RgbImage):
            raise ValueError(f"rgb_path is not a color image: {entry.rgb_path}")
        if not isinstance(depth, DepthMap):
            raise ValueError(f"depth_path is not a grayscale image: {entry.depth_path}")
        gt = DepthMap(crop_to_multiple(depth.data, s), entry.depth_unit_scale)
        rgb = RgbImage(*(crop_to_multiple(p, s) for p in (rgb.red, rgb.green, rgb.blue)))
        if gt.shape != rgb.shape:
            raise ValueError(f"depth {gt.shape} and rgb {rgb.shape} differ after crop")
        _, up = degrade(gt, s, cfg.antialias)
        t0 = time.perf_counter()
        pred = predict(up, rgb, cfg, bank)
        runtime_ms = (time.perf_counter() - t0) * 1e3
        value = rmse(pred, gt, cfg.crop_border)
    except Exception as exc:
        raise RuntimeError(f"entry {entry.id!r}: {exc}") from exc
    rec = BenchRecord(dataset, entry.id, s, cfg.method, cfg.config_hash(), value, runtime_ms)
    return pred, rec


def _worker_count(threads: int | None) -> int:
    if threads is not None:
        n = int(threads)
    else:
        env = os.environ.get("GDSR_THREADS", "")
        n = int(env) if env else (os.cpu_count() or 1)
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    return n


def run_bench(manifest: DatasetManifest, scales, configs, out_csv=None,
              threads: int | None = None, timing: bool = True) -> list[BenchRecord]:
    """Evaluate every (entry, scale, config) combination.

    Per-entry failures never abort the run; they become records with an
    error marker. Detail records come first in canonical order, followed
    by one mean record per (scale, config) group. With ``timing`` off,
    runtimes are reported as 0 so repeated runs emit identical bytes.
    """
    scales = [check_scale(s) for s in scales]
    configs = list(configs)
    if not configs:
        raise ValueError("no pipeline configs given")
    bank = default_bank()
    tasks = [
        (entry, cfg.with_scale(s))
        for entry in manifest.entries
        for s in scales
        for cfg in configs
    ]

    def one(task):
        entry, cfg = task
        try:
            _, rec = run_image(entry, cfg, manifest.name, bank)
            return rec
        except Exception:
            return BenchRecord(manifest.name, entry.id, cfg.scale, cfg.method,
                               cfg.config_hash(), None, 0.0)

    workers = _worker_count(threads)
    if workers == 1 or len(tasks) == 1:
        records = [one(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, tasks))

    if not timing:
        records = [BenchRecord(r.dataset, r.image_id, r.scale, r.method,
                               r.config_hash, r.rmse, 0.0) for r in records]

    aggregates = []
    for s in scales:
        for cfg in configs:
            eff = cfg.with_scale(s)
            group = [r for r in records
                     if r.scale == s and r.config_hash == eff.config_hash()]
            ok = [r for r in group if r.rmse is not None]
            mean_rmse = float(np.mean([r.rmse for r in ok])) if ok else None
            mean_rt = float(np.mean([r.runtime_ms for r in ok])) if ok else 0.0
            aggregates.append(BenchRecord(manifest.name, MEAN_ROW_ID, s, eff.method,
                                          eff.config_hash(), mean_rmse, mean_rt))
    records = records + aggregates
    if out_csv is not None:
        write_csv(records, out_csv)
    return records


def _fmt_float(x: float) -> str:
    return repr(float(x))  # shortest round-trip decimal, deterministic


def write_csv(records, path) -> None:
    lines = [CSV_HEADER]
    for r in records:
        value = ERROR_MARKER if r.rmse is None else _fmt_float(r.rmse)
        lines.append(
            f"{r.dataset},{r.image_id},{r.scale},{r.method},"
            f"{r.config_hash},{value},{r.runtime_ms:.3f}"
        )
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _prepared_entries(entries, cfg: PipelineConfig, s: int):
    """Load, crop, degrade, and convert the guide once per entry."""
    prepared = []
    for entry in entries:
        rgb = load_image(entry.rgb_path)
        depth = load_image(entry.depth_path)
        gt = DepthMap(crop_to_multiple(depth.data, s), entry.depth_unit_scale)
        rgb = RgbImage(*(crop_to_multiple(p, s) for p in (rgb.red, rgb.green, rgb.blue)))
        _, up = degrade(gt, s, cfg.antialias)
        prepared.append((gt, up, luminance(rgb)))
    return prepared


def fit_image_lambda(manifest: DatasetManifest, cfg: PipelineConfig, s: int,
                     grid_points: int = 17) -> float:
    """Fit the single image-domain lambda on the manifest's train split.

    Same derivative-free search as the channel fit (log-grid bracket plus
    golden-section refinement, accept only strict improvements from the
    e^0.1 start), with lambda = 0 included among the candidates so the
    fitted value can never lose to the unguided baseline on the fitting
    set.
    """
    entries = manifest.split("train") or manifest.entries
    s = check_scale(s)
    edge_cfg = cfg.edge_config()
    prepared = []
    symbols = {}
    for gt, up, lum in _prepared_entries(entries, cfg, s):
        w = edge_weight(lum, edge_cfg)
        target = elementwise_combine(laplacian_apply(lum), w, "mul")
        lap_t = laplacian_apply(target)
        if gt.shape not in symbols:
            symbols[gt.shape] = (paper_symbol(*gt.shape) if cfg.symbol_mode == "paper"
                                 else derived_symbol(FIVE_POINT, *gt.shape))
        prepared.append((gt, up, lap_t, symbols[gt.shape]))
    n_pixels = sum(gt.data.size for gt, _, _, _ in prepared)

    def objective(lam: float) -> float:
        sse = 0.0
        for gt, up, lap_t, symbol in prepared:
            e = lam * lap_t + up.data if lam > 0 else up.data
            h = solve_screened(e, lam, symbol)
            sse += float(np.sum((h - gt.data) ** 2)) * gt.unit_scale**2
        return math.sqrt(sse / n_pixels)

    from .feature_bank import _golden_min  # shared search helper

    best_lam = math.exp(INIT_LOG_LAMBDA)
    best = objective(best_lam)
    lo, hi = LOG_LAMBDA_BOUNDS
    grid = np.linspace(lo, hi, grid_points)
    vals = [objective(math.exp(v)) for v in grid]
    k = int(np.argmin(vals))
    v_star, f_star = _golden_min(
        lambda v: objective(math.exp(v)),
        float(grid[max(0, k - 1)]), float(grid[min(grid_points - 1, k + 1)]),
    )
    if vals[k] < f_star:
        v_star, f_star = float(grid[k]), vals[k]
    candidates = [(math.exp(v_star), f_star), (0.0, objective(0.0))]
    for lam, val in candidates:
        if val < best:
            best_lam, best = lam, val
    return best_lam


def fit_feature_params(manifest: DatasetManifest, cfg: PipelineConfig, s: int,
                       head_gamma: float = 1e-6, grid_points: int = 9,
                       sweeps: int = 2, fit_lambdas: bool = True,
                       bank: FilterBank | None = None):
    """Fit channel lambdas and/or the reconstruction head on the train split.

    Returns (lambdas, head, rmse_trace). With ``fit_lambdas`` off, the
    lambdas stay at the e^0.1 start and only the head is fit.
    """
    entries = manifest.split("train") or manifest.entries
    s = check_scale(s)
    bank = bank if bank is not None else default_bank()
    edge_cfg = cfg.edge_config()
    train_pairs = []
    for gt, up, lum in _prepared_entries(entries, cfg, s):
        phi_l = extract(up.data, bank, "depth")
        phi_r = extract(lum, bank, "guide")
        w = multichannel_edge_weight(phi_r, edge_cfg)
        train_pairs.append((phi_l, phi_r, w, gt.data))

    if fit_lambdas:
        lambdas, trace = fit_lambda(train_pairs, head_gamma, grid_points, sweeps,
                                    symbol_mode=cfg.symbol_mode)
    else:
        lambdas = np.full(len(bank), math.exp(INIT_LOG_LAMBDA))
        trace = []

    solved = []
    targets = []
    symbols = {}
    for phi_l, phi_r, w, target in train_pairs:
        shape = target.shape
        if shape not in symbols:
            symbols[shape] = (paper_symbol(*shape) if cfg.symbol_mode == "paper"
                              else derived_symbol(FIVE_POINT, *shape))
        solved.append(channel_solve(phi_l, phi_r, w, lambdas, symbols[shape]))
        targets.append(target)
    head = fit_head(solved, targets, head_gamma)
    return lambdas, head, trace

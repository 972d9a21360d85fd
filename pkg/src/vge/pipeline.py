"""File-based end-to-end pipeline.

Every stage reads the previous stage's files from the output directory and
writes its own, so stages can be resumed or run one at a time::

    ingest    stages/scaled_{train,test}_<id>.npy, stages/channel_<id>.json
    smooth    stages/smooth_{train,test}_<id>.npy
    search    models/model_<id>_<j>.json, ga_log.jsonl
    predict   pred_<id>.csv
    detect    segments_<id>.csv, stages/detect_<id>.json
    evaluate  metrics.csv, report.json
    plot      plot_<id>.svg

``report.json`` holds no wall-clock data and no machine-specific paths, so
two runs with the same config and seed produce identical bytes.  Timing
goes to ``timing.json``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import re
import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import fit_scaler, is_excluded, load_channel
from .detect import DetectionResult, DetectorConfig, detect, tune_tau, write_segments_csv
from .ensemble import EnsembleOutput
from .estimators import ensemble_predict, forecast_windows, smooth_or_copy, split_windows, sub_seed
from .evaluation import (
    REFERENCE_SCORES,
    aggregate,
    confusion,
    mean_squared_error,
    metrics,
    report_row,
)
from .exceptions import ConfigError, MissingFile, StageError
from .ga import GaConfig, SearchData, evolve
from .nn.model import load_model, save_model
from .nn.optim import AdamConfig
from .nn.train import TrainConfig
from .npy_io import load_labels_csv, load_npy, save_npy
from .plot import emit_plot
from .preprocess import SmoothConfig
from .synthetic import SYNTHETIC_ID, make_synthetic

logger = logging.getLogger(__name__)

STAGES = ("ingest", "smooth", "search", "predict", "detect", "evaluate", "plot")

DEFAULTS = {
    "data.root": "",
    "data.labels": "labeled_anomalies.csv",
    "data.channels": [],
    "data.synthetic": False,
    "smooth.enabled": True,
    "smooth.min_window": 2,
    "smooth.max_window": 64,
    "smooth.sigma_mult": 2.0,
    "window.length": 100,
    "window.horizon": 1,
    "window.validation_fraction": 0.2,
    "ga.ni_min": 3,
    "ga.ni_max": 6,
    "ga.np_min": 4,
    "ga.np_max": 6,
    "ga.layers_min": 2,
    "ga.layers_max": 6,
    "ga.units_min": 128,
    "ga.units_max": 256,
    "ga.dense_min": 0,
    "ga.dense_max": 1,
    "ga.max_dropout": 0.2,
    "ga.mutation_rate": 0.1,
    "ga.min_mutation": 1e-4,
    "ga.momentum": 0.1,
    "ga.max_momentum": 0.1,
    "ga.k": 2,
    "ga.shared_pool": False,
    "ga.fitness_mode": "auto",
    "ga.fitness_mc_samples": 30,
    "train.epochs": 100,
    "train.batch_size": 256,
    "train.lr": 1e-3,
    "train.weight_decay": 1e-4,
    "train.clip_norm": 5.0,
    "mc.samples": 1000,
    "mc.reservoir": 256,
    "ensemble.use_covariance": True,
    "ensemble.global_weights": False,
    "detect.band_k": 3.0,
    "detect.tau_max": 9,
    "detect.min_tentative": 3,
    "detect.tau_grid": "1..30",
    "detect.target": "raw",
    "eval.point_adjust": False,
    "seed": 0,
    "out": "vge_out",
    "threads": 1,
}

# Shrunk bounds that run on a laptop in minutes.
DESK_SCALE = {
    "ga.ni_min": 1, "ga.ni_max": 2, "ga.np_min": 2, "ga.np_max": 3,
    "ga.layers_min": 1, "ga.layers_max": 2, "ga.units_min": 8, "ga.units_max": 32,
    "ga.dense_min": 0, "ga.dense_max": 0,
    "train.epochs": 20, "train.batch_size": 64, "train.lr": 5e-3,
    "mc.samples": 100, "window.length": 20,
}

# The in-tree sine benchmark: desk scale with one 16-unit recurrent layer.
# A 64-point smoothing window spans more than one 50-point sine period and
# flattens the signal, so the cap is lowered.
SYNTHETIC_PRESET = {
    **DESK_SCALE,
    "smooth.max_window": 5,
    "ga.layers_min": 1, "ga.layers_max": 1, "ga.units_min": 16, "ga.units_max": 16,
    "detect.tau_grid": "1..15",
}

# Keys that name the run environment rather than the experiment.
_UNREPORTED = ("out", "threads", "data.root")


def parse_tau_grid(text) -> tuple[int, ...]:
    """``"A..B"`` (inclusive) or a list of ints."""
    if isinstance(text, (list, tuple)):
        grid = tuple(int(v) for v in text)
    else:
        m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", str(text))
        if not m:
            raise ConfigError(f"tau grid must look like A..B, got {text!r}")
        a, b = int(m.group(1)), int(m.group(2))
        if a < 1 or b < a:
            raise ConfigError(f"tau grid needs 1 <= A <= B, got {text!r}")
        grid = tuple(range(a, b + 1))
    if not grid or min(grid) < 1:
        raise ConfigError("tau grid must hold positive integers")
    return grid


def flatten(d, prefix="") -> dict:
    """Nested dicts to flat dotted keys; already-flat keys pass through."""
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key, value, default):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0"):
            return value.lower() in ("true", "1")
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(default, int):
        try:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if isinstance(default, list):
        if isinstance(value, str):
            return [v for v in value.split(",") if v]
        return [str(v) for v in value]
    return value if key == "detect.tau_grid" else str(value)


@dataclass(frozen=True)
class PipelineConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def build(cls, file_values=None, flag_values=None, desk_scale=False, synthetic=False):
        """Resolve defaults, presets, the config file and flags, in that order."""
        file_values = flatten(file_values or {})
        flag_values = flag_values or {}
        desk_scale = desk_scale or bool(file_values.pop("desk_scale", False))
        synthetic = synthetic or bool(flag_values.get("data.synthetic")
                                      or file_values.get("data.synthetic"))
        values = dict(DEFAULTS)
        if desk_scale:
            values.update(DESK_SCALE)
        if synthetic:
            values.update(SYNTHETIC_PRESET)
            values["data.synthetic"] = True
        for layer in (file_values, flag_values):
            for key, value in layer.items():
                if key not in DEFAULTS:
                    raise ConfigError(f"unknown config key {key!r}")
                values[key] = _coerce(key, value, DEFAULTS[key])
        cfg = cls(values)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        v = self.values
        seed = v["seed"]
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if v["threads"] < 1:
            raise ConfigError("threads must be >= 1")
        if v["window.length"] < 1 or v["window.horizon"] < 1:
            raise ConfigError("window length and horizon must be >= 1")
        if not 0.0 <= v["window.validation_fraction"] < 1.0:
            raise ConfigError("window.validation_fraction must be in [0, 1)")
        if v["mc.samples"] < 2:
            raise ConfigError("mc.samples must be >= 2")
        if v["detect.target"] not in ("raw", "smoothed"):
            raise ConfigError("detect.target must be 'raw' or 'smoothed'")
        try:
            self.smooth_config()
            self.ga_config()
            self.train_config()
            self.detector_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def smooth_config(self) -> SmoothConfig | None:
        if not self["smooth.enabled"]:
            return None
        return SmoothConfig(self["smooth.min_window"], self["smooth.max_window"],
                            self["smooth.sigma_mult"])

    def ga_config(self) -> GaConfig:
        r = lambda name: (self[f"ga.{name}_min"], self[f"ga.{name}_max"])  # noqa: E731
        return GaConfig(ni_range=r("ni"), np_range=r("np"), layers_range=r("layers"),
                        units_range=r("units"), dense_range=r("dense"),
                        max_dropout=self["ga.max_dropout"],
                        mutation_rate=self["ga.mutation_rate"],
                        min_mutation=self["ga.min_mutation"], momentum=self["ga.momentum"],
                        max_momentum=self["ga.max_momentum"], k=self["ga.k"],
                        shared_pool=self["ga.shared_pool"],
                        fitness_mode=self["ga.fitness_mode"],
                        fitness_mc_samples=self["ga.fitness_mc_samples"],
                        seed=self["seed"], n_jobs=self["threads"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(self["train.epochs"], self["train.batch_size"],
                           self["train.weight_decay"], AdamConfig(lr=self["train.lr"]),
                           self["train.clip_norm"] or None, self["seed"])

    def detector_config(self) -> DetectorConfig:
        return DetectorConfig(self["detect.band_k"], self["detect.tau_max"],
                              self["detect.min_tentative"],
                              parse_tau_grid(self["detect.tau_grid"]))

    def reported(self) -> dict:
        """The experiment-defining part of the config, for the report."""
        return {k: self.values[k] for k in sorted(self.values) if k not in _UNREPORTED}


@dataclass
class RunReport:
    channels: dict
    aggregate: dict | None
    artifacts: list
    timing: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Everything except timing, which varies run to run."""
        return {"channels": self.channels, "aggregate": self.aggregate,
                "artifacts": self.artifacts, "config": self.config,
                "reference_scores": REFERENCE_SCORES}


class _Workspace:
    def __init__(self, out):
        self.out = out
        self.stages = os.path.join(out, "stages")
        self.models = os.path.join(out, "models")

    def make(self):
        for d in (self.out, self.stages, self.models):
            os.makedirs(d, exist_ok=True)

    def stage(self, name):
        return os.path.join(self.stages, name)

    def model(self, cid, j):
        return os.path.join(self.models, f"model_{cid}_{j}.json")

    def root(self, name):
        return os.path.join(self.out, name)

    def manifest(self):
        path = self.stage("channels.json")
        if not os.path.isfile(path):
            raise MissingFile(f"{path} (run the ingest stage first)")
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)

    def channel_meta(self, cid):
        with open(self.stage(f"channel_{cid}.json"), encoding="utf-8") as fh:
            return json.load(fh)

    def record_timing(self, key, value):
        path = self.root("timing.json")
        data = {}
        if os.path.isfile(path):
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        data[key] = value
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)


def _channel_seed(cfg: PipelineConfig, cid: str) -> np.random.SeedSequence:
    # crc32 keeps a channel's stream independent of which other channels run
    return np.random.SeedSequence(cfg["seed"], spawn_key=(zlib.crc32(cid.encode("utf-8")),))


def check_inputs(cfg: PipelineConfig) -> None:
    """Fail fast when the dataset root or label file is missing."""
    if cfg["data.synthetic"]:
        return
    root = cfg["data.root"]
    if not root or not os.path.isdir(root):
        raise MissingFile(f"dataset root not found: {root!r} (pass --root DIR or --synthetic)")
    labels = os.path.join(root, cfg["data.labels"])
    if not os.path.isfile(labels):
        raise MissingFile(f"label file not found: {labels}")


def _load_channels(cfg: PipelineConfig):
    if cfg["data.synthetic"]:
        wanted = cfg["data.channels"] or [SYNTHETIC_ID]
        unknown = [c for c in wanted if c != SYNTHETIC_ID]
        if unknown:
            raise ConfigError(f"synthetic mode provides only {SYNTHETIC_ID}, not {unknown}")
        return [make_synthetic(seed=cfg["seed"] % 2**32)]
    check_inputs(cfg)
    root = cfg["data.root"]
    table = load_labels_csv(os.path.join(root, cfg["data.labels"]))
    wanted = cfg["data.channels"] or table.channels()
    return [load_channel(root, cid, table) for cid in wanted]


def stage_ingest(cfg: PipelineConfig, ws: _Workspace):
    ids = []
    for ch in _load_channels(cfg):
        scaler = fit_scaler(ch.train)
        save_npy(ws.stage(f"scaled_train_{ch.channel_id}.npy"), scaler.apply(ch.train))
        save_npy(ws.stage(f"scaled_test_{ch.channel_id}.npy"), scaler.apply(ch.test))
        meta = {"channel_id": ch.channel_id, "target_col": ch.target_col,
                "segments": [list(s) for s in ch.anomaly_segments],
                "n_train": int(ch.train.shape[0]), "n_test": int(ch.test.shape[0]),
                "n_features": int(ch.n_features), "scaler": scaler.to_dict()}
        with open(ws.stage(f"channel_{ch.channel_id}.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2)
        ids.append(ch.channel_id)
    with open(ws.stage("channels.json"), "w", encoding="utf-8") as fh:
        json.dump(ids, fh)
    return ids


def stage_smooth(cfg: PipelineConfig, ws: _Workspace, ids):
    scfg = cfg.smooth_config()
    for cid in ids:
        for split in ("train", "test"):
            z = load_npy(ws.stage(f"scaled_{split}_{cid}.npy"))
            save_npy(ws.stage(f"smooth_{split}_{cid}.npy"), smooth_or_copy(z, scfg))


def stage_search(cfg: PipelineConfig, ws: _Workspace, ids):
    ga_cfg, train_cfg = cfg.ga_config(), cfg.train_config()
    m, h = cfg["window.length"], cfg["window.horizon"]
    lines, train_seconds, epochs = [], 0.0, 0
    for cid in ids:
        meta = ws.channel_meta(cid)
        series = load_npy(ws.stage(f"smooth_train_{cid}.npy"))
        tr, val = split_windows(series, m, h, meta["target_col"],
                                cfg["window.validation_fraction"])
        data = SearchData(tr, val, None, train_cfg, cfg.detector_config())
        result = evolve(data, ga_cfg, sub_seed(_channel_seed(cfg, cid), 1))
        for j, rec in enumerate(result.best):
            rec.model.meta = {"channel_id": cid, "slot": j, "genome": rec.genome.to_dict(),
                              "fitness": rec.fitness}
            save_model(rec.model, ws.model(cid, j))
        for rec in result.records:
            entry = rec.log_entry()
            entry["channel"] = cid
            train_seconds += entry["wall_time"]
            if math.isfinite(rec.fitness):
                epochs += train_cfg.epochs
            lines.append(json.dumps(entry, sort_keys=True))
    with open(ws.root("ga_log.jsonl"), "w", encoding="utf-8") as fh:
        fh.writelines(line + "\n" for line in lines)
    ws.record_timing("train_seconds_per_epoch", train_seconds / epochs if epochs else None)


def _models(ws: _Workspace, cid):
    models, j = [], 0
    while os.path.isfile(ws.model(cid, j)):
        models.append(load_model(ws.model(cid, j)))
        j += 1
    if not models:
        raise MissingFile(f"no model checkpoints for {cid} (run the search stage first)")
    return models


def stage_predict(cfg: PipelineConfig, ws: _Workspace, ids):
    m, h = cfg["window.length"], cfg["window.horizon"]
    n_pred, seconds = 0, 0.0
    for cid in ids:
        meta = ws.channel_meta(cid)
        history = load_npy(ws.stage(f"smooth_train_{cid}.npy"))
        test = load_npy(ws.stage(f"smooth_test_{cid}.npy"))
        windows = forecast_windows(history, test, m, h, meta["target_col"])
        start = time.perf_counter()
        ens, _ = ensemble_predict(_models(ws, cid), windows, cfg["mc.samples"],
                                  sub_seed(_channel_seed(cfg, cid), 2),
                                  reservoir=cfg["mc.reservoir"],
                                  use_covariance=cfg["ensemble.use_covariance"],
                                  global_weights=cfg["ensemble.global_weights"],
                                  n_jobs=cfg["threads"])
        seconds += time.perf_counter() - start
        n_pred += len(ens)
        ens.to_csv(ws.root(f"pred_{cid}.csv"))
    ws.record_timing("predictions_per_second", n_pred / seconds if seconds > 0 else None)


def _target(cfg: PipelineConfig, ws: _Workspace, cid, meta):
    prefix = "scaled" if cfg["detect.target"] == "raw" else "smooth"
    return load_npy(ws.stage(f"{prefix}_test_{cid}.npy"))[:, meta["target_col"]]


def stage_detect(cfg: PipelineConfig, ws: _Workspace, ids):
    det = cfg.detector_config()
    for cid in ids:
        meta = ws.channel_meta(cid)
        pred = EnsembleOutput.from_csv(ws.root(f"pred_{cid}.csv"))
        y = _target(cfg, ws, cid, meta)
        labels = [tuple(s) for s in meta["segments"]]
        tau, per_tau = det.tau_max, {}
        if labels:
            # tune on a grid that q can satisfy; shorter waits flag nothing
            tau, per_tau = tune_tau(y, pred, labels, det)
        if tau < det.min_tentative:
            tau = det.min_tentative
        result = detect(y, pred, replace(det, tau_max=tau))
        result.tau_metrics = per_tau
        result.to_json(ws.stage(f"detect_{cid}.json"))
        write_segments_csv(result.segments, ws.root(f"segments_{cid}.csv"))


def _channel_metrics(cfg, ws, cid):
    meta = ws.channel_meta(cid)
    pred = EnsembleOutput.from_csv(ws.root(f"pred_{cid}.csv"))
    result = DetectionResult.from_json(ws.stage(f"detect_{cid}.json"))
    y = _target(cfg, ws, cid, meta)
    truth = [tuple(s) for s in meta["segments"]]
    c = confusion(result.segments, truth, len(y), adjust=cfg["eval.point_adjust"])
    mse = mean_squared_error(y, pred.mean)
    return c, mse, result


def stage_evaluate(cfg: PipelineConfig, ws: _Workspace, ids) -> RunReport:
    channels, per_channel = {}, []
    for cid in ids:
        c, mse, result = _channel_metrics(cfg, ws, cid)
        ms = metrics(c, mse)
        channels[cid] = {**ms.to_dict(), "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
                         "tau": result.tau_used, "n_segments": len(result.segments),
                         "excluded": is_excluded(cid)}
        per_channel.append((cid, c, mse))
    kept = [p for p in per_channel if not is_excluded(p[0])]
    agg = aggregate(kept).to_dict() if kept else None
    if agg is not None:
        agg["report_row"] = report_row("VGE", "synthetic" if cfg["data.synthetic"]
                                       else os.path.basename(os.path.normpath(cfg["data.root"])),
                                       aggregate(kept))
    artifacts = ["ga_log.jsonl", "metrics.csv", "report.json"]
    for cid in ids:
        artifacts += [f"pred_{cid}.csv", f"segments_{cid}.csv", f"plot_{cid}.svg"]
        artifacts += [os.path.relpath(p, ws.out) for p in sorted(
            ws.model(cid, j) for j in range(len(_models(ws, cid))))]
    with open(ws.root("metrics.csv"), "w", newline="", encoding="utf-8") as fh:
        cols = ["channel", "precision", "recall", "f1", "accuracy", "mse",
                "tp", "fp", "fn", "tn", "tau", "excluded"]
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for cid in ids:
            w.writerow({"channel": cid, **channels[cid]})
        if agg is not None:
            w.writerow({"channel": "ALL", **agg})
    report = RunReport(channels, agg, sorted(artifacts), config=cfg.reported())
    with open(ws.root("report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def stage_plot(cfg: PipelineConfig, ws: _Workspace, ids):
    for cid in ids:
        meta = ws.channel_meta(cid)
        pred = EnsembleOutput.from_csv(ws.root(f"pred_{cid}.csv"))
        result = DetectionResult.from_json(ws.stage(f"detect_{cid}.json"))
        emit_plot(_target(cfg, ws, cid, meta), pred, result, ws.root(f"plot_{cid}.svg"),
                  band_k=cfg["detect.band_k"], title=cid)


def run_stage(name: str, cfg: PipelineConfig, ids=None):
    """Run one stage; returns channel ids for ``ingest``, a report for ``evaluate``."""
    ws = _Workspace(cfg["out"])
    ws.make()
    try:
        if name == "ingest":
            return stage_ingest(cfg, ws)
        ids = ids if ids is not None else ws.manifest()
        if cfg["data.channels"]:
            ids = [c for c in ids if c in cfg["data.channels"]]
        fn = {"smooth": stage_smooth, "search": stage_search, "predict": stage_predict,
              "detect": stage_detect, "evaluate": stage_evaluate, "plot": stage_plot}[name]
        return fn(cfg, ws, ids)
    except (ConfigError, StageError):
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def run_pipeline(cfg: PipelineConfig) -> RunReport:
    """ingest, smooth, search, predict, detect, evaluate and plot."""
    check_inputs(cfg)
    ws = _Workspace(cfg["out"])
    ws.make()
    if os.path.isfile(ws.root("timing.json")):
        os.remove(ws.root("timing.json"))
    timing = {}
    start = time.perf_counter()
    ids = run_stage("ingest", cfg)
    report = None
    for name in STAGES[1:]:
        t0 = time.perf_counter()
        out = run_stage(name, cfg, ids)
        timing[f"{name}_seconds"] = time.perf_counter() - t0
        if name == "evaluate":
            report = out
    timing["total_seconds"] = time.perf_counter() - start
    for key, value in timing.items():
        ws.record_timing(key, value)
    with open(ws.root("timing.json"), encoding="utf-8") as fh:
        report.timing = json.load(fh)
    return report

"""End-to-end orchestration: data -> splits -> training -> evaluation -> artifacts."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
import torch

from . import __version__
from .config import ExperimentConfig
from .data import (
    ContextTensor,
    MobilityTensor,
    SynthConfig,
    TurbulenceSchedule,
    admissible_targets,
    chronological_split,
    ingest_csv,
    make_training_samples,
    synth_dataset,
)
from .errors import InvalidConfig
from .graph import UrbanGraph
from .metrics import coverage_flags, mape, mape_excluded, picp, rmse
from .model import ModelConfig
from .trainer import (
    TrainConfig,
    batch_tensors,
    forward_loss,
    load_checkpoint,
    save_checkpoint,
    train,
    write_metrics_log,
)


@dataclass
class EvalReport:
    rmse: float
    mape: float
    picp: float
    mape_excluded_cells: int
    records: list = field(default_factory=list)   # per-cell dicts
    metadata: dict = field(default_factory=dict)

    def metrics_dict(self) -> dict:
        out = {"rmse": self.rmse, "mape": self.mape, "picp": self.picp,
               "mape_excluded_cells": self.mape_excluded_cells}
        out.update(self.metadata)
        return out


def synth_config_from(cfg: ExperimentConfig) -> SynthConfig:
    d = cfg.data
    return SynthConfig(n_regions=d.n_regions, days=d.days,
                       intervals_per_day=d.intervals_per_day,
                       base_intensity=d.base_intensity,
                       daily_amplitude=d.daily_amplitude,
                       weekly_amplitude=d.weekly_amplitude,
                       phase_jitter=d.phase_jitter,
                       event_rate=d.event_rate, event_amplitude=d.event_amplitude,
                       noise_std=d.noise_std, box_km=d.box_km,
                       start_time=d.start_time)


def load_dataset(cfg: ExperimentConfig):
    """(UrbanGraph, MobilityTensor, ContextTensor) from the configured source."""
    if cfg.data.source == "synth":
        return synth_dataset(synth_config_from(cfg), cfg.train.seed)
    return ingest_csv(cfg.data.regions_csv, cfg.data.mobility_csv,
                      cfg.data.context_csv, cfg.data.interval_minutes)


def turbulence_schedule(cfg: ExperimentConfig) -> TurbulenceSchedule:
    layers = [("pure", 0.0)]
    if cfg.turbulence.enabled:
        layers += [("noisy", cfg.turbulence.noisy_fraction),
                   ("ood", cfg.turbulence.ood_fraction)]
    return TurbulenceSchedule(layers=tuple(layers), base_seed=cfg.train.seed)


PURE_ONLY = (("pure", 0.0),)


def split_targets(cfg: ExperimentConfig, mobility: MobilityTensor):
    targets = admissible_targets(mobility, cfg.model.p)
    return chronological_split(targets, (cfg.train.train_fraction,
                                         cfg.train.test_fraction,
                                         cfg.train.val_fraction))


def model_config_from(cfg: ExperimentConfig, graph: UrbanGraph,
                      context: ContextTensor) -> ModelConfig:
    m = cfg.model
    return ModelConfig(n_regions=graph.n_regions, p=m.p, q=m.q,
                       n_context=context.n_categories, gcn_layers=m.gcn_layers,
                       gcn_hidden=m.gcn_hidden, seq_hidden=m.seq_hidden,
                       seq_layers=m.seq_layers, embed_width=m.embed_width,
                       field_width=m.field_width, interact_width=m.interact_width,
                       fm_hidden=m.fm_hidden, fm_layers=m.fm_layers,
                       evolve_hidden=m.evolve_hidden, evolve_layers=m.evolve_layers)


def train_config_from(cfg: ExperimentConfig) -> TrainConfig:
    t = cfg.train
    return TrainConfig(epochs=t.epochs, batch_size=t.batch_size,
                       learning_rate=t.learning_rate, lr_decay=t.lr_decay,
                       lr_decay_every=t.lr_decay_every,
                       split=(t.train_fraction, t.test_fraction, t.val_fraction),
                       seed=t.seed, quality_enabled=cfg.turbulence.enabled)


def run_training(cfg: ExperimentConfig, out_dir):
    """Train on the configured dataset; write checkpoint + metrics.jsonl."""
    graph, mobility, context = load_dataset(cfg)
    train_t, _, val_t = split_targets(cfg, mobility)
    schedule = turbulence_schedule(cfg)
    train_samples = make_training_samples(mobility, context, graph, cfg.model.p,
                                          cfg.model.q, cfg.model.rho, schedule,
                                          targets=train_t)
    val_samples = make_training_samples(mobility, context, graph, cfg.model.p,
                                        cfg.model.q, cfg.model.rho, schedule,
                                        targets=val_t) if val_t else []
    result = train(train_samples, val_samples, model_config_from(cfg, graph, context),
                   train_config_from(cfg))
    os.makedirs(out_dir, exist_ok=True)
    save_checkpoint(os.path.join(out_dir, "checkpoint.npz"), result.model,
                    result.scale, {"seed": cfg.train.seed, "config_hash": cfg.hash(),
                                   "version": __version__})
    write_metrics_log(os.path.join(out_dir, "metrics.jsonl"), result.log)
    return result, (graph, mobility, context)


def evaluate(cfg: ExperimentConfig, model, scale: float, graph, mobility, context,
             targets) -> EvalReport:
    """Point + interval metrics over pure samples at the given target indices."""
    if not targets:
        raise InvalidConfig("no evaluation targets available")
    samples = make_training_samples(mobility, context, graph, cfg.model.p,
                                    cfg.model.q, cfg.model.rho,
                                    TurbulenceSchedule(layers=PURE_ONLY,
                                                       base_seed=cfg.train.seed),
                                    targets=targets)
    batch = batch_tensors(samples, scale)
    model.eval()
    with torch.no_grad():
        out, breakdown = forward_loss(model, batch,
                                      quality_enabled=cfg.turbulence.enabled)
    h_pred = out["h_recal"].numpy() * scale
    sigma = out["sigma_hat"].numpy() * scale
    truth = np.stack([s.target for s in samples])

    metadata = {"seed": cfg.train.seed, "config_hash": cfg.hash(),
                "version": __version__, "n_test_targets": len(samples)}
    for term, value in breakdown.floats().items():
        metadata[f"loss_{term}"] = value
    report = EvalReport(
        rmse=rmse(h_pred, truth),
        mape=mape(h_pred, truth, cfg.eval.mape_floor),
        picp=picp(h_pred, sigma, truth),
        mape_excluded_cells=mape_excluded(truth, cfg.eval.mape_floor),
        metadata=metadata,
    )
    covered = coverage_flags(h_pred, sigma, truth)
    for row, sample in enumerate(samples):
        ts = mobility.timestamp(sample.target_index)
        for i, rid in enumerate(graph.region_ids):
            report.records.append({
                "timestamp": ts, "region_id": rid,
                "h_true": float(truth[row, i]), "h_pred": float(h_pred[row, i]),
                "sigma": float(abs(sigma[row, i])), "covered": bool(covered[row, i]),
            })
    return report


def write_atomic(path, payload: str) -> None:
    """Whole-file atomic write: temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_metrics_json(path, report: EvalReport) -> None:
    write_atomic(path, json.dumps(report.metrics_dict(), sort_keys=True) + "\n")


def write_predictions_csv(path, report: EvalReport) -> None:
    lines = ["timestamp,region_id,h_true,h_pred,sigma,covered"]
    for rec in report.records:
        lines.append(",".join([
            rec["timestamp"], rec["region_id"], repr(rec["h_true"]),
            repr(rec["h_pred"]), repr(rec["sigma"]),
            "true" if rec["covered"] else "false"]))
    write_atomic(path, "\n".join(lines) + "\n")


def run_eval(cfg: ExperimentConfig, out_dir) -> EvalReport:
    """Evaluate the checkpoint in out_dir on the test split; write artifacts."""
    from .report import write_plots

    checkpoint = os.path.join(out_dir, "checkpoint.npz")
    if not os.path.exists(checkpoint):
        raise InvalidConfig(f"no checkpoint at {checkpoint}; run `stua train` first")
    model, scale, _ = load_checkpoint(checkpoint)
    graph, mobility, context = load_dataset(cfg)
    _, test_t, _ = split_targets(cfg, mobility)
    report = evaluate(cfg, model, scale, graph, mobility, context, test_t)
    write_metrics_json(os.path.join(out_dir, "metrics.json"), report)
    write_predictions_csv(os.path.join(out_dir, "predictions.csv"), report)
    write_plots(out_dir, report, graph)
    return report


def run_experiment(cfg: ExperimentConfig, out_dir) -> EvalReport:
    """The full pipeline: (synthesize|ingest) -> train -> evaluate -> artifacts."""
    run_training(cfg, out_dir)
    return run_eval(cfg, out_dir)

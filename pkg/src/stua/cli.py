"""Command-line surface: synth, ingest, train, eval, indicators, report.

Each subcommand takes --config/--seed/--out; package errors map to distinct
exit codes (see errors.EXIT_CODES, documented in the README).
"""

from __future__ import annotations

import csv
import functools
import os
import sys

import click
import numpy as np

from .config import load_config
from .data import (
    TurbulenceSpec,
    inject_noise,
    synth_dataset,
    write_context_csv,
    write_mobility_csv,
)
from .errors import StuaError
from .experiment import (
    load_dataset,
    run_eval,
    run_training,
    split_targets,
    synth_config_from,
    write_atomic,
)
from .graph import build_period_stack, write_regions_csv
from .indicators import neighbor_sets, period_quality, st_variance, variance_fields


def common_options(fn):
    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                  default=None, help="TOML experiment config (defaults apply if omitted).")
    @click.option("--seed", type=int, default=None, help="Override [train].seed.")
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), default="out",
                  help="Workspace directory for artifacts.")
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except StuaError as exc:
            click.echo(f"error ({type(exc).__name__}): {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


@click.group()
def main():
    """Uncertainty-aware collective mobility forecasting."""


@main.command()
@common_options
def synth(config_path, seed, out_dir):
    """Generate a synthetic dataset and write the three CSV files.

    [data] keys: n_regions, days, intervals_per_day, base_intensity,
    daily_amplitude, weekly_amplitude, phase_jitter, event_rate,
    event_amplitude, noise_std, box_km, start_time.
    """
    cfg = load_config(config_path, seed)
    graph, mobility, context = synth_dataset(synth_config_from(cfg), cfg.train.seed)
    data_dir = os.path.join(out_dir, "data")
    os.makedirs(data_dir, exist_ok=True)
    write_regions_csv(os.path.join(data_dir, "regions.csv"), graph)
    write_mobility_csv(os.path.join(data_dir, "mobility.csv"), mobility, graph.region_ids)
    write_context_csv(os.path.join(data_dir, "context.csv"), context, mobility,
                      graph.region_ids)
    click.echo(f"wrote {graph.n_regions} regions x {mobility.values.shape[0]} intervals "
               f"to {data_dir}")


@main.command()
@common_options
def ingest(config_path, seed, out_dir):
    """Validate and summarize the configured dataset (no training)."""
    cfg = load_config(config_path, seed)
    graph, mobility, context = load_dataset(cfg)
    click.echo(f"regions: {graph.n_regions}")
    click.echo(f"intervals: {mobility.values.shape[0]} x {mobility.interval_minutes} min "
               f"from {mobility.start_time}")
    click.echo(f"context categories: {', '.join(context.category_names)}")


@main.command()
@common_options
def train(config_path, seed, out_dir):
    """Train the double-head model; writes checkpoint.npz and metrics.jsonl."""
    cfg = load_config(config_path, seed)
    result, _ = run_training(cfg, out_dir)
    click.echo(f"trained {len(result.log)} epochs; best validation total "
               f"{result.best_val:.6g} at epoch {result.best_epoch}")


@main.command(name="eval")
@common_options
def eval_cmd(config_path, seed, out_dir):
    """Evaluate the trained checkpoint on the test split; writes artifacts."""
    cfg = load_config(config_path, seed)
    report = run_eval(cfg, out_dir)
    click.echo(f"rmse={report.rmse:.4f} mape={report.mape:.2f}% picp={report.picp:.4f}")


@main.command()
@common_options
def indicators(config_path, seed, out_dir):
    """Dump per-region indicator fields for the last test target as CSV.

    The corruption layer comes from [eval].indicator_layer (pure gives an
    all-zero quality column by construction).  When a trained checkpoint is
    present in the workspace, the model's intermediate uncertainty fields
    (U_I, U_E, U_o) for the same sample are written alongside.
    """
    cfg = load_config(config_path, seed)
    graph, mobility, context = load_dataset(cfg)
    _, test_t, _ = split_targets(cfg, mobility)
    target = test_t[-1]
    stack = build_period_stack(target - 1, cfg.model.p, cfg.model.q,
                               mobility.intervals_per_day)
    layer = cfg.eval.indicator_layer
    fraction = {"pure": 0.0, "noisy": cfg.turbulence.noisy_fraction,
                "ood": cfg.turbulence.ood_fraction}[layer]
    spec = TurbulenceSpec(layer=layer, noise_std_fraction=fraction, seed=cfg.train.seed)
    h = mobility.values
    lo = target - cfg.model.p - 7 * mobility.intervals_per_day
    corrupted = h.copy()
    corrupted[lo:target] = inject_noise(h[lo:target], spec)

    pure_values = stack.values(h)
    values = stack.values(corrupted)
    quality = period_quality(pure_values, values)
    var_s, var_ep, var_ip = variance_fields(values, neighbor_sets(graph))
    var_all = st_variance(var_s, var_ep[None, :], var_ip)

    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "indicators.csv")
    kinds = {"quality": quality, "var_S": var_s,
             "var_ep": np.broadcast_to(var_ep, quality.shape),
             "var_ip": var_ip, "var_ST": var_all}
    write_atomic(path, _field_csv(kinds, graph.region_ids))
    click.echo(f"wrote {path} (target interval {target}, layer {layer})")

    checkpoint = os.path.join(out_dir, "checkpoint.npz")
    if os.path.exists(checkpoint):
        import torch

        from .data import build_sample
        from .trainer import batch_tensors, load_checkpoint

        model, scale, _ = load_checkpoint(checkpoint)
        shifted = build_period_stack(target, cfg.model.p, cfg.model.q,
                                     mobility.intervals_per_day)
        sample = build_sample(mobility, context, graph, stack, shifted, target,
                              spec, cfg.model.rho)
        with torch.no_grad():
            out = model(batch_tensors([sample], scale))
        upath = os.path.join(out_dir, "uncertainty.csv")
        fields = {"U_I": out["u_internal"][0].numpy() * scale,
                  "U_E": out["u_external"][0].numpy() * scale,
                  "U_o": out["u_overall"][0].numpy() * scale}
        write_atomic(upath, _field_csv(fields, graph.region_ids))
        click.echo(f"wrote {upath}")


def _field_csv(kinds: dict, region_ids) -> str:
    lines = ["region_id,period,kind,value"]
    for kind, fieldvals in kinds.items():
        for m in range(fieldvals.shape[0]):
            for i, rid in enumerate(region_ids):
                lines.append(f"{rid},{m},{kind},{repr(float(fieldvals[m, i]))}")
    return "\n".join(lines) + "\n"


@main.command()
@common_options
def report(config_path, seed, out_dir):
    """Regenerate plots from a previous eval's predictions.csv."""
    from .experiment import EvalReport
    from .report import write_plots

    cfg = load_config(config_path, seed)
    graph, _, _ = load_dataset(cfg)
    path = os.path.join(out_dir, "predictions.csv")
    if not os.path.exists(path):
        raise StuaError(f"no predictions at {path}; run `stua eval` first")
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append({"timestamp": row["timestamp"], "region_id": row["region_id"],
                            "h_true": float(row["h_true"]), "h_pred": float(row["h_pred"]),
                            "sigma": float(row["sigma"]),
                            "covered": row["covered"] == "true"})
    stub = EvalReport(rmse=0.0, mape=0.0, picp=0.0, mape_excluded_cells=0,
                      records=records)
    write_plots(out_dir, stub, graph)
    click.echo(f"wrote plots under {os.path.join(out_dir, 'plots')}")


if __name__ == "__main__":
    main()

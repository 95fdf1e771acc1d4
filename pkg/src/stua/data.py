"""Mobility/context data: synthetic generation, CSV ingestion, turbulence.

The synthetic generator produces daily+weekly harmonic intensities per
region with optional context-driven event bumps and Gaussian observation
noise, deterministic for a fixed seed.  The turbulence injector corrupts
history windows at configurable noise levels (fractions of the per-region
std) to imitate slightly-noisy and out-of-distribution inputs; the sample
builder emits, per admissible target interval, one variant per turbulence
layer together with its weak-supervision labels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .errors import (
    DuplicateCell,
    InsufficientHistory,
    InvalidConfig,
    MissingData,
    NonMonotonicTimestamps,
    ShapeMismatch,
    UnknownRegion,
)
from .graph import (
    UrbanGraph,
    build_period_stack,
    clip_gravity,
    distance_matrix,
    load_regions_csv,
    normalize_adjacency,
)
from . import _kernels
from .indicators import neighbor_sets, period_quality, variance_fields, st_variance

MINUTES_PER_DAY = 1440


@dataclass(frozen=True)
class MobilityTensor:
    """Per-interval, per-region mobility intensities (persons/interval)."""

    values: np.ndarray          # (T, N) nonnegative
    interval_minutes: int
    start_time: str = "2024-01-01T00:00:00"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ShapeMismatch(f"mobility values must be (T, N), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidConfig("mobility values must be finite")
        if np.any(values < 0):
            raise InvalidConfig("mobility values must be nonnegative")
        if MINUTES_PER_DAY % self.interval_minutes:
            raise InvalidConfig("interval_minutes must divide 1440")

    @property
    def intervals_per_day(self) -> int:
        return MINUTES_PER_DAY // self.interval_minutes

    def timestamp(self, index: int) -> str:
        t0 = datetime.fromisoformat(self.start_time)
        return (t0 + timedelta(minutes=index * self.interval_minutes)).isoformat()


@dataclass(frozen=True)
class ContextTensor:
    """Q categories of contextual factors per interval and region."""

    values: np.ndarray          # (T, N, Q)
    category_names: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "category_names", tuple(self.category_names))
        if values.ndim != 3:
            raise ShapeMismatch(f"context values must be (T, N, Q), got {values.shape}")
        if values.shape[2] != len(self.category_names) or values.shape[2] < 1:
            raise ShapeMismatch("category_names must match Q >= 1")
        if not np.all(np.isfinite(values)):
            raise InvalidConfig("context values must be finite")

    @property
    def n_categories(self) -> int:
        return self.values.shape[2]

    def period_dim(self, p: int) -> int:
        """Concatenated raw context dimension of one p-interval period."""
        return p * self.n_categories


@dataclass(frozen=True)
class TurbulenceSpec:
    """One corruption layer: pure leaves data untouched, noisy/ood add
    Gaussian noise scaled to the given fraction of the per-region std."""

    layer: str                  # pure | noisy | ood
    noise_std_fraction: float
    seed: int = 0

    def __post_init__(self):
        if self.layer not in ("pure", "noisy", "ood"):
            raise InvalidConfig(f"unknown turbulence layer {self.layer!r}")
        if self.noise_std_fraction < 0:
            raise InvalidConfig("noise_std_fraction must be nonnegative")
        if self.layer == "pure" and self.noise_std_fraction != 0:
            raise InvalidConfig("pure layer must have noise_std_fraction = 0")


@dataclass(frozen=True)
class TurbulenceSchedule:
    """Ordered corruption layers applied to every base window."""

    layers: tuple = (("pure", 0.0), ("noisy", 0.05), ("ood", 0.5))
    base_seed: int = 0

    def spec_for(self, layer_index: int, target_index: int) -> TurbulenceSpec:
        name, fraction = self.layers[layer_index]
        seed = int(np.random.SeedSequence(
            (self.base_seed, target_index, layer_index)).generate_state(1)[0])
        return TurbulenceSpec(layer=name, noise_std_fraction=float(fraction), seed=seed)


def inject_noise(window: np.ndarray, spec: TurbulenceSpec) -> np.ndarray:
    """Corrupt a (W, N) history window: clip(H + N(0, (f*std_region)^2), 0, inf)."""
    window = np.asarray(window, dtype=np.float64)
    if not np.all(np.isfinite(window)):
        raise InvalidConfig("window must be finite")
    if spec.layer == "pure" or spec.noise_std_fraction == 0.0:
        return window.copy()
    rng = np.random.default_rng(spec.seed)
    std_region = window.std(axis=0)
    noise = rng.standard_normal(window.shape) * (spec.noise_std_fraction * std_region)
    return np.clip(window + noise, 0.0, None)


@dataclass(frozen=True)
class SynthConfig:
    """Check-in-scale collective mobility: a shared city rhythm (daily and
    weekly harmonics) with per-region levels, amplitudes, and small phase
    jitter, plus optional context events and observation noise."""

    n_regions: int = 6
    days: int = 10
    intervals_per_day: int = 24
    base_intensity: float = 100.0
    daily_amplitude: float = 30.0
    weekly_amplitude: float = 10.0
    phase_jitter: float = 0.1
    event_rate: float = 0.0
    event_amplitude: float = 40.0
    noise_std: float = 0.0
    box_km: float = 10.0
    start_time: str = "2024-01-01T00:00:00"

    def __post_init__(self):
        if self.n_regions < 2 or self.days < 1 or self.intervals_per_day < 1:
            raise InvalidConfig("n_regions >= 2, days >= 1, intervals_per_day >= 1 required")
        if MINUTES_PER_DAY % self.intervals_per_day:
            raise InvalidConfig("intervals_per_day must divide 1440")


CONTEXT_CATEGORIES = ("clock", "event")


def synth_graph(cfg: SynthConfig, seed: int) -> UrbanGraph:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA11)))
    coords = rng.uniform(0.0, cfg.box_km, size=(cfg.n_regions, 2))
    ids = tuple(f"r{i:03d}" for i in range(cfg.n_regions))
    return UrbanGraph(region_ids=ids, coords=coords)


def synth_mobility(cfg: SynthConfig, seed: int):
    """Harmonic mobility plus context events; returns (MobilityTensor, ContextTensor)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xB22)))
    n, ipd = cfg.n_regions, cfg.intervals_per_day
    total = cfg.days * ipd
    t = np.arange(total)

    base = cfg.base_intensity * rng.uniform(0.7, 1.3, size=n)
    damp = cfg.daily_amplitude * rng.uniform(0.8, 1.2, size=n)
    city_daily = rng.uniform(0.0, 2 * np.pi)
    dphase = city_daily + cfg.phase_jitter * rng.uniform(-1.0, 1.0, size=n)
    wamp = cfg.weekly_amplitude * rng.uniform(0.8, 1.2, size=n)
    city_weekly = rng.uniform(0.0, 2 * np.pi)
    wphase = city_weekly + cfg.phase_jitter * rng.uniform(-1.0, 1.0, size=n)

    tod = (t % ipd) / ipd
    week_frac = t / (7.0 * ipd)
    values = (base[None, :]
              + damp[None, :] * np.sin(2 * np.pi * tod[:, None] + dphase[None, :])
              + wamp[None, :] * np.sin(2 * np.pi * week_frac[:, None] + wphase[None, :]))

    events = (rng.random(size=(total, n)) < cfg.event_rate).astype(np.float64)
    values += events * cfg.event_amplitude * rng.uniform(0.5, 1.5, size=(total, n))
    if cfg.noise_std > 0:
        values += rng.standard_normal((total, n)) * cfg.noise_std
    values = np.clip(values, 0.0, None)

    clock = np.sin(2 * np.pi * tod)[:, None].repeat(n, axis=1)
    context = np.stack([clock, events], axis=2)
    mobility = MobilityTensor(values=values, interval_minutes=MINUTES_PER_DAY // ipd,
                              start_time=cfg.start_time)
    return mobility, ContextTensor(values=context, category_names=CONTEXT_CATEGORIES)


def synth_dataset(cfg: SynthConfig, seed: int):
    graph = synth_graph(cfg, seed)
    mobility, context = synth_mobility(cfg, seed)
    return graph, mobility, context


# ---------------------------------------------------------------------------
# CSV ingestion (formats documented in the README)

def _parse_grid(rows, regions, interval_minutes, path):
    """Map (timestamp, region) rows onto a regular interval grid."""
    id_index = {rid: i for i, rid in enumerate(regions)}
    parsed = []
    last_per_region = {}
    for ts_raw, rid, payload in rows:
        if rid not in id_index:
            raise UnknownRegion(f"{path}: region {rid!r} not in regions.csv")
        ts = datetime.fromisoformat(ts_raw)
        prev = last_per_region.get(rid)
        if prev is not None and ts < prev:
            raise NonMonotonicTimestamps(f"{path}: timestamps for {rid!r} go backwards at {ts_raw}")
        last_per_region[rid] = ts
        parsed.append((ts, id_index[rid], payload))
    if not parsed:
        raise MissingData(f"{path}: no data rows")
    t0 = min(ts for ts, _, _ in parsed)
    t1 = max(ts for ts, _, _ in parsed)
    step = timedelta(minutes=interval_minutes)
    n_steps = int((t1 - t0) / step) + 1
    indexed = []
    for ts, ridx, payload in parsed:
        offset = (ts - t0) / step
        if offset != int(offset):
            raise NonMonotonicTimestamps(
                f"{path}: timestamp {ts.isoformat()} is off the {interval_minutes}-minute grid")
        indexed.append((int(offset), ridx, payload))
    return t0, n_steps, indexed


def ingest_csv(regions_path, mobility_path, context_path, interval_minutes: int):
    """Load the three CSV files; any missing (t, region) cell is an error."""
    graph = load_regions_csv(regions_path)
    n = graph.n_regions

    with open(mobility_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = [(r["timestamp_iso8601"], r["region_id"], float(r["intensity"])) for r in reader]
    t0, total, indexed = _parse_grid(rows, graph.region_ids, interval_minutes, mobility_path)
    values = np.full((total, n), np.nan)
    for tidx, ridx, intensity in indexed:
        if not np.isnan(values[tidx, ridx]):
            raise DuplicateCell(f"{mobility_path}: duplicate row for interval {tidx}, region {ridx}")
        values[tidx, ridx] = intensity
    if np.isnan(values).any():
        tidx, ridx = np.argwhere(np.isnan(values))[0]
        raise MissingData(f"{mobility_path}: no intensity for interval {tidx}, region "
                          f"{graph.region_ids[ridx]} (no silent imputation)")
    mobility = MobilityTensor(values=values, interval_minutes=interval_minutes,
                              start_time=t0.isoformat())

    with open(context_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        raw = [(r["timestamp_iso8601"], r["region_id"], (r["factor_name"], float(r["value"])))
               for r in reader]
    categories = tuple(sorted({name for _, _, (name, _) in raw}))
    cat_index = {c: i for i, c in enumerate(categories)}
    c0, ctotal, cindexed = _parse_grid(raw, graph.region_ids, interval_minutes, context_path)
    if c0 != t0 or ctotal != total:
        raise MissingData(f"{context_path}: context grid does not match the mobility grid")
    ctx = np.full((total, n, len(categories)), np.nan)
    for tidx, ridx, (name, value) in cindexed:
        cidx = cat_index[name]
        if not np.isnan(ctx[tidx, ridx, cidx]):
            raise DuplicateCell(f"{context_path}: duplicate {name!r} for interval {tidx}")
        ctx[tidx, ridx, cidx] = value
    if np.isnan(ctx).any():
        raise MissingData(f"{context_path}: incomplete context grid (no silent imputation)")
    return graph, mobility, ContextTensor(values=ctx, category_names=categories)


def write_mobility_csv(path, mobility: MobilityTensor, region_ids) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp_iso8601", "region_id", "intensity"])
        for t in range(mobility.values.shape[0]):
            ts = mobility.timestamp(t)
            for i, rid in enumerate(region_ids):
                writer.writerow([ts, rid, repr(float(mobility.values[t, i]))])


def write_context_csv(path, context: ContextTensor, mobility: MobilityTensor, region_ids) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp_iso8601", "region_id", "factor_name", "value"])
        for t in range(context.values.shape[0]):
            ts = mobility.timestamp(t)
            for i, rid in enumerate(region_ids):
                for c, name in enumerate(context.category_names):
                    writer.writerow([ts, rid, name, repr(float(context.values[t, i, c]))])


# ---------------------------------------------------------------------------
# Training samples

@dataclass(frozen=True)
class Sample:
    """One (target interval, turbulence layer) training/eval instance.

    Arrays are in raw intensity units; the trainer applies its own scaling.
    Period axis order: weekly, daily 1..q days back, closeness.
    """

    target_index: int
    layer: str
    values: np.ndarray        # (q+2, p, N) possibly corrupted stack values
    contexts: np.ndarray      # (q+2, p, N, Q)
    adj_periods: np.ndarray   # (q+2, N, N) normalized period-averaged adjacency
    adj_steps: np.ndarray     # (3, N, N) normalized: weekly, daily-summary, closeness
    target: np.ndarray        # (N,) ground truth H^{T+1}, never corrupted
    quality_gap: np.ndarray     # (q+2, N) period-mean |H - H_C|
    var_st: np.ndarray        # (q+2, N) spatiotemporal variance on corrupted inputs
    target_var: np.ndarray    # (N,) variance label for the shifted target window


def admissible_targets(mobility: MobilityTensor, p: int) -> range:
    """Target indices with a full 7-day + p history before them."""
    first = 7 * mobility.intervals_per_day + p
    total = mobility.values.shape[0]
    if first >= total:
        raise InsufficientHistory(
            f"need more than {first} intervals, have {total}")
    return range(first, total)


def chronological_split(targets, fractions=(0.6, 0.3, 0.1)):
    """First fraction trains, the next tests, the tail validates."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidConfig("split fractions must sum to 1")
    targets = list(targets)
    n = len(targets)
    a = int(round(fractions[0] * n, 9))
    b = int(round((fractions[0] + fractions[1]) * n, 9))
    return targets[:a], targets[a:b], targets[b:]


def build_sample(mobility, context, graph, stack, shifted_stack, target_index,
                 spec: TurbulenceSpec, rho: float, dist=None, neighbors=None,
                 pure_values=None) -> Sample:
    """Assemble one sample: corrupt the history block, slice, label."""
    h = mobility.values
    ipd = mobility.intervals_per_day
    p = stack.p
    lo = target_index - p - 7 * ipd
    hi = target_index - 1
    if dist is None:
        dist = distance_matrix(graph)
    if neighbors is None:
        neighbors = neighbor_sets(graph)

    corrupted = h
    if spec.noise_std_fraction > 0:
        corrupted = h.copy()
        corrupted[lo:hi + 1] = inject_noise(h[lo:hi + 1], spec)

    if pure_values is None:
        pure_values = stack.values(h)
    values = stack.values(corrupted) if corrupted is not h else pure_values
    ctx_values = stack.values(context.values)

    quality_gap = period_quality(pure_values, values)
    var_s, var_ep, var_ip = variance_fields(values, neighbors)
    var_st = st_variance(var_s, var_ep[None, :], var_ip)

    shifted_values = shifted_stack.values(corrupted)  # row[target_index] stays pure
    s_s, s_ep, s_ip = variance_fields(shifted_values, neighbors)
    m_close = shifted_stack.n_periods - 1
    target_var = st_variance(s_s[m_close], s_ep, s_ip[m_close])

    adj_periods = []
    period_raws = []
    for intervals in stack.period_intervals():
        raw = _kernels.gravity_window_mean(dist, corrupted[intervals], rho, 1.0)
        period_raws.append(raw)
        adj_periods.append(normalize_adjacency(clip_gravity(raw)))
    q = stack.q
    daily_raw = np.mean(period_raws[1:1 + q], axis=0)
    adj_steps = np.stack([
        normalize_adjacency(clip_gravity(period_raws[0])),
        normalize_adjacency(clip_gravity(daily_raw)),
        normalize_adjacency(clip_gravity(period_raws[-1])),
    ])

    return Sample(
        target_index=target_index, layer=spec.layer,
        values=values, contexts=ctx_values,
        adj_periods=np.stack(adj_periods), adj_steps=adj_steps,
        target=h[target_index].copy(),
        quality_gap=quality_gap, var_st=var_st, target_var=target_var,
    )


def make_training_samples(mobility: MobilityTensor, context: ContextTensor,
                          graph: UrbanGraph, p: int, q: int, rho: float,
                          schedule: TurbulenceSchedule,
                          targets=None) -> list:
    """Emit up to len(schedule.layers) variants per admissible target index."""
    if q < 1:
        raise InvalidConfig("training samples need q >= 1 daily layers")
    if mobility.values.shape[0] != context.values.shape[0]:
        raise ShapeMismatch("mobility and context disagree on T")
    if mobility.values.shape[1] != graph.n_regions:
        raise ShapeMismatch("mobility and graph disagree on N")
    ipd = mobility.intervals_per_day
    if targets is None:
        targets = admissible_targets(mobility, p)
    dist = distance_matrix(graph)
    neighbors = neighbor_sets(graph)
    samples = []
    for t in targets:
        if t < 7 * ipd + p or t >= mobility.values.shape[0]:
            raise InsufficientHistory(f"target index {t} outside the admissible range")
        stack = build_period_stack(t - 1, p, q, ipd)
        shifted = build_period_stack(t, p, q, ipd)
        pure_values = stack.values(mobility.values)
        for layer_index in range(len(schedule.layers)):
            spec = schedule.spec_for(layer_index, t)
            samples.append(build_sample(mobility, context, graph, stack, shifted, t,
                                        spec, rho, dist=dist, neighbors=neighbors,
                                        pure_values=pure_values))
    return samples

"""Urban graph, mobility-involved adjacency matrices, and period layering.

Regions are vertices with planar km coordinates.  Edges combine geographic
proximity exp(-dist) with a gravity-style transition term
rho * log(H_i * H_j / dist); per-period matrices are interval averages of
that time-sensitive adjacency, then symmetrically normalized with self-loops
(D^-1/2 (A + I) D^-1/2).  The period stack collects the q+2 historical
windows (7-day summary, q daily replicas, nearest-p closeness) that feed
both model heads.

All functions are pure and thread-safe.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    DegenerateDegree,
    DegenerateGeometry,
    EmptyPeriod,
    InsufficientHistory,
    InvalidConfig,
    ShapeMismatch,
)

#: flow floor inside the gravity log; zero flows would make it -inf
EPS_FLOW = 1.0


@dataclass(frozen=True)
class UrbanGraph:
    """Vertex set of the urban graph: region ids plus planar km coordinates."""

    region_ids: tuple
    coords: np.ndarray  # (N, 2) km

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        object.__setattr__(self, "coords", coords)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ShapeMismatch(f"coords must be (N, 2), got {coords.shape}")
        if len(self.region_ids) != coords.shape[0]:
            raise ShapeMismatch("region_ids and coords length mismatch")
        if coords.shape[0] < 2:
            raise DegenerateGeometry("need at least 2 regions")
        if not np.all(np.isfinite(coords)):
            raise DegenerateGeometry("coordinates must be finite")
        if len(set(self.region_ids)) != len(self.region_ids):
            raise DegenerateGeometry("region ids must be unique")
        if np.unique(coords, axis=0).shape[0] != coords.shape[0]:
            raise DegenerateGeometry("two regions share identical coordinates")

    @property
    def n_regions(self) -> int:
        return self.coords.shape[0]


def distance_matrix(graph: UrbanGraph) -> np.ndarray:
    """Pairwise Euclidean distances in km; raises on coincident regions."""
    diff = graph.coords[:, None, :] - graph.coords[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    off = ~np.eye(graph.n_regions, dtype=bool)
    if np.any(dist[off] == 0.0):
        raise DegenerateGeometry("two regions share identical coordinates")
    return dist


def gravity_adjacency(graph: UrbanGraph, flows, rho: float,
                      eps_flow: float = EPS_FLOW, dist: np.ndarray | None = None) -> np.ndarray:
    """Time-sensitive adjacency for one interval.

    A_ij = exp(-dist_ij) + rho * log(max(H_i,eps) * max(H_j,eps) / dist_ij)
    for i != j; the diagonal stays 0 (self-loops enter via A + I later).
    """
    flows = np.asarray(flows, dtype=np.float64)
    if flows.shape != (graph.n_regions,):
        raise ShapeMismatch(f"flows must be (N,), got {flows.shape}")
    if np.any(flows < 0):
        raise ValueError("flows must be nonnegative")
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if dist is None:
        dist = distance_matrix(graph)
    return _kernels.gravity_window_mean(dist, flows[None, :], rho, eps_flow)


def period_adjacency(adjacencies) -> np.ndarray:
    """Elementwise mean of the adjacency matrices of one period's intervals."""
    mats = list(adjacencies)
    if not mats:
        raise EmptyPeriod("period has no adjacency matrices")
    first = np.asarray(mats[0], dtype=np.float64)
    out = np.zeros_like(first)
    for m in mats:
        m = np.asarray(m, dtype=np.float64)
        if m.shape != first.shape:
            raise ShapeMismatch("adjacency shapes differ within period")
        out += m
    return out / len(mats)


def normalize_adjacency(adj: np.ndarray) -> np.ndarray:
    """Symmetric normalization with self-loops: D^-1/2 (A + I) D^-1/2."""
    adj = np.asarray(adj, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ShapeMismatch(f"adjacency must be square, got {adj.shape}")
    if not np.allclose(adj, adj.T, atol=1e-10):
        raise ShapeMismatch("adjacency must be symmetric")
    a_tilde = adj + np.eye(adj.shape[0])
    deg = a_tilde.sum(axis=1)
    if np.any(deg <= 0):
        raise DegenerateDegree("row sum of A + I is nonpositive")
    inv_sqrt = 1.0 / np.sqrt(deg)
    return a_tilde * np.outer(inv_sqrt, inv_sqrt)


def clip_gravity(adj: np.ndarray) -> np.ndarray:
    """Clip negative gravity entries to 0 so normalization degrees stay positive."""
    return np.maximum(np.asarray(adj, dtype=np.float64), 0.0)


@dataclass(frozen=True)
class PeriodStack:
    """Interval indices of the q+2 layered windows ending at predecessor T.

    Layer order throughout the package: weekly summary, then the q daily
    replicas from 1 day back to q days back, then closeness - period axis
    indices 0 .. q+1.
    """

    closeness: np.ndarray   # (p,) indices {T-p+1 .. T}
    daily: np.ndarray       # (q, p) row k-1 = closeness - k*intervals_per_day
    weekly: np.ndarray      # (7, p) row k-1 = closeness - k*intervals_per_day

    @property
    def p(self) -> int:
        return self.closeness.shape[0]

    @property
    def q(self) -> int:
        return self.daily.shape[0]

    @property
    def n_periods(self) -> int:
        return self.q + 2

    def slot_index_lists(self) -> list:
        """Per period, per slot: the raw interval indices averaged into that slot.

        Weekly slots average 7 raw intervals; every other slot is a single one.
        """
        layout = [[list(self.weekly[:, j]) for j in range(self.p)]]
        for k in range(self.q):
            layout.append([[int(self.daily[k, j])] for j in range(self.p)])
        layout.append([[int(i)] for i in self.closeness])
        return layout

    def period_intervals(self) -> list:
        """Per period: the flat list of raw intervals it covers (for A^m averaging)."""
        out = [list(self.weekly.ravel())]
        out.extend(list(row) for row in self.daily)
        out.append(list(self.closeness))
        return [[int(i) for i in lst] for lst in out]

    def values(self, series: np.ndarray) -> np.ndarray:
        """Stack a (T, ...) series into (q+2, p, ...) period-layer values.

        The weekly layer is the elementwise mean over the 7 day-shifted
        copies of the closeness window.
        """
        series = np.asarray(series, dtype=np.float64)
        weekly = series[self.weekly].mean(axis=0)          # (p, ...)
        daily = series[self.daily]                          # (q, p, ...)
        close = series[self.closeness]                      # (p, ...)
        return np.concatenate([weekly[None], daily, close[None]], axis=0)


def build_period_stack(t_pred: int, p: int, q: int, intervals_per_day: int) -> PeriodStack:
    """Index the layered windows whose newest interval is t_pred (the target is t_pred+1)."""
    if p < 1 or q < 0 or intervals_per_day < 1:
        raise InvalidConfig("need p >= 1, q >= 0, intervals_per_day >= 1")
    if q > 7:
        raise InvalidConfig("daily layers beyond one week are not supported (q <= 7)")
    if t_pred + 1 < 7 * intervals_per_day + p:
        raise InsufficientHistory(
            f"predecessor index {t_pred} needs at least {7 * intervals_per_day + p} intervals of history")
    closeness = np.arange(t_pred - p + 1, t_pred + 1)
    daily = np.stack([closeness - k * intervals_per_day for k in range(1, q + 1)]) \
        if q else np.zeros((0, p), dtype=np.int64)
    weekly = np.stack([closeness - k * intervals_per_day for k in range(1, 8)])
    return PeriodStack(closeness=closeness, daily=daily.astype(np.int64),
                       weekly=weekly.astype(np.int64))


def load_regions_csv(path) -> UrbanGraph:
    """Read `region_id,x_km,y_km` rows into an UrbanGraph."""
    ids, coords = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = {"region_id", "x_km", "y_km"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise InvalidConfig(f"{path}: header must contain {sorted(expected)}")
        for row in reader:
            ids.append(row["region_id"])
            coords.append((float(row["x_km"]), float(row["y_km"])))
    return UrbanGraph(region_ids=tuple(ids), coords=np.asarray(coords, dtype=np.float64))


def write_regions_csv(path, graph: UrbanGraph) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region_id", "x_km", "y_km"])
        for rid, (x, y) in zip(graph.region_ids, graph.coords):
            writer.writerow([rid, repr(float(x)), repr(float(y))])

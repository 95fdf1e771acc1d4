"""Weak-supervision uncertainty indicators.

Two label families guide the uncertainty head without real labels:

* data quality: the absolute gap |H - H_C| between a window and its
  deliberately corrupted copy, averaged per period;
* spatiotemporal variance: the mean of three dispersion views (spatial
  neighbors, inter-period, intra-period), each a population standard
  deviation over the period stack's values.

``oracle.py`` recomputes the variance views with independent nested loops;
the two paths are compared in the test suite and must agree to 1e-9.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .errors import ShapeMismatch
from .graph import PeriodStack, UrbanGraph, build_period_stack, distance_matrix


def neighbor_sets(graph: UrbanGraph, fraction: float = 0.05) -> np.ndarray:
    """Indices of each region's nearest neighbors (top fraction, floor 1, self excluded).

    Ties are broken by region index so the sets are deterministic.
    """
    n = graph.n_regions
    k = max(1, math.ceil(fraction * n))
    dist = distance_matrix(graph)
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")
    return order[:, :k].astype(np.int64)


def quality_indicator(window: np.ndarray, corrupted: np.ndarray) -> np.ndarray:
    """Interval-level data-quality indicator |H - H_C|, elementwise."""
    window = np.asarray(window, dtype=np.float64)
    corrupted = np.asarray(corrupted, dtype=np.float64)
    if window.shape != corrupted.shape:
        raise ShapeMismatch(f"shapes differ: {window.shape} vs {corrupted.shape}")
    return np.abs(window - corrupted)


def period_quality(values: np.ndarray, corrupted_values: np.ndarray) -> np.ndarray:
    """Period-level quality label: mean of |H - H_C| over each period's slots.

    values, corrupted_values: (q+2, p, N) stacked series -> (q+2, N).
    """
    return quality_indicator(values, corrupted_values).mean(axis=1)


def variance_fields(values: np.ndarray, neighbors: np.ndarray):
    """All three variance views over a stacked (q+2, p, N) tensor.

    Returns (var_s (q+2, N), var_ep (N,), var_ip (q+2, N)).  The inter-period
    view is period-independent and computed once.  Dispatches to the compiled
    kernel when available.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3:
        raise ShapeMismatch(f"stacked values must be (q+2, p, N), got {values.shape}")
    return _kernels.variance_views_fields(values, neighbors)


class VarianceTriple(tuple):
    """(var_s, var_ep, var_ip) with a flag for the degenerate p = 1 case."""

    degenerate: bool

    def __new__(cls, var_s, var_ep, var_ip, degenerate=False):
        self = super().__new__(cls, (var_s, var_ep, var_ip))
        self.degenerate = degenerate
        return self


def variance_views(series: np.ndarray, graph: UrbanGraph, stack: PeriodStack,
                   period: int, region: int) -> VarianceTriple:
    """The three dispersion views for one (period, region) cell.

    series: full (T, N) mobility tensor the stack indexes into.  With p = 1
    the intra-period view is degenerate and reported as 0 with a flag.
    """
    values = stack.values(np.asarray(series, dtype=np.float64))
    var_s, var_ep, var_ip = variance_fields(values, neighbor_sets(graph))
    return VarianceTriple(float(var_s[period, region]), float(var_ep[region]),
                          float(var_ip[period, region]), degenerate=stack.p < 2)


def st_variance(var_s, var_ep, var_ip):
    """Unified spatiotemporal variance: arithmetic mean of the three views."""
    return (np.asarray(var_s, dtype=np.float64)
            + np.asarray(var_ep, dtype=np.float64)
            + np.asarray(var_ip, dtype=np.float64)) / 3.0


def target_variance(series: np.ndarray, graph: UrbanGraph, stack: PeriodStack,
                    target_index: int) -> np.ndarray:
    """Per-region variance label for the target interval.

    Computed on the closeness window shifted forward by one interval so it
    ends at the target itself, with the inter-period view taken across the
    correspondingly shifted q+2 periods.
    """
    series = np.asarray(series, dtype=np.float64)
    shifted = build_period_stack(target_index, stack.p, stack.q, _infer_ipd(stack))
    values = shifted.values(series)
    var_s, var_ep, var_ip = variance_fields(values, neighbor_sets(graph))
    m_close = shifted.n_periods - 1
    return st_variance(var_s[m_close], var_ep, var_ip[m_close])


def _infer_ipd(stack: PeriodStack) -> int:
    """Recover intervals_per_day from the stack's weekly shift structure."""
    return int(stack.closeness[0] - stack.weekly[0, 0])

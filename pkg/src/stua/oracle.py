"""Brute-force recomputation of the variance views for verification.

Deliberately shares no code with ``indicators``: plain Python loops over
explicit index lists, operating on the raw series.  The period layout is a
nested list [period][slot] -> raw interval indices whose mean forms that
slot's value (7 indices for weekly slots, 1 otherwise).
"""

from __future__ import annotations

import math


def _mean(xs):
    return sum(xs) / len(xs)


def _pop_std(xs):
    mu = _mean(xs)
    return math.sqrt(sum((x - mu) ** 2 for x in xs) / len(xs))


def _slot_value(series, indices, region):
    return _mean([float(series[t][region]) for t in indices])


def oracle_st_variance(series, neighbor_lists, layout):
    """Recompute spatial / inter-period / intra-period views by direct loops.

    series: indexable (T, N) raw values; neighbor_lists: per-region neighbor
    index lists; layout: [period][slot] -> list of raw interval indices.
    Returns (var_s, var_ep, var_ip, var_st) as nested lists
    ([period][region], [region], [period][region], [period][region]).
    """
    n_periods = len(layout)
    n_slots = len(layout[0])
    n_regions = len(neighbor_lists)

    var_s = [[0.0] * n_regions for _ in range(n_periods)]
    var_ip = [[0.0] * n_regions for _ in range(n_periods)]
    var_ep = [0.0] * n_regions
    for m in range(n_periods):
        for i in range(n_regions):
            acc = 0.0
            for j in range(n_slots):
                neigh_vals = [_slot_value(series, layout[m][j], k) for k in neighbor_lists[i]]
                acc += _pop_std(neigh_vals)
            var_s[m][i] = acc / n_slots
            var_ip[m][i] = _pop_std(
                [_slot_value(series, layout[m][j], i) for j in range(n_slots)])
    for i in range(n_regions):
        acc = 0.0
        for j in range(n_slots):
            acc += _pop_std(
                [_slot_value(series, layout[b][j], i) for b in range(n_periods)])
        var_ep[i] = acc / n_slots

    var_st = [[(var_s[m][i] + var_ep[i] + var_ip[m][i]) / 3.0
               for i in range(n_regions)] for m in range(n_periods)]
    return var_s, var_ep, var_ip, var_st

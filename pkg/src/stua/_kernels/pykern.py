"""Numpy fallback implementations of the hot kernels.

Same contracts as the compiled twins in ``_ckern.pyx``; selected at import
time by ``stua._kernels`` when the extension is not built.
"""

import numpy as np


def gravity_window_mean(dist, flows, rho, eps_flow):
    """Mean mobility-involved adjacency over a window of intervals.

    dist: (N, N) pairwise distances, zero diagonal.
    flows: (W, N) nonnegative intensities for the W intervals of the window.
    Returns the (N, N) elementwise mean of
    exp(-dist) + rho * log(max(H_i, eps) * max(H_j, eps) / dist), diagonal 0.
    """
    dist = np.asarray(dist, dtype=np.float64)
    flows = np.asarray(flows, dtype=np.float64)
    n = dist.shape[0]
    if flows.ndim != 2 or flows.shape[1] != n:
        raise ValueError("flows must be (W, N) matching dist")
    logf = np.log(np.maximum(flows, eps_flow))  # (W, N)
    mean_logf = logf.mean(axis=0)
    off = ~np.eye(n, dtype=bool)
    out = np.zeros((n, n), dtype=np.float64)
    logsum = mean_logf[:, None] + mean_logf[None, :]
    with np.errstate(divide="ignore"):
        logdist = np.where(off, np.log(np.where(off, dist, 1.0)), 0.0)
    out[off] = (np.exp(-dist) + rho * (logsum - logdist))[off]
    return out


def variance_views_fields(values, neighbors):
    """Spatial / inter-period / intra-period dispersion of a period stack.

    values: (M, p, N) stacked per-period series (weekly layer pre-averaged).
    neighbors: (N, k) integer neighbor indices, self excluded.
    Returns (var_s (M, N), var_ep (N,), var_ip (M, N)); all population stdv.
    """
    values = np.asarray(values, dtype=np.float64)
    neighbors = np.asarray(neighbors, dtype=np.int64)
    var_ip = values.std(axis=1)
    var_ep = values.std(axis=0).mean(axis=0)
    gathered = values[:, :, neighbors]          # (M, p, N, k)
    var_s = gathered.std(axis=3).mean(axis=1)   # (M, N)
    return var_s, var_ep, var_ip

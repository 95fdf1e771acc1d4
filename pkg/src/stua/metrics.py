"""Point-forecast and interval metrics: RMSE, MAPE, PICP."""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch, UndefinedMetric


def _check_shapes(*arrays):
    shapes = {np.asarray(a).shape for a in arrays}
    if len(shapes) != 1:
        raise ShapeMismatch(f"metric inputs disagree on shape: {sorted(shapes)}")
    return [np.asarray(a, dtype=np.float64) for a in arrays]


def rmse(h_hat, h) -> float:
    h_hat, h = _check_shapes(h_hat, h)
    if h.size == 0:
        raise UndefinedMetric("rmse over zero cells")
    return float(np.sqrt(np.mean((h_hat - h) ** 2)))


def mape(h_hat, h, floor: float = 1.0) -> float:
    """Mean absolute percentage error over cells with truth >= floor, in percent.

    Cells below the floor are excluded (count via ``mape_excluded``); if every
    cell is excluded the metric is undefined.
    """
    h_hat, h = _check_shapes(h_hat, h)
    keep = h >= floor
    if not keep.any():
        raise UndefinedMetric(f"all cells below the MAPE floor {floor}")
    return float(np.mean(np.abs(h_hat[keep] - h[keep]) / h[keep]) * 100.0)


def mape_excluded(h, floor: float = 1.0) -> int:
    """Number of cells the MAPE floor excludes."""
    return int(np.sum(np.asarray(h, dtype=np.float64) < floor))


def picp(h_hat, sigma_hat, h) -> float:
    """Prediction interval coverage probability with strict containment.

    A cell counts as covered when H lies strictly inside
    (Hhat - |sigma|, Hhat + |sigma|); ties and degenerate intervals do not.
    """
    h_hat, sigma_hat, h = _check_shapes(h_hat, sigma_hat, h)
    if h.size == 0:
        raise UndefinedMetric("picp over zero cells")
    width = np.abs(sigma_hat)
    covered = (h_hat - width < h) & (h < h_hat + width)
    return float(np.count_nonzero(covered) / h.size)


def coverage_flags(h_hat, sigma_hat, h) -> np.ndarray:
    """Per-cell strict-containment booleans (same rule as ``picp``)."""
    h_hat, sigma_hat, h = _check_shapes(h_hat, sigma_hat, h)
    width = np.abs(sigma_hat)
    return (h_hat - width < h) & (h < h_hat + width)

"""Gated recalibration bridge between the point estimate and its uncertainty.

A tanh gate decides what fraction of the quantified uncertainty transfers
into the prediction; the transferred part leaves the uncertainty, so
H' + sigma = H + U holds by construction.
"""

from __future__ import annotations

import torch
from torch import nn

from ..errors import ShapeMismatch


def recalibrate(h_hat: torch.Tensor, u_hat: torch.Tensor, w_gate: torch.Tensor):
    """Apply the gate once: f = tanh(W [U ; H]); H' = H + U f; sigma = U - U f.

    Works on (N,) vectors or batched (..., N); returns (h_recal, sigma_hat, f_gate).
    """
    if h_hat.shape != u_hat.shape:
        raise ShapeMismatch(f"prediction {tuple(h_hat.shape)} vs uncertainty "
                            f"{tuple(u_hat.shape)}")
    n = h_hat.shape[-1]
    if w_gate.shape != (n, 2 * n):
        raise ShapeMismatch(f"gate weight must be (N, 2N), got {tuple(w_gate.shape)}")
    z = torch.cat([u_hat, h_hat], dim=-1)
    f_gate = torch.tanh(torch.einsum("nz,...z->...n", w_gate, z))
    transfer = u_hat * f_gate
    return h_hat + transfer, u_hat - transfer, f_gate


class RecalibrationGate(nn.Module):
    """Learnable gate weight, zero-initialized so training starts from identity."""

    def __init__(self, n_regions: int):
        super().__init__()
        self.w_gate = nn.Parameter(torch.zeros(n_regions, 2 * n_regions,
                                               dtype=torch.float64))

    def forward(self, h_hat: torch.Tensor, u_hat: torch.Tensor):
        return recalibrate(h_hat, u_hat, self.w_gate)

"""Point-estimation head: parallel GCN blocks over the layered periods,
then a region-shared LSTM over the p+2 summarized steps.

Step order is weekly summary, daily summary, then the p closeness intervals;
each step's GCN shares its period's averaged, normalized adjacency.  The
readout is one weight vector applied to every region's final hidden state,
which keeps the head permutation-equivariant.
"""

from __future__ import annotations

import torch
from torch import nn

from ..errors import ShapeMismatch


def gcn_forward(adj_norm: torch.Tensor, x: torch.Tensor, weights) -> torch.Tensor:
    """Stacked graph convolution: x <- ReLU(adj @ x @ W) for each layer weight."""
    if adj_norm.shape[-1] != x.shape[-2]:
        raise ShapeMismatch(f"adjacency {tuple(adj_norm.shape)} does not chain "
                            f"with features {tuple(x.shape)}")
    for w in weights:
        if x.shape[-1] != w.shape[0]:
            raise ShapeMismatch(f"feature width {x.shape[-1]} does not chain "
                                f"with weight {tuple(w.shape)}")
        x = torch.relu(adj_norm @ x @ w)
    return x


class MobilityPredictor(nn.Module):
    """GCN feature maps + context embedding -> LSTM -> per-region estimate."""

    def __init__(self, n_context: int, gcn_hidden: int = 16, gcn_layers: int = 2,
                 seq_hidden: int = 32, seq_layers: int = 2):
        super().__init__()
        dims = [1] + [gcn_hidden] * gcn_layers
        self.gcn_weights = nn.ParameterList(
            nn.Parameter(torch.zeros(dims[k], dims[k + 1], dtype=torch.float64))
            for k in range(gcn_layers))
        self.ctx_embed = nn.Linear(n_context, gcn_hidden).double()
        self.lstm = nn.LSTM(gcn_hidden, seq_hidden, num_layers=seq_layers).double()
        self.readout = nn.Linear(seq_hidden, 1).double()

    def forward(self, steps_x: torch.Tensor, steps_ctx: torch.Tensor,
                adj_steps: torch.Tensor) -> torch.Tensor:
        """steps_x (B, S, N, 1), steps_ctx (B, S, N, Q), adj_steps (B, S, N, N) -> (B, N)."""
        b, s, n, _ = steps_x.shape
        feats = steps_x
        for w in self.gcn_weights:
            feats = torch.relu(torch.einsum("bsij,bsjf->bsif", adj_steps, feats) @ w)
        feats = feats + self.ctx_embed(steps_ctx)
        seq = feats.permute(1, 0, 2, 3).reshape(s, b * n, -1)
        _, (h_last, _) = self.lstm(seq)
        return self.readout(h_last[-1]).reshape(b, n)


def predict_mobility(predictor: MobilityPredictor, values: torch.Tensor,
                     contexts: torch.Tensor, adj_steps3: torch.Tensor) -> torch.Tensor:
    """Single-sample convenience: (q+2, p, N) stack values -> (N,) estimate."""
    steps_x, steps_ctx, adj = build_steps(values[None], contexts[None], adj_steps3[None])
    return predictor(steps_x, steps_ctx, adj)[0]


def build_steps(values: torch.Tensor, contexts: torch.Tensor,
                adj_steps3: torch.Tensor):
    """Summarize the period stack into the p+2 sequence steps.

    values (B, M, p, N) with M = q+2; contexts (B, M, p, N, Q);
    adj_steps3 (B, 3, N, N) normalized [weekly, daily summary, closeness].
    Returns (steps_x (B, S, N, 1), steps_ctx (B, S, N, Q), adj (B, S, N, N)).
    """
    b, m, p, n = values.shape
    if m < 3:
        raise ShapeMismatch("need at least weekly, one daily, and closeness layers")
    weekly_x = values[:, 0].mean(dim=1)               # (B, N)
    daily_x = values[:, 1:m - 1].mean(dim=(1, 2))     # (B, N)
    close_x = values[:, m - 1].permute(0, 1, 2)       # (B, p, N)
    steps_x = torch.cat([weekly_x[:, None], daily_x[:, None], close_x], dim=1)

    weekly_c = contexts[:, 0].mean(dim=1)
    daily_c = contexts[:, 1:m - 1].mean(dim=(1, 2))
    close_c = contexts[:, m - 1]
    steps_ctx = torch.cat([weekly_c[:, None], daily_c[:, None], close_c], dim=1)

    idx = torch.tensor([0, 1] + [2] * p, dtype=torch.long, device=values.device)
    adj = adj_steps3[:, idx]
    return steps_x[..., None], steps_ctx, adj

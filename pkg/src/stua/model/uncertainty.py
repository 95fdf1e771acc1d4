"""Uncertainty head: internal content consistency + external context interactions.

Internal route: each period's series is context-encapsulated into an
embedding; low similarity between a period and the other q+1 periods maps to
high uncertainty through a negative exponential and a learned linear layer.

External route: per-category context factors are field-embedded, crossed
pairwise (factorization-machine style), and spatially propagated by graph
convolutions whose last layer squeezes to one value per region.

The two are fused per period and evolved over the q+2 periods by an LSTM
into the next-interval uncertainty estimate.
"""

from __future__ import annotations

import torch
from torch import nn

from ..errors import ShapeMismatch


# --- functional forms (single region / period; the module runs them batched) ---

def embed_period(h: torch.Tensor, ex: torch.Tensor, w_ex: torch.Tensor,
                 w: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Context-encapsulated period embedding: W((W_ex ex) + h) + b."""
    if w_ex.shape != (h.shape[0], ex.shape[0]):
        raise ShapeMismatch(f"w_ex must be (p, L_c), got {tuple(w_ex.shape)}")
    if w.shape[1] != h.shape[0] or b.shape[0] != w.shape[0]:
        raise ShapeMismatch("embedding weight/bias shapes do not chain")
    return w @ (w_ex @ ex + h) + b


def period_similarity(embeddings: torch.Tensor) -> torch.Tensor:
    """Mean inner product of each period's embedding with all the others.

    embeddings (M, L_e) -> (M,); requires M >= 2.
    """
    m = embeddings.shape[0]
    if m < 2:
        raise ShapeMismatch("similarity needs at least 2 periods")
    gram = embeddings @ embeddings.T
    return (gram.sum(dim=1) - gram.diagonal()) / (m - 1)


def internal_uncertainty(s: torch.Tensor, w_i: torch.Tensor, b_i: torch.Tensor) -> torch.Tensor:
    """U_I = W_I exp(-s) + b_I over the region axis."""
    if w_i.shape != (s.shape[-1], s.shape[-1]) or b_i.shape[-1] != s.shape[-1]:
        raise ShapeMismatch("internal uncertainty parameters must be (N, N) and (N,)")
    return torch.einsum("ij,...j->...i", w_i, torch.exp(-s)) + b_i


def pair_indices(n_categories: int):
    """Unordered category pairs (u < v), lexicographic."""
    iu, iv = zip(*[(u, v) for u in range(n_categories) for v in range(u + 1, n_categories)]) \
        if n_categories >= 2 else ((), ())
    return list(iu), list(iv)


def fm_interactions(raw: torch.Tensor, field_w: torch.Tensor, field_b: torch.Tensor,
                    pair_w: torch.Tensor) -> torch.Tensor:
    """Field embeddings plus pairwise Hadamard interactions, concatenated.

    raw (Q, p) per-category factors over the period's intervals;
    field_w (Q, L_ce, p), field_b (Q, L_ce), pair_w (Q(Q-1)/2, L_ce, L_ie).
    Output length Q*L_ce + Q(Q-1)/2*L_ie.
    """
    q = raw.shape[0]
    if q < 1:
        raise ShapeMismatch("need at least one context category")
    fields = torch.einsum("qcp,qp->qc", field_w, raw) + field_b
    parts = [fields.reshape(-1)]
    iu, iv = pair_indices(q)
    if iu:
        had = fields[iu] * fields[iv]                       # (P, L_ce)
        parts.append(torch.einsum("pci,pc->pi", pair_w, had).reshape(-1))
    return torch.cat(parts)


def external_uncertainty(adj_norm: torch.Tensor, interactions: torch.Tensor,
                         kernels) -> torch.Tensor:
    """Graph convolution stack over node interaction features, squeezed to (N,).

    Hidden layers use ReLU; the last stays linear so uncertainties keep sign.
    """
    x = interactions
    for w in kernels[:-1]:
        x = torch.relu(adj_norm @ x @ w)
    x = adj_norm @ x @ kernels[-1]
    return x.squeeze(-1)


def aggregate(u_internal: torch.Tensor, u_external: torch.Tensor,
              w_aggr: torch.Tensor) -> torch.Tensor:
    """Fuse the two uncertainty sources: W [U_I ; U_E] with W (N, 2N)."""
    z = torch.cat([u_internal, u_external], dim=-1)
    if w_aggr.shape[-1] != z.shape[-1]:
        raise ShapeMismatch("aggregation weight must be (N, 2N)")
    return torch.einsum("iz,...z->...i", w_aggr, z)


def evolve_uncertainty(u_sequence: torch.Tensor, lstm: nn.LSTM,
                       proj: nn.Linear) -> torch.Tensor:
    """Evolve period-wise overall uncertainties (M, N) into the next-interval (N,)."""
    if u_sequence.ndim != 2 or u_sequence.shape[0] < 1:
        raise ShapeMismatch("need a nonempty (M, N) uncertainty sequence")
    m, n = u_sequence.shape
    _, (h_last, _) = lstm(u_sequence.reshape(m, n, 1))
    return proj(h_last[-1]).reshape(n)


class UncertaintyHead(nn.Module):
    """Batched internal + external uncertainty with temporal evolution."""

    def __init__(self, n_regions: int, p: int, q: int, n_context: int,
                 embed_width: int = 8, field_width: int = 4, interact_width: int = 2,
                 fm_hidden: int = 8, fm_layers: int = 2,
                 evolve_hidden: int = 16, evolve_layers: int = 2):
        super().__init__()
        m = q + 2
        l_c = p * n_context
        self.p, self.q, self.n_context = p, q, n_context
        dbl = dict(dtype=torch.float64)
        self.embed_w_ex = nn.Parameter(torch.zeros(m, p, l_c, **dbl))
        self.embed_w = nn.Parameter(torch.zeros(m, embed_width, p, **dbl))
        self.embed_b = nn.Parameter(torch.zeros(m, embed_width, **dbl))
        self.w_internal = nn.Parameter(torch.zeros(n_regions, n_regions, **dbl))
        self.b_internal = nn.Parameter(torch.zeros(n_regions, **dbl))
        self.field_w = nn.Parameter(torch.zeros(n_context, field_width, p, **dbl))
        self.field_b = nn.Parameter(torch.zeros(n_context, field_width, **dbl))
        iu, iv = pair_indices(n_context)
        self._iu, self._iv = iu, iv
        self.pair_w = nn.Parameter(torch.zeros(len(iu), field_width, interact_width, **dbl))
        interact_dim = n_context * field_width + len(iu) * interact_width
        dims = [interact_dim] + [fm_hidden] * (fm_layers - 1) + [1]
        self.fm_kernels = nn.ParameterList(
            nn.Parameter(torch.zeros(dims[k], dims[k + 1], **dbl))
            for k in range(fm_layers))
        self.aggr_w = nn.Parameter(torch.zeros(n_regions, 2 * n_regions, **dbl))
        self.evolve_lstm = nn.LSTM(1, evolve_hidden, num_layers=evolve_layers).double()
        self.evolve_proj = nn.Linear(evolve_hidden, 1).double()

    def forward(self, values: torch.Tensor, contexts: torch.Tensor,
                adj_periods: torch.Tensor) -> dict:
        """values (B, M, p, N), contexts (B, M, p, N, Q), adj_periods (B, M, N, N)."""
        b, m, p, n = values.shape
        series = values.permute(0, 1, 3, 2)                              # (B, M, N, p)
        ex = contexts.permute(0, 1, 3, 2, 4).reshape(b, m, n, p * self.n_context)
        mapped = torch.einsum("mpl,bmnl->bmnp", self.embed_w_ex, ex) + series
        embeds = torch.einsum("mep,bmnp->bmne", self.embed_w, mapped) \
            + self.embed_b[None, :, None, :]

        gram = torch.einsum("bmne,bkne->bmkn", embeds, embeds)
        diag = torch.einsum("bmne,bmne->bmn", embeds, embeds)
        sim = (gram.sum(dim=2) - diag) / (m - 1)                         # (B, M, N)
        u_internal = internal_uncertainty(sim, self.w_internal, self.b_internal)

        raw = contexts.permute(0, 1, 3, 4, 2)                            # (B, M, N, Q, p)
        fields = torch.einsum("qcp,bmnqp->bmnqc", self.field_w, raw) + self.field_b
        parts = [fields.reshape(b, m, n, -1)]
        if self._iu:
            had = fields[:, :, :, self._iu, :] * fields[:, :, :, self._iv, :]
            parts.append(torch.einsum("pci,bmnpc->bmnpi", self.pair_w, had)
                         .reshape(b, m, n, -1))
        interactions = torch.cat(parts, dim=-1)

        x = interactions
        for w in self.fm_kernels[:-1]:
            x = torch.relu(torch.einsum("bmij,bmjd->bmid", adj_periods, x) @ w)
        x = torch.einsum("bmij,bmjd->bmid", adj_periods, x) @ self.fm_kernels[-1]
        u_external = x.squeeze(-1)                                       # (B, M, N)

        u_overall = aggregate(u_internal, u_external, self.aggr_w)

        seq = u_overall.permute(1, 0, 2).reshape(m, b * n, 1)
        _, (h_last, _) = self.evolve_lstm(seq)
        u_next = self.evolve_proj(h_last[-1]).reshape(b, n)

        return {"u_internal": u_internal, "u_external": u_external,
                "u_overall": u_overall, "u_next": u_next}

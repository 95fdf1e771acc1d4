"""Full double-head network and its deterministic initialization."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import nn

from .uncertainty import UncertaintyHead
from .gate import RecalibrationGate
from .predictor import MobilityPredictor, build_steps


@dataclass(frozen=True)
class ModelConfig:
    n_regions: int
    p: int = 6
    q: int = 3
    n_context: int = 2
    gcn_layers: int = 2
    gcn_hidden: int = 16
    seq_hidden: int = 32
    seq_layers: int = 2
    embed_width: int = 8
    field_width: int = 4
    interact_width: int = 2
    fm_hidden: int = 8
    fm_layers: int = 2
    evolve_hidden: int = 16
    evolve_layers: int = 2

    def to_dict(self) -> dict:
        return asdict(self)


class UncertaintyAwareModel(nn.Module):
    """Point prediction + uncertainty quantification + gated recalibration."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.predictor = MobilityPredictor(
            n_context=cfg.n_context, gcn_hidden=cfg.gcn_hidden,
            gcn_layers=cfg.gcn_layers, seq_hidden=cfg.seq_hidden,
            seq_layers=cfg.seq_layers)
        self.uncertainty = UncertaintyHead(
            n_regions=cfg.n_regions, p=cfg.p, q=cfg.q, n_context=cfg.n_context,
            embed_width=cfg.embed_width, field_width=cfg.field_width,
            interact_width=cfg.interact_width, fm_hidden=cfg.fm_hidden,
            fm_layers=cfg.fm_layers, evolve_hidden=cfg.evolve_hidden,
            evolve_layers=cfg.evolve_layers)
        self.gate = RecalibrationGate(cfg.n_regions)

    def forward(self, batch: dict) -> dict:
        """batch holds values (B,M,p,N), contexts (B,M,p,N,Q), adj_periods, adj_steps."""
        steps_x, steps_ctx, adj = build_steps(batch["values"], batch["contexts"],
                                              batch["adj_steps"])
        h_point = self.predictor(steps_x, steps_ctx, adj)
        uq = self.uncertainty(batch["values"], batch["contexts"], batch["adj_periods"])
        h_recal, sigma_hat, f_gate = self.gate(h_point, uq["u_next"])
        return {
            "h_point": h_point, "u_next": uq["u_next"],
            "h_recal": h_recal, "sigma_hat": sigma_hat, "f_gate": f_gate,
            "u_internal": uq["u_internal"], "u_external": uq["u_external"],
            "u_overall": uq["u_overall"],
        }


PARAMETER_GROUPS = {
    "predictor.gcn_weights": "gcn",
    "predictor.ctx_embed": "gcn",
    "predictor.lstm": "sequence",
    "predictor.readout": "sequence",
    "uncertainty.embed_": "period_embed",
    "uncertainty.w_internal": "internal",
    "uncertainty.b_internal": "internal",
    "uncertainty.field_": "fm",
    "uncertainty.pair_w": "fm",
    "uncertainty.fm_kernels": "fm",
    "uncertainty.aggr_w": "aggregate",
    "uncertainty.evolve_": "evolve",
    "gate.w_gate": "gate",
}


def parameter_group(name: str) -> str:
    for prefix, group in PARAMETER_GROUPS.items():
        if name.startswith(prefix):
            return group
    raise KeyError(f"parameter {name!r} not assigned to a group")


def _uniform_bound(shape) -> float:
    # symmetric Glorot bound from the last two axes (slice-wise for stacks)
    fan_a, fan_b = shape[-2], shape[-1]
    return float(np.sqrt(6.0 / (fan_a + fan_b)))


def _highpass_stencils(shape, rng, gain: float = 3.0) -> np.ndarray:
    """Second-difference rows plus small jitter for the period-embedding maps.

    The content-consistency features must respond to measurement noise, not to
    the smooth diurnal profile; a high-pass basis starts them in that regime
    (a plain Glorot start lets the daily rhythm dominate the similarity and
    the quality supervision then cannot separate corrupted from clean
    windows).  Fully trainable afterwards.
    """
    n_periods, width, p = shape
    w = np.zeros(shape)
    if p >= 3:
        for m in range(n_periods):
            for e in range(width):
                j = e % (p - 2)
                w[m, e, j], w[m, e, j + 1], w[m, e, j + 2] = gain, -2.0 * gain, gain
    return w + rng.normal(0.0, 0.05, size=shape)


def init_parameters(model: nn.Module, seed: int) -> None:
    """Deterministic init: Glorot-uniform weights, zero biases, forget bias +1,
    gate weight zero, high-pass period-embedding maps.  Uses its own numpy
    stream, never torch's default init."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC33)))
    with torch.no_grad():
        for name, param in sorted(model.named_parameters()):
            if name == "gate.w_gate" or name == "uncertainty.embed_w_ex":
                param.zero_()
                continue
            if name == "uncertainty.embed_w":
                param.copy_(torch.from_numpy(_highpass_stencils(tuple(param.shape), rng)))
                continue
            if param.ndim == 1:
                param.zero_()
                if "bias_ih" in name:  # LSTM gate order (i, f, g, o): +1 on forget
                    hidden = param.shape[0] // 4
                    param[hidden:2 * hidden] += 1.0
                continue
            bound = _uniform_bound(param.shape)
            values = rng.uniform(-bound, bound, size=tuple(param.shape))
            param.copy_(torch.from_numpy(values))

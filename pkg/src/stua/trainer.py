"""Composite loss, turbulence-layered training loop, gradient check, checkpoints.

The loss follows the double-head supervision: period-wise squared gaps of
internal uncertainty vs the quality indicator and of overall uncertainty vs
the spatiotemporal variance, plus next-interval squared errors of the
recalibrated sigma against the target-window variance and of the
recalibrated prediction against ground truth, plus an L2 penalty keeping
sigma from exploding.  The quality term is active only when turbulence
supplies corrupted inputs.

Training normalizes intensities by one scalar (max over the train split);
all supervision labels scale linearly with the data, so this is exact.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import InvalidConfig, NonFiniteLoss, ShapeMismatch
from .model import ModelConfig, UncertaintyAwareModel, init_parameters, parameter_group

CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1500
    batch_size: int = 8
    learning_rate: float = 1e-3
    lr_decay: float = 0.98
    lr_decay_every: int = 10
    split: tuple = (0.6, 0.3, 0.1)
    seed: int = 42
    quality_enabled: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidConfig("learning_rate must be positive")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise InvalidConfig("split fractions must sum to 1")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidConfig("epochs >= 0 and batch_size >= 1 required")


@dataclass
class LossBreakdown:
    quality_term: torch.Tensor
    period_variance_term: torch.Tensor
    final_variance_term: torch.Tensor
    prediction_term: torch.Tensor
    l2_term: torch.Tensor
    total: torch.Tensor

    def floats(self) -> dict:
        return {k: float(v.detach()) for k, v in self.__dict__.items()}


def compute_loss(outputs: dict, labels: dict, quality_enabled: bool = True) -> LossBreakdown:
    """Five-term composite loss; batched inputs are averaged over the batch.

    outputs: u_internal (..., M, N), u_overall (..., M, N), sigma_hat (..., N),
    h_hat (..., N); labels: quality_gap, var_st, target_var, target (matching).
    """
    u_i, u_o = outputs["u_internal"], outputs["u_overall"]
    sigma_hat, h_hat = outputs["sigma_hat"], outputs["h_hat"]
    if u_i.shape != labels["quality_gap"].shape or u_o.shape != labels["var_st"].shape:
        raise ShapeMismatch("period-level outputs and labels disagree")
    if sigma_hat.shape != labels["target_var"].shape or h_hat.shape != labels["target"].shape:
        raise ShapeMismatch("interval-level outputs and labels disagree")

    def _sum(x, dims):
        t = x.sum(dim=dims)
        return t.mean() if t.ndim else t

    quality = _sum((u_i - labels["quality_gap"]) ** 2, (-2, -1))
    if not quality_enabled:
        quality = torch.zeros_like(quality)
    period_var = _sum((u_o - labels["var_st"]) ** 2, (-2, -1))
    final_var = _sum((sigma_hat - labels["target_var"]) ** 2, (-1,))
    prediction = _sum((h_hat - labels["target"]) ** 2, (-1,))
    l2 = _sum(sigma_hat**2, (-1,))
    total = quality + period_var + final_var + prediction + l2
    return LossBreakdown(quality, period_var, final_var, prediction, l2, total)


def batch_tensors(samples, scale: float = 1.0) -> dict:
    """Stack samples into float64 torch tensors, intensities divided by scale."""
    if not samples:
        raise InvalidConfig("empty sample batch")
    s = float(scale)
    stack = lambda key: torch.from_numpy(
        np.stack([getattr(smp, key) for smp in samples]).astype(np.float64))
    return {
        "values": stack("values") / s,
        "contexts": stack("contexts"),
        "adj_periods": stack("adj_periods"),
        "adj_steps": stack("adj_steps"),
        "target": stack("target") / s,
        "quality_gap": stack("quality_gap") / s,
        "var_st": stack("var_st") / s,
        "target_var": stack("target_var") / s,
    }


def intensity_scale(samples) -> float:
    """One scalar normalizer: max intensity seen across the given samples."""
    peak = 0.0
    for smp in samples:
        peak = max(peak, float(smp.values.max()), float(smp.target.max()))
    return peak if peak > 0 else 1.0


def forward_loss(model: UncertaintyAwareModel, batch: dict,
                 quality_enabled: bool) -> tuple:
    out = model(batch)
    breakdown = compute_loss(
        {"u_internal": out["u_internal"], "u_overall": out["u_overall"],
         "sigma_hat": out["sigma_hat"], "h_hat": out["h_recal"]},
        {"quality_gap": batch["quality_gap"], "var_st": batch["var_st"],
         "target_var": batch["target_var"], "target": batch["target"]},
        quality_enabled=quality_enabled)
    return out, breakdown


@dataclass
class TrainResult:
    model: UncertaintyAwareModel
    scale: float
    log: list = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = float("inf")


def train(train_samples, val_samples, model_cfg: ModelConfig,
          cfg: TrainConfig) -> TrainResult:
    """Adam training with step-decayed learning rate and best-val retention."""
    if not train_samples:
        raise InvalidConfig("training set is empty")
    torch.set_num_threads(1)
    model = UncertaintyAwareModel(model_cfg)
    init_parameters(model, cfg.seed)
    scale = intensity_scale(train_samples)
    result = TrainResult(model=model, scale=scale)

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate,
                                 betas=(cfg.adam_beta1, cfg.adam_beta2),
                                 eps=cfg.adam_eps)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xD44)))
    val_batch = batch_tensors(val_samples, scale) if val_samples else None
    best_state = copy.deepcopy(model.state_dict())

    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * cfg.lr_decay ** (epoch // cfg.lr_decay_every)
        for group in optimizer.param_groups:
            group["lr"] = lr
        order = rng.permutation(len(train_samples))
        epoch_terms = []
        model.train()
        for start in range(0, len(order), cfg.batch_size):
            chunk = [train_samples[i] for i in order[start:start + cfg.batch_size]]
            batch = batch_tensors(chunk, scale)
            optimizer.zero_grad()
            _, breakdown = forward_loss(model, batch, cfg.quality_enabled)
            if not torch.isfinite(breakdown.total):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}")
            breakdown.total.backward()
            optimizer.step()
            epoch_terms.append(breakdown.floats())

        record = {"epoch": epoch, "lr": lr}
        keys = epoch_terms[0].keys()
        for key in keys:
            record[f"train_{key}"] = float(np.mean([t[key] for t in epoch_terms]))
        if val_batch is not None:
            model.eval()
            with torch.no_grad():
                _, val_breakdown = forward_loss(model, val_batch, cfg.quality_enabled)
            for key, value in val_breakdown.floats().items():
                record[f"val_{key}"] = value
            if record["val_total"] < result.best_val:
                result.best_val = record["val_total"]
                result.best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
        result.log.append(record)

    if val_batch is not None and result.best_epoch >= 0:
        model.load_state_dict(best_state)
    return result


def write_metrics_log(path, log) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in log:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Gradient checking

def _micro_batch(model_cfg: ModelConfig, seed: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xE55)))
    n, p, q, nc = model_cfg.n_regions, model_cfg.p, model_cfg.q, model_cfg.n_context
    m = q + 2
    t = lambda a: torch.from_numpy(np.ascontiguousarray(a, dtype=np.float64))

    def sym_norm(a):
        a = np.abs(a) + np.abs(a).T
        a = a + np.eye(n)
        d = 1.0 / np.sqrt(a.sum(axis=1))
        return a * np.outer(d, d)

    adj_p = np.stack([sym_norm(rng.random((n, n))) for _ in range(m)])
    adj_s = np.stack([sym_norm(rng.random((n, n))) for _ in range(3)])
    return {
        "values": t(rng.uniform(0.1, 1.0, (1, m, p, n))),
        "contexts": t(rng.uniform(-1.0, 1.0, (1, m, p, n, nc))),
        "adj_periods": t(adj_p[None]),
        "adj_steps": t(adj_s[None]),
        "quality_gap": t(rng.uniform(0.0, 0.3, (1, m, n))),
        "var_st": t(rng.uniform(0.0, 0.5, (1, m, n))),
        "target_var": t(rng.uniform(0.0, 0.5, (1, n))),
        "target": t(rng.uniform(0.1, 1.0, (1, n))),
    }


MICRO_MODEL = dict(n_regions=4, p=2, q=1, n_context=2, gcn_hidden=3, seq_hidden=4,
                   embed_width=3, field_width=2, interact_width=2, fm_hidden=3,
                   evolve_hidden=3)


def gradcheck(model_cfg: ModelConfig | None = None, seed: int = 0,
              step: float = 1e-5) -> dict:
    """Relative error between analytic and central-difference gradients per
    parameter group, on a micro instance.

    The reported number is the infinity-norm relative error of the group's
    gradient vector, ||g_fd - g_an||_inf / max(||g_fd||_inf, ||g_an||_inf):
    robust to single entries whose true gradient happens to sit near zero,
    while any genuinely wrong entry shows up at the group's gradient scale.
    """
    torch.set_num_threads(1)
    cfg = model_cfg or ModelConfig(**MICRO_MODEL)
    model = UncertaintyAwareModel(cfg)
    init_parameters(model, seed)
    # the gate starts at zero by design; perturb it so its gradient is generic
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xF66)))
    with torch.no_grad():
        model.gate.w_gate.copy_(torch.from_numpy(
            rng.uniform(-0.3, 0.3, size=tuple(model.gate.w_gate.shape))))
    batch = _micro_batch(cfg, seed)

    model.zero_grad()
    _, breakdown = forward_loss(model, batch, quality_enabled=True)
    breakdown.total.backward()
    analytic = {name: p.grad.detach().clone() for name, p in model.named_parameters()}

    def loss_value() -> float:
        with torch.no_grad():
            _, b = forward_loss(model, batch, quality_enabled=True)
        return float(b.total)

    diff: dict = {}
    scale: dict = {}
    for name, param in model.named_parameters():
        flat = param.detach().reshape(-1)
        grad = analytic[name].reshape(-1)
        group = parameter_group(name)
        for idx in range(flat.numel()):
            orig = float(flat[idx])
            with torch.no_grad():
                flat[idx] = orig + step
            up = loss_value()
            with torch.no_grad():
                flat[idx] = orig - step
            down = loss_value()
            with torch.no_grad():
                flat[idx] = orig
            fd = (up - down) / (2 * step)
            an = float(grad[idx])
            diff[group] = max(diff.get(group, 0.0), abs(fd - an))
            scale[group] = max(scale.get(group, 0.0), abs(fd), abs(an))
    return {group: diff[group] / max(scale[group], 1e-8) for group in diff}


# ---------------------------------------------------------------------------
# Checkpoints: npz map of named float64 tensors plus a JSON metadata entry

def save_checkpoint(path, model: UncertaintyAwareModel, scale: float,
                    extra_meta: dict | None = None) -> None:
    arrays = {f"param::{name}": tensor.detach().numpy()
              for name, tensor in model.state_dict().items()}
    meta = {"format": CHECKPOINT_FORMAT, "scale": scale,
            "model": model.cfg.to_dict()}
    meta.update(extra_meta or {})
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Returns (model, scale, meta)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise InvalidConfig(f"unsupported checkpoint format {meta.get('format')}")
        state = {key[len("param::"):]: torch.from_numpy(np.array(value))
                 for key, value in data.items() if key.startswith("param::")}
    model = UncertaintyAwareModel(ModelConfig(**meta["model"]))
    model.load_state_dict(state)
    return model, float(meta["scale"]), meta

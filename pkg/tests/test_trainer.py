import copy
import json

import numpy as np
import pytest
import torch

from stua.data import SynthConfig, TurbulenceSchedule, make_training_samples, synth_dataset
from stua.errors import InvalidConfig, NonFiniteLoss, ShapeMismatch
from stua.model import ModelConfig, UncertaintyAwareModel, init_parameters
from stua.trainer import (
    MICRO_MODEL,
    TrainConfig,
    batch_tensors,
    compute_loss,
    forward_loss,
    gradcheck,
    intensity_scale,
    load_checkpoint,
    save_checkpoint,
    train,
    write_metrics_log,
    _micro_batch,
)

T = lambda a: torch.as_tensor(a, dtype=torch.float64)


def zero_outputs(m=3, n=2):
    z = lambda *shape: torch.zeros(*shape, dtype=torch.float64)
    return ({"u_internal": z(m, n), "u_overall": z(m, n), "sigma_hat": z(n), "h_hat": z(n)},
            {"quality_gap": z(m, n), "var_st": z(m, n), "target_var": z(n), "target": z(n)})


class TestComputeLoss:
    def test_perfect_fit_is_zero(self):
        outputs, labels = zero_outputs()
        breakdown = compute_loss(outputs, labels)
        assert float(breakdown.total) == 0.0

    def test_sigma_only_case(self):
        outputs, labels = zero_outputs()
        outputs["sigma_hat"] = T([3.0, 4.0])
        breakdown = compute_loss(outputs, labels)
        assert float(breakdown.l2_term) == 25.0
        assert float(breakdown.final_variance_term) == 25.0
        assert float(breakdown.total) == 50.0

    def test_single_quality_cell(self):
        outputs, labels = zero_outputs(m=1, n=1)
        outputs["u_internal"] = T([[1.0]])
        breakdown = compute_loss(outputs, labels)
        assert float(breakdown.total) == 1.0

    def test_quality_flag_removes_exactly_one_term(self):
        rng = np.random.default_rng(0)
        outputs, labels = zero_outputs()
        for key in outputs:
            outputs[key] = T(rng.normal(size=outputs[key].shape))
        for key in labels:
            labels[key] = T(rng.normal(size=labels[key].shape))
        on = compute_loss(outputs, labels, quality_enabled=True)
        off = compute_loss(outputs, labels, quality_enabled=False)
        assert float(off.quality_term) == 0.0
        assert float(on.total) - float(on.quality_term) == pytest.approx(float(off.total))

    def test_total_is_sum_of_terms(self):
        rng = np.random.default_rng(1)
        outputs, labels = zero_outputs()
        for key in outputs:
            outputs[key] = T(rng.normal(size=outputs[key].shape))
        b = compute_loss(outputs, labels)
        parts = (b.quality_term + b.period_variance_term + b.final_variance_term
                 + b.prediction_term + b.l2_term)
        assert float(parts) == pytest.approx(float(b.total))

    def test_batched_mean_semantics(self):
        outputs, labels = zero_outputs()
        outputs["sigma_hat"] = T([3.0, 4.0])
        single = compute_loss(outputs, labels)
        boutputs = {k: torch.stack([v, v]) for k, v in outputs.items()}
        blabels = {k: torch.stack([v, v]) for k, v in labels.items()}
        batched = compute_loss(boutputs, blabels)
        assert float(batched.total) == pytest.approx(float(single.total))

    def test_shape_mismatch(self):
        outputs, labels = zero_outputs()
        labels["target"] = torch.zeros(5, dtype=torch.float64)
        with pytest.raises(ShapeMismatch):
            compute_loss(outputs, labels)


@pytest.fixture(scope="module")
def tiny_split():
    graph, mob, ctx = synth_dataset(SynthConfig(n_regions=4, days=9, intervals_per_day=12), 13)
    sched = TurbulenceSchedule(base_seed=13)
    train_s = make_training_samples(mob, ctx, graph, p=3, q=1, rho=0.6, schedule=sched,
                                    targets=range(90, 96))
    val_s = make_training_samples(mob, ctx, graph, p=3, q=1, rho=0.6, schedule=sched,
                                  targets=[100])
    cfg = ModelConfig(n_regions=4, p=3, q=1, n_context=2, gcn_hidden=4, seq_hidden=6,
                      embed_width=3, field_width=2, interact_width=2, fm_hidden=3,
                      evolve_hidden=4)
    return train_s, val_s, cfg


class TestTrain:
    def test_zero_epochs_keeps_init(self, tiny_split):
        train_s, val_s, mcfg = tiny_split
        result = train(train_s, val_s, mcfg, TrainConfig(epochs=0, seed=3))
        reference = UncertaintyAwareModel(mcfg)
        init_parameters(reference, 3)
        for (_, a), (_, b) in zip(result.model.named_parameters(),
                                  reference.named_parameters()):
            assert torch.equal(a, b)

    def test_same_seed_identical_logs(self, tiny_split):
        train_s, val_s, mcfg = tiny_split
        cfg = TrainConfig(epochs=3, seed=9, batch_size=4)
        log1 = train(train_s, val_s, mcfg, cfg).log
        log2 = train(train_s, val_s, mcfg, cfg).log
        assert log1 == log2

    def test_lr_schedule_decays(self, tiny_split):
        train_s, val_s, mcfg = tiny_split
        result = train(train_s, val_s, mcfg, TrainConfig(epochs=12, seed=1, batch_size=6,
                                                         lr_decay=0.98, lr_decay_every=10))
        lrs = [r["lr"] for r in result.log]
        assert lrs[0] == pytest.approx(1e-3)
        assert lrs[9] == pytest.approx(1e-3)
        assert lrs[10] == pytest.approx(1e-3 * 0.98)

    def test_zero_learning_rate_step_is_identity(self, tiny_split):
        train_s, _, mcfg = tiny_split
        model = UncertaintyAwareModel(mcfg)
        init_parameters(model, 7)
        before = copy.deepcopy(model.state_dict())
        optimizer = torch.optim.Adam(model.parameters(), lr=0.0)
        batch = batch_tensors(train_s[:4], intensity_scale(train_s))
        _, breakdown = forward_loss(model, batch, True)
        breakdown.total.backward()
        optimizer.step()
        for key, tensor in model.state_dict().items():
            assert torch.equal(tensor, before[key]), key

    def test_nonfinite_loss_aborts(self, tiny_split):
        train_s, val_s, mcfg = tiny_split
        bad = copy.deepcopy(train_s[0])
        bad.target[:] = np.nan
        with pytest.raises(NonFiniteLoss):
            train([bad] * 4, [], mcfg, TrainConfig(epochs=1, seed=0))

    def test_empty_training_set(self, tiny_split):
        _, _, mcfg = tiny_split
        with pytest.raises(InvalidConfig):
            train([], [], mcfg, TrainConfig(epochs=1))

    def test_config_validation(self):
        with pytest.raises(InvalidConfig):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(InvalidConfig):
            TrainConfig(split=(0.5, 0.4, 0.2))


class TestGradcheckStructure:
    def test_zero_parameter_point_gate_gradient(self):
        cfg = ModelConfig(**MICRO_MODEL)
        model = UncertaintyAwareModel(cfg)
        with torch.no_grad():
            for p_ in model.parameters():
                p_.zero_()
        batch = _micro_batch(cfg, seed=0)
        _, breakdown = forward_loss(model, batch, True)
        breakdown.l2_term.backward()
        grad = model.gate.w_gate.grad
        assert grad is None or torch.all(grad == 0)

    def test_frozen_gate_blocks_prediction_gradient(self):
        cfg = ModelConfig(**MICRO_MODEL)
        model = UncertaintyAwareModel(cfg)
        init_parameters(model, 1)  # gate stays zero-initialized
        batch = _micro_batch(cfg, seed=1)
        _, breakdown = forward_loss(model, batch, True)
        breakdown.prediction_term.backward()
        for name, p_ in model.named_parameters():
            if name.startswith("uncertainty."):
                assert p_.grad is None or torch.all(p_.grad == 0), name

    def test_micro_gradcheck_passes(self):
        report = gradcheck(seed=0)
        assert set(report) == {"gcn", "sequence", "period_embed", "internal", "fm",
                               "aggregate", "evolve", "gate"}
        assert all(err <= 1e-4 for err in report.values()), report


class TestCheckpoint:
    def test_roundtrip_bit_identical(self, tiny_split, tmp_path):
        train_s, val_s, mcfg = tiny_split
        result = train(train_s, val_s, mcfg, TrainConfig(epochs=2, seed=5))
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, result.model, result.scale, {"note": "test"})
        model2, scale2, meta = load_checkpoint(path)
        assert scale2 == result.scale
        assert meta["note"] == "test"
        batch = batch_tensors(train_s[:3], result.scale)
        with torch.no_grad():
            a = result.model(batch)["h_recal"]
            b = model2(batch)["h_recal"]
        assert torch.equal(a, b)

    def test_bad_format_rejected(self, tmp_path):
        path = tmp_path / "bad.npz"
        np.savez(path, __meta__=np.frombuffer(json.dumps({"format": 99}).encode(), dtype=np.uint8))
        with pytest.raises(InvalidConfig):
            load_checkpoint(path)


def test_metrics_log_roundtrip(tmp_path):
    log = [{"epoch": 0, "lr": 1e-3, "train_total": 5.0},
           {"epoch": 1, "lr": 1e-3, "train_total": 4.0}]
    path = tmp_path / "metrics.jsonl"
    write_metrics_log(path, log)
    back = [json.loads(line) for line in path.read_text().splitlines()]
    assert back == log


def test_intensity_scale(tiny_split):
    train_s, _, _ = tiny_split
    scale = intensity_scale(train_s)
    peak = max(max(s.values.max(), s.target.max()) for s in train_s)
    assert scale == peak > 0

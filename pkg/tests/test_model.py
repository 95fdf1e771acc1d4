import math

import numpy as np
import pytest
import torch

from stua.errors import ShapeMismatch
from stua.model import (
    ModelConfig,
    UncertaintyAwareModel,
    aggregate,
    embed_period,
    evolve_uncertainty,
    external_uncertainty,
    fm_interactions,
    gcn_forward,
    init_parameters,
    internal_uncertainty,
    pair_indices,
    parameter_group,
    period_similarity,
    predict_mobility,
    recalibrate,
)
from stua.model.uncertainty import UncertaintyHead
from stua.model.gate import RecalibrationGate
from stua.model.predictor import build_steps

T = lambda a: torch.as_tensor(a, dtype=torch.float64)


def micro_model(seed=0, n=4, p=2, q=1):
    cfg = ModelConfig(n_regions=n, p=p, q=q, n_context=2, gcn_hidden=3, seq_hidden=4,
                      embed_width=3, field_width=2, interact_width=2, fm_hidden=3,
                      evolve_hidden=3)
    model = UncertaintyAwareModel(cfg)
    init_parameters(model, seed)
    return model, cfg


def micro_batch(cfg, seed=0, batch=1):
    rng = np.random.default_rng(seed)
    n, p, q, nc = cfg.n_regions, cfg.p, cfg.q, cfg.n_context
    m = q + 2

    def sym(a):
        a = np.abs(a) + np.abs(a).T + np.eye(n)
        d = 1.0 / np.sqrt(a.sum(1))
        return a * np.outer(d, d)

    return {
        "values": T(rng.uniform(0.1, 1.0, (batch, m, p, n))),
        "contexts": T(rng.uniform(-1, 1, (batch, m, p, n, nc))),
        "adj_periods": T(np.stack([[sym(rng.random((n, n))) for _ in range(m)]
                                   for _ in range(batch)])),
        "adj_steps": T(np.stack([[sym(rng.random((n, n))) for _ in range(3)]
                                 for _ in range(batch)])),
    }


class TestGcnForward:
    def test_identity_graph_single_layer(self):
        x = T([[1.0, -2.0], [3.0, -4.0]])
        out = gcn_forward(T(np.eye(2)), x, [T(np.eye(2))])
        assert torch.equal(out, torch.relu(x))

    def test_hand_average(self):
        adj = T([[0.5, 0.5], [0.5, 0.5]])
        x = T([[2.0], [4.0]])
        out = gcn_forward(adj, x, [T([[1.0]])])
        assert torch.allclose(out, T([[3.0], [3.0]]))

    def test_relu_clips_negative(self):
        x = T([[-1.0], [-2.0]])
        out = gcn_forward(T(np.eye(2)), x, [T([[1.0]])])
        assert torch.all(out == 0)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeMismatch):
            gcn_forward(T(np.eye(2)), T([[1.0], [2.0]]), [T(np.eye(3))])


class TestPredictor:
    def test_zero_parameters_give_zero_output(self):
        model, cfg = micro_model()
        with torch.no_grad():
            for p_ in model.parameters():
                p_.zero_()
        batch = micro_batch(cfg)
        out = predict_mobility(model.predictor, batch["values"][0],
                               batch["contexts"][0], batch["adj_steps"][0])
        assert torch.all(out == 0)

    def test_output_shape_and_purity(self):
        model, cfg = micro_model()
        batch = micro_batch(cfg)
        a = predict_mobility(model.predictor, batch["values"][0], batch["contexts"][0],
                             batch["adj_steps"][0])
        b = predict_mobility(model.predictor, batch["values"][0], batch["contexts"][0],
                             batch["adj_steps"][0])
        assert a.shape == (cfg.n_regions,)
        assert torch.equal(a, b)

    def test_permutation_equivariance(self):
        model, cfg = micro_model(seed=3)
        batch = micro_batch(cfg, seed=5)
        perm = np.random.default_rng(0).permutation(cfg.n_regions)
        pv = batch["values"][..., perm]
        pc = batch["contexts"][:, :, :, perm, :]
        pa = batch["adj_steps"][:, :, perm][:, :, :, perm]
        base = predict_mobility(model.predictor, batch["values"][0],
                                batch["contexts"][0], batch["adj_steps"][0])
        permuted = predict_mobility(model.predictor, pv[0], pc[0], pa[0])
        assert torch.allclose(permuted, base[perm], atol=1e-12)

    def test_batched_matches_single(self):
        model, cfg = micro_model(seed=1)
        batch = micro_batch(cfg, seed=2, batch=3)
        sx, sc, ad = build_steps(batch["values"], batch["contexts"], batch["adj_steps"])
        joint = model.predictor(sx, sc, ad)
        for i in range(3):
            single = predict_mobility(model.predictor, batch["values"][i],
                                      batch["contexts"][i], batch["adj_steps"][i])
            assert torch.allclose(joint[i], single, atol=1e-12)


class TestEmbedPeriod:
    def test_zero_map(self):
        out = embed_period(T([1.0, 2.0]), T([0.5, 0.5, 0.5, 0.5]),
                           torch.zeros(2, 4, dtype=torch.float64),
                           torch.zeros(3, 2, dtype=torch.float64),
                           torch.zeros(3, dtype=torch.float64))
        assert torch.all(out == 0)

    def test_identity_embed(self):
        h = T([1.0, 2.0])
        out = embed_period(h, T([9.0, 9.0, 9.0, 9.0]),
                           torch.zeros(2, 4, dtype=torch.float64),
                           T(np.eye(2)), torch.zeros(2, dtype=torch.float64))
        assert torch.equal(out, h)

    def test_hand_value(self):
        # (W_ex ex) + h = [2, 3]; W = I; b = [1, 1] -> [3, 4]
        w_ex = T([[1.0, 0.0], [0.0, 1.0]])
        out = embed_period(T([1.0, 2.0]), T([1.0, 1.0]), w_ex, T(np.eye(2)), T([1.0, 1.0]))
        assert torch.allclose(out, T([3.0, 4.0]))


class TestPeriodSimilarity:
    def test_identical_periods(self):
        emb = T([[1.0, 2.0]] * 4)
        s = period_similarity(emb)
        assert torch.allclose(s, torch.full((4,), 5.0, dtype=torch.float64))

    def test_orthogonal(self):
        s = period_similarity(T(np.eye(3)))
        assert torch.all(s == 0)

    def test_two_periods_hand_value(self):
        s = period_similarity(T([[1.0, 2.0], [3.0, 4.0]]))
        assert torch.allclose(s, T([11.0, 11.0]))

    def test_relabeling_symmetry(self):
        rng = np.random.default_rng(1)
        emb = T(rng.normal(size=(5, 4)))
        s = period_similarity(emb)
        perm = [0, 3, 1, 2, 4]  # keep period 4 fixed, shuffle the rest
        s_perm = period_similarity(emb[perm])
        assert torch.allclose(s_perm[-1], s[-1])

    def test_needs_two(self):
        with pytest.raises(ShapeMismatch):
            period_similarity(T([[1.0, 2.0]]))


class TestInternalUncertainty:
    def test_large_similarity_leaves_bias(self):
        b = T([0.3, -0.2])
        out = internal_uncertainty(T([50.0, 50.0]), T(np.eye(2)), b)
        assert torch.allclose(out, b, atol=1e-12)

    def test_identity_at_zero(self):
        out = internal_uncertainty(T([0.0, 0.0]), T(np.eye(2)), torch.zeros(2, dtype=torch.float64))
        assert torch.allclose(out, torch.ones(2, dtype=torch.float64))

    def test_scaled_log_two(self):
        out = internal_uncertainty(T([math.log(2.0)] * 2), 2 * T(np.eye(2)),
                                   torch.zeros(2, dtype=torch.float64))
        assert torch.allclose(out, torch.ones(2, dtype=torch.float64))

    def test_monotone_for_nonnegative_weights(self):
        rng = np.random.default_rng(0)
        w = T(rng.uniform(0, 1, (3, 3)))
        b = T(rng.normal(size=3))
        s = T(rng.normal(size=3))
        base = internal_uncertainty(s, w, b)
        higher = internal_uncertainty(s + 0.7, w, b)
        assert torch.all(higher <= base + 1e-12)


class TestFmInteractions:
    def test_disjoint_supports_zero_interaction(self):
        # two categories embedding to [1,0] and [0,1]: Hadamard is zero
        field_w = torch.zeros(2, 2, 1, dtype=torch.float64)
        field_b = T([[1.0, 0.0], [0.0, 1.0]])
        pair_w = T(np.eye(2))[None]
        out = fm_interactions(torch.zeros(2, 1, dtype=torch.float64), field_w, field_b, pair_w)
        assert torch.all(out[-2:] == 0)

    def test_hand_interaction(self):
        field_w = torch.zeros(2, 2, 1, dtype=torch.float64)
        field_b = T([[1.0, 1.0], [1.0, 1.0]])
        pair_w = T(np.eye(2))[None]
        out = fm_interactions(torch.zeros(2, 1, dtype=torch.float64), field_w, field_b, pair_w)
        assert torch.allclose(out[-2:], T([1.0, 1.0]))

    @pytest.mark.parametrize("q", [1, 2, 3, 4])
    @pytest.mark.parametrize("l_ce", [1, 4, 8])
    @pytest.mark.parametrize("l_ie", [1, 4, 8])
    def test_dimension_formula(self, q, l_ce, l_ie):
        p = 3
        rng = np.random.default_rng(0)
        n_pairs = q * (q - 1) // 2
        out = fm_interactions(T(rng.normal(size=(q, p))),
                              T(rng.normal(size=(q, l_ce, p))),
                              T(rng.normal(size=(q, l_ce))),
                              T(rng.normal(size=(n_pairs, l_ce, l_ie))))
        assert out.shape == (q * l_ce + n_pairs * l_ie,)

    def test_pair_indices(self):
        iu, iv = pair_indices(3)
        assert list(zip(iu, iv)) == [(0, 1), (0, 2), (1, 2)]
        assert pair_indices(1) == ([], [])


class TestExternalUncertainty:
    def test_zero_graph_is_feedforward(self):
        rng = np.random.default_rng(0)
        feats = T(rng.normal(size=(3, 4)))
        k1, k2 = T(rng.normal(size=(4, 3))), T(rng.normal(size=(3, 1)))
        out = external_uncertainty(T(np.eye(3)), feats, [k1, k2])
        direct = (torch.relu(feats @ k1) @ k2).squeeze(-1)
        assert torch.allclose(out, direct)
        assert out.shape == (3,)

    def test_two_node_hand_case(self):
        adj = T([[0.5, 0.5], [0.5, 0.5]])
        feats = T([[2.0], [4.0]])
        out = external_uncertainty(adj, feats, [T([[1.0]])])
        assert torch.allclose(out, T([3.0, 3.0]))


class TestAggregate:
    def test_projection_selects_internal(self):
        w = torch.cat([T(np.eye(3)), torch.zeros(3, 3, dtype=torch.float64)], dim=1)
        u_i, u_e = T([1.0, 2.0, 3.0]), T([9.0, 9.0, 9.0])
        assert torch.allclose(aggregate(u_i, u_e, w), u_i)

    def test_half_half_mean(self):
        w = torch.cat([0.5 * T(np.eye(2)), 0.5 * T(np.eye(2))], dim=1)
        out = aggregate(T([2.0, 4.0]), T([6.0, 0.0]), w)
        assert torch.allclose(out, T([4.0, 2.0]))

    def test_zero_weights(self):
        w = torch.zeros(2, 4, dtype=torch.float64)
        assert torch.all(aggregate(T([1.0, 2.0]), T([3.0, 4.0]), w) == 0)


class TestEvolve:
    def test_zero_parameters_zero_output(self):
        model, cfg = micro_model()
        with torch.no_grad():
            for p_ in model.uncertainty.evolve_lstm.parameters():
                p_.zero_()
            model.uncertainty.evolve_proj.weight.zero_()
            model.uncertainty.evolve_proj.bias.zero_()
        seq = T(np.random.default_rng(0).normal(size=(3, 4)))
        out = evolve_uncertainty(seq, model.uncertainty.evolve_lstm,
                                 model.uncertainty.evolve_proj)
        assert torch.all(out == 0)
        assert out.shape == (4,)

    def test_deterministic(self):
        model, cfg = micro_model(seed=2)
        seq = T(np.random.default_rng(1).normal(size=(3, 4)))
        a = evolve_uncertainty(seq, model.uncertainty.evolve_lstm, model.uncertainty.evolve_proj)
        b = evolve_uncertainty(seq, model.uncertainty.evolve_lstm, model.uncertainty.evolve_proj)
        assert torch.equal(a, b)

    def test_empty_sequence_rejected(self):
        model, _ = micro_model()
        with pytest.raises(ShapeMismatch):
            evolve_uncertainty(torch.zeros(0, 4, dtype=torch.float64),
                               model.uncertainty.evolve_lstm, model.uncertainty.evolve_proj)


class TestUncertaintyHeadBatchedEquivalence:
    def test_matches_functional_ops(self):
        model, cfg = micro_model(seed=7)
        head: UncertaintyHead = model.uncertainty
        batch = micro_batch(cfg, seed=8)
        out = head(batch["values"], batch["contexts"], batch["adj_periods"])

        m = cfg.q + 2
        values, contexts, adj = batch["values"][0], batch["contexts"][0], batch["adj_periods"][0]
        for region in range(cfg.n_regions):
            embeds = []
            for period in range(m):
                h = values[period, :, region]
                ex = contexts[period, :, region, :].reshape(-1)
                embeds.append(embed_period(h, ex, head.embed_w_ex[period],
                                           head.embed_w[period], head.embed_b[period]))
            sims = period_similarity(torch.stack(embeds))
            for period in range(m):
                # cross-check one (period, region) cell of U_I via the shared map
                s_vec = []
                for r2 in range(cfg.n_regions):
                    embeds2 = []
                    for pp in range(m):
                        h2 = values[pp, :, r2]
                        ex2 = contexts[pp, :, r2, :].reshape(-1)
                        embeds2.append(embed_period(h2, ex2, head.embed_w_ex[pp],
                                                    head.embed_w[pp], head.embed_b[pp]))
                    s_vec.append(period_similarity(torch.stack(embeds2))[period])
                u_i = internal_uncertainty(torch.stack(s_vec), head.w_internal, head.b_internal)
                assert torch.allclose(out["u_internal"][0, period], u_i, atol=1e-10)
            break  # one region's embedding path is enough; U_I check covers all regions

        # external route per period
        for period in range(m):
            feats = []
            for region in range(cfg.n_regions):
                raw = contexts[period, :, region, :].T  # (Q, p)
                feats.append(fm_interactions(raw, head.field_w, head.field_b, head.pair_w))
            u_e = external_uncertainty(adj[period], torch.stack(feats), list(head.fm_kernels))
            assert torch.allclose(out["u_external"][0, period], u_e, atol=1e-10)

        u_o = aggregate(out["u_internal"][0], out["u_external"][0], head.aggr_w)
        assert torch.allclose(out["u_overall"][0], u_o, atol=1e-10)
        u_next = evolve_uncertainty(out["u_overall"][0], head.evolve_lstm, head.evolve_proj)
        assert torch.allclose(out["u_next"][0], u_next, atol=1e-10)


class TestRecalibration:
    def test_zero_gate_identity(self):
        h, u = T([2.0, 3.0]), T([1.0, 0.5])
        h2, sig, f = recalibrate(h, u, torch.zeros(2, 4, dtype=torch.float64))
        assert torch.equal(h2, h) and torch.equal(sig, u) and torch.all(f == 0)

    def test_forced_half_gate(self):
        h, u = T([2.0]), T([1.0])
        w = torch.zeros(1, 2, dtype=torch.float64)
        w[0, 0] = math.atanh(0.5)  # z = [u, h] -> w z = atanh(0.5) * u = atanh(0.5)
        h2, sig, f = recalibrate(h, u, w)
        assert torch.allclose(f, T([0.5]))
        assert torch.allclose(h2, T([2.5]))
        assert torch.allclose(sig, T([0.5]))
        assert torch.allclose(h2 + sig, h + u)

    def test_saturation_limit(self):
        h, u = T([2.0]), T([1.0])
        w = torch.full((1, 2), 4.0, dtype=torch.float64)  # w z = 12; tanh still < 1
        h2, sig, f = recalibrate(h, u, w)
        assert float(f) < 1.0
        assert torch.allclose(h2, h + u, atol=1e-9)
        assert torch.allclose(sig, T([0.0]), atol=1e-9)

    def test_conservation_random(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = rng.integers(1, 9)
            h, u = T(rng.uniform(0, 3, n)), T(rng.uniform(0, 3, n))
            w = T(rng.normal(0, 0.15, (n, 2 * n)))
            h2, sig, f = recalibrate(h, u, w)
            assert torch.allclose(h2 + sig, h + u, atol=1e-12)
            assert torch.all(f > -1) and torch.all(f < 1)

    def test_gate_module_zero_init(self):
        gate = RecalibrationGate(3)
        assert torch.all(gate.w_gate == 0)


class TestInitialization:
    def test_every_parameter_grouped(self):
        model, _ = micro_model()
        for name, _ in model.named_parameters():
            assert parameter_group(name)

    def test_forget_gate_bias(self):
        model, cfg = micro_model()
        b = model.predictor.lstm.bias_ih_l0.detach()
        hidden = cfg.seq_hidden
        assert torch.all(b[hidden:2 * hidden] == 1.0)
        assert torch.all(b[:hidden] == 0.0)

    def test_deterministic_and_seed_sensitive(self):
        m1, _ = micro_model(seed=4)
        m2, _ = micro_model(seed=4)
        m3, _ = micro_model(seed=5)
        for (n1, p1), (_, p2), (_, p3) in zip(m1.named_parameters(),
                                              m2.named_parameters(),
                                              m3.named_parameters()):
            assert torch.equal(p1, p2)
            if p1.ndim > 1 and bool((p1 != 0).any()) and "embed_w" not in n1:
                assert not torch.equal(p1, p3)

    def test_full_forward_deterministic(self):
        model, cfg = micro_model(seed=6)
        batch = micro_batch(cfg, seed=6)
        out1 = model(batch)
        out2 = model(batch)
        for key in ("h_recal", "sigma_hat", "u_internal"):
            assert torch.equal(out1[key], out2[key])

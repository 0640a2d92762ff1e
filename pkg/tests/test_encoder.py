import numpy as np
import pytest
import torch

from hcmkr import ConfigError
from hcmkr import lorentz as L
from hcmkr.encoder import Encoder, EncoderConfig, MaskSource, encode, final_embedding, prepare, propagate_layer
from hcmkr.geometry import EUCLIDEAN
from hcmkr.graph import BipartiteGraph, KnowledgeGraph, gen_synthetic
from hcmkr.params import ModelParams

C = torch.tensor(1.0, dtype=torch.float64)


def empty_kg(n_items, n_entities=2):
    return KnowledgeGraph(n_entities, 1, np.zeros((0, 3), dtype=np.int64), np.full(n_items, -1))


def lifted(rng, n, k=3):
    return L.lift(rng.normal(0, 0.5, size=(n, k)), C)


class TestPropagate:
    def test_single_degree_one_neighbor(self):
        rng = np.random.default_rng(0)
        g = prepare(BipartiteGraph(1, 2, np.array([[0, 1]])), empty_kg(2))
        users, items = lifted(rng, 1), lifted(rng, 2)
        u1, _ = propagate_layer(users, items, g, C)
        assert float((u1[0] - items[1]).abs().max()) <= 1e-12

    def test_quarter_degree_scaling(self):
        rng = np.random.default_rng(1)
        g = prepare(BipartiteGraph(1, 4, np.array([[0, i] for i in range(4)])), empty_kg(4))
        users, items = lifted(rng, 1), lifted(rng, 4)
        u1, _ = propagate_layer(users, items, g, C)
        want = 0.5 * L.logmap0(items, C).sum(0)
        np.testing.assert_allclose(L.logmap0(u1, C)[0], want, atol=1e-12)

    def test_isolated_user_to_origin(self):
        rng = np.random.default_rng(2)
        g = prepare(BipartiteGraph(2, 2, np.array([[0, 0]])), empty_kg(2))
        u1, i1 = propagate_layer(lifted(rng, 2), lifted(rng, 2), g, C)
        assert u1[1].tolist() == L.origin(C, 4).tolist()
        assert i1[1].tolist() == L.origin(C, 4).tolist()


def synthetic_encoder(layers=3, dropout=0.0, mode="last", hops=1, geometry=None):
    g1, g2 = gen_synthetic(40, 30, 45, 3, seed=0)
    cfg = EncoderConfig(layers=layers, layer_combination=mode, dropout_ratio=dropout, kg_hops=hops)
    enc = Encoder(g1, g2, cfg) if geometry is None else Encoder(g1, g2, cfg, geometry)
    return enc, ModelParams.init(40, 30, 45, 3, 8, seed=1)


class TestEncode:
    def test_empty_graphs(self):
        params = ModelParams.init(3, 2, 2, 1, 4, seed=0)
        g1 = BipartiteGraph(3, 2, np.zeros((0, 2), dtype=np.int64))
        lo = Encoder(g1, empty_kg(2), EncoderConfig(layers=1))(params)
        assert torch.equal(lo.items[0], L.expmap0(params.item, params.c))
        assert torch.equal(lo.users[0], L.expmap0(params.user, params.c))
        assert torch.equal(lo.items[1], L.origin(params.c, 4).expand(2, 4))

    def test_zero_dropout_ignores_seed(self):
        enc, params = synthetic_encoder(dropout=0.0)
        a = enc(params, MaskSource(0.0, 1)).final()
        b = enc(params, MaskSource(0.0, 2)).final()
        assert all(torch.equal(x, y) for x, y in zip(a, b))

    def test_dropout_changes_output(self):
        enc, params = synthetic_encoder(dropout=0.3)
        a = enc(params, MaskSource(0.3, 1)).final()
        b = enc(params, MaskSource(0.3, 2)).final()
        assert not torch.equal(a[0], b[0])

    @pytest.mark.parametrize("hops", [1, 2])
    def test_outputs_on_model(self, hops):
        enc, params = synthetic_encoder(dropout=0.2, hops=hops)
        lo = enc(params, MaskSource(0.2, 3))
        c = params.c.detach()
        for layer in lo.users + lo.items:
            assert float(L.on_manifold_residual(layer.detach(), c).max()) <= 1e-6

    def test_layer_zero_is_kg_aggregated_items(self):
        enc, params = synthetic_encoder()
        lo = enc(params)
        lifted_items = L.expmap0(params.item, params.c)
        has_kg = np.zeros(30, dtype=bool)
        has_kg[enc.g2.item_neighbors()[0]] = True
        assert not torch.equal(lo.items[0][has_kg], lifted_items[has_kg])
        assert torch.equal(lo.items[0][~has_kg], lifted_items[~has_kg])

    def test_counts_calls(self):
        enc, params = synthetic_encoder()
        enc(params)
        enc(params)
        assert enc.calls == 2 and len(set(enc.consumed)) == 1

    def test_euclidean_ablation_runs(self):
        enc, params = synthetic_encoder(geometry=EUCLIDEAN)
        u, i = enc(params).final()
        assert bool((u[:, 0] == 0).all()) and torch.isfinite(i).all()


class TestFinalEmbedding:
    def test_last_with_one_layer(self):
        enc, params = synthetic_encoder(layers=1)
        lo = enc(params)
        assert final_embedding(lo, "last")[0] is lo.users[1]

    def test_tangent_mean_of_equal_layers(self):
        enc, params = synthetic_encoder(layers=2)
        lo = enc(params)
        lo.users = [lo.users[1]] * 3
        lo.items = [lo.items[1]] * 3
        u, i = final_embedding(lo, "tangent_mean")
        assert float((u - lo.users[0]).abs().max()) <= 1e-9

    def test_tangent_mean_on_model(self):
        enc, params = synthetic_encoder(mode="tangent_mean")
        u, i = enc(params).final("tangent_mean")
        assert float(L.on_manifold_residual(u.detach(), params.c.detach()).max()) <= 1e-6

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            EncoderConfig(layer_combination="sum")


class TestMaskSource:
    def test_pure_function(self):
        m = MaskSource(0.4, 11)
        assert torch.equal(m("users-1", (5, 3)), m("users-1", (5, 3)))
        assert not torch.equal(m("users-1", (5, 3)), m("items-1", (5, 3)))

    def test_inverted_scaling(self):
        mask = MaskSource(0.25, 0)("x", (2000, 8))
        assert set(torch.unique(mask).tolist()) <= {0.0, 1 / 0.75}
        assert float(mask.mean()) == pytest.approx(1.0, abs=0.03)

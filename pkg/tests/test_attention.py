import numpy as np
import pytest
import torch

from hcmkr import EmptyNeighborhood
from hcmkr import lorentz as L
from hcmkr.attention import (
    AttentionParams, aggregate_all, aggregate_item, attention_logit, attention_weights, segment_softmax,
)
from hcmkr.geometry import EUCLIDEAN

C = 1.0


def points(rng, n, k=3, scale=0.7):
    return L.lift(rng.normal(0, scale, size=(n, k)), C)


def rand_params(rng, k=3, c1=1.0, c2=1.0):
    return AttentionParams(torch.from_numpy(rng.normal(0, 0.5, size=(k, 2 * k))), c1, c2)


class TestLogit:
    def test_midpoint_when_distance_equals_c1(self):
        rng = np.random.default_rng(0)
        z_t, z_i, r = points(rng, 3)
        p = rand_params(rng)
        transformed = L.lorentzian_linear(p.W, L.hyperbolic_concat(z_t, z_i, C), C)
        dist = float(L.lorentz_distance(r, transformed, C))
        p = AttentionParams(p.W, c1=dist, c2=0.8)
        assert float(attention_logit(z_t, z_i, r, p, C)) == pytest.approx(0.5, abs=1e-12)

    def test_zero_matrix_uses_relation_norm(self):
        rng = np.random.default_rng(1)
        r_e = rng.normal(0, 0.7, size=3)
        z_t, z_i = points(rng, 2)
        p = AttentionParams(torch.zeros(3, 6, dtype=torch.float64), 1.0, 1.0)
        want = float(L.fermi_dirac(np.linalg.norm(r_e), 1.0, 1.0))
        assert float(attention_logit(z_t, z_i, L.lift(r_e, C), p, C)) == pytest.approx(want, abs=1e-12)

    def test_open_unit_interval(self):
        rng = np.random.default_rng(2)
        p = rand_params(rng)
        logits = attention_logit(points(rng, 200), points(rng, 200), points(rng, 200), p, C)
        assert bool(((logits > 0) & (logits < 1)).all())


class TestWeights:
    def test_single_neighbor(self):
        rng = np.random.default_rng(3)
        z_i, z_t, r = points(rng, 3)
        w = attention_weights(z_i, z_t[None], r[None], rand_params(rng), C)
        assert w.tolist() == [1.0]

    def test_equal_logits(self):
        rng = np.random.default_rng(4)
        z_i, z_t, r = points(rng, 3)
        w = attention_weights(z_i, torch.stack([z_t, z_t]), torch.stack([r, r]), rand_params(rng), C)
        assert w.tolist() == [0.5, 0.5]

    def test_empty(self):
        rng = np.random.default_rng(5)
        with pytest.raises(EmptyNeighborhood):
            attention_weights(points(rng, 1)[0], torch.zeros(0, 4, dtype=torch.float64),
                              torch.zeros(0, 4, dtype=torch.float64), rand_params(rng), C)

    def test_sum_and_positivity(self):
        rng = np.random.default_rng(6)
        for n in rng.integers(1, 51, size=100):
            w = attention_weights(points(rng, 1)[0], points(rng, n), points(rng, n), rand_params(rng), C)
            assert abs(float(w.sum()) - 1.0) <= 1e-9 and bool((w > 0).all())

    def test_permutation_equivariant(self):
        rng = np.random.default_rng(7)
        z_i, nb, rel, p = points(rng, 1)[0], points(rng, 12), points(rng, 12), rand_params(rng)
        perm = torch.from_numpy(rng.permutation(12))
        w = attention_weights(z_i, nb, rel, p, C)
        wp = attention_weights(z_i, nb[perm], rel[perm], p, C)
        assert float((wp - w[perm]).abs().max()) <= 1e-12
        a = aggregate_item(z_i, nb, w, C)
        b = aggregate_item(z_i, nb[perm], wp, C)
        assert float((a - b).abs().max()) <= 1e-9

    def test_closer_neighbor_gains_weight(self):
        rng = np.random.default_rng(8)
        z_i, nb = points(rng, 1)[0], points(rng, 4)
        p = AttentionParams(torch.zeros(3, 6, dtype=torch.float64))
        r_e = rng.normal(0, 1.0, size=(4, 3))
        w0 = attention_weights(z_i, nb, L.lift(r_e, C), p, C)
        r_e[0] *= 0.5  # relation point closer to the transformed (origin) point
        w1 = attention_weights(z_i, nb, L.lift(r_e, C), p, C)
        assert float(w1[0]) > float(w0[0])


class TestAggregate:
    def test_no_neighbors(self):
        rng = np.random.default_rng(9)
        z_i = points(rng, 1)[0]
        assert torch.equal(aggregate_item(z_i, torch.zeros(0, 4, dtype=torch.float64), [], C), z_i)

    def test_origin_neighbor(self):
        rng = np.random.default_rng(10)
        z_i = points(rng, 1)[0]
        out = aggregate_item(z_i, L.origin(C, 4)[None], torch.ones(1, dtype=torch.float64), C)
        assert float((out - z_i).abs().max()) <= 1e-12

    def test_on_model(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(1, 20))
            z_i, nb, rel, p = points(rng, 1)[0], points(rng, n), points(rng, n), rand_params(rng)
            out = aggregate_item(z_i, nb, attention_weights(z_i, nb, rel, p, C), C)
            assert float(L.on_manifold_residual(out, C)) <= 1e-6

    def test_deterministic(self):
        rng = np.random.default_rng(12)
        z_i, nb, rel, p = points(rng, 1)[0], points(rng, 5), points(rng, 5), rand_params(rng)
        w = attention_weights(z_i, nb, rel, p, C)
        assert torch.equal(aggregate_item(z_i, nb, w, C), aggregate_item(z_i, nb, w, C))


class TestVectorized:
    def test_segment_softmax_matches_per_segment(self):
        logits = torch.tensor([0.1, 0.9, 0.3, 0.5, 0.2], dtype=torch.float64)
        seg = torch.tensor([0, 0, 2, 2, 2])
        out = segment_softmax(logits, seg, 3)
        np.testing.assert_allclose(out[:2], torch.softmax(logits[:2], 0), rtol=1e-14)
        np.testing.assert_allclose(out[2:], torch.softmax(logits[2:], 0), rtol=1e-14)

    @pytest.mark.parametrize("geometry", [None, EUCLIDEAN])
    def test_aggregate_all_matches_loop(self, geometry):
        rng = np.random.default_rng(13)
        kw = {} if geometry is None else {"geometry": geometry}
        targets, sources, relations = points(rng, 6), points(rng, 9), points(rng, 3)
        tgt = np.array([0, 0, 0, 2, 3, 3, 5])
        src = rng.integers(0, 9, size=7)
        rel = rng.integers(0, 3, size=7)
        p = rand_params(rng)
        pairs = tuple(torch.from_numpy(a) for a in (tgt, src, rel))
        got = aggregate_all(targets, sources, relations, pairs, p, torch.tensor(C, dtype=torch.float64), **kw)
        for t in range(6):
            sel = tgt == t
            if not sel.any():
                assert torch.equal(got[t], targets[t])
                continue
            nb, rl = sources[src[sel]], relations[rel[sel]]
            w = attention_weights(targets[t], nb, rl, p, C, **kw)
            want = aggregate_item(targets[t], nb, w, C, **kw)
            assert float((got[t] - want).abs().max()) <= 1e-12

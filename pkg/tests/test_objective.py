import math

import numpy as np
import pytest
import torch

from hcmkr import lorentz as L
from hcmkr.graph import BipartiteGraph
from hcmkr.objective import (
    TrainBatch, bpr_from_scores, bpr_loss, info_nce, info_nce_tangent, joint_loss, sample_batch, score,
)

LN2 = 0.6931471805599453
INFONCE_TWO_ORTHOGONAL = 0.31326168751822286  # -log(e / (e + 1))


def t(x):
    return torch.tensor(x, dtype=torch.float64)


class TestScore:
    def test_origin_user(self):
        assert float(score(L.origin(1.0, 3), L.lift([0.4, -2.0], 1.0), 1.0)) == 0.0

    def test_self_score(self):
        z = L.lift([2.0, 0.0], 1.0)
        assert float(score(z, z, 1.0)) == pytest.approx(4.0, abs=1e-12)

    def test_symmetric(self):
        a, b = L.lift([0.3, 0.8], 1.5), L.lift([-1.1, 0.2], 1.5)
        assert float(score(a, b, 1.5)) == float(score(b, a, 1.5))


class TestBPR:
    def test_zero_margin(self):
        assert float(bpr_from_scores(t([0.7, -2.0]), t([0.7, -2.0]))) == pytest.approx(LN2, abs=1e-12)

    def test_large_margin(self):
        assert float(bpr_from_scores(t([60.0]), t([0.0]))) < 1e-25

    def test_monotone_in_margin(self):
        margins = np.linspace(-5, 5, 41)
        losses = [float(bpr_from_scores(t([m]), t([0.0]))) for m in margins]
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_batch_from_embeddings(self):
        users, items = t([[1.0, 0.0]]), t([[1.0, 0.0], [1.0, 0.0]])
        batch = TrainBatch(np.array([0]), np.array([0]), np.array([1]))
        assert float(bpr_loss(batch, users, items)) == pytest.approx(LN2, abs=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            bpr_loss(TrainBatch(np.array([], int), np.array([], int), np.array([], int)), t([[1.0]]), t([[1.0]]))


class TestInfoNCE:
    def test_no_negatives(self):
        a = t([[0.3, -1.2]])
        assert float(info_nce_tangent(a, a * 2, 0.2)) == 0.0

    def test_two_orthogonal(self):
        e = t([[1.0, 0.0], [0.0, 1.0]])
        per_node = info_nce_tangent(e, e, 1.0, reduce=False)
        np.testing.assert_allclose(per_node, INFONCE_TWO_ORTHOGONAL, atol=1e-12)

    def test_positive_similarity_monotone(self):
        b = t([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        prev = math.inf
        for s in np.linspace(0, 3, 13):
            a = t([[0.0, s, 0.2], [0.0, 0.1, 1.0]])
            cur = float(info_nce_tangent(a, b, 0.5, reduce=False)[0])
            assert cur < prev
            prev = cur

    def test_empty_set(self):
        with pytest.raises(ValueError):
            info_nce_tangent(torch.zeros(0, 2, dtype=torch.float64), torch.zeros(0, 2, dtype=torch.float64), 1.0)

    def test_point_version_matches_tangent(self):
        rng = np.random.default_rng(0)
        ua, ub = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
        pts = info_nce(L.lift(ua, 1.0), L.lift(ub, 1.0), [0, 2, 4], 0.4, 1.0)
        tan = info_nce_tangent(t(ua[[0, 2, 4]]), t(ub[[0, 2, 4]]), 0.4)
        assert float(pts) == pytest.approx(float(tan), abs=1e-12)


class TestJointLoss:
    def test_lambda_zero(self):
        assert joint_loss(1.25, 2.0, 3.0, 0.0).L == 1.25

    def test_arithmetic(self):
        r = joint_loss(1.0, 2.0, 3.0, 0.5)
        assert (r.L, r.L2) == (3.5, 5.0)

    def test_invariant(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            L1, cu, ci, lam = rng.uniform(0, 5, size=4)
            r = joint_loss(L1, cu, ci, lam)
            assert r.L == r.L1 + r.lam * r.L2


class TestSampler:
    def test_negative_differs(self):
        g = BipartiteGraph(1, 10, np.array([[0, 4]]))
        for seed in range(50):
            b = sample_batch(g, 1, seed)
            assert b.pos.tolist() == [4] and b.neg[0] != 4

    def test_deterministic(self):
        g = BipartiteGraph(3, 10, np.array([[0, 1], [1, 2], [2, 3], [2, 5]]))
        a, b = sample_batch(g, 64, 7), sample_batch(g, 64, 7)
        assert all(np.array_equal(x, y) for x, y in zip((a.users, a.pos, a.neg), (b.users, b.pos, b.neg)))

    def test_negatives_uniform(self):
        seen = [0, 3, 4, 8]
        g = BipartiteGraph(1, 12, np.array([[0, i] for i in seen]))
        neg = sample_batch(g, 100_000, 3).neg
        counts = np.bincount(neg, minlength=12)
        assert counts[seen].sum() == 0
        free = np.setdiff1d(np.arange(12), seen)
        expected = len(neg) / len(free)
        chi2 = float(((counts[free] - expected) ** 2 / expected).sum())
        df = len(free) - 1
        assert chi2 < df + 5 * math.sqrt(2 * df)  # far beyond the 99.9% quantile

    def test_saturated_user_skipped(self):
        g = BipartiteGraph(2, 2, np.array([[0, 0], [0, 1], [1, 0]]))
        with pytest.warns(UserWarning, match="skipping 1"):
            b = sample_batch(g, 20, 0)
        assert set(b.users.tolist()) == {1}

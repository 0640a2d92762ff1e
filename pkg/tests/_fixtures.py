"""Shared small instances."""

import math

import numpy as np

from hcmkr.augment import AugmentationSpec, prune_mask
from hcmkr.diff import ObjectiveConfig, forward_loss
from hcmkr.encoder import Encoder, EncoderConfig
from hcmkr.graph import BipartiteGraph, KnowledgeGraph
from hcmkr.objective import TrainBatch
from hcmkr.params import ModelParams

TINY_EDGES = [[0, 0], [0, 1], [1, 1], [1, 2], [2, 3], [2, 0]]
TINY_TRIPLES = [[0, 0, 4], [1, 1, 4], [2, 0, 3], [0, 1, 3]]


def tiny_graphs():
    """3 users, 4 items, 5 entities, 2 relations; item 3 has no entity."""
    g1 = BipartiteGraph(3, 4, np.array(TINY_EDGES))
    g2 = KnowledgeGraph(5, 2, np.array(TINY_TRIPLES), np.array([0, 1, 2, -1]))
    return g1, g2


def full_batch(g1, seed):
    """Every training edge once, each with a random non-interacted item."""
    rng = np.random.default_rng(seed)
    users, pos = g1.edges[:, 0].copy(), g1.edges[:, 1].copy()
    neg = np.empty_like(pos)
    for j, u in enumerate(users):
        free = np.setdiff1d(np.arange(g1.num_items), g1.neighbors(u, "user"))
        neg[j] = rng.choice(free)
    return TrainBatch(users, pos, neg)


def tiny_problem(kind, lam, seed=0, dim=4, layers=2, std=0.5):
    """(loss_fn, params) for the joint loss on the tiny instance.

    Dropout masks are fixed by the batch seed and the pruning mask is frozen
    at the unperturbed parameters, so the loss is smooth in the parameters.
    """
    g1, g2 = tiny_graphs()
    params = ModelParams.init(3, 4, 5, 2, dim, seed=seed, std=std)
    enc = Encoder(g1, g2, EncoderConfig(layers=layers, dropout_ratio=0.0 if kind == "P" else 0.2))
    aug = AugmentationSpec(kind, 0.2, 1, layers, 0.3)
    obj = ObjectiveConfig(tau=0.5, lam=lam)
    batch = full_batch(g1, seed)
    mask = prune_mask(params, aug.prune_ratio) if kind == "P" else None

    def loss_fn(p):
        return forward_loss(p, enc, batch, aug, obj, seed + 7, mask=mask).L

    return loss_fn, params


def brute_force_metrics(scores, observed, test, ks):
    """Naive oracle: full sort per user, direct Recall/NDCG formulas."""
    n_users, n_items = scores.shape
    obs = {(u, i) for u, i in observed}
    truth = {}
    for u, i in test:
        truth.setdefault(u, set()).add(i)
    per_user = {f"{m}@{k}": [] for k in ks for m in ("ndcg", "recall")}
    users = sorted(truth)
    for u in users:
        cand = [i for i in range(n_items) if (u, i) not in obs]
        ranked = sorted(cand, key=lambda i: (-scores[u, i], i))
        rel = truth[u]
        for k in ks:
            top = ranked[:k]
            hits = [1.0 if i in rel else 0.0 for i in top]
            per_user[f"recall@{k}"].append(sum(hits) / len(rel))
            dcg = math.fsum(h / np.log2(r + 2) for r, h in enumerate(hits) if h)
            idcg = math.fsum(1.0 / np.log2(r + 2) for r in range(min(k, len(rel))))
            per_user[f"ndcg@{k}"].append(dcg / idcg)
    # correctly rounded sums make the means independent of accumulation order
    return {name: math.fsum(v) / len(v) for name, v in per_user.items()}


def random_instance(rng, n_users=None, n_items=None):
    """Small random (scores, observed graph, test graph) with ties in the scores."""
    from hcmkr.graph import BipartiteGraph

    n_users = n_users or int(rng.integers(2, 12))
    n_items = n_items or int(rng.integers(3, 30))
    scores = rng.integers(0, 6, size=(n_users, n_items)).astype(np.float64)
    scores += rng.choice([0.0, 0.5], size=scores.shape)
    cells = rng.permutation(n_users * n_items)
    n_obs = int(rng.integers(0, n_users * n_items // 3 + 1))
    n_test = int(rng.integers(1, n_users * n_items // 3 + 2))
    pick = cells[:n_obs + n_test]
    pairs = np.stack([pick // n_items, pick % n_items], 1)
    observed = BipartiteGraph(n_users, n_items, pairs[:n_obs])
    test = BipartiteGraph(n_users, n_items, pairs[n_obs:])
    return scores, observed, test

"""All-ranking Recall@K / NDCG@K.

Sums go through math.fsum (correctly rounded), so every reported value is
independent of summation order.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import DataError


def rank_items(scores, exclude=()):
    """Item ids by descending score, ties by ascending id, ``exclude`` removed."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    if len(exclude):
        order = order[~np.isin(order, np.asarray(list(exclude), dtype=np.int64))]
    return order


def recall_at_k(ranked, test_items, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    test = set(np.asarray(test_items).tolist())
    if not test:
        return float("nan")
    hits = sum(1 for i in np.asarray(ranked[:k]).tolist() if i in test)
    return hits / len(test)


def _discounts(n):
    return 1.0 / np.log2(np.arange(2, n + 2))


def _idcg(n):
    return math.fsum(_discounts(n))


def ndcg_at_k(ranked, test_items, k):
    """Binary-relevance NDCG with a 1/log2(rank + 1) discount."""
    if k < 1:
        raise ValueError("k must be >= 1")
    test = set(np.asarray(test_items).tolist())
    if not test:
        return float("nan")
    top = np.asarray(ranked[:k]).tolist()
    disc = _discounts(len(top))
    dcg = math.fsum(disc[r] for r, i in enumerate(top) if i in test)
    return dcg / _idcg(min(k, len(test)))


@dataclass
class RankingResult:
    users: np.ndarray          # evaluated users (non-empty test set)
    per_user: dict             # metric name -> array aligned with ``users``
    means: dict                # metric name -> float

    def table(self):
        return dict(self.means)


def metric_names(ks):
    names = []
    for k in ks:
        names += [f"ndcg@{k}", f"recall@{k}"]
    return names


def evaluate_scores(score_fn, num_users, num_items, observed, test, ks=(10, 20), chunk=1024):
    """Rank every non-observed item for each user with a non-empty test set.

    ``score_fn(user_ids) -> (len(user_ids), num_items)`` array. ``observed``
    and ``test`` are BipartiteGraphs; observed items are excluded from the
    ranking (a train positive never appears in a ranked list).
    """
    ks = sorted(set(int(k) for k in ks))
    if min(ks) < 1:
        raise ValueError("k must be >= 1")
    if test.num_edges == 0:
        raise DataError("test split is empty")
    test_deg = test.degrees("user")
    users = np.flatnonzero(test_deg > 0)
    kmax = max(ks)
    per_user = {name: np.zeros(len(users)) for name in metric_names(ks)}
    discounts = _discounts(kmax)
    for start in range(0, len(users), chunk):
        block = users[start:start + chunk]
        scores = np.asarray(score_fn(block), dtype=np.float64).copy()
        for row, u in enumerate(block):
            seen = observed.neighbors(u, "user")
            scores[row, seen] = -np.inf
        order = np.argsort(-scores, axis=1, kind="stable")[:, :kmax]
        for row, u in enumerate(block):
            top = order[row]
            n_allowed = num_items - len(observed.neighbors(u, "user"))
            top = top[:n_allowed]
            hit = np.isin(top, test.neighbors(u, "user")).astype(np.float64)
            n_test = test_deg[u]
            for k in ks:
                h = hit[:k]
                idx = start + row
                per_user[f"recall@{k}"][idx] = h.sum() / n_test
                ideal = math.fsum(discounts[:min(k, n_test)])
                per_user[f"ndcg@{k}"][idx] = math.fsum(discounts[:len(h)][h > 0]) / ideal
    means = {name: math.fsum(vals) / len(vals) for name, vals in per_user.items()}
    return RankingResult(users, per_user, means)


def evaluate_embeddings(users_tangent, items_tangent, observed, test, ks=(10, 20)):
    """Score by tangent dot products (no stochastic modules involved)."""
    U = torch.as_tensor(users_tangent).detach()
    I = torch.as_tensor(items_tangent).detach()

    def score_fn(block):
        return (U[torch.from_numpy(block)] @ I.T).numpy()

    return evaluate_scores(score_fn, U.shape[0], I.shape[0], observed, test, ks)


def format_table(means, ks=(10, 20)):
    """One header line and one value line, tab separated, N@K before R@K per K."""
    names = metric_names(sorted(set(ks)))
    head = "\t".join(n.replace("ndcg", "N").replace("recall", "R") for n in names)
    vals = "\t".join(f"{means[n]:.6f}" for n in names)
    return f"{head}\n{vals}\n"

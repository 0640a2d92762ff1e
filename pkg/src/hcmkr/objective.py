"""Scores, BPR, in-batch InfoNCE and the joint loss."""

import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from . import lorentz as L
from .geometry import HYPERBOLIC


@dataclass
class TrainBatch:
    users: np.ndarray
    pos: np.ndarray
    neg: np.ndarray

    def __len__(self):
        return len(self.users)

    @property
    def contrast_users(self):
        return np.unique(self.users)

    @property
    def contrast_items(self):
        return np.unique(np.concatenate([self.pos, self.neg]))


@dataclass
class LossReport:
    L1: object
    L2: object
    L: object
    lam: float
    L_cU: object = 0.0
    L_cI: object = 0.0

    def floats(self):
        def f(x):
            return float(x.detach()) if isinstance(x, torch.Tensor) else float(x)

        return LossReport(f(self.L1), f(self.L2), f(self.L), self.lam, f(self.L_cU), f(self.L_cI))


def score(z_u, z_i, c, geometry=HYPERBOLIC):
    """Tangent-space dot product of the two log-mapped points."""
    c = L.curvature(c)
    return (geometry.log0(L.as_tensor(z_u), c) * geometry.log0(L.as_tensor(z_i), c)).sum(-1)


def bpr_from_scores(pos_scores, neg_scores):
    # -log(sigmoid(x)) = softplus(-x); the clamp keeps log(sigmoid) >= log(1e-12)
    return torch.clamp(F.softplus(neg_scores - pos_scores), max=-np.log(1e-12)).mean()


def bpr_loss(batch, users_tangent, items_tangent):
    """Mean -log sigmoid(y_ui - y_uj) over the batch triples, from tangent embeddings."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    u = users_tangent[torch.from_numpy(batch.users)]
    pos = (u * items_tangent[torch.from_numpy(batch.pos)]).sum(-1)
    neg = (u * items_tangent[torch.from_numpy(batch.neg)]).sum(-1)
    return bpr_from_scores(pos, neg)


def info_nce_tangent(view_a, view_b, tau, reduce=True):
    """InfoNCE for aligned rows of tangent embeddings; negatives are the other rows of view b."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if view_a.shape[0] == 0:
        raise ValueError("contrastive node set is empty")
    sim = view_a @ view_b.T / tau
    per_node = torch.logsumexp(sim, dim=1) - sim.diagonal()
    return per_node.mean() if reduce else per_node


def info_nce(views_a, views_b, nodes, tau, c, geometry=HYPERBOLIC, reduce=True):
    """InfoNCE over ``nodes`` with views given as manifold points."""
    idx = torch.as_tensor(np.asarray(nodes), dtype=torch.long)
    c = L.curvature(c)
    a = geometry.log0(L.as_tensor(views_a)[idx], c)
    b = geometry.log0(L.as_tensor(views_b)[idx], c)
    return info_nce_tangent(a, b, tau, reduce)


def joint_loss(L1, L_cU, L_cI, lam):
    L2 = L_cU + L_cI
    return LossReport(L1, L2, L1 + lam * L2, lam, L_cU, L_cI)


def sample_batch(train, batch_size, seed):
    """Uniform positives (with replacement) and one rejection-sampled negative each.

    Users who interacted with every item cannot get a negative and are skipped.
    """
    if train.num_edges == 0:
        raise ValueError("training graph has no edges")
    rng = np.random.default_rng(seed)
    full = train.degrees("user") >= train.num_items
    edges = train.edges
    if full.any():
        warnings.warn(f"skipping {int(full.sum())} user(s) with no possible negative", stacklevel=2)
        edges = edges[~full[edges[:, 0]]]
        if len(edges) == 0:
            raise ValueError("no user admits a negative sample")
    picked = edges[rng.integers(0, len(edges), size=batch_size)]
    users, pos = picked[:, 0], picked[:, 1]
    known = edges[:, 0] * train.num_items + edges[:, 1]
    neg = rng.integers(0, train.num_items, size=batch_size)
    bad = np.isin(users * train.num_items + neg, known)
    while bad.any():
        neg[bad] = rng.integers(0, train.num_items, size=int(bad.sum()))
        bad = np.isin(users * train.num_items + neg, known)
    return TrainBatch(users, pos, neg)

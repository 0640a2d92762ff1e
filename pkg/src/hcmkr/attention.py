"""Relation-aware Lorentzian knowledge aggregation over an item's KG neighbors."""

from dataclasses import dataclass

import torch

from . import lorentz as L
from .errors import EmptyNeighborhood
from .geometry import HYPERBOLIC


@dataclass
class AttentionParams:
    W: torch.Tensor  # (d-1) x 2(d-1)
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        if not self.c2 > 0:
            raise ValueError("c2 must be positive")


def attention_logit(z_t, z_i, r, params, c, geometry=HYPERBOLIC):
    """Unnormalized attention score of neighbor ``z_t`` for item ``z_i`` under relation point ``r``.

    For the hyperbolic geometry this is f(d_L(r, W (z_t concat z_i))) in (0, 1).
    """
    z_t, z_i, r = L.as_tensor(z_t), L.as_tensor(z_i), L.as_tensor(r)
    return geometry.attention_logit(z_t, z_i, r, L.as_tensor(params.W), L.curvature(c), params.c1, params.c2)


def attention_weights(z_i, neighbor_points, relation_points, params, c, geometry=HYPERBOLIC):
    """Softmax of the attention logits over one item's neighbors."""
    neighbor_points = L.as_tensor(neighbor_points)
    if neighbor_points.ndim != 2 or neighbor_points.shape[0] == 0:
        raise EmptyNeighborhood("attention needs at least one neighbor")
    z_i = L.as_tensor(z_i).expand_as(neighbor_points)
    logits = attention_logit(neighbor_points, z_i, relation_points, params, c, geometry)
    return torch.softmax(logits - logits.max().detach(), dim=0)


def aggregate_item(z_i, neighbor_points, weights, c, mask=None, geometry=HYPERBOLIC):
    """exp0(log0(z_i) + sum_t w_t log0(z_t)); ``mask`` scales the message sum (inverted dropout)."""
    z_i = L.as_tensor(z_i)
    neighbor_points = L.as_tensor(neighbor_points)
    if neighbor_points.numel() == 0:
        return z_i
    c = L.curvature(c)
    msg = (L.as_tensor(weights)[:, None] * geometry.log0(neighbor_points, c)).sum(0)
    if mask is not None:
        msg = msg * mask
    return geometry.exp0(geometry.log0(z_i, c) + msg, c)


def segment_softmax(logits, segments, n_segments):
    """Softmax within each segment id; max-subtracted per segment."""
    top = torch.full((n_segments,), -torch.inf, dtype=logits.dtype)
    top = top.scatter_reduce(0, segments, logits.detach(), reduce="amax", include_self=True)
    ex = torch.exp(logits - top[segments])
    den = torch.zeros(n_segments, dtype=logits.dtype).index_add(0, segments, ex)
    return ex / den[segments]


def aggregate_all(targets, sources, relations, pairs, params, c, mask=None, geometry=HYPERBOLIC, probe=None):
    """Vectorized one-hop aggregation for every target node.

    ``pairs`` = (target index, source index, relation index) arrays, sorted by
    target. Targets without neighbors are returned unchanged.
    """
    tgt, src, rel = pairs
    if len(tgt) == 0:
        return targets
    logits = geometry.attention_logit(sources[src], targets[tgt], relations[rel], params.W, c, params.c1, params.c2)
    if probe is not None:
        probe("attention_logits", logits)
    weights = segment_softmax(logits, tgt, targets.shape[0])
    msg = torch.zeros(targets.shape[0], targets.shape[1] - 1, dtype=targets.dtype)
    msg = msg.index_add(0, tgt, weights[:, None] * geometry.log0(sources[src], c))
    if mask is not None:
        msg = msg * mask
    updated = geometry.exp0(geometry.log0(targets, c) + msg, c)
    has_nbr = torch.zeros(targets.shape[0], dtype=torch.bool)
    has_nbr[tgt] = True
    return torch.where(has_nbr[:, None], updated, targets)

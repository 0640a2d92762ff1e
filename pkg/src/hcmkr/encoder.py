"""Tangent-space LightGCN-style propagation on the user-item graph.

Item layer 0 is the KG-aggregated item embedding, user layer 0 the lifted
user embedding. Each further layer is

    z^(k+1) = exp0( sum_{j in N} log0(z_j^(k)) / sqrt(|N_self| |N_j|) )

with optional inverted dropout on the tangent-space sums.
"""

import hashlib
import zlib
from dataclasses import dataclass, field

import numpy as np
import torch

from .attention import AttentionParams, aggregate_all
from .errors import ConfigError
from .geometry import HYPERBOLIC

LAYER_MODES = ("last", "tangent_mean")


@dataclass
class EncoderConfig:
    layers: int = 3
    layer_combination: str = "last"
    dropout_ratio: float = 0.0
    kg_hops: int = 1
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError("layers must be >= 1")
        if self.layer_combination not in LAYER_MODES:
            raise ConfigError(f"layer_combination must be one of {LAYER_MODES}")
        if not 0.0 <= self.dropout_ratio < 1.0:
            raise ConfigError("dropout_ratio must lie in [0, 1)")
        if self.kg_hops < 1:
            raise ConfigError("kg_hops must be >= 1")


class MaskSource:
    """Inverted-dropout masks that are a pure function of (seed, site, shape)."""

    def __init__(self, ratio, seed):
        self.ratio = float(ratio)
        self.seed = int(seed)

    def __call__(self, site, shape):
        if self.ratio == 0.0:
            return None
        rng = np.random.default_rng([self.seed, zlib.crc32(site.encode())])
        keep = rng.random(shape) >= self.ratio
        return torch.from_numpy(keep / (1.0 - self.ratio))


@dataclass(frozen=True)
class GraphTensors:
    """Index tensors derived once from (G1, G2) and shared by every forward pass."""

    num_users: int
    num_items: int
    num_entities: int
    edge_users: torch.Tensor
    edge_items: torch.Tensor
    edge_weight: torch.Tensor  # 1 / sqrt(deg_u deg_i)
    item_pairs: tuple           # (item, entity, relation)
    entity_pairs: tuple         # (head, tail, relation)
    digest: str = field(default="")


def _digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def prepare(g1, g2):
    edges = g1.edges
    du = g1.degrees("user").astype(np.float64)
    di = g1.degrees("item").astype(np.float64)
    if len(edges):
        w = 1.0 / np.sqrt(du[edges[:, 0]] * di[edges[:, 1]])
    else:
        w = np.zeros(0)
    item_pairs = tuple(torch.from_numpy(a.copy()) for a in g2.item_neighbors())
    h, t, r = g2.entity_neighbors()
    order = np.lexsort((r, t, h))
    entity_pairs = tuple(torch.from_numpy(a[order].copy()) for a in (h, t, r))
    return GraphTensors(
        g1.num_users, g1.num_items, g2.num_entities,
        torch.from_numpy(edges[:, 0].copy()), torch.from_numpy(edges[:, 1].copy()),
        torch.from_numpy(w),
        item_pairs, entity_pairs,
        _digest(edges, g2.triples, g2.item_to_entity),
    )


@dataclass
class LayerOutputs:
    users: list  # layer k -> |U| x d points
    items: list
    c: torch.Tensor
    geometry: object = HYPERBOLIC

    @property
    def num_layers(self):
        return len(self.users) - 1

    def layer(self, k):
        return self.users[k], self.items[k]

    def final(self, mode="last"):
        return final_embedding(self, mode)


def final_embedding(lo, mode="last"):
    """Combine layers: ``last`` takes layer K, ``tangent_mean`` averages layers in tangent space."""
    if mode == "last":
        return lo.users[-1], lo.items[-1]
    if mode == "tangent_mean":
        g, c = lo.geometry, lo.c
        out = []
        for layers in (lo.users, lo.items):
            mean = torch.stack([g.log0(x, c) for x in layers]).mean(0)
            out.append(g.exp0(mean, c))
        return tuple(out)
    raise ConfigError(f"unknown layer combination {mode!r}")


def propagate_layer(users, items, graphs, c, geometry=HYPERBOLIC, mask_users=None, mask_items=None):
    """One symmetric-normalized propagation step; isolated nodes land on the origin."""
    tu, ti = geometry.log0(users, c), geometry.log0(items, c)
    eu, ei, w = graphs.edge_users, graphs.edge_items, graphs.edge_weight[:, None]
    agg_u = torch.zeros_like(tu).index_add(0, eu, w * ti[ei])
    agg_i = torch.zeros_like(ti).index_add(0, ei, w * tu[eu])
    if mask_users is not None:
        agg_u = agg_u * mask_users
    if mask_items is not None:
        agg_i = agg_i * mask_items
    return geometry.exp0(agg_u, c), geometry.exp0(agg_i, c)


def encode(params, graphs, cfg, masks=None, geometry=HYPERBOLIC, probe=None):
    """Full forward pass f(G1, G2 | params) returning every layer."""
    c = params.c
    k = params.dim - 1
    attn = AttentionParams(params.W, cfg.c1, cfg.c2)

    def mask(site, n):
        return None if masks is None else masks(site, (n, k))

    def check(name, t):
        if probe is not None:
            probe(name, t)

    check("curvature", c)
    users = geometry.exp0(params.user, c)
    items = geometry.exp0(params.item, c)
    relations = geometry.exp0(params.relation, c)
    entities = geometry.exp0(params.entity, c)
    check("lifted_inputs", torch.cat([users, items, entities]))
    for hop in range(cfg.kg_hops - 1):
        entities = aggregate_all(
            entities, entities, relations, graphs.entity_pairs, attn, c,
            mask(f"kg-entity-{hop}", graphs.num_entities), geometry, probe,
        )
    items = aggregate_all(
        items, entities, relations, graphs.item_pairs, attn, c,
        mask("kg-item", graphs.num_items), geometry, probe,
    )
    check("items_layer0", items)
    out_u, out_i = [users], [items]
    for layer in range(1, cfg.layers + 1):
        users, items = propagate_layer(
            users, items, graphs, c, geometry,
            mask(f"users-{layer}", graphs.num_users), mask(f"items-{layer}", graphs.num_items),
        )
        check(f"layer{layer}", torch.cat([users, items]))
        out_u.append(users)
        out_i.append(items)
    return LayerOutputs(out_u, out_i, c, geometry)


class Encoder:
    """Binds graphs, config and geometry; counts invocations and records the
    graph digest each pass consumed."""

    def __init__(self, g1, g2, cfg, geometry=HYPERBOLIC):
        self.g1, self.g2 = g1, g2
        self.graphs = prepare(g1, g2)
        self.cfg = cfg
        self.geometry = geometry
        self.calls = 0
        self.consumed = []

    def __call__(self, params, masks=None, probe=None):
        self.calls += 1
        self.consumed.append(_digest(self.g1.edges, self.g2.triples, self.g2.item_to_entity))
        return encode(params, self.graphs, self.cfg, masks, self.geometry, probe)

    def reset_counters(self):
        self.calls = 0
        self.consumed = []

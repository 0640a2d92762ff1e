"""User-item and knowledge graphs: containers, TSV I/O, splitting, synthesis."""

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

USER, ITEM = "user", "item"


def _csr(rows, cols, n_rows):
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    return np.cumsum(indptr), cols


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Implicit-feedback interactions. ``edges`` is a sorted, duplicate-free (E, 2) array.

    ``user_ids`` / ``item_ids`` hold the external id of each dense id.
    """

    num_users: int
    num_items: int
    edges: np.ndarray
    user_ids: np.ndarray = None
    item_ids: np.ndarray = None
    _user_adj: tuple = field(init=False, repr=False)
    _item_adj: tuple = field(init=False, repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            if edges.min() < 0 or edges[:, 0].max() >= self.num_users or edges[:, 1].max() >= self.num_items:
                raise DataError("interaction id out of range")
            edges = np.unique(edges, axis=0)
        object.__setattr__(self, "edges", edges)
        if self.user_ids is None:
            object.__setattr__(self, "user_ids", np.arange(self.num_users, dtype=np.int64))
        if self.item_ids is None:
            object.__setattr__(self, "item_ids", np.arange(self.num_items, dtype=np.int64))
        object.__setattr__(self, "_user_adj", _csr(edges[:, 0], edges[:, 1], self.num_users))
        object.__setattr__(self, "_item_adj", _csr(edges[:, 1], edges[:, 0], self.num_items))

    @property
    def num_edges(self):
        return len(self.edges)

    def _adj(self, side):
        if side == USER:
            return self._user_adj, self.num_users
        if side == ITEM:
            return self._item_adj, self.num_items
        raise ValueError(f"side must be {USER!r} or {ITEM!r}")

    def neighbors(self, node, side=USER):
        (indptr, indices), n = self._adj(side)
        if not 0 <= node < n:
            raise IndexError(f"{side} {node} out of range [0, {n})")
        return indices[indptr[node]:indptr[node + 1]]

    def degree(self, node, side=USER):
        return len(self.neighbors(node, side))

    def degrees(self, side=USER):
        (indptr, _), _ = self._adj(side)
        return np.diff(indptr)

    def with_edges(self, extra):
        """A new graph with ``extra`` edges added."""
        extra = np.asarray(extra, dtype=np.int64).reshape(-1, 2)
        return BipartiteGraph(
            self.num_users, self.num_items, np.concatenate([self.edges, extra]),
            self.user_ids, self.item_ids,
        )

    def edge_set(self):
        return set(map(tuple, self.edges.tolist()))

    def __eq__(self, other):
        return (
            isinstance(other, BipartiteGraph)
            and self.num_users == other.num_users
            and self.num_items == other.num_items
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.user_ids, other.user_ids)
            and np.array_equal(self.item_ids, other.item_ids)
        )


def neighbors(g, node, side=USER):
    return g.neighbors(node, side)


def degree(g, node, side=USER):
    return g.degree(node, side)


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """Entity-relation-entity triples plus the item -> entity alignment.

    ``item_to_entity[i]`` is -1 when item ``i`` has no entity.
    """

    num_entities: int
    num_relations: int
    triples: np.ndarray
    item_to_entity: np.ndarray

    def __post_init__(self):
        triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        if len(triples):
            if triples.min() < 0:
                raise DataError("negative id in knowledge graph")
            if triples[:, 1].max() >= self.num_relations:
                raise DataError(f"relation id {triples[:, 1].max()} >= num_relations {self.num_relations}")
            if max(triples[:, 0].max(), triples[:, 2].max()) >= self.num_entities:
                raise DataError("entity id out of range")
            triples = np.unique(triples, axis=0)
        object.__setattr__(self, "triples", triples)
        i2e = np.asarray(self.item_to_entity, dtype=np.int64)
        if len(i2e) and i2e.max() >= self.num_entities:
            raise DataError("item_to_entity refers to an unknown entity")
        object.__setattr__(self, "item_to_entity", i2e)

    @property
    def num_items(self):
        return len(self.item_to_entity)

    def item_neighbors(self):
        """(item, tail entity, relation) arrays for every triple headed by an item's entity.

        Sorted by item, then tail, then relation.
        """
        ent_to_items = {}
        for item, ent in enumerate(self.item_to_entity.tolist()):
            if ent >= 0:
                ent_to_items.setdefault(ent, []).append(item)
        rows = [
            (item, t, r)
            for h, r, t in self.triples.tolist()
            for item in ent_to_items.get(h, ())
        ]
        arr = np.array(sorted(rows), dtype=np.int64).reshape(-1, 3)
        return arr[:, 0], arr[:, 1], arr[:, 2]

    def entity_neighbors(self):
        """(head, tail, relation) arrays of all triples."""
        return self.triples[:, 0], self.triples[:, 2], self.triples[:, 1]

    def __eq__(self, other):
        return (
            isinstance(other, KnowledgeGraph)
            and self.num_entities == other.num_entities
            and self.num_relations == other.num_relations
            and np.array_equal(self.triples, other.triples)
            and np.array_equal(self.item_to_entity, other.item_to_entity)
        )


@dataclass(frozen=True)
class DatasetSplit:
    train: BipartiteGraph
    valid: BipartiteGraph
    test: BipartiteGraph

    @property
    def observed(self):
        """Train plus validation edges: everything excluded when ranking test items."""
        return self.train.with_edges(self.valid.edges)


def _read_int_rows(path, width):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != width:
                raise DataError(f"{path}:{lineno}: expected {width} fields, got {len(parts)}")
            try:
                row = [int(p) for p in parts]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer id in {text!r}") from None
            if min(row) < 0:
                raise DataError(f"{path}:{lineno}: negative id")
            rows.append(row)
    return np.array(rows, dtype=np.int64).reshape(-1, width)


def _warn_duplicates(path, rows):
    n_unique = len(np.unique(rows, axis=0)) if len(rows) else 0
    if n_unique < len(rows):
        warnings.warn(f"{path}: dropped {len(rows) - n_unique} duplicate line(s)", stacklevel=3)


def load_interactions(path, num_users=None, num_items=None):
    """Read ``user<TAB>item`` lines.

    Without declared counts, external ids are densified to [0, n) in
    ascending order. With counts, ids are taken as-is and range-checked.
    """
    rows = _read_int_rows(path, 2)
    _warn_duplicates(path, rows)
    if num_users is None and num_items is None:
        user_ids, users = np.unique(rows[:, 0], return_inverse=True)
        item_ids, items = np.unique(rows[:, 1], return_inverse=True)
        return BipartiteGraph(len(user_ids), len(item_ids), np.stack([users, items], 1), user_ids, item_ids)
    if num_users is None or num_items is None:
        raise DataError("declare both num_users and num_items, or neither")
    if len(rows) and (rows[:, 0].max() >= num_users or rows[:, 1].max() >= num_items):
        raise DataError(f"{path}: id exceeds declared counts ({num_users} users, {num_items} items)")
    return BipartiteGraph(num_users, num_items, rows)


def save_interactions(g, path):
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in g.edges.tolist():
            fh.write(f"{g.user_ids[u]}\t{g.item_ids[i]}\n")


def load_kg(path, num_entities=None, num_relations=None, item_to_entity=None, num_items=None):
    """Read ``head<TAB>relation<TAB>tail`` lines.

    Entity and relation ids are not densified so they stay aligned with the
    item mapping. ``item_to_entity`` may be a path, an array, or None; None
    means the identity for items below ``num_entities``.
    """
    rows = _read_int_rows(path, 3)
    _warn_duplicates(path, rows)
    if num_relations is None:
        num_relations = int(rows[:, 1].max()) + 1 if len(rows) else 0
    elif len(rows) and rows[:, 1].max() >= num_relations:
        raise DataError(f"{path}: relation id {rows[:, 1].max()} >= declared count {num_relations}")
    if num_entities is None:
        num_entities = int(max(rows[:, 0].max(), rows[:, 2].max())) + 1 if len(rows) else 0
    if isinstance(item_to_entity, (str, Path)):
        item_to_entity = load_item_entities(item_to_entity, num_items)
    if item_to_entity is None:
        n = num_items if num_items is not None else num_entities
        item_to_entity = np.where(np.arange(n) < num_entities, np.arange(n), -1)
    return KnowledgeGraph(num_entities, num_relations, rows, item_to_entity)


def load_item_entities(path, num_items=None):
    rows = _read_int_rows(path, 2)
    n = num_items if num_items is not None else (int(rows[:, 0].max()) + 1 if len(rows) else 0)
    if len(rows) and rows[:, 0].max() >= n:
        raise DataError(f"{path}: item id exceeds {n}")
    mapping = np.full(n, -1, dtype=np.int64)
    mapping[rows[:, 0]] = rows[:, 1]
    return mapping


def save_kg(kg, path, item_entity_path=None):
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in kg.triples.tolist():
            fh.write(f"{h}\t{r}\t{t}\n")
    if item_entity_path is not None:
        with open(item_entity_path, "w", encoding="utf-8") as fh:
            for i, e in enumerate(kg.item_to_entity.tolist()):
                if e >= 0:
                    fh.write(f"{i}\t{e}\n")


def split(g, train_frac=0.8, valid_frac_of_train=0.1, seed=0):
    """Per-user train/test split, then a validation carve-out from train.

    Each user keeps ``max(1, floor(train_frac * deg))`` edges for training
    (the train pool); the rest go to test. ``round(valid_frac * |pool|)``
    pool edges are then moved to validation, never taking a user's last
    remaining training edge.
    """
    if not (0 < train_frac < 1 and 0 < valid_frac_of_train < 1):
        raise ValueError("fractions must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    pool, test = [], []
    for u in range(g.num_users):
        items = rng.permutation(g.neighbors(u, USER))
        if len(items) == 0:
            continue
        n_train = max(1, int(np.floor(train_frac * len(items))))
        pool.extend((u, i) for i in items[:n_train])
        test.extend((u, i) for i in items[n_train:])
    pool = np.array(pool, dtype=np.int64).reshape(-1, 2)
    n_valid = int(round(valid_frac_of_train * len(pool)))
    remaining = np.bincount(pool[:, 0], minlength=g.num_users) if len(pool) else np.zeros(g.num_users, int)
    to_valid = np.zeros(len(pool), dtype=bool)
    for idx in rng.permutation(len(pool)):
        if n_valid == 0:
            break
        u = pool[idx, 0]
        if remaining[u] > 1:
            remaining[u] -= 1
            to_valid[idx] = True
            n_valid -= 1

    def make(edges):
        return BipartiteGraph(g.num_users, g.num_items, edges, g.user_ids, g.item_ids)

    return DatasetSplit(make(pool[~to_valid]), make(pool[to_valid]), make(test))


def powerlaw_weights(n, exponent):
    """Unnormalized popularity of items ranked 1..n: rank ** -exponent."""
    return np.arange(1, n + 1, dtype=np.float64) ** -exponent


def gen_synthetic(
    n_users=200,
    n_items=100,
    n_entities=150,
    n_relations=4,
    power_exponent=1.5,
    seed=0,
    min_degree=5,
    mean_extra_degree=8.0,
    n_groups=5,
    affinity=4.0,
):
    """Desk-scale hierarchical dataset.

    Item 0 is the most popular; item ``i`` is drawn with weight
    ``(i + 1) ** -power_exponent``, boosted by ``affinity`` when the item's
    group (``i % n_groups``) matches the user's group. Users draw
    ``min_degree + Geometric`` distinct items.

    The KG is a forest: entities ``0..min(n_items, n_entities)-1`` are the
    items' own entities (tree roots); every later entity hangs under a
    uniformly chosen earlier entity. The relation label is the child's depth
    (mod ``n_relations``) so relations encode the hierarchy level.
    """
    if min(n_users, n_items, n_entities, n_relations) <= 0:
        raise ValueError("sizes must be positive")
    rng = np.random.default_rng(seed)
    pop = powerlaw_weights(n_items, power_exponent)
    item_group = np.arange(n_items) % n_groups
    user_group = rng.integers(0, n_groups, size=n_users)
    edges = []
    for u in range(n_users):
        deg = min(n_items, min_degree + rng.geometric(1.0 / (1.0 + mean_extra_degree)) - 1)
        w = pop * np.where(item_group == user_group[u], affinity, 1.0)
        items = rng.choice(n_items, size=deg, replace=False, p=w / w.sum())
        edges.extend((u, i) for i in items)
    g1 = BipartiteGraph(n_users, n_items, np.array(edges, dtype=np.int64))

    n_roots = min(n_items, n_entities)
    depth = np.zeros(n_entities, dtype=np.int64)
    triples = []
    for e in range(n_roots, n_entities):
        parent = int(rng.integers(0, e))
        depth[e] = depth[parent] + 1
        triples.append((parent, (depth[e] - 1) % n_relations, e))
    item_to_entity = np.where(np.arange(n_items) < n_roots, np.arange(n_items), -1)
    g2 = KnowledgeGraph(n_entities, n_relations, np.array(triples, dtype=np.int64), item_to_entity)
    return g1, g2

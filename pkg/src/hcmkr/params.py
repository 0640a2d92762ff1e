"""Learnable parameters. Everything is stored in Euclidean/tangent coordinates."""

from dataclasses import dataclass, fields

import numpy as np
import torch

from .lorentz import DTYPE, curvature_from_raw, raw_from_curvature

PRUNABLE = ("user", "item", "entity", "relation", "W")


@dataclass
class ModelParams:
    user: torch.Tensor      # |U| x (d-1)
    item: torch.Tensor      # |I| x (d-1)
    entity: torch.Tensor    # |E| x (d-1)
    relation: torch.Tensor  # |R| x (d-1)
    W: torch.Tensor         # (d-1) x 2(d-1)
    c_raw: torch.Tensor     # scalar; c = softplus(c_raw) + 1e-4

    @classmethod
    def init(cls, n_users, n_items, n_entities, n_relations, dim, seed=0, std=0.1, c=1.0):
        """Gaussian embeddings, Xavier-uniform W. ``dim`` is the ambient Lorentz dimension d."""
        rng = np.random.default_rng(seed)
        k = dim - 1

        def normal(n):
            return torch.from_numpy(rng.normal(0.0, std, size=(n, k)))

        bound = np.sqrt(6.0 / (k + 2 * k))
        W = torch.from_numpy(rng.uniform(-bound, bound, size=(k, 2 * k)))
        return cls(
            normal(n_users), normal(n_items), normal(n_entities), normal(n_relations),
            W, raw_from_curvature(torch.tensor(float(c), dtype=DTYPE)).reshape(()),
        )

    @property
    def dim(self):
        return self.user.shape[1] + 1

    @property
    def c(self):
        return curvature_from_raw(self.c_raw)

    def names(self):
        return [f.name for f in fields(self)]

    def arrays(self):
        return {name: getattr(self, name) for name in self.names()}

    def map(self, fn):
        return ModelParams(**{k: fn(v) for k, v in self.arrays().items()})

    def clone(self):
        return self.map(lambda t: t.detach().clone())

    def requires_grad_(self, flag=True):
        for t in self.arrays().values():
            t.requires_grad_(flag)
        return self

    def masked(self, mask):
        """theta * M for the prunable arrays; differentiable w.r.t. theta."""
        out = self.arrays()
        for name, m in mask.masks.items():
            out[name] = out[name] * m
        return ModelParams(**out)

    def numel(self):
        return sum(t.numel() for t in self.arrays().values())

    def flat(self):
        return torch.cat([t.detach().reshape(-1) for t in self.arrays().values()])

    def equal(self, other):
        return all(torch.equal(a, b) for a, b in zip(self.arrays().values(), other.arrays().values()))

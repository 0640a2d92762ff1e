"""Hyperbolic geometry and its Euclidean ablation behind one interface.

The encoder only talks to a geometry through ``exp0``/``log0`` (space
coordinates <-> d-dimensional points) and ``attention_logit``.
"""

import torch

from . import lorentz as L


class Hyperbolic:
    name = "lorentz"

    def exp0(self, u, c):
        return L.expmap0(u, c)

    def log0(self, x, c):
        return L.logmap0(x, c)

    def attention_logit(self, z_t, z_i, r, W, c, c1, c2):
        """Fermi-Dirac of the distance between r and W applied to the concatenation."""
        cat = L.expmap0(torch.cat([L.logmap0(z_t, c), L.logmap0(z_i, c)], dim=-1), c)
        transformed = L.expmap0(L.logmap0(cat, c) @ W.T, c)
        return L.fermi_dirac(L.lorentz_distance(r, transformed, c), c1, c2)


class Euclidean:
    """Identity space maps; the attention logit is a plain dot product."""

    name = "euclidean"

    def exp0(self, u, c):
        return torch.cat([torch.zeros_like(u[..., :1]), u], dim=-1)

    def log0(self, x, c):
        return x[..., 1:]

    def attention_logit(self, z_t, z_i, r, W, c, c1, c2):
        transformed = torch.cat([z_t[..., 1:], z_i[..., 1:]], dim=-1) @ W.T
        return (r[..., 1:] * transformed).sum(-1)


HYPERBOLIC = Hyperbolic()
EUCLIDEAN = Euclidean()


def get(euclidean=False):
    return EUCLIDEAN if euclidean else HYPERBOLIC

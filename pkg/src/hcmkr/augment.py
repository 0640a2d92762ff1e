"""Model-level augmentations: two views per node without touching graph structure.

D: two passes with independent dropout masks.
C: one pass, views taken from layers k1 and k2.
P: one pass with the full parameters, one with magnitude-pruned parameters
   (dropout disabled throughout).
"""

from dataclasses import dataclass

import numpy as np
import torch

from .encoder import MaskSource
from .errors import ConfigError
from .params import PRUNABLE

KINDS = ("D", "C", "P")


@dataclass
class AugmentationSpec:
    kind: str = "C"
    dropout_ratio: float = 0.1
    k1: int = 1
    k2: int = 3
    prune_ratio: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"augmentation kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "C" and self.k1 == self.k2:
            raise ConfigError("cross-layer views need k1 != k2")
        if not 0.0 <= self.dropout_ratio < 1.0:
            raise ConfigError("dropout_ratio must lie in [0, 1)")
        if not 0.0 <= self.prune_ratio < 1.0:
            raise ConfigError("prune_ratio must lie in [0, 1)")

    @property
    def effective_dropout(self):
        # pruning views run with every dropout module disabled
        return 0.0 if self.kind == "P" else self.dropout_ratio


@dataclass
class Views:
    """Two aligned views plus the embeddings fed to the recommendation loss (all as points)."""

    users_a: torch.Tensor
    items_a: torch.Tensor
    users_b: torch.Tensor
    items_b: torch.Tensor
    users_rec: torch.Tensor
    items_rec: torch.Tensor


@dataclass
class PruneMask:
    masks: dict  # name -> 0/1 float tensor congruent with the parameter
    threshold: float

    def zero_fraction(self):
        total = sum(m.numel() for m in self.masks.values())
        zeros = sum(int((m == 0).sum()) for m in self.masks.values())
        return zeros / total


def prune_mask(params, prune_ratio):
    """Keep entries with |theta| > xi, xi the pooled prune_ratio quantile of |theta|.

    xi is the k-th smallest magnitude with k = floor(ratio * |theta|), so
    exactly k entries are zeroed when magnitudes are distinct.
    """
    if not 0.0 <= prune_ratio < 1.0:
        raise ConfigError("prune_ratio must lie in [0, 1)")
    arrays = {name: getattr(params, name).detach() for name in PRUNABLE}
    mags = torch.cat([a.abs().reshape(-1) for a in arrays.values()]).numpy()
    k = int(np.floor(prune_ratio * mags.size))
    if k == 0:
        return PruneMask({n: torch.ones_like(a) for n, a in arrays.items()}, -np.inf)
    xi = float(np.partition(mags, k - 1)[k - 1])
    return PruneMask({n: (a.abs() > xi).to(a.dtype) for n, a in arrays.items()}, xi)


def views_dropout(encoder, params, dropout_ratio, seed1, seed2, probe=None):
    mode = encoder.cfg.layer_combination
    ua, ia = encoder(params, MaskSource(dropout_ratio, seed1), probe).final(mode)
    ub, ib = encoder(params, MaskSource(dropout_ratio, seed2), probe).final(mode)
    return Views(ua, ia, ub, ib, ua, ia)


def views_cross_layer(encoder, params, k1, k2, dropout_ratio, seed, probe=None):
    K = encoder.cfg.layers
    if k1 == k2:
        raise ConfigError("cross-layer views need k1 != k2")
    if not (0 <= k1 <= K and 0 <= k2 <= K):
        raise ConfigError(f"layers ({k1}, {k2}) outside [0, {K}]")
    lo = encoder(params, MaskSource(dropout_ratio, seed), probe)
    ua, ia = lo.layer(k1)
    ub, ib = lo.layer(k2)
    ur, ir = lo.final(encoder.cfg.layer_combination)
    return Views(ua, ia, ub, ib, ur, ir)


def views_pruning(encoder, params, prune_ratio, probe=None, mask=None):
    """``mask`` overrides the magnitude mask (e.g. to hold it fixed while differentiating)."""
    mode = encoder.cfg.layer_combination
    if mask is None:
        mask = prune_mask(params, prune_ratio)
    ua, ia = encoder(params, None, probe).final(mode)
    ub, ib = encoder(params.masked(mask), None, probe).final(mode)
    return Views(ua, ia, ub, ib, ua, ia)


def make_views(encoder, params, spec, seed, probe=None, mask=None):
    """Dispatch on ``spec.kind``; ``seed`` drives this batch's dropout masks."""
    if spec.kind == "D":
        s1, s2 = np.random.SeedSequence([seed, 0xD]).generate_state(2)
        return views_dropout(encoder, params, spec.dropout_ratio, int(s1), int(s2), probe)
    if spec.kind == "C":
        return views_cross_layer(encoder, params, spec.k1, spec.k2, spec.dropout_ratio, seed, probe)
    return views_pruning(encoder, params, spec.prune_ratio, probe, mask)

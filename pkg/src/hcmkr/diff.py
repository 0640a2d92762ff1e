"""Gradients of the joint objective, a finite-difference verifier, and Adam.

Reverse-mode differentiation is delegated to torch autograd (float64); the
finite-difference checker below is the independent oracle for it.
"""

from dataclasses import dataclass, field

import numpy as np
import torch

from .augment import make_views
from .errors import NumericalError
from .objective import bpr_loss, info_nce_tangent, joint_loss


@dataclass
class ObjectiveConfig:
    tau: float = 0.2
    lam: float = 0.5
    contrast_set: str = "batch"  # or "full"


class Probe:
    """Remembers the first named intermediate that is not finite."""

    def __init__(self):
        self.first_bad = None

    def __call__(self, name, tensor):
        if self.first_bad is None and not bool(torch.isfinite(tensor.detach()).all()):
            self.first_bad = name


def forward_loss(params, encoder, batch, aug, obj, seed, probe=None, mask=None):
    """Joint loss for one batch as a differentiable LossReport."""
    views = make_views(encoder, params, aug, seed, probe, mask)
    g, c = encoder.geometry, params.c
    users_rec, items_rec = g.log0(views.users_rec, c), g.log0(views.items_rec, c)
    L1 = bpr_loss(batch, users_rec, items_rec)
    if probe is not None:
        probe("bpr_loss", L1)
    if obj.contrast_set == "full":
        u_idx = torch.arange(views.users_a.shape[0])
        i_idx = torch.arange(views.items_a.shape[0])
    else:
        u_idx = torch.from_numpy(batch.contrast_users)
        i_idx = torch.from_numpy(batch.contrast_items)
    L_cU = info_nce_tangent(g.log0(views.users_a[u_idx], c), g.log0(views.users_b[u_idx], c), obj.tau)
    L_cI = info_nce_tangent(g.log0(views.items_a[i_idx], c), g.log0(views.items_b[i_idx], c), obj.tau)
    if probe is not None:
        probe("contrastive_users", L_cU)
        probe("contrastive_items", L_cI)
    return joint_loss(L1, L_cU, L_cI, obj.lam)


def gradients(params, encoder, batch, aug, obj, seed):
    """(LossReport of floats, {name: gradient}) for the joint loss.

    Raises NumericalError naming the first non-finite intermediate.
    """
    p = params.clone().requires_grad_()
    probe = Probe()
    report = forward_loss(p, encoder, batch, aug, obj, seed, probe)
    if not bool(torch.isfinite(report.L.detach())):
        where = probe.first_bad or "joint_loss"
        raise NumericalError(f"non-finite loss; first non-finite intermediate: {where}", where)
    report.L.backward()
    grads = {}
    for name, t in p.arrays().items():
        g = t.grad if t.grad is not None else torch.zeros_like(t)
        if not bool(torch.isfinite(g).all()):
            raise NumericalError(f"non-finite gradient for {name}", name)
        grads[name] = g.detach()
    return report.floats(), grads


def grad_check(loss_fn, params, step=1e-5, n_coords=200, seed=0):
    """Max relative error between autograd and central differences.

    ``loss_fn(params) -> scalar tensor``. Checks a random subsample of
    ``n_coords`` coordinates (all of them if there are fewer). The relative
    error is |g - g_fd| / max(1e-8, |g| + |g_fd|).
    """
    if not step > 0:
        raise ValueError("step must be positive")
    p = params.clone().requires_grad_()
    loss_fn(p).backward()
    analytic = torch.cat([
        (t.grad if t.grad is not None else torch.zeros_like(t)).reshape(-1) for t in p.arrays().values()
    ])
    base = params.clone()
    flat_views = [(name, t.reshape(-1)) for name, t in base.arrays().items()]
    offsets = np.cumsum([0] + [v.numel() for _, v in flat_views])
    total = int(offsets[-1])
    rng = np.random.default_rng(seed)
    coords = np.arange(total) if total <= n_coords else np.sort(rng.choice(total, n_coords, replace=False))
    worst = 0.0
    with torch.no_grad():
        for j in coords:
            a = int(np.searchsorted(offsets, j, side="right") - 1)
            view = flat_views[a][1]
            off = j - offsets[a]
            orig = view[off].item()
            view[off] = orig + step
            f_plus = float(loss_fn(base))
            view[off] = orig - step
            f_minus = float(loss_fn(base))
            view[off] = orig
            fd = (f_plus - f_minus) / (2 * step)
            g = float(analytic[j])
            worst = max(worst, abs(g - fd) / max(1e-8, abs(g) + abs(fd)))
    return worst


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params, **kw):
        st = cls(**kw)
        st.m = {k: torch.zeros_like(t) for k, t in params.arrays().items()}
        st.v = {k: torch.zeros_like(t) for k, t in params.arrays().items()}
        return st


def adam_step(params, grads, state):
    """Bias-corrected Adam, applied in place to ``params`` and ``state``."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    with torch.no_grad():
        for name, t in params.arrays().items():
            g = grads[name]
            m = state.m[name].mul_(b1).add_(g, alpha=1.0 - b1)
            v = state.v[name].mul_(b2).addcmul_(g, g, value=1.0 - b2)
            t.sub_(state.lr * (m / bc1) / (torch.sqrt(v / bc2) + state.eps))
    return params, state

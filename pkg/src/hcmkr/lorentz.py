"""Lorentz-model kernel anchored at the hyperboloid origin.

Conventions: a point ``x`` of the d-dimensional model satisfies
``<x, x>_L = -c`` with ``x[0] >= sqrt(c)``; the model has curvature ``-1/c``.
Tangent vectors at the origin have a zero leading coordinate, so internally
we mostly pass around the d-1 *space* coordinates (``u``) and only build full
vectors at the public boundary.

All functions take array-likes or tensors and return float64 tensors. They
are differentiable with respect to both the coordinates and ``c``.
"""

import torch

from .errors import DimensionError, ManifoldError

DTYPE = torch.float64

# arcosh arguments in [1 - ARCOSH_TOL, 1) are treated as 1
ARCOSH_TOL = 1e-9
# tangent norms below this use Taylor expansions of the map coefficients
_TINY = 1e-6
MIN_CURVATURE = 1e-4


def as_tensor(x):
    if isinstance(x, torch.Tensor):
        return x if x.dtype == DTYPE else x.to(DTYPE)
    return torch.as_tensor(x, dtype=DTYPE)


def curvature(c):
    """Validate ``c`` and return it as a float64 tensor."""
    c = as_tensor(c)
    if not bool(torch.all(c > 0)):
        raise ManifoldError(f"curvature must be positive, got {c.detach().tolist()}")
    return c


def curvature_from_raw(c_raw):
    """Map the unconstrained training scalar to a positive curvature."""
    return torch.nn.functional.softplus(as_tensor(c_raw)) + MIN_CURVATURE


def raw_from_curvature(c):
    """Inverse of :func:`curvature_from_raw`."""
    c = as_tensor(c) - MIN_CURVATURE
    if not bool(torch.all(c > 0)):
        raise ManifoldError("curvature must exceed the softplus floor")
    return c + torch.log(-torch.expm1(-c))


def _pair_check(a, b):
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    if a.shape[-1] < 2:
        raise DimensionError("Lorentz vectors need at least 2 coordinates")


def lorentz_inner(a, b):
    """-a0*b0 + sum_i a_i*b_i over the last axis."""
    a, b = as_tensor(a), as_tensor(b)
    _pair_check(a, b)
    return (a[..., 1:] * b[..., 1:]).sum(-1) - a[..., 0] * b[..., 0]


def lorentz_norm(v, tol=ARCOSH_TOL):
    """sqrt(<v, v>_L) for a (spacelike) tangent vector."""
    v = as_tensor(v)
    sq = lorentz_inner(v, v)
    if bool(torch.any(sq < -tol)):
        raise ManifoldError("vector is timelike; not a tangent vector at the origin")
    return torch.sqrt(torch.clamp(sq, min=0.0))


def origin(c, d):
    if d < 2:
        raise DimensionError("the Lorentz model needs d >= 2")
    c = curvature(c)
    return torch.cat([torch.sqrt(c).reshape(1), torch.zeros(d - 1, dtype=DTYPE)])


def _space_norm(u):
    # norm with a zero-safe gradient: d|u|/du is taken as 0 at u = 0
    sq = (u * u).sum(-1, keepdim=True)
    tiny = sq < _TINY * _TINY
    n = torch.sqrt(torch.where(tiny, torch.ones_like(sq), sq))
    return torch.where(tiny, torch.zeros_like(sq), n), sq, tiny


def expmap0(u, c):
    """Exponential map at the origin of the tangent vector ``[0, u]``."""
    u, c = as_tensor(u), as_tensor(c)
    sc = torch.sqrt(c)
    n, sq, tiny = _space_norm(u)
    n_safe = torch.where(tiny, torch.ones_like(n), n)
    # sqrt(c) * sinh(n / sqrt(c)) / n, with its series near n = 0
    coef = torch.where(tiny, 1.0 + sq / (6.0 * c), sc * torch.sinh(n_safe / sc) / n_safe)
    time = sc * torch.cosh(n / sc)
    return torch.cat([time, coef * u], dim=-1)


def logmap0(x, c, check=True):
    """Space coordinates of the logarithmic map at the origin.

    Uses asinh(|x_s| / sqrt(c)), which equals arcosh(x0 / sqrt(c)) on the
    manifold but stays accurate near the origin.
    """
    x, c = as_tensor(x), as_tensor(c)
    sc = torch.sqrt(c)
    if check and bool(torch.any(x[..., :1] / sc < 1.0 - ARCOSH_TOL)):
        raise ManifoldError("point lies below the hyperboloid vertex (arcosh argument < 1)")
    xs = x[..., 1:]
    n, sq, tiny = _space_norm(xs)
    n_safe = torch.where(tiny, torch.ones_like(n), n)
    coef = torch.where(tiny, 1.0 - sq / (6.0 * c), sc * torch.asinh(n_safe / sc) / n_safe)
    return coef * xs


def lift(z, c):
    """Map Euclidean coordinates onto the hyperboloid (exp of ``[0, z]``)."""
    return expmap0(z, curvature(c))


def exp_map_origin(v, c):
    v = as_tensor(v)
    if v.shape[-1] < 2:
        raise DimensionError("tangent vectors need at least 2 coordinates")
    if bool(torch.any(v[..., 0].abs() > ARCOSH_TOL)):
        raise ManifoldError("tangent vectors at the origin have a zero first coordinate")
    return expmap0(v[..., 1:], curvature(c))


def log_map_origin(x, c):
    x = as_tensor(x)
    if x.shape[-1] < 2:
        raise DimensionError("Lorentz points need at least 2 coordinates")
    u = logmap0(x, curvature(c))
    return torch.cat([torch.zeros_like(u[..., :1]), u], dim=-1)


class _GuardedSqrt(torch.autograd.Function):
    """sqrt(max(q, 0)) whose derivative is evaluated at max(q, q_min)."""

    @staticmethod
    def forward(ctx, q, q_min):
        ctx.save_for_backward(q, q_min)
        return torch.sqrt(torch.clamp(q, min=0.0))

    @staticmethod
    def backward(ctx, grad):
        q, q_min = ctx.saved_tensors
        return grad * 0.5 / torch.sqrt(torch.maximum(q, q_min)), None


def lorentz_distance(x, y, c):
    """Geodesic distance sqrt(c) * arcosh(-<x, y>_L / c).

    Evaluated as 2 sqrt(c) asinh(|x - y|_L / (2 sqrt(c))), the same quantity
    without the cancellation arcosh suffers near coincident points.
    """
    x, y = as_tensor(x), as_tensor(y)
    _pair_check(x, y)
    c = curvature(c)
    arg = -lorentz_inner(x, y) / c
    # rounding in <x, y> grows with the coordinates' magnitude
    scale = torch.clamp((x[..., 0] * y[..., 0]).abs() / c, min=1.0)
    if bool(torch.any(arg < 1.0 - ARCOSH_TOL * scale)):
        raise ManifoldError("arcosh argument below 1: points are not on one hyperboloid sheet")
    diff = x - y
    q = lorentz_inner(diff, diff)
    q_min = (2.0 * c * ARCOSH_TOL).detach().expand_as(q)
    sc = torch.sqrt(c)
    return 2.0 * sc * torch.asinh(_GuardedSqrt.apply(q, q_min) / (2.0 * sc))


def hyperbolic_concat(x, y, c):
    """exp0 of the concatenated space coordinates of log0(x) and log0(y).

    Output lives in the 2(d-1)+1 dimensional model.
    """
    x, y = as_tensor(x), as_tensor(y)
    _pair_check(x, y)
    c = curvature(c)
    return expmap0(torch.cat([logmap0(x, c), logmap0(y, c)], dim=-1), c)


def lorentzian_linear(W, x, c):
    """exp0([0, W @ log0(x)_space]); W has shape (d-1, 2(d-1))."""
    W, x = as_tensor(W), as_tensor(x)
    if W.ndim != 2 or W.shape[1] != x.shape[-1] - 1:
        raise DimensionError(
            f"W of shape {tuple(W.shape)} cannot act on points of dimension {x.shape[-1]}"
        )
    c = curvature(c)
    return expmap0(logmap0(x, c) @ W.T, c)


def fermi_dirac(dist, c1, c2):
    """1 / (exp((dist - c1) / c2) + 1)."""
    if not c2 > 0:
        raise ValueError("c2 must be positive")
    return torch.sigmoid(-(as_tensor(dist) - c1) / c2)


def project_to_hyperboloid(x, c):
    """Recompute x0 from the space coordinates so the point is on the model."""
    x = as_tensor(x)
    c = curvature(c)
    xs = x[..., 1:]
    time = torch.sqrt(c + (xs * xs).sum(-1, keepdim=True))
    return torch.cat([time, xs], dim=-1)


def on_manifold_residual(x, c):
    """|<x, x>_L + c|, the quantity the closure checks bound."""
    return (lorentz_inner(x, x) + as_tensor(c)).abs()

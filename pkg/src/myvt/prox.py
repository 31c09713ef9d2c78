"""Nonsmooth regularizers (l1, 1-D and 2-D total variation), their proximal
maps, and the quadratic-smoothed envelope value/gradient.

The l1 prox is the closed-form soft threshold. The TV proxes run a fixed
number of ADMM iterations on the split z = Dy, where D is the first-difference
operator: the quadratic y-update is a symmetric tridiagonal solve in 1-D and a
capped conjugate-gradient solve in 2-D, the z-update is a soft threshold, and
the scaled dual u accumulates the residual. All operations accept a single
vector (d,) or a stack (n, d) and are pure functions of their inputs.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded

__all__ = [
    "Regularizer",
    "reg_value",
    "prox_l1",
    "prox_tv1d",
    "prox_tv2d",
    "prox",
    "envelope_value",
    "envelope_grad",
]


@dataclass(frozen=True)
class Regularizer:
    """Tagged choice of penalty with prox solver settings.

    kind is one of "l1", "tv1d", "tv2d". For tv2d, shape = (h, w) and vectors
    are row-major flattened h x w images. The admm_* fields control the TV
    proxes; cg_* apply to tv2d only.
    """

    kind: str
    shape: tuple | None = None
    admm_iters: int = 20
    admm_rho: float = 1.0
    cg_iters: int = 30
    cg_tol: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("l1", "tv1d", "tv2d"):
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.kind == "tv2d":
            if self.shape is None or len(self.shape) != 2:
                raise ValueError("tv2d requires shape=(h, w)")
            if self.shape[0] < 2 or self.shape[1] < 2:
                raise ValueError("tv2d requires h, w >= 2")
        if self.admm_iters < 1 or self.admm_rho <= 0:
            raise ValueError("admm_iters must be >= 1 and admm_rho > 0")
        if self.cg_iters < 1 or self.cg_tol < 0:
            raise ValueError("cg_iters must be >= 1 and cg_tol >= 0")


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ValueError(f"expected vector or stack of vectors, got ndim={x.ndim}")


def _check_tv2d_dim(g, d):
    h, w = g.shape
    if h * w != d:
        raise ValueError(f"tv2d shape {g.shape} does not match vector length {d}")
    return h, w


def reg_value(g, x):
    """Penalty value; scalar for a vector input, (n,) for a stack."""
    X, single = _as_batch(x)
    if g.kind == "l1":
        vals = np.abs(X).sum(axis=1)
    elif g.kind == "tv1d":
        vals = np.abs(np.diff(X, axis=1)).sum(axis=1)
    else:
        h, w = _check_tv2d_dim(g, X.shape[1])
        img = X.reshape(-1, h, w)
        vals = np.abs(img[:, :, 1:] - img[:, :, :-1]).sum(axis=(1, 2))
        vals += np.abs(img[:, 1:, :] - img[:, :-1, :]).sum(axis=(1, 2))
    return float(vals[0]) if single else vals


def prox_l1(x, t):
    """Soft threshold: minimizer of ||y||_1 + ||x - y||^2 / (2t)."""
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _dt1d(v):
    """D^T v for the 1-D first-difference operator, batched on axis 0."""
    return -np.diff(np.pad(v, ((0, 0), (1, 1))), axis=1)


def prox_tv1d(x, t, iters=20, rho=1.0):
    """ADMM estimate of the 1-D TV prox, run for exactly `iters` iterations.

    Split z = Dy; y-update solves the tridiagonal system
    (I/t + rho D^T D) y = x/t + rho D^T (z - u) directly, z-update is a soft
    threshold at 1/rho, u-update accumulates Dy - z. Warm start y=x, z=Dx,
    u=0, so a constant vector is an exact fixed point.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    X, single = _as_batch(x)
    d = X.shape[1]
    if d < 2:
        raise ValueError("tv1d needs d >= 2")
    diag = 1.0 / t + rho * np.concatenate(([1.0], np.full(max(d - 2, 0), 2.0), [1.0]))
    ab = np.zeros((2, d))
    ab[0, 1:] = -rho
    ab[1, :] = diag
    y = X.copy()
    z = np.diff(y, axis=1)
    u = np.zeros_like(z)
    for _ in range(iters):
        rhs = X / t + rho * _dt1d(z - u)
        y = solveh_banded(ab, rhs.T).T
        dy = np.diff(y, axis=1)
        z = prox_l1(dy + u, 1.0 / rho)
        u = u + dy - z
    return y[0] if single else y


def _grad2d(img):
    """Forward differences of an (n, h, w) stack: horizontal then vertical."""
    return img[:, :, 1:] - img[:, :, :-1], img[:, 1:, :] - img[:, :-1, :]


def _div2d(dh, dv, h, w):
    """Adjoint of _grad2d (negative divergence stencil)."""
    out = np.zeros((dh.shape[0], h, w))
    out[:, :, :-1] -= dh
    out[:, :, 1:] += dh
    out[:, :-1, :] -= dv
    out[:, 1:, :] += dv
    return out


def prox_tv2d(x, t, shape, iters=20, rho=1.0, cg_iters=30, cg_tol=1e-8):
    """ADMM estimate of the anisotropic 2-D TV prox.

    Same splitting as prox_tv1d with D stacking horizontal and vertical first
    differences; the y-update system (I/t + rho D^T D) y = rhs is solved by
    conjugate gradients warm-started at the current y, capped at cg_iters
    iterations or residual norm <= cg_tol.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    h, w = shape
    if h < 2 or w < 2:
        raise ValueError("tv2d needs h, w >= 2")
    X, single = _as_batch(x)
    if X.shape[1] != h * w:
        raise ValueError(f"tv2d shape {shape} does not match vector length {X.shape[1]}")
    Ximg = X.reshape(-1, h, w)

    def matvec(Y):
        gh, gv = _grad2d(Y)
        return Y / t + rho * _div2d(gh, gv, h, w)

    Y = Ximg.copy()
    zh, zv = _grad2d(Y)
    uh = np.zeros_like(zh)
    uv = np.zeros_like(zv)
    for _ in range(iters):
        rhs = Ximg / t + rho * _div2d(zh - uh, zv - uv, h, w)
        r = rhs - matvec(Y)
        p = r.copy()
        rs = np.sum(r * r, axis=(1, 2))
        for _ in range(cg_iters):
            if np.all(np.sqrt(rs) <= cg_tol):
                break
            Ap = matvec(p)
            denom = np.sum(p * Ap, axis=(1, 2))
            alpha = np.where(denom > 0, rs / np.where(denom > 0, denom, 1.0), 0.0)
            Y = Y + alpha[:, None, None] * p
            r = r - alpha[:, None, None] * Ap
            rs_new = np.sum(r * r, axis=(1, 2))
            beta = np.where(rs > 0, rs_new / np.where(rs > 0, rs, 1.0), 0.0)
            p = r + beta[:, None, None] * p
            rs = rs_new
        gh, gv = _grad2d(Y)
        zh = prox_l1(gh + uh, 1.0 / rho)
        zv = prox_l1(gv + uv, 1.0 / rho)
        uh = uh + gh - zh
        uv = uv + gv - zv
    out = Y.reshape(-1, h * w)
    return out[0] if single else out


def prox(g, x, t):
    """Proximal map of g at parameter t, dispatched on g.kind."""
    if g.kind == "l1":
        return prox_l1(x, t)
    if g.kind == "tv1d":
        return prox_tv1d(x, t, iters=g.admm_iters, rho=g.admm_rho)
    return prox_tv2d(
        x, t, g.shape,
        iters=g.admm_iters, rho=g.admm_rho,
        cg_iters=g.cg_iters, cg_tol=g.cg_tol,
    )


def envelope_value(g, x, lam):
    """Smoothed penalty g(p) + ||x - p||^2 / (2 lam) at p = prox(g, x, lam).

    Exact for l1. For the TV kinds p is the ADMM estimate, so the returned
    value is an upper-bound estimate of the true envelope.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    X, single = _as_batch(x)
    P = np.atleast_2d(prox(g, X, lam))
    vals = reg_value(g, P) + np.sum((X - P) ** 2, axis=1) / (2.0 * lam)
    vals = np.atleast_1d(vals)
    return float(vals[0]) if single else vals


def envelope_grad(g, x, lam):
    """Envelope gradient (x - prox(g, x, lam)) / lam."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return (np.asarray(x, dtype=np.float64) - prox(g, x, lam)) / lam

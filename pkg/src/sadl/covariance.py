"""Pairwise covariance of density values at a single scale.

Heads carry independent noise, so only same-head terms survive:
``Cov(D(x_j), D(x_k)) = sum_i omega_i(j, k) - mu_i(j) mu_i(k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Scene, ScaleConfig
from .gaussian_moments import MomentMaps, in_support


def omega(q_j, q_k, beta_s: float, alpha: float):
    """Cross moment ``E[N(q_j | e, beta I) N(q_k | e, beta I)]``, e ~ N(0, alpha I).

    The product of the two kernels factors into a Gaussian in ``q_j - q_k``
    and one centered at the midpoint, which is then averaged over ``e``::

        N(q_j - q_k | 0, 2 beta I) * N((q_j + q_k) / 2 | 0, (beta / 2 + alpha) I)

    Broadcasts over leading axes.
    """
    if not beta_s > 0 or not alpha >= 0:
        raise ValueError(f"need beta_s > 0 and alpha >= 0, got {beta_s}, {alpha}")
    q_j = np.asarray(q_j, dtype=np.float64)
    q_k = np.asarray(q_k, dtype=np.float64)
    diff = q_j - q_k
    mid = 0.5 * (q_j + q_k)
    out = _pair_factor(np.sum(diff * diff, axis=-1), beta_s) * _mid_factor(np.sum(mid * mid, axis=-1), beta_s, alpha)
    return float(out) if out.ndim == 0 else out


def _pair_factor(d2, beta):
    v = 2.0 * beta
    return np.exp(-d2 / (2.0 * v)) / (2.0 * math.pi * v)


def _mid_factor(m2, beta, alpha):
    v = beta / 2.0 + alpha
    return np.exp(-m2 / (2.0 * v)) / (2.0 * math.pi * v)


@dataclass(frozen=True)
class CovQuery:
    scale_index: int
    j: int
    k: int


def covariance_block(rows, cols, moments: MomentMaps) -> np.ndarray:
    """Covariance entries for every (row, col) cell pair, shape (len(rows), len(cols)).

    A head contributes to a pair only when both cells lie inside its
    truncated support, the same rule the moment maps use.
    """
    grid = moments.grid
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    for idx in (rows, cols):
        if idx.size and (idx.min() < 0 or idx.max() >= grid.size):
            raise IndexError(f"cell index outside [0, {grid.size})")
    xa = grid.centers(rows)
    xb = grid.centers(cols)
    beta, alpha = moments.beta, moments.alpha

    out = np.zeros((rows.size, cols.size))
    if moments.heads.shape[0] == 0 or out.size == 0:
        return out
    d = xa[:, None, :] - xb[None, :, :]
    pair = _pair_factor(d[..., 0] ** 2 + d[..., 1] ** 2, beta)
    mid = 0.5 * (xa[:, None, :] + xb[None, :, :])
    for h in moments.heads:
        ina = in_support(xa, h, moments.radius)
        inb = in_support(xb, h, moments.radius)
        if not ina.any() or not inb.any():
            continue
        ia, ib = np.nonzero(ina)[0], np.nonzero(inb)[0]
        m = mid[np.ix_(ia, ib)] - h
        w = pair[np.ix_(ia, ib)] * _mid_factor(m[..., 0] ** 2 + m[..., 1] ** 2, beta, alpha)
        mua = _mu(xa[ia], h, beta, alpha)
        mub = _mu(xb[ib], h, beta, alpha)
        out[np.ix_(ia, ib)] += w - mua[:, None] * mub[None, :]
    return out


def _mu(x, h, beta, alpha):
    dx = x[:, 0] - h[0]
    dy = x[:, 1] - h[1]
    v = alpha + beta
    return np.exp(-(dx * dx + dy * dy) / (2.0 * v)) / (2.0 * math.pi * v)


def covariance_entry(query: CovQuery, scene: Scene, moments: MomentMaps, config: ScaleConfig) -> float:
    if query.scale_index != moments.grid.scale_index:
        raise ValueError("query scale does not match moment maps")
    return float(covariance_block([query.j], [query.k], moments)[0, 0])

"""Brute-force references for checking the fast paths.

Nothing here reuses the low-rank or Woodbury code. Random numbers come from
numpy's PCG64 generator; chunk ``k`` of a Monte-Carlo run draws from the
``k``-th child of ``SeedSequence(seed)``, so results depend only on
``(seed, n_samples, chunk)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import Scene, ScaleConfig, ScaleGrid

DENSE_LIMIT = 4096


@dataclass(frozen=True)
class McEstimate:
    mean: np.ndarray
    variance: np.ndarray
    covariance: np.ndarray | None
    std_error: dict
    n_samples: int
    seed: int


def _sample_maps(heads, alpha, beta, grid, rng, n):
    """Density maps for ``n`` noise draws, shape (n, J).

    Each kernel is separable, so a map is a sum of outer products of 1-D
    profiles along y and x.
    """
    eps = rng.standard_normal((n, heads.shape[0], 2)) * math.sqrt(alpha)
    pos = heads[None, :, :] + eps
    xs = np.arange(grid.width) + 0.5
    ys = np.arange(grid.height) + 0.5
    norm = 1.0 / math.sqrt(2.0 * math.pi * beta)
    gx = norm * np.exp(-(xs[None, None, :] - pos[..., 0:1]) ** 2 / (2.0 * beta))
    gy = norm * np.exp(-(ys[None, None, :] - pos[..., 1:2]) ** 2 / (2.0 * beta))
    maps = np.matmul(gy.transpose(0, 2, 1), gx)
    return maps.reshape(n, -1)


def mc_moments(scene: Scene, grid: ScaleGrid, config: ScaleConfig, n_samples: int, seed: int,
               covariance: bool = False, chunk: int = 50_000, se_samples: int = 200_000) -> McEstimate:
    """Sample mean, variance (and optionally covariance) of the density at one scale.

    The scene's annotations are taken as the true head positions; every
    draw perturbs each of them by independent ``N(0, alpha I)`` noise.

    Covariance standard errors need fourth-order cross moments (two extra
    J x J products per chunk); those are estimated from the first
    ``se_samples`` draws only and scaled to the full sample count.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    if covariance and grid.size > DENSE_LIMIT:
        raise ValueError(f"dense covariance limited to {DENSE_LIMIT} cells")
    J = grid.size
    heads = scene.annotations / grid.factor
    alpha, beta = config.alpha, config.beta(grid.scale_index)
    if heads.shape[0] == 0:
        z = np.zeros(J)
        zc = np.zeros((J, J)) if covariance else None
        return McEstimate(z, z.copy(), zc, {"mean": z.copy(), "variance": z.copy(), "covariance": zc},
                          n_samples, seed)

    sizes = [chunk] * (n_samples // chunk)
    if n_samples % chunk:
        sizes.append(n_samples % chunk)
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    # one pass over shifted values y = D - K, K = first chunk's mean
    shift = None
    s1 = np.zeros(J)
    s2 = np.zeros(J)
    s3 = np.zeros(J)
    s4 = np.zeros(J)
    if covariance:
        p11 = np.zeros((J, J))
        p21 = np.zeros((J, J))
        p22 = np.zeros((J, J))
    seen = 0
    sub = None
    for size, child in zip(sizes, children):
        y = _sample_maps(heads, alpha, beta, grid, np.random.Generator(np.random.PCG64(child)), size)
        if shift is None:
            shift = y.mean(axis=0)
        y -= shift
        sq = np.square(y)
        s1 += y.sum(axis=0)
        s2 += sq.sum(axis=0)
        s3 += np.einsum("nj,nj->j", sq, y)
        s4 += np.einsum("nj,nj->j", sq, sq)
        if covariance:
            p11 += y.T @ y
            if seen < se_samples:
                p21 += sq.T @ y
                p22 += sq.T @ sq
        seen += size
        if covariance and sub is None and (seen >= se_samples or seen == n_samples):
            sub = (seen, s1.copy(), s2.copy(), p11.copy())

    n = n_samples
    m = s1 / n
    e2, e3, e4 = s2 / n, s3 / n, s4 / n
    var = e2 - m * m
    m4 = e4 - 4 * m * e3 + 6 * m * m * e2 - 3 * m ** 4
    se = {
        "mean": np.sqrt(np.maximum(var, 0.0) / n),
        "variance": np.sqrt(np.maximum(m4 - var * var, 0.0) / n),
        "covariance": None,
    }
    cov = None
    if covariance:
        c = p11 / n - np.outer(m, m)
        ns, t1, t2, t11 = sub
        ms, q2, P = t1 / ns, t2 / ns, t11 / ns
        B = p21 / ns  # B[j, k] = E[y_j^2 y_k]
        a = ms[:, None]
        b = ms[None, :]
        cs = P - a * b
        fourth = (p22 / ns - 2 * b * B - 2 * a * B.T + b * b * q2[:, None] + a * a * q2[None, :]
                  + 4 * a * b * P - 3 * a * a * b * b)
        se["covariance"] = np.sqrt(np.maximum(fourth - cs * cs, 0.0) / n)
        cov = c * n / (n - 1)
    return McEstimate(shift + m, var * n / (n - 1), cov, se, n_samples, seed)


def _gauss_product_integral(means, variances):
    """Integral over the real line of a product of 1-D normal densities.

    ``means`` has shape (..., K); ``variances`` has length K.
    """
    prec = 1.0 / np.asarray(variances, dtype=np.float64)
    k = prec.size
    tot = prec.sum()
    lin = np.sum(means * prec, axis=-1)
    quad = np.sum(means * means * prec, axis=-1)
    logc = -0.5 * (k - 1) * math.log(2.0 * math.pi) + 0.5 * np.log(prec).sum() - 0.5 * math.log(tot)
    return np.exp(logc - 0.5 * (quad - lin * lin / tot))


def dense_covariance(scene: Scene, grid: ScaleGrid, config: ScaleConfig) -> np.ndarray:
    """Full J x J covariance of the density values, built entry by entry.

    Each head's noisy kernel product is integrated over its noise variable
    axis by axis, using the generic product-of-normals integral rather than
    the fast path's closed form. Heads contribute only where both cells lie
    within ``6 sqrt(alpha + beta_s)`` of them, the truncation that defines
    the moment maps.
    """
    if grid.size > DENSE_LIMIT:
        raise ValueError(f"dense covariance limited to {DENSE_LIMIT} cells, grid has {grid.size}")
    s = grid.scale_index
    beta, alpha = config.beta(s), config.alpha
    radius2 = 36.0 * (alpha + beta)
    rows, cols = np.divmod(np.arange(grid.size), grid.width)
    cx, cy = cols + 0.5, rows + 0.5
    out = np.zeros((grid.size, grid.size))
    for hx, hy in np.asarray(scene.annotations, dtype=np.float64) / grid.factor:
        near = (cx - hx) ** 2 + (cy - hy) ** 2 <= radius2
        if not near.any():
            continue
        ox, oy = cx[near] - hx, cy[near] - hy
        mu = 1.0
        second = 1.0
        for o in (ox, oy):
            mu = mu * _gauss_product_integral(np.stack([o, np.zeros_like(o)], -1), [beta, alpha])
            pair = np.stack(np.broadcast_arrays(o[:, None], o[None, :], 0.0), -1)
            second = second * _gauss_product_integral(pair, [beta, beta, alpha])
        idx = np.nonzero(near)[0]
        out[np.ix_(idx, idx)] += second - np.outer(mu, mu)
    return out


def dense_inverse(matrix) -> np.ndarray:
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    inv = np.linalg.solve(a, np.eye(a.shape[0]))
    if not np.all(np.isfinite(inv)):
        raise np.linalg.LinAlgError("singular matrix")
    return inv


def dense_quadratic_form(residual, matrix) -> float:
    r = np.asarray(residual, dtype=np.float64)
    return float(r @ np.linalg.solve(np.asarray(matrix, dtype=np.float64), r))


def fd_gradient(fn: Callable[[list[np.ndarray]], float], preds: Sequence[np.ndarray], h: float = 1e-5,
                coords: Sequence[Sequence[int]] | None = None) -> list[np.ndarray]:
    """Central differences of ``fn`` at ``preds``, one array per input vector.

    ``coords`` restricts evaluation to the listed indices of each vector;
    the remaining entries are NaN.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    xs = [np.array(p, dtype=np.float64, copy=True) for p in preds]
    out = []
    for s, x in enumerate(xs):
        g = np.full(x.shape, np.nan)
        todo = range(x.size) if coords is None else coords[s]
        for j in todo:
            orig = x[j]
            x[j] = orig + h
            fp = fn(xs)
            x[j] = orig - h
            fm = fn(xs)
            x[j] = orig
            g[j] = (fp - fm) / (2.0 * h)
        out.append(g)
    return out

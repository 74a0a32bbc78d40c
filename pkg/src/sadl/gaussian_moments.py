"""Isotropic Gaussians, ground-truth density maps and per-pixel moments.

All computation happens in scale-grid units: annotations are divided by the
grid's downsample factor and the kernels are normalized on that lattice, so
each head contributes (about) unit mass at every scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DensityMap, Scene, ScaleConfig, ScaleGrid


def gauss2d_iso(d, var: float):
    """Bivariate isotropic normal density ``N(d | 0, var * I)``.

    ``d`` may be a single displacement or any array whose last axis has
    length 2. Returns a float for a single displacement.
    """
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")
    d = np.asarray(d, dtype=np.float64)
    r2 = np.sum(d * d, axis=-1)
    out = np.exp(-r2 / (2.0 * var)) / (2.0 * math.pi * var)
    return float(out) if out.ndim == 0 else out


def _sq_dist(centers: np.ndarray, point: np.ndarray) -> np.ndarray:
    dx = centers[..., 0] - point[0]
    dy = centers[..., 1] - point[1]
    return dx * dx + dy * dy


def _iso_from_sq(r2, var):
    return np.exp(-r2 / (2.0 * var)) / (2.0 * math.pi * var)


def scaled_heads(scene: Scene, grid: ScaleGrid) -> np.ndarray:
    return scene.annotations / grid.factor


def gt_density_map(scene: Scene, grid: ScaleGrid, var: float) -> DensityMap:
    """Sum of one normalized Gaussian per annotation, sampled at cell centers."""
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")
    centers = grid.centers()
    values = np.zeros(grid.size)
    for h in scaled_heads(scene, grid):
        values += _iso_from_sq(_sq_dist(centers, h), var)
    return DensityMap(grid, values)


def head_support(grid: ScaleGrid, head: np.ndarray, radius: float) -> np.ndarray:
    """Cells whose centers lie within ``radius`` of ``head`` (ascending)."""
    c0 = max(int(math.floor(head[0] - radius)), 0)
    c1 = min(int(math.ceil(head[0] + radius)), grid.width - 1)
    r0 = max(int(math.floor(head[1] - radius)), 0)
    r1 = min(int(math.ceil(head[1] + radius)), grid.height - 1)
    if c0 > c1 or r0 > r1:
        return np.zeros(0, dtype=np.intp)
    rows, cols = np.mgrid[r0:r1 + 1, c0:c1 + 1]
    cells = (rows * grid.width + cols).ravel()
    inside = in_support(grid.centers(cells), head, radius)
    return cells[inside]


def in_support(centers: np.ndarray, head: np.ndarray, radius: float) -> np.ndarray:
    # single membership rule shared with the covariance module
    return _sq_dist(centers, head) <= radius * radius


@dataclass(frozen=True)
class MomentMaps:
    """Mean and variance of the density at one scale under annotation noise.

    ``support[i]`` lists the cells where head ``i`` has non-negligible
    expected mass and ``per_head_mean[i]`` holds its expected kernel values
    there. ``raw_variance`` is the unfloored difference of moments;
    ``variance`` is its positive part plus ``var_floor``.
    """

    grid: ScaleGrid
    alpha: float
    beta: float
    radius: float
    heads: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    raw_variance: np.ndarray
    support: tuple[np.ndarray, ...]
    per_head_mean: tuple[np.ndarray, ...]

    def per_head_dense(self) -> np.ndarray:
        out = np.zeros((len(self.support), self.grid.size))
        for i, (cells, vals) in enumerate(zip(self.support, self.per_head_mean)):
            out[i, cells] = vals
        return out

    def mean_map(self) -> DensityMap:
        return DensityMap(self.grid, self.mean)


def moment_maps(scene: Scene, grid: ScaleGrid, config: ScaleConfig) -> MomentMaps:
    s = grid.scale_index
    alpha, beta = config.alpha, config.beta(s)
    radius = config.support_radius(s)
    heads = scaled_heads(scene, grid)

    mean = np.zeros(grid.size)
    second = np.zeros(grid.size)
    mean_sq = np.zeros(grid.size)
    support, per_head = [], []
    peak_sq = 1.0 / (4.0 * math.pi * beta)
    for h in heads:
        cells = head_support(grid, h, radius)
        r2 = _sq_dist(grid.centers(cells), h)
        mu = _iso_from_sq(r2, alpha + beta)
        mean[cells] += mu
        second[cells] += peak_sq * _iso_from_sq(r2, beta / 2.0 + alpha)
        mean_sq[cells] += mu * mu
        cells.setflags(write=False)
        mu.setflags(write=False)
        support.append(cells)
        per_head.append(mu)

    raw = second - mean_sq
    # additive floor: keeps V and C_L + V_L well conditioned, not just nonzero
    variance = np.maximum(raw, 0.0) + config.var_floor
    for a in (mean, raw, variance):
        a.setflags(write=False)
    heads = heads.copy()
    heads.setflags(write=False)
    return MomentMaps(grid, alpha, beta, radius, heads, mean, variance, raw,
                      tuple(support), tuple(per_head))

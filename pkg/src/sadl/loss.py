"""Multi-scale joint-likelihood loss, per-head mass regularizer and gradient."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DensityMap, Scene, ScaleConfig, ScaleGrid, build_grids
from .gaussian_moments import MomentMaps, moment_maps
from .lowrank import LowRankCov, LowRankInverse, build_lowrank, invert_lowrank, quadratic_form


@dataclass(frozen=True)
class ScalePrecomp:
    """Everything about one scale that depends on annotations but not on predictions."""

    grid: ScaleGrid
    moments: MomentMaps
    cov: LowRankCov
    inverse: LowRankInverse


def precompute(scene: Scene, config: ScaleConfig) -> list[ScalePrecomp]:
    out = []
    for grid in build_grids(scene, config):
        mm = moment_maps(scene, grid, config)
        cov = build_lowrank(scene, mm, config)
        out.append(ScalePrecomp(grid, mm, cov, invert_lowrank(cov)))
    return out


@dataclass(frozen=True)
class LossBreakdown:
    per_scale_quadratic: tuple[float, ...]
    per_scale_regularizer: tuple[float, ...]
    total: float


def _assignment(moments: MomentMaps, guard: float):
    """Per-head share ``mu_i / sum_i' mu_i'`` on each head's support."""
    denom = moments.mean
    shares = []
    for cells, mu in zip(moments.support, moments.per_head_mean):
        d = denom[cells]
        ok = d >= guard
        w = np.zeros_like(mu)
        w[ok] = mu[ok] / d[ok]
        shares.append(w)
    return shares


def _head_sums(values, moments, shares):
    return np.array([math.fsum(values[cells] * w) for cells, w in zip(moments.support, shares)])


def regularizer(pred: DensityMap, moments: MomentMaps, config: ScaleConfig) -> float:
    """Sum over heads of ``|sum_j D(x_j) share_i(x_j) - 1|``."""
    if pred.grid != moments.grid:
        raise ValueError("prediction and moment maps live on different grids")
    shares = _assignment(moments, config.denom_guard)
    inner = _head_sums(pred.values, moments, shares)
    return math.fsum(np.abs(inner - 1.0))


def _check(preds, precomp, config):
    if len(preds) != config.num_scales or len(precomp) != config.num_scales:
        raise ValueError(f"expected {config.num_scales} scales, got {len(preds)} predictions")
    for p, pc in zip(preds, precomp):
        if p.grid != pc.grid:
            raise ValueError(f"prediction grid {p.grid} does not match {pc.grid}")


def total_loss(preds: Sequence[DensityMap], scene: Scene, config: ScaleConfig,
               precomp: Sequence[ScalePrecomp] | None = None) -> LossBreakdown:
    if precomp is None:
        precomp = precompute(scene, config)
    _check(preds, precomp, config)
    quad, reg = [], []
    for s, (p, pc) in enumerate(zip(preds, precomp), start=1):
        resid = p.values - pc.moments.mean
        quad.append(config.weight(s) * quadratic_form(resid, pc.inverse))
        reg.append(regularizer(p, pc.moments, config))
    return LossBreakdown(tuple(quad), tuple(reg), math.fsum(quad + reg))


def loss_gradient(preds: Sequence[DensityMap], scene: Scene, config: ScaleConfig,
                  precomp: Sequence[ScalePrecomp] | None = None) -> list[np.ndarray]:
    """Gradient of the total loss with respect to every predicted density value.

    The absolute value in the regularizer uses subgradient 0 at its kink.
    """
    if precomp is None:
        precomp = precompute(scene, config)
    _check(preds, precomp, config)
    grads = []
    for s, (p, pc) in enumerate(zip(preds, precomp), start=1):
        resid = p.values - pc.moments.mean
        g = 2.0 * config.weight(s) * pc.inverse.matvec(resid)
        shares = _assignment(pc.moments, config.denom_guard)
        inner = _head_sums(p.values, pc.moments, shares)
        for sign, cells, w in zip(np.sign(inner - 1.0), pc.moments.support, shares):
            if sign:
                g[cells] += sign * w
        grads.append(g)
    return grads

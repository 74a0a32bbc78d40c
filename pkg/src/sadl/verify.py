"""Randomized cross-checks of the fast paths against the oracle module.

Each suite draws its own small instances from a seed and returns one
``CheckResult`` per check; the CLI ``verify`` command and the acceptance
tests both drive these.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DensityMap, Scene, ScaleConfig, build_grids
from .gaussian_moments import moment_maps
from .loss import _assignment, _head_sums, loss_gradient, precompute, total_loss
from .lowrank import build_lowrank, invert_lowrank, quadratic_form
from .oracle import dense_covariance, dense_inverse, dense_quadratic_form, fd_gradient, mc_moments


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    tol: float
    passed: bool
    at_least: bool = False  # measured is a pass fraction, not an error

    def line(self) -> str:
        cmp = "min" if self.at_least else "tol"
        return f"{'PASS' if self.passed else 'FAIL'} check={self.name} measured={self.measured:.6g} {cmp}={self.tol:.6g}"


def _error(name, measured, tol):
    return CheckResult(name, float(measured), tol, bool(measured <= tol))


def _fraction(name, measured, tol):
    return CheckResult(name, float(measured), tol, bool(measured >= tol), at_least=True)


def random_scene(rng, min_side, max_side, min_heads, max_heads) -> Scene:
    w = int(rng.integers(min_side, max_side + 1))
    h = int(rng.integers(min_side, max_side + 1))
    n = int(rng.integers(min_heads, max_heads + 1))
    return Scene(w, h, rng.uniform([0, 0], [w, h], size=(n, 2)))


def moments_suite(seed: int, n_scenes: int = 50, n_samples: int = 1_000_000, max_side: int = 16,
                  max_heads: int = 5, min_fraction: float = 0.99, config: ScaleConfig | None = None):
    """Analytic mean, variance and covariance against Monte-Carlo, within 3 standard errors."""
    config = config or ScaleConfig(alpha=8.0, beta1=8.0)
    rng = np.random.default_rng(seed)
    hits = {"mean": [0, 0], "variance": [0, 0], "covariance": [0, 0]}
    for k in range(n_scenes):
        scene = random_scene(rng, 6, max_side, 1, max_heads)
        for grid in build_grids(scene, config):
            mm = moment_maps(scene, grid, config)
            est = mc_moments(scene, grid, config, n_samples, seed=seed * 100_003 + k, covariance=True)
            cov = dense_covariance(scene, grid, config)
            iu = np.triu_indices(grid.size)
            pairs = {
                "mean": (est.mean, mm.mean, est.std_error["mean"]),
                "variance": (est.variance, mm.raw_variance, est.std_error["variance"]),
                "covariance": (est.covariance[iu], cov[iu], est.std_error["covariance"][iu]),
            }
            for key, (mc, exact, se) in pairs.items():
                ok = np.abs(mc - exact) <= 3.0 * se
                hits[key][0] += int(ok.sum())
                hits[key][1] += ok.size
    return [_fraction(f"moments.{k}", h / n, min_fraction) for k, (h, n) in hits.items()]


def lowrank_suite(seed: int, n_instances: int = 50, max_side: int = 32, max_rank: int = 50,
                  tol: float = 1e-8):
    """Woodbury inverse and fast quadratic form against dense linear algebra."""
    rng = np.random.default_rng(seed)
    ident_err = inv_err = quad_err = 0.0
    for _ in range(n_instances):
        scene = random_scene(rng, 8, max_side, 1, 8)
        config = ScaleConfig(alpha=float(rng.uniform(2, 16)), beta1=float(rng.uniform(2, 16)),
                             m_cap=int(rng.integers(2, max_rank + 1)))
        grid = build_grids(scene, config)[0]
        mm = moment_maps(scene, grid, config)
        cov = build_lowrank(scene, mm, config)
        inv = invert_lowrank(cov)
        sigma = cov.dense()
        sigma_inv = inv.dense()
        ident_err = max(ident_err, np.abs(sigma @ sigma_inv - np.eye(grid.size)).max())
        ref = dense_inverse(sigma)
        inv_err = max(inv_err, np.abs(sigma_inv - ref).max() / np.abs(ref).max())
        r = np.sqrt(cov.diag) * rng.standard_normal(grid.size)
        fast = quadratic_form(r, inv)
        slow = dense_quadratic_form(r, sigma)
        quad_err = max(quad_err, abs(fast - slow) / abs(slow))
    return [
        _error("lowrank.identity", ident_err, tol),
        _error("lowrank.inverse_rel", inv_err, tol),
        _error("lowrank.quadratic_rel", quad_err, tol),
    ]


def gradient_instance(rng):
    """Small random scene, config and predictions drawn around the mean maps."""
    scene = random_scene(rng, 5, 12, 0, 4)
    config = ScaleConfig(alpha=float(rng.uniform(2, 16)), beta1=float(rng.uniform(2, 16)),
                         m_cap=int(rng.choice([0, 5, 20, 256])))
    pre = precompute(scene, config)
    preds = []
    for p in pre:
        chol = np.linalg.cholesky(p.cov.dense())
        preds.append(p.moments.mean + chol @ rng.standard_normal(p.grid.size))
    return scene, config, pre, preds


def _near_kink(values, moments, config, h):
    shares = _assignment(moments, config.denom_guard)
    inner = _head_sums(values, moments, shares)
    mask = np.zeros(moments.grid.size, dtype=bool)
    for gap, cells, w in zip(np.abs(inner - 1.0), moments.support, shares):
        mask[cells] |= (w > 0) & (gap <= h * w + 1e-7)
    return mask


def gradient_suite(seed: int, n_instances: int = 100, h: float = 1e-5, tol: float = 1e-5,
                   floor: float = 1e-8):
    """Analytic gradient against central differences away from regularizer kinks."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        scene, config, pre, preds = gradient_instance(rng)
        grids = [p.grid for p in pre]

        def f(xs):
            return total_loss([DensityMap(g, x) for g, x in zip(grids, xs)], scene, config, pre).total

        analytic = loss_gradient([DensityMap(g, x) for g, x in zip(grids, preds)], scene, config, pre)
        numeric = fd_gradient(f, preds, h)
        for a, n, x, p in zip(analytic, numeric, preds, pre):
            keep = (np.abs(a) > floor) & ~_near_kink(x, p.moments, config, h)
            if keep.any():
                worst = max(worst, float(np.max(np.abs(a[keep] - n[keep]) / np.abs(a[keep]))))
    return [_error("gradient.fd_rel", worst, tol)]


SUITES = {
    "moments": moments_suite,
    "lowrank": lowrank_suite,
    "gradient": gradient_suite,
}

"""Diagonal-plus-low-rank covariance and its Woodbury inverse.

The covariance at one scale is approximated as ``V + M C_L M^T``: ``V`` is
the (floored) per-pixel variance and ``C_L`` holds the off-diagonal
covariances among the ``M`` highest-variance pixels ``L``. The selection
operator ``M`` is never materialized; it is an index gather/scatter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import linalg

from .core import Scene, ScaleConfig, ScaleGrid
from .covariance import covariance_block
from .gaussian_moments import MomentMaps

logger = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class NotInvertibleError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class LowRankCov:
    grid: ScaleGrid
    diag: np.ndarray
    indices: np.ndarray
    block: np.ndarray

    @property
    def rank(self) -> int:
        return self.indices.size

    def dense(self) -> np.ndarray:
        out = np.diag(self.diag)
        out[np.ix_(self.indices, self.indices)] += self.block
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        out = self.diag * x
        if self.rank:
            out[self.indices] += self.block @ x[self.indices]
        return out


@dataclass(frozen=True)
class LowRankInverse:
    inv_diag: np.ndarray
    indices: np.ndarray
    correction: np.ndarray
    jitter: float = 0.0

    def dense(self) -> np.ndarray:
        out = np.diag(self.inv_diag)
        out[np.ix_(self.indices, self.indices)] -= self.correction
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        out = self.inv_diag * x
        if self.indices.size:
            out[self.indices] -= self.correction @ x[self.indices]
        return out


def select_top_m(variances, tau: float, m_cap: int) -> np.ndarray:
    """Smallest top-variance set whose share of the total variance exceeds ``tau``.

    Ties go to the smaller pixel index. The result is clamped to ``m_cap``
    and returned sorted ascending.
    """
    v = np.asarray(variances, dtype=np.float64)
    total = v.sum()
    if v.size == 0 or not total > 0 or m_cap == 0:
        return np.zeros(0, dtype=np.intp)
    order = np.lexsort((np.arange(v.size), -v))
    ranked = v[order]
    frac = np.cumsum(ranked) / total
    m = int(np.searchsorted(frac, tau, side="right")) + 1

    # float cumsum can misplace the boundary; settle nearby candidates exactly
    near = np.nonzero(np.abs(frac - tau) < 1e-9)[0]
    if near.size:
        exact_total = sum(map(Fraction, ranked.tolist()))
        target = Fraction(tau) * exact_total
        lo = int(near[0])
        acc = sum(map(Fraction, ranked[:lo].tolist()))
        m = None
        for pos in range(lo, v.size):
            acc += Fraction(ranked[pos])
            if acc > target:
                m = pos + 1
                break
        if m is None:
            m = v.size
    m = min(m, v.size, m_cap)
    return np.sort(order[:m]).astype(np.intp)


def build_lowrank(scene: Scene, moments: MomentMaps, config: ScaleConfig) -> LowRankCov:
    idx = select_top_m(np.maximum(moments.raw_variance, 0.0), config.var_fraction_tau, config.m_cap)
    block = covariance_block(idx, idx, moments)
    block = 0.5 * (block + block.T)
    np.fill_diagonal(block, 0.0)
    diag = moments.variance.copy()
    for a in (diag, idx, block):
        a.setflags(write=False)
    return LowRankCov(moments.grid, diag, idx, block)


def invert_lowrank(cov: LowRankCov) -> LowRankInverse:
    """Woodbury inverse ``V^-1 - M B_L M^T``.

    ``B_L = V_L^-1 [C - C (C + V_L)^-1 C] V_L^-1`` avoids inverting the
    zero-diagonal (often singular) block ``C`` itself. ``C + V_L`` is
    factorized by Cholesky, escalating diagonal jitter when needed.
    """
    inv_diag = 1.0 / cov.diag
    idx = cov.indices
    C = cov.block
    if idx.size == 0 or not np.any(C):
        B = np.zeros((idx.size, idx.size))
        return LowRankInverse(inv_diag, idx, B)

    vl = cov.diag[idx]
    inner = C + np.diag(vl)
    for jitter in JITTER_LADDER:
        try:
            factor = linalg.cho_factor(inner + jitter * np.eye(idx.size), lower=True)
            break
        except linalg.LinAlgError:
            continue
    else:
        raise NotInvertibleError("C_L + V_L is not positive definite after jitter escalation")
    if jitter:
        logger.warning("low-rank inverse needed diagonal jitter %g", jitter)

    core = C - C @ linalg.cho_solve(factor, C)
    s = 1.0 / vl
    B = s[:, None] * core * s[None, :]
    B = 0.5 * (B + B.T)
    return LowRankInverse(inv_diag, idx, B, jitter)


def quadratic_form(residual, inv: LowRankInverse) -> float:
    """``r^T V^-1 r - r_L^T B_L r_L`` in O(M^2 + J) work."""
    r = np.asarray(residual, dtype=np.float64)
    if r.shape != inv.inv_diag.shape:
        raise ValueError(f"residual length {r.shape} does not match grid {inv.inv_diag.shape}")
    val = float(np.dot(r * inv.inv_diag, r))
    if inv.indices.size:
        rl = r[inv.indices]
        val -= float(rl @ (inv.correction @ rl))
    return val

"""Domain types and grid arithmetic shared by every other module."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Scene:
    """Image size plus its (noisy) head annotations in pixel units.

    ``annotations`` is an ``(N, 2)`` array of ``(x, y)`` points with
    ``0 <= x < width`` and ``0 <= y < height``.
    """

    width: int
    height: int
    annotations: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValueError("scene dimensions must be integers")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"scene dimensions must be positive, got {self.width}x{self.height}")
        pts = np.asarray(self.annotations, dtype=np.float64)
        if pts.size == 0:
            pts = np.zeros((0, 2))
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"annotations must have shape (N, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("annotations must be finite")
        inside = (pts[:, 0] >= 0) & (pts[:, 0] < self.width) & (pts[:, 1] >= 0) & (pts[:, 1] < self.height)
        if not np.all(inside):
            bad = pts[~inside][0]
            raise ValueError(f"annotation {tuple(bad)} outside [0, {self.width}) x [0, {self.height})")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "annotations", _frozen(pts))

    @property
    def count(self) -> int:
        return self.annotations.shape[0]

    def mirrored(self) -> "Scene":
        """Left-right reflection about the vertical center line."""
        pts = self.annotations.copy()
        pts[:, 0] = self.width - pts[:, 0]
        # x == 0 reflects onto the open edge; keep it inside
        pts[:, 0] = np.where(pts[:, 0] >= self.width, np.nextafter(self.width, 0), pts[:, 0])
        return Scene(self.width, self.height, pts)


@dataclass(frozen=True)
class ScaleConfig:
    """Noise model and low-rank settings for the multi-scale loss.

    ``alpha`` and ``beta1`` are variances in squared scale-grid units.
    ``alpha = 0`` is accepted and gives the noise-free (deterministic)
    model; ``m_cap = 0`` disables the low-rank block.
    """

    num_scales: int = 3
    alpha: float = 8.0
    beta1: float = 8.0
    weights: tuple[float, ...] | None = None
    var_fraction_tau: float = 0.8
    m_cap: int = 256
    var_floor: float = 1e-8
    denom_guard: float = 1e-12
    factors: tuple[int, ...] | None = None

    def __post_init__(self):
        S = self.num_scales
        if int(S) != S or S < 1:
            raise ValueError("num_scales must be a positive integer")
        if not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")
        if not self.beta1 > 0:
            raise ValueError("beta1 must be positive")
        if not 0 < self.var_fraction_tau < 1:
            raise ValueError("var_fraction_tau must lie in (0, 1)")
        if int(self.m_cap) != self.m_cap or self.m_cap < 0:
            raise ValueError("m_cap must be a non-negative integer")
        if not self.var_floor > 0 or not self.denom_guard > 0:
            raise ValueError("var_floor and denom_guard must be positive")

        weights = self.weights
        if weights is None:
            weights = (1.0 / S,) * S
        weights = tuple(float(w) for w in weights)
        if len(weights) != S:
            raise ValueError(f"expected {S} weights, got {len(weights)}")
        if any(w < 0 for w in weights) or abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "weights", weights)

        factors = self.factors
        if factors is None:
            factors = tuple(2 ** s for s in range(S))
        factors = tuple(int(f) for f in factors)
        if len(factors) != S or any(f < 1 for f in factors):
            raise ValueError("factors must be S positive integers")
        object.__setattr__(self, "factors", factors)

    def beta(self, s: int) -> float:
        """Kernel variance at 1-based scale ``s``; halves at every level."""
        self._check_scale(s)
        return self.beta1 / 2 ** (s - 1)

    def weight(self, s: int) -> float:
        self._check_scale(s)
        return self.weights[s - 1]

    def factor(self, s: int) -> int:
        self._check_scale(s)
        return self.factors[s - 1]

    def support_radius(self, s: int) -> float:
        """Truncation radius of each head's expected kernel, in grid units."""
        return 6.0 * math.sqrt(self.alpha + self.beta(s))

    def _check_scale(self, s):
        if not 1 <= s <= self.num_scales:
            raise ValueError(f"scale index {s} outside 1..{self.num_scales}")


@dataclass(frozen=True)
class ScaleGrid:
    """Sampling lattice of one scale. Cells are indexed row-major."""

    scale_index: int
    factor: int
    width: int
    height: int

    @property
    def size(self) -> int:
        return self.width * self.height

    @property
    def shape(self) -> tuple[int, int]:
        """(rows, cols), for reshaping flat values into an image."""
        return self.height, self.width

    def centers(self, cells=None) -> np.ndarray:
        """Cell-center coordinates ``(col + 0.5, row + 0.5)``, shape (K, 2)."""
        if cells is None:
            cells = np.arange(self.size)
        cells = np.asarray(cells, dtype=np.intp)
        rows, cols = np.divmod(cells, self.width)
        return np.stack([cols + 0.5, rows + 0.5], axis=-1)

    def index_of(self, point) -> int:
        """Row-major index of the cell containing ``point`` (scale units)."""
        col, row = math.floor(point[0]), math.floor(point[1])
        if not (0 <= col < self.width and 0 <= row < self.height):
            raise IndexError(f"point {tuple(point)} outside {self.width}x{self.height} grid")
        return row * self.width + col

    def to_scale_coords(self, point):
        return to_scale_coords(point, self)


@dataclass(frozen=True)
class DensityMap:
    grid: ScaleGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if vals.shape[0] != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {vals.shape[0]}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("density values must be finite")
        object.__setattr__(self, "values", _frozen(vals))

    def image(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def total(self) -> float:
        return math.fsum(self.values)


def build_grids(scene: Scene, config: ScaleConfig) -> list[ScaleGrid]:
    grids = []
    for s in range(1, config.num_scales + 1):
        f = config.factor(s)
        grids.append(ScaleGrid(s, f, -(-scene.width // f), -(-scene.height // f)))
    return grids


def to_scale_coords(point: Sequence[float] | np.ndarray, grid: ScaleGrid) -> np.ndarray:
    return np.asarray(point, dtype=np.float64) / grid.factor

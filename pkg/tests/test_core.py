import numpy as np
import pytest
from hypothesis import given, strategies as st

from sadl.core import DensityMap, Scene, ScaleConfig, ScaleGrid, build_grids, to_scale_coords


def dims(grids):
    return [(g.width, g.height) for g in grids]


def test_build_grids_powers_of_two():
    grids = build_grids(Scene(64, 64), ScaleConfig())
    assert dims(grids) == [(64, 64), (32, 32), (16, 16)]
    assert [g.factor for g in grids] == [1, 2, 4]
    assert [g.scale_index for g in grids] == [1, 2, 3]


def test_build_grids_ceil_division():
    assert dims(build_grids(Scene(65, 64), ScaleConfig(num_scales=2))) == [(65, 64), (33, 32)]


def test_build_grids_degenerate_minimum():
    assert dims(build_grids(Scene(1, 1), ScaleConfig())) == [(1, 1)] * 3


@pytest.mark.parametrize("w,h", [(0, 5), (5, 0), (-1, 3)])
def test_scene_rejects_empty_dimensions(w, h):
    with pytest.raises(ValueError):
        Scene(w, h)


def test_scene_rejects_points_outside():
    with pytest.raises(ValueError):
        Scene(10, 10, [[10.0, 2.0]])
    with pytest.raises(ValueError):
        Scene(10, 10, [[-0.1, 2.0]])
    Scene(10, 10, [[0.0, 9.999]])


def test_empty_scene_is_valid():
    sc = Scene(4, 4, [])
    assert sc.count == 0
    assert sc.annotations.shape == (0, 2)


@pytest.mark.parametrize("point,factor,expected", [
    ((10, 6), 2, (5, 3)),
    ((0, 0), 1, (0, 0)),
    ((0, 0), 8, (0, 0)),
    ((7, 7), 4, (1.75, 1.75)),
])
def test_to_scale_coords(point, factor, expected):
    grid = ScaleGrid(1, factor, 10, 10)
    np.testing.assert_array_equal(to_scale_coords(point, grid), expected)


def test_config_defaults_and_beta_halving():
    cfg = ScaleConfig()
    assert cfg.num_scales == 3 and cfg.alpha == 8.0 and cfg.beta1 == 8.0
    assert cfg.weights == pytest.approx((1 / 3,) * 3)
    assert [cfg.beta(s) for s in (1, 2, 3)] == [8.0, 4.0, 2.0]
    for s in range(1, cfg.num_scales):
        assert cfg.beta(s) / cfg.beta(s + 1) == 2.0


@pytest.mark.parametrize("kwargs", [
    {"num_scales": 0},
    {"alpha": -1.0},
    {"beta1": 0.0},
    {"weights": (0.5, 0.5, 0.1)},
    {"weights": (0.5, 0.5)},
    {"var_fraction_tau": 1.0},
    {"var_fraction_tau": 0.0},
    {"m_cap": -1},
    {"var_floor": 0.0},
])
def test_config_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        ScaleConfig(**kwargs)


def test_density_map_length_and_finiteness():
    g = ScaleGrid(1, 1, 3, 2)
    with pytest.raises(ValueError):
        DensityMap(g, np.zeros(5))
    with pytest.raises(ValueError):
        DensityMap(g, [0, 0, np.nan, 0, 0, 0])
    m = DensityMap(g, [-1, 0, 1, 2, 3, 4])
    assert m.image().shape == (2, 3)
    assert m.total() == 9


@given(w=st.integers(1, 40), h=st.integers(1, 40), data=st.data())
def test_cell_center_round_trip(w, h, data):
    g = ScaleGrid(1, 1, w, h)
    j = data.draw(st.integers(0, g.size - 1))
    assert g.index_of(g.centers([j])[0]) == j


@given(w=st.integers(1, 300), h=st.integers(1, 300), S=st.integers(1, 6))
def test_grid_sizes_non_increasing(w, h, S):
    grids = build_grids(Scene(w, h), ScaleConfig(num_scales=S))
    sizes = [g.size for g in grids]
    assert sizes == sorted(sizes, reverse=True)

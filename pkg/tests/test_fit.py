import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import ndimage

from sadl.core import Scene, ScaleConfig, build_grids
from sadl.fit import SynthSpec, fit_density, mae_mse, synth_points, synth_scene
from sadl.gaussian_moments import gt_density_map


def test_synth_zero_heads():
    assert synth_scene(SynthSpec(head_count=0)).count == 0


def test_synth_deterministic():
    spec = SynthSpec(32, 24, (3, 9), placement="clustered", jitter_alpha=4.0, seed=5)
    a, b = synth_scene(spec), synth_scene(spec)
    assert a.annotations.tobytes() == b.annotations.tobytes()


def test_synth_clustered_has_several_peaks():
    sc = synth_scene(SynthSpec(64, 64, 50, placement="clustered", num_clusters=2, cluster_std=4.0, seed=1))
    g = build_grids(sc, ScaleConfig())[0]
    img = gt_density_map(sc, g, 8.0).image()
    peaks = (img == ndimage.maximum_filter(img, size=5)) & (img > 0.1 * img.max())
    assert peaks.sum() >= 2


def test_synth_respects_bounds_and_margin():
    true, noisy = synth_points(SynthSpec(40, 30, 200, placement="clustered", margin=5, jitter_alpha=30.0, seed=2))
    assert np.all(true >= 5) and np.all(true[:, 0] < 35) and np.all(true[:, 1] < 25)
    assert np.all(noisy >= 0) and np.all(noisy[:, 0] < 40) and np.all(noisy[:, 1] < 30)


@pytest.mark.parametrize("kwargs", [
    {"head_count": -1},
    {"width": 2, "height": 2, "head_count": 17},
    {"placement": "grid"},
    {"margin": 40.0},
])
def test_synth_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        SynthSpec(**{"width": 64, "height": 64, **kwargs})


def test_fit_empty_scene():
    rep = fit_density(Scene(16, 16), ScaleConfig())
    assert rep.counts == [0.0, 0.0, 0.0]
    assert rep.converged
    for m in rep.maps:
        np.testing.assert_array_equal(m.values, 0.0)


def test_fit_single_centered_head_peak():
    sc = Scene(32, 32, [[16.3, 15.8]])
    rep = fit_density(sc, ScaleConfig())
    m = rep.maps[0]
    row, col = divmod(int(np.argmax(m.values)), m.grid.width)
    assert abs(col + 0.5 - 16.3) <= 1 and abs(row + 0.5 - 15.8) <= 1


def test_fit_twelve_interior_heads_every_scale():
    # interior at every scale: 20 px clears the scale-3 support radius in most draws
    sc = synth_scene(SynthSpec(64, 64, 12, margin=20, seed=0))
    rep = fit_density(sc, ScaleConfig())
    assert rep.gt_count == 12
    for c in rep.counts:
        assert c == pytest.approx(12, rel=0.05)


def test_fit_trajectory_non_increasing():
    sc = synth_scene(SynthSpec(32, 32, 6, placement="clustered", seed=3))
    for pre in ("covariance", "diagonal", "none"):
        rep = fit_density(sc, ScaleConfig(), max_iters=15, precondition=pre)
        assert np.all(np.diff(rep.trajectory) <= 0)
        assert rep.trajectory[-1] == rep.breakdown.total
        assert len(rep.trajectory) == rep.iterations + 1


def test_fit_report_dict():
    rep = fit_density(Scene(8, 8, [[4.0, 4.0]]), ScaleConfig(), max_iters=3)
    d = rep.as_dict()
    assert d["gt_count"] == 1 and d["iterations"] == rep.iterations
    assert len(d["counts"]) == 3


def test_mae_mse_examples():
    assert mae_mse([1, 2, 3], [1, 2, 3]) == (0.0, 0.0)
    mae, mse = mae_mse([10, 20], [12, 16])
    assert mae == 3.0
    assert mse == math.sqrt(10)
    assert mae_mse([7.5], [5.0]) == (2.5, 2.5)


@pytest.mark.parametrize("p,g", [([], []), ([1, 2], [1]), ([[1]], [[1]])])
def test_mae_mse_rejects(p, g):
    with pytest.raises(ValueError):
        mae_mse(p, g)


@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), min_size=1, max_size=30))
def test_mae_at_most_mse(pairs):
    p, g = zip(*pairs)
    mae, mse = mae_mse(p, g)
    assert mae <= mse * (1 + 1e-12) + 1e-12


def test_scale_aware_beats_plain_diagonal_under_jitter():
    # expected red: both losses recover the annotated mass, and the wider
    # scale-aware kernel leaks more of it past the border
    specs = [SynthSpec(64, 64, (5, 20), margin=12, jitter_alpha=8.0, seed=s) for s in range(20)]
    scenes = [synth_scene(sp) for sp in specs]
    truth = [len(synth_points(sp)[0]) for sp in specs]

    def error(config):
        counts = [fit_density(sc, config, max_iters=40).counts[0] for sc in scenes]
        return mae_mse(counts, truth)[0]

    assert error(ScaleConfig(alpha=8.0)) <= error(ScaleConfig(alpha=0.0, m_cap=0))

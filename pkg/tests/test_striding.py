import numpy as np
import pytest
from hypothesis import given, strategies as st

from metricpose.errors import ContractError
from metricpose.striding import StridingConfig, parent_centroids, receptive_centers, receptive_grid

STRIDES = [8, 16, 32, 64]


def configs():
    for s in STRIDES:
        for size in range(s, 1025, s):
            yield size, s


def test_examples():
    normal = receptive_centers(StridingConfig(256, 32, "normal"))
    assert normal.tolist() == list(range(0, 225, 32))
    assert normal.mean() == 112
    centered = receptive_centers(StridingConfig(256, 32, "centered"))
    assert centered.tolist() == list(range(16, 241, 32))
    assert centered.mean() == 128
    assert receptive_centers(StridingConfig(256, 16, "centered")).tolist() == list(range(8, 249, 16))


def test_means_exact_for_all_configs():
    for size, s in configs():
        assert receptive_centers(StridingConfig(size, s, "centered")).mean() == size / 2
        assert receptive_centers(StridingConfig(size, s, "normal")).mean() == size / 2 - s / 2


def test_halving_centroid_for_all_configs():
    for size, s in configs():
        cfg = StridingConfig(size, s, "centered")
        assert np.array_equal(parent_centroids(cfg), receptive_centers(cfg))


def test_halving_centroid_in_2d():
    coarse = StridingConfig(256, 32)
    fine = receptive_grid(StridingConfig(256, 16))
    for c in receptive_grid(coarse):
        d = np.linalg.norm(fine - c, axis=1)
        nearest = fine[np.argsort(d, kind="stable")[:4]]
        # the four nearest are equidistant and strictly closer than the fifth
        assert np.ptp(d[np.argsort(d)[:4]]) == 0 and np.sort(d)[4] > np.sort(d)[3]
        assert np.array_equal(nearest.mean(axis=0), c)


def test_normal_mode_breaks_halving_property():
    cfg = StridingConfig(256, 32, "normal")
    assert not np.array_equal(parent_centroids(cfg), receptive_centers(cfg))


def test_grid_shape():
    grid = receptive_grid(StridingConfig(64, 16))
    assert grid.shape == (16, 2)
    assert grid[0].tolist() == [8, 8] and grid[1].tolist() == [24, 8]


@given(st.integers(1, 64), st.integers(1, 40), st.sampled_from(["normal", "centered"]))
def test_center_count_and_spacing(s, n, mode):
    c = receptive_centers(StridingConfig(s * n, s, mode))
    assert len(c) == n
    assert np.all(np.diff(c) == s)


@pytest.mark.parametrize("size,stride", [(250, 32), (256, 0), (0, 8)])
def test_invalid_configs(size, stride):
    with pytest.raises(ContractError):
        StridingConfig(size, stride)

import numpy as np
import pytest

from gcmdisp.errors import DimensionError, ParameterError
from gcmdisp.grids import Baseline, ViewSet, as_image, displacement_of, to_grayscale


@pytest.mark.parametrize(
    "rgb, expected",
    [((1.0, 1.0, 1.0), 1.0), ((0.0, 0.0, 0.0), 0.0), ((1.0, 0.0, 0.0), 0.299)],
)
def test_grayscale_examples(rgb, expected):
    channels = [np.full((2, 3), c) for c in rgb]
    assert np.allclose(to_grayscale(channels), expected, atol=1e-15)
    stacked = np.stack(channels, axis=-1)
    assert np.allclose(to_grayscale(stacked), expected, atol=1e-15)


def test_grayscale_clamps_and_rejects_mismatch():
    assert to_grayscale([np.full((1, 1), 2.0)] * 3)[0, 0] == 1.0
    with pytest.raises(DimensionError):
        to_grayscale([np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2))])
    with pytest.raises(DimensionError):
        to_grayscale([np.zeros((2, 2))] * 2)


@pytest.mark.parametrize(
    "b, w, expected",
    [((1, 0), 0.5, (0.5, 0)), ((2, -1), 0.0, (0, 0)), ((0, 4), 0.25, (0, 1))],
)
def test_displacement_examples(b, w, expected):
    assert displacement_of(b, w) == pytest.approx(expected)


def test_displacement_linear_in_w(rng):
    w = rng.normal(size=(4, 5))
    d1, d2 = displacement_of(Baseline(1.5, -0.5), 3.0 * w)
    e1, e2 = displacement_of(Baseline(1.5, -0.5), w)
    assert np.allclose(d1, 3.0 * e1) and np.allclose(d2, 3.0 * e2)


def test_as_image_validation():
    img = as_image([[0.0, 1.0]])
    assert img.dtype == np.float64 and not img.flags.writeable
    with pytest.raises(DimensionError):
        as_image(np.zeros(3))
    with pytest.raises(ParameterError):
        as_image([[np.nan]])


class TestViewSet:
    def test_rejects_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ViewSet.build(np.zeros((4, 4)), [("a", np.zeros((4, 5)), (1, 0))])
        with pytest.raises(DimensionError):
            ViewSet.build(np.zeros((4, 4)), [("a", np.zeros((4, 4)), (1, 0))], np.zeros((3, 4)))

    def test_rejects_zero_and_duplicate_baselines(self):
        img = np.zeros((4, 4))
        with pytest.raises(ParameterError):
            ViewSet.build(img, [("a", img, (0, 0))])
        with pytest.raises(ParameterError):
            ViewSet.build(img, [("a", img, (1, 0)), ("b", img, (1, 0))])

    def test_subset_and_properties(self):
        img = np.zeros((4, 4))
        vs = ViewSet.build(img, [("a", img, (1, 0)), ("b", img, (0, 2)), ("c", img, (-3, 0))])
        assert vs.shape == (4, 4)
        assert vs.max_baseline == 3.0
        sub = vs.subset([0, 2])
        assert [t.view_id for t in sub.targets] == ["a", "c"]

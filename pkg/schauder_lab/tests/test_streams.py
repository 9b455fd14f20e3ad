"""
Tests for the noise.streams module.
"""

import numpy as np
import pytest

from schauder_lab.noise.streams import PURPOSE_TAGS, stream


def test_stream_is_reproducible():
    first = stream(7, 3, "wiener").standard_normal(5)
    second = stream(7, 3, "wiener").standard_normal(5)
    np.testing.assert_array_equal(first, second)


@pytest.mark.parametrize("other", [(8, 3, "wiener"), (7, 4, "wiener"), (7, 3, "marks")])
def test_streams_differ_across_keys(other):
    np.testing.assert_raises(
        AssertionError,
        np.testing.assert_array_equal,
        stream(7, 3, "wiener").random(4),
        stream(*other).random(4),
    )


def test_stream_does_not_depend_on_draw_order():
    """Drawing another path first leaves a path's stream untouched."""
    stream(0, 1, "jump-count").random(1000)
    late = stream(0, 2, "jump-count").random(3)
    np.testing.assert_array_equal(late, stream(0, 2, "jump-count").random(3))


def test_unknown_purpose_is_rejected():
    assert "h-factor" in PURPOSE_TAGS
    with pytest.raises(ValueError, match="unknown purpose tag"):
        stream(0, 0, "volatility")


def test_negative_indices_are_rejected():
    with pytest.raises(ValueError):
        stream(-1, 0, "wiener")

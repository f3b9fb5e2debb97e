import numpy as np
import pytest

from robustarb.market_data import AssetBounds, PathMatrix, PriceSeries


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def single_asset_series():
    """The 4-point single-asset history behind the hand-checked path examples."""
    return PriceSeries(("d1", "d2", "d3", "d4"),
                       np.array([[100.0], [110.0], [99.0], [121.0]]), ("X",))


@pytest.fixture
def tiny_paths():
    """Two hand-checkable 1-asset paths of 2 steps anchored at spot 100."""
    return PathMatrix(np.array([[[110.0], [99.0]], [[90.0], [110.0]]]),
                      np.array([100.0]))


@pytest.fixture
def unit_bounds_2d():
    return AssetBounds(np.array([0.0, 0.0]), np.array([10.0, 10.0]), 0.0)


def write_csv(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n",
                    encoding="utf-8")

import numpy as np
import pytest

from camorank.metrics import r_mae
from oracles import oracle_r_mae


def test_identity_is_zero():
    gt = np.array([[0, 1], [2, 3]])
    assert r_mae(gt, gt) == 0.0


def test_single_pixel_easiest_as_hardest():
    assert r_mae(np.array([[1]]), np.array([[3]])) == 2.0


def test_hand_2x2():
    gt = np.array([[0, 1], [2, 3]])
    pred = np.array([[0, 2], [2, 2]])
    assert r_mae(pred, gt) == pytest.approx(0.5)


def test_ordering_property():
    # an easiest-rank pixel mispredicted as hardest costs strictly more
    # than mispredicted as median
    gt = np.full((4, 4), 3)
    as_median = np.full((4, 4), 2)
    as_hardest = np.full((4, 4), 1)
    assert r_mae(as_hardest, gt) > r_mae(as_median, gt)


def test_symmetry_and_range():
    rng = np.random.default_rng(0)
    for _ in range(30):
        h, w = rng.integers(1, 9, size=2)
        a = rng.integers(0, 4, size=(h, w))
        b = rng.integers(0, 4, size=(h, w))
        v = r_mae(a, b)
        assert v == r_mae(b, a)
        assert 0.0 <= v <= 3.0


def test_oracle_equivalence():
    rng = np.random.default_rng(1)
    for _ in range(40):
        h, w = rng.integers(1, 9, size=2)
        a = rng.integers(0, 4, size=(h, w))
        b = rng.integers(0, 4, size=(h, w))
        assert r_mae(a, b) == pytest.approx(oracle_r_mae(a, b), abs=1e-12)


def test_uint8_maps_do_not_wrap():
    a = np.zeros((2, 2), dtype=np.uint8)
    b = np.full((2, 2), 3, dtype=np.uint8)
    assert r_mae(a, b) == 3.0


def test_domain_validation():
    with pytest.raises(ValueError, match="rank values"):
        r_mae(np.array([[4]]), np.array([[0]]))
    with pytest.raises(ValueError, match="integers"):
        r_mae(np.array([[0.5]]), np.array([[0.0]]))
    with pytest.raises(ValueError, match="shape"):
        r_mae(np.zeros((2, 2), int), np.zeros((3, 3), int))

import numpy as np
import pytest

from camorank.metrics import (
    auc_borji,
    auc_judd,
    cc,
    emd,
    fixation_metrics,
    kld,
    nss,
    shuffled_auc,
    sim,
)
from oracles import (
    oracle_auc_borji,
    oracle_auc_judd,
    oracle_cc,
    oracle_emd,
    oracle_kld,
    oracle_nss,
    oracle_shuffled_auc,
    oracle_sim,
)


def random_density(rng, h, w):
    return rng.uniform(0, 1, size=(h, w)) ** 2


def random_points(rng, h, w, n):
    xs = rng.integers(0, w, size=n)
    ys = rng.integers(0, h, size=n)
    return np.stack([xs, ys], axis=1)


# ----------------------------------------------------------------------
# identical-distribution fixtures
# ----------------------------------------------------------------------

def test_identical_distributions():
    rng = np.random.default_rng(0)
    d = random_density(rng, 6, 6)
    assert sim(d, d) == pytest.approx(1.0)
    assert cc(d, d) == pytest.approx(1.0)
    assert kld(d, d) == pytest.approx(0.0, abs=1e-12)
    assert emd(d, d) == pytest.approx(0.0, abs=1e-9)


def test_nss_uniform_prediction_is_zero():
    pred = np.full((5, 5), 0.3)
    assert nss(pred, [(2, 2)]) == 0.0


def test_nss_peak_at_fixation_is_positive():
    pred = np.zeros((5, 5))
    pred[2, 3] = 1.0
    assert nss(pred, [(3, 2)]) > 0  # points are (x, y)


def test_point_metrics_need_points():
    pred = np.random.default_rng(1).uniform(size=(4, 4))
    for metric in (nss, auc_judd, auc_borji):
        with pytest.raises(ValueError, match="point"):
            metric(pred, [])


def test_points_out_of_bounds_rejected():
    with pytest.raises(ValueError, match="outside"):
        nss(np.zeros((4, 4)), [(4, 0)])


def test_negative_density_rejected():
    with pytest.raises(ValueError, match="nonnegative"):
        sim(np.full((2, 2), -0.1), np.ones((2, 2)))


def test_all_zero_pred_kld_is_finite():
    gt = np.zeros((4, 4))
    gt[1, 2] = 1.0
    value = kld(np.zeros((4, 4)), gt)
    assert np.isfinite(value)
    assert value > 0


# ----------------------------------------------------------------------
# EMD specifics
# ----------------------------------------------------------------------

def test_emd_point_masses_closed_form():
    a = np.zeros((8, 8))
    b = np.zeros((8, 8))
    a[1, 1] = 1.0
    b[5, 4] = 1.0
    assert emd(a, b) == pytest.approx(np.hypot(4, 3), abs=1e-9)


def test_emd_split_mass_closed_form():
    # half the mass moves 2 pixels, half stays: cost = 0.5 * 2
    a = np.zeros((6, 6))
    b = np.zeros((6, 6))
    a[2, 2] = 1.0
    b[2, 2] = 0.5
    b[2, 4] = 0.5
    assert emd(a, b) == pytest.approx(1.0, abs=1e-9)


def test_emd_symmetry():
    rng = np.random.default_rng(2)
    p, q = random_density(rng, 5, 5), random_density(rng, 5, 5)
    assert emd(p, q) == pytest.approx(emd(q, p), abs=1e-9)


def test_emd_downsample_path_runs():
    rng = np.random.default_rng(3)
    p, q = random_density(rng, 64, 64), random_density(rng, 64, 64)
    value = emd(p, q)
    assert np.isfinite(value)
    assert value >= 0


def test_emd_translation_distance_scales():
    a = np.zeros((8, 8))
    b = np.zeros((8, 8))
    a[0, 0] = 1.0
    b[0, 7] = 1.0
    assert emd(a, b) == pytest.approx(7.0, abs=1e-9)


# ----------------------------------------------------------------------
# oracle equivalence on random grids
# ----------------------------------------------------------------------

@pytest.mark.parametrize("metric,oracle,tol", [
    (sim, oracle_sim, 1e-9),
    (cc, oracle_cc, 1e-9),
    (kld, oracle_kld, 1e-9),
])
def test_distribution_oracle_equivalence(metric, oracle, tol):
    rng = np.random.default_rng(4)
    for _ in range(40):
        h, w = rng.integers(1, 9, size=2)
        p, q = random_density(rng, h, w), random_density(rng, h, w)
        assert metric(p, q) == pytest.approx(oracle(p, q), abs=tol)


def test_emd_oracle_equivalence():
    rng = np.random.default_rng(5)
    for _ in range(10):
        h, w = rng.integers(2, 9, size=2)
        p, q = random_density(rng, h, w), random_density(rng, h, w)
        assert emd(p, q) == pytest.approx(oracle_emd(p, q), abs=1e-6)


def test_point_metric_oracle_equivalence():
    rng = np.random.default_rng(6)
    for _ in range(25):
        h, w = rng.integers(2, 9, size=2)
        pred = random_density(rng, h, w)
        pts = random_points(rng, h, w, int(rng.integers(1, 6)))
        if len(np.unique(pts, axis=0)) == pts.shape[0] * 0:  # pragma: no cover
            continue
        assert nss(pred, pts) == pytest.approx(oracle_nss(pred, pts), abs=1e-9)
        if (np.zeros((h, w), bool).size - len(np.unique(pts, axis=0))) > 0:
            assert auc_judd(pred, pts) == pytest.approx(
                oracle_auc_judd(pred, pts), abs=1e-9)
        assert auc_borji(pred, pts) == pytest.approx(
            oracle_auc_borji(pred, pts), abs=1e-9)


def test_shuffled_auc_oracle_equivalence():
    rng = np.random.default_rng(7)
    for _ in range(5):
        pred = random_density(rng, 8, 8)
        pts = random_points(rng, 8, 8, 4)
        pool = random_points(rng, 8, 8, 12)
        ours = shuffled_auc(pred, pts, pool, n_shuffles=20, seed=3)
        ref = oracle_shuffled_auc(pred, pts, pool, n_shuffles=20, seed=3)
        assert ours == pytest.approx(ref, abs=1e-9)


def test_shuffled_auc_seed_determinism():
    rng = np.random.default_rng(8)
    pred = random_density(rng, 8, 8)
    pts = random_points(rng, 8, 8, 4)
    pool = random_points(rng, 8, 8, 10)
    a = shuffled_auc(pred, pts, pool, seed=11)
    b = shuffled_auc(pred, pts, pool, seed=11)
    assert a == b


# ----------------------------------------------------------------------
# ranges and equivariance
# ----------------------------------------------------------------------

def test_metric_ranges():
    rng = np.random.default_rng(9)
    for _ in range(15):
        p, q = random_density(rng, 6, 6), random_density(rng, 6, 6)
        pts = random_points(rng, 6, 6, 3)
        assert 0.0 <= sim(p, q) <= 1.0
        assert -1.0 <= cc(p, q) <= 1.0
        assert kld(p, q) >= 0.0
        assert emd(p, q) >= 0.0
        assert 0.0 <= auc_judd(p, pts) <= 1.0
        assert 0.0 <= auc_borji(p, pts) <= 1.0


def test_pointwise_metrics_permutation_equivariant():
    rng = np.random.default_rng(10)
    p, q = random_density(rng, 5, 5), random_density(rng, 5, 5)
    perm = rng.permutation(25)
    pp = p.ravel()[perm].reshape(5, 5)
    qp = q.ravel()[perm].reshape(5, 5)
    for metric in (sim, cc, kld):
        assert metric(pp, qp) == pytest.approx(metric(p, q), abs=1e-12)


def test_geometric_metrics_isometry_equivariant():
    rng = np.random.default_rng(11)
    p, q = random_density(rng, 6, 6), random_density(rng, 6, 6)
    for transform in (np.fliplr, np.flipud, np.rot90):
        assert emd(transform(p).copy(), transform(q).copy()) == \
            pytest.approx(emd(p, q), abs=1e-6)


def test_fixation_metrics_bundle():
    rng = np.random.default_rng(12)
    d = random_density(rng, 6, 6)
    pts = random_points(rng, 6, 6, 3)
    out = fixation_metrics(d, d, pts)
    assert out["SIM"] == pytest.approx(1.0)
    assert out["CC"] == pytest.approx(1.0)
    assert out["KLD"] == pytest.approx(0.0, abs=1e-12)
    assert out["EMD"] == pytest.approx(0.0, abs=1e-9)
    assert out["sAUC"] is None
    pool = random_points(rng, 6, 6, 8)
    out = fixation_metrics(d, d, pts, shuffle_points=pool, n_shuffles=10)
    assert out["sAUC"] is not None

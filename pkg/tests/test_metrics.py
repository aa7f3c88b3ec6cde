"""Evaluation metrics against hand values, brute-force oracles, and
invariance properties."""

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from cloudup.core import SparseCloud, normalize_unit_sphere
from cloudup.errors import ContractError, RangeError
from cloudup.metrics import MetricReport, evaluate, metric_cd, \
    metric_cd_bruteforce, metric_hd, metric_hd_bruteforce, metric_jsd, \
    metric_jsd_bruteforce, metric_nuc, metric_nuc_bruteforce, metric_p2f
from cloudup.surfaces import GaussianBump, Sphere

from conftest import make_rng, random_cloud


def _rigid(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    rot = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
    return rot, rng.normal(size=3)


# ---------------------------------------------------------------- cd / hd

def test_cd_hand_values(rng):
    pts = random_cloud(rng, 25)
    assert metric_cd(pts, pts.copy()) == 0.0
    assert metric_cd(np.zeros((1, 3)), np.array([[1.0, 0.0, 0.0]])) == 2.0


def test_hd_hand_values(rng):
    pts = random_cloud(rng, 25)
    assert metric_hd(pts, pts.copy()) == 0.0
    p = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    g = np.array([[1.0, 0.0, 0.0]])
    assert metric_hd(p, g) == 1.0


def test_hd_outlier_dominates(rng):
    p = random_cloud(rng, 30)
    g = random_cloud(rng, 30)
    base = metric_hd(p, g)
    outlier = np.array([[50.0, 0.0, 0.0]])
    spiked = np.concatenate([p, outlier], axis=0)
    expected = np.min(np.linalg.norm(g - outlier, axis=1))
    assert expected > base
    assert abs(metric_hd(spiked, g) - expected) < 1e-12


def test_hd_symmetric_and_bounds_directional(rng):
    for _ in range(10):
        p = random_cloud(rng, int(rng.integers(2, 40)))
        g = random_cloud(rng, int(rng.integers(2, 40)))
        hd = metric_hd(p, g)
        assert hd == metric_hd(g, p)
        d = cdist(p, g)
        assert hd >= d.min(axis=1).max() - 1e-15
        assert hd >= d.min(axis=0).max() - 1e-15


def test_cd_hd_match_bruteforce(rng):
    for _ in range(15):
        p = random_cloud(rng, int(rng.integers(2, 128)))
        g = random_cloud(rng, int(rng.integers(2, 128)))
        assert abs(metric_cd(p, g) - metric_cd_bruteforce(p, g)) < 1e-12
        assert abs(metric_hd(p, g) - metric_hd_bruteforce(p, g)) < 1e-12


def test_cd_hd_empty_errors():
    with pytest.raises(RangeError):
        metric_cd(np.zeros((0, 3)), np.ones((2, 3)))
    with pytest.raises(RangeError):
        metric_hd(np.ones((2, 3)), np.zeros((0, 3)))


def test_cd_hd_rigid_invariance(rng):
    p = random_cloud(rng, 40)
    g = random_cloud(rng, 35)
    rot, shift = _rigid(rng)
    p2, g2 = p @ rot.T + shift, g @ rot.T + shift
    assert abs(metric_cd(p, g) - metric_cd(p2, g2)) < 1e-9
    assert abs(metric_hd(p, g) - metric_hd(p2, g2)) < 1e-9


# -------------------------------------------------------------------- jsd

def test_jsd_identical_and_disjoint(rng):
    pts = random_cloud(rng, 60) * 0.9
    assert metric_jsd(pts, pts.copy()) == 0.0
    left = random_cloud(rng, 40) * 0.2 - np.array([0.7, 0.0, 0.0])
    right = random_cloud(rng, 40) * 0.2 + np.array([0.7, 0.0, 0.0])
    assert abs(metric_jsd(left, right) - np.log(2.0)) < 1e-12


def test_jsd_symmetric_bounded_matches_oracle(rng):
    for _ in range(10):
        p = random_cloud(rng, int(rng.integers(2, 100))) * 0.95
        g = random_cloud(rng, int(rng.integers(2, 100))) * 0.95
        val = metric_jsd(p, g)
        assert 0.0 <= val <= np.log(2.0) + 1e-15
        assert val == metric_jsd(g, p)
        assert abs(val - metric_jsd_bruteforce(p, g)) < 1e-12


def test_jsd_grid_rotation_invariance(rng):
    # quarter turn about z maps the voxel grid onto itself
    p = random_cloud(rng, 50) * 0.9
    g = random_cloud(rng, 50) * 0.9
    rot90 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert abs(metric_jsd(p, g)
               - metric_jsd(p @ rot90.T, g @ rot90.T)) < 1e-12


def test_jsd_out_of_range_points_clipped(rng):
    # points outside [-1,1]^3 land in the boundary voxel, not out of bounds
    p = np.array([[1.5, 0.0, 0.0], [0.99, 0.0, 0.0]])
    g = np.array([[2.5, 0.0, 0.0]])
    assert metric_jsd(p, g) < np.log(2.0)


def test_jsd_empty_errors():
    with pytest.raises(RangeError):
        metric_jsd(np.zeros((0, 3)), np.ones((2, 3)))


# -------------------------------------------------------------------- p2f

def test_p2f_sphere_hand_value():
    mean, std = metric_p2f(np.array([[1.5, 0.0, 0.0]]), Sphere(1.0))
    assert abs(mean - 0.5) < 1e-12
    assert std == 0.0


def test_p2f_on_surface_zero(rng):
    sphere = Sphere(1.0)
    pts = random_cloud(rng, 30)
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    mean, std = metric_p2f(pts, sphere)
    assert mean <= 1e-9 and std <= 1e-9


def test_p2f_bump_matches_line_search(rng):
    bump = GaussianBump(0.5, 0.5)
    pts = random_cloud(rng, 12) * 0.8
    for point in pts:
        fast = bump.distance(point)
        slow = bump.distance_bruteforce(point)
        assert abs(fast - slow) < 1e-6
        assert fast <= slow + 1e-9


def test_p2f_requires_surface(rng):
    with pytest.raises(ContractError):
        metric_p2f(random_cloud(rng, 4), None)


# -------------------------------------------------------------------- nuc

def test_nuc_zero_when_all_counts_equal(rng):
    # cloud diameter below the ball radius: every ball holds every point
    pts = random_cloud(rng, 30)
    pts *= 0.2 / np.max(np.linalg.norm(pts, axis=1))
    assert np.max(cdist(pts, pts)) < 0.5
    assert metric_nuc(pts, 0.25) == 0.0


def test_nuc_matches_bruteforce(rng):
    for _ in range(10):
        pts = random_cloud(rng, int(rng.integers(5, 200)))
        for frac in (0.004, 0.01, 0.05):
            assert abs(metric_nuc(pts, frac)
                       - metric_nuc_bruteforce(pts, frac)) < 1e-12


def test_nuc_rigid_invariance(rng):
    pts = random_cloud(rng, 80)
    rot, shift = _rigid(rng)
    assert abs(metric_nuc(pts, 0.01)
               - metric_nuc(pts @ rot.T + shift, 0.01)) < 1e-9


def test_nuc_range_error(rng):
    with pytest.raises(RangeError):
        metric_nuc(random_cloud(rng, 10), 1.5)


# --------------------------------------------------------------- evaluate

def test_evaluate_identity_and_keys(rng):
    gt = random_cloud(rng, 50)
    report = evaluate(gt.copy(), gt, metrics=("cd", "hd", "jsd", "nuc"),
                      nuc_p=(0.01, 0.012))
    d = report.as_dict()
    assert d["cd"] == 0.0 and d["hd"] == 0.0 and d["jsd"] == 0.0
    assert set(d) == {"cd", "hd", "jsd", "nuc_0.01", "nuc_0.012"}


def test_evaluate_p2f_normalized_scale(rng):
    sphere = Sphere(2.0)
    gt = random_cloud(rng, 40)
    gt = 2.0 * gt / np.linalg.norm(gt, axis=1, keepdims=True)
    pred = 2.5 * gt / 2.0  # radius 2.5: true distance 0.5 per point
    report = evaluate(pred, gt, metrics=("p2f",), surface=sphere)
    _, _, scale = normalize_unit_sphere(SparseCloud(gt))
    assert abs(report.p2f_mean - 0.5 / scale) < 1e-9
    assert report.p2f_std < 1e-9


def test_evaluate_rejects_bad_requests(rng):
    gt = random_cloud(rng, 10)
    with pytest.raises(ContractError):
        evaluate(gt, gt, metrics=("cd", "volume"))
    with pytest.raises(ContractError):
        evaluate(gt, gt, metrics=("p2f",), surface=None)


def test_report_lines_roundtrip():
    report = MetricReport(cd=0.125, nuc_by_p={0.01: 0.5})
    assert report.as_lines() == ["cd=0.125", "nuc_0.01=0.5"]
    parsed = {line.split("=")[0]: float(line.split("=")[1])
              for line in report.as_lines()}
    assert parsed == report.as_dict()

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weaklift.geometry import knn
from weaklift.losses import (chamfer_distance, focal_alignment_grad, focal_alignment_loss,
                             hinge_center_loss, local_graph_feature, proposal_alignment_loss,
                             relaxed_kps_sample, weak_detection_loss)


# -- hinge ---------------------------------------------------------------------------

def test_hinge_zero_on_exact_centres():
    gt = np.array([[0, 0, 0], [2, 1, 0]], dtype=float)
    assert hinge_center_loss(gt, gt, [1.0, 1.0]) == 0.0


def test_hinge_outside_margin():
    assert hinge_center_loss([[0.1, 0, 0]], [[0, 0, 0]], [1.0]) == pytest.approx(0.05, abs=1e-15)


def test_hinge_inside_margin():
    assert hinge_center_loss([[0.04, 0, 0]], [[0, 0, 0]], [1.0]) == 0.0


def test_hinge_uses_nearest_ground_truth():
    gt = [[0, 0, 0], [10, 0, 0]]
    pred = [[9.7, 0, 0], [0.2, 0, 0]]
    # 0.3 - 0.05 * 2 and 0.2 - 0.05 * 1
    assert hinge_center_loss(pred, gt, [1.0, 2.0]) == pytest.approx(0.2 + 0.15)


def test_hinge_needs_ground_truth():
    with pytest.raises(ValueError):
        hinge_center_loss([[0, 0, 0]], np.zeros((0, 3)), [])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 0.5))
def test_hinge_nonnegative_and_zero_iff_within_margin(seed, lam):
    rng = np.random.default_rng(seed)
    gt = rng.normal(size=(4, 3))
    pred = rng.normal(size=(6, 3))
    sizes = rng.uniform(0.1, 3, size=4)
    loss = hinge_center_loss(pred, gt, sizes, lam)
    d = np.linalg.norm(pred[:, None] - gt[None], axis=2)
    nearest = d.argmin(axis=1)
    within = d[np.arange(6), nearest] <= lam * sizes[nearest]
    assert loss >= 0
    assert (loss == 0) == bool(within.all())


# -- chamfer ---------------------------------------------------------------------------

def test_chamfer_identical_sets():
    a = np.random.default_rng(0).normal(size=(20, 3))
    assert chamfer_distance(a, a) == 0.0


def test_chamfer_two_points():
    assert chamfer_distance([[0, 0, 0]], [[1, 0, 0]]) == 2.0


def brute_chamfer(a, b):
    d = ((a[:, None] - b[None]) ** 2).sum(axis=2)
    return d.min(axis=1).mean() + d.min(axis=0).mean()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 30), st.integers(1, 30))
def test_chamfer_symmetric_and_matches_brute_force(seed, n, m):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(n, 3)), rng.normal(size=(m, 3))
    assert chamfer_distance(a, b) == chamfer_distance(b, a)
    assert chamfer_distance(a, b) == pytest.approx(brute_chamfer(a, b), rel=1e-12)


def test_chamfer_rejects_empty():
    with pytest.raises(ValueError):
        chamfer_distance(np.zeros((0, 3)), [[0, 0, 0]])


# -- focal and proposal alignment ----------------------------------------------------

def test_focal_confident_samples_are_free():
    assert focal_alignment_loss([1.0, 1.0, 1.0]) == 0.0


def test_focal_half_probability():
    assert focal_alignment_loss([0.5], gamma=3) == pytest.approx(0.125 * math.log(2), abs=1e-12)
    assert focal_alignment_loss([0.5], gamma=3) == pytest.approx(0.0866434, abs=1e-6)


def test_focal_clamps_zero_probability():
    assert focal_alignment_loss([0.0]) == pytest.approx(-math.log(1e-7) * (1 - 1e-7) ** 3)


def test_focal_strictly_decreasing():
    p = np.linspace(0.01, 0.99, 99)
    values = [focal_alignment_loss([v]) for v in p]
    assert np.all(np.diff(values) < 0)


@pytest.mark.parametrize("p", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
def test_focal_gradient_matches_central_difference(p):
    h = 1e-5
    numeric = (focal_alignment_loss([p + h]) - focal_alignment_loss([p - h])) / (2 * h)
    analytic = float(focal_alignment_grad([p])[0])
    assert abs(analytic - numeric) <= 1e-4 * abs(numeric)


def test_proposal_loss_cases():
    assert proposal_alignment_loss(np.ones((2, 3)), np.ones((2, 3))) == 0.0
    assert proposal_alignment_loss(np.full((2, 3), 0.3), np.zeros((2, 3))) == 0.0
    assert proposal_alignment_loss([[0.5]], [[1]]) == 0.25
    with pytest.raises(ValueError):
        proposal_alignment_loss(np.ones((2, 3)), np.ones((3, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_proposal_loss_bounded_by_object_count(seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(size=(4, 8))
    s = rng.integers(0, 2, size=(4, 8))
    assert 0 <= proposal_alignment_loss(p, s) <= s.sum()


# -- local graph feature --------------------------------------------------------------

def test_graph_feature_of_coincident_points():
    f = np.tile([0.2, -1.0, 3.0], (20, 1))
    c = np.zeros((20, 3))
    out = local_graph_feature([0, 0, 0], c, f)
    assert out.tolist() == [0.2, -1.0, 3.0, 0.0, 0.0, 0.0]


def test_graph_feature_hand_built_max():
    coords = np.array([[1, 0, 0], [0, 2, 0], [9, 9, 9]], dtype=float)
    feats = np.array([[1.0, 5.0], [3.0, -2.0], [100.0, 100.0]])
    out = local_graph_feature([0, 0, 0], coords, feats, k=2)
    # neighbours 0 and 1: max of [1,5,1,0,0] and [3,-2,0,2,0]
    assert out.tolist() == [3.0, 5.0, 1.0, 2.0, 0.0]


def test_graph_feature_applies_layers():
    coords = np.random.default_rng(0).normal(size=(30, 3))
    feats = np.random.default_rng(1).normal(size=(30, 4))
    weight = np.random.default_rng(2).normal(size=(7, 5))
    out = local_graph_feature([0, 0, 0], coords, feats, k=16,
                              mlp1=lambda x: np.maximum(x @ weight, 0), mlp2=lambda v: 2 * v)
    idx = knn([0, 0, 0], coords, 16)
    stacked = np.concatenate([feats[idx], coords[idx]], axis=1)
    assert np.allclose(out, 2 * np.maximum(stacked @ weight, 0).max(axis=0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_graph_feature_ignores_point_order(seed):
    rng = np.random.default_rng(seed)
    coords, feats = rng.normal(size=(40, 3)), rng.normal(size=(40, 5))
    perm = rng.permutation(40)
    centre = rng.normal(size=3)
    assert np.array_equal(local_graph_feature(centre, coords, feats),
                          local_graph_feature(centre, coords[perm], feats[perm]))


def test_graph_feature_needs_k_points():
    with pytest.raises(ValueError):
        local_graph_feature([0, 0, 0], np.zeros((5, 3)), np.zeros((5, 2)), k=16)


def test_relaxed_sampling_is_plain_knn():
    cloud = np.random.default_rng(3).normal(size=(50, 3))
    assert relaxed_kps_sample([0, 0, 0], cloud, 8).tolist() == knn([0, 0, 0], cloud, 8).tolist()


# -- combined ------------------------------------------------------------------------

def test_weak_loss_all_zero():
    gt = [[0, 0, 0]]
    b = weak_detection_loss(0.0, 0.0, gt, gt, [1.0], votes=gt)
    assert (b.final, b.total) == (0.0, 0.0)


def test_weak_loss_known_terms():
    b = weak_detection_loss(1.0, 2.0, [[0.1, 0, 0]], [[0, 0, 0]], [1.0],
                            votes=[[0.5, 0, 0]])
    # centre 0.05, chamfer 0.25 + 0.25
    assert b.center == pytest.approx(0.05)
    assert b.intermediate == pytest.approx(0.5)
    assert b.total == pytest.approx(3.55)
    assert b.total == b.semantic + b.objectness + b.center + b.intermediate

"""PCKh and OKS-AP metrics against hand examples and brute-force oracles."""

import json
import math

import numpy as np
import pytest

from bridgepose.errors import MetricsError
from bridgepose.metrics import (
    OKS_THRESHOLDS,
    average_precision,
    oks,
    pckh,
)

from oracles import oracle_average_precision, oracle_oks, oracle_pckh_counts


def offset_pred(gt, offsets):
    pred = gt[:, :, :2].copy()
    pred[:, :, 0] += offsets
    return pred


def test_pckh_hand_example():
    gt = np.zeros((2, 3, 3))
    gt[:, :, :2] = [[10, 10], [30, 30], [50, 50]]
    gt[:, :, 2] = 2.0
    gt[1, 1, 2] = 0.0  # second instance's middle joint is unlabeled
    offsets = np.array([[0.0, 4.0, 6.0], [10.0, 99.0, 3.0]])
    pred = offset_pred(gt, offsets)
    heads = np.array([10.0, 20.0])
    report = pckh(pred, gt, heads, taus=(0.5, 0.1))
    # thresholds: inst0 5 / 1 px, inst1 10 / 2 px; dist 10 == 10 counts
    assert report.per_joint[0.5] == (1.0, 1.0, 0.5)
    assert report.mean[0.5] == pytest.approx(4 / 5)
    assert report.per_joint[0.1] == (0.5, 0.0, 0.0)
    assert report.mean[0.1] == pytest.approx(1 / 5)
    assert report.evaluable_per_joint == (2, 1, 2)
    assert report.n_instances == 2
    assert not report.flagged


def test_pckh_boundary_is_inclusive():
    gt = np.zeros((1, 1, 3))
    gt[0, 0] = [0.0, 0.0, 2.0]
    pred = np.array([[[5.0, 0.0]]])
    report = pckh(pred, gt, np.array([10.0]), taus=(0.5,))
    assert report.mean[0.5] == 1.0
    report = pckh(np.array([[[5.0000001, 0.0]]]), gt, np.array([10.0]), taus=(0.5,))
    assert report.mean[0.5] == 0.0


def test_pckh_never_evaluable_joint_is_nan():
    gt = np.zeros((3, 2, 3))
    gt[:, 0, 2] = 2.0  # joint 1 unlabeled everywhere
    pred = np.zeros((3, 2, 2))
    report = pckh(pred, gt, np.ones(3))
    assert report.per_joint[0.5][0] == 1.0
    assert math.isnan(report.per_joint[0.5][1])
    assert not report.flagged
    assert report.evaluable_per_joint == (3, 0)


def test_pckh_nothing_evaluable_is_flagged():
    gt = np.zeros((2, 2, 3))
    report = pckh(np.zeros((2, 2, 2)), gt, np.ones(2))
    assert report.flagged
    assert math.isnan(report.mean[0.5])


def test_pckh_validation():
    with pytest.raises(MetricsError, match="alike"):
        pckh(np.zeros((2, 3, 2)), np.zeros((2, 4, 3)), np.ones(2))
    with pytest.raises(MetricsError, match=r"\(N,\)"):
        pckh(np.zeros((2, 3, 2)), np.zeros((2, 3, 3)), np.ones(3))
    with pytest.raises(MetricsError, match="positive"):
        pckh(np.zeros((1, 3, 2)), np.zeros((1, 3, 3)), np.zeros(1))


def test_pckh_matches_brute_force(rng):
    for _ in range(25):
        n, j = int(rng.integers(1, 6)), int(rng.integers(1, 8))
        gt = np.zeros((n, j, 3))
        gt[:, :, :2] = rng.uniform(0, 50, size=(n, j, 2))
        gt[:, :, 2] = rng.integers(0, 3, size=(n, j))
        pred = gt[:, :, :2] + rng.normal(0, 3, size=(n, j, 2))
        heads = rng.uniform(1, 10, size=n)
        report = pckh(pred, gt, heads, taus=(0.5, 0.1))
        for tau in (0.5, 0.1):
            correct, evaluable = oracle_pckh_counts(pred, gt, heads, tau)
            for q in range(j):
                if evaluable[q] == 0:
                    assert math.isnan(report.per_joint[tau][q])
                else:
                    assert report.per_joint[tau][q] == correct[q] / evaluable[q]
            if sum(evaluable):
                assert report.mean[tau] == sum(correct) / sum(evaluable)
        assert report.evaluable_per_joint == tuple(evaluable)


def test_pckh_tau_ordering_random(rng):
    for _ in range(50):
        gt = np.zeros((4, 6, 3))
        gt[:, :, :2] = rng.uniform(0, 50, size=(4, 6, 2))
        gt[:, :, 2] = 2.0
        pred = gt[:, :, :2] + rng.normal(0, 4, size=(4, 6, 2))
        report = pckh(pred, gt, rng.uniform(2, 8, size=4))
        assert report.mean[0.1] <= report.mean[0.5]


def test_pckh_report_serialization():
    gt = np.zeros((1, 2, 3))
    gt[:, :, 2] = 2.0
    report = pckh(np.zeros((1, 2, 2)), gt, np.ones(1))
    data = json.loads(report.to_json())
    assert data["kind"] == "pckh"
    assert data["mean"]["0.5"] == 1.0
    text = report.table(["head", "neck"])
    assert "head" in text and "mean" in text


def test_oks_unit_example():
    # one labeled joint at distance sqrt(2 * area * k^2) gives exp(-1)
    area, kval = 100.0, 0.5
    d = math.sqrt(2 * area * kval ** 2)
    gt = np.array([[3.0, 4.0, 2.0]])
    pred = np.array([[3.0 + d, 4.0]])
    value = oks(pred, gt, area, np.array([kval]))
    assert abs(value - math.exp(-1)) < 1e-12


def test_oks_averages_only_labeled():
    area, kval = 100.0, 0.5
    d = math.sqrt(2 * area * kval ** 2)
    gt = np.array([[0.0, 0.0, 2.0], [10.0, 0.0, 1.0], [99.0, 99.0, 0.0]])
    pred = np.array([[0.0, 0.0], [10.0 + d, 0.0], [0.0, 0.0]])
    value = oks(pred, gt, area, np.array([kval] * 3))
    assert value == pytest.approx(0.5 * (1.0 + math.exp(-1)), abs=1e-12)


def test_oks_perfect_is_one():
    gt = np.array([[5.0, 5.0, 2.0], [8.0, 1.0, 1.0]])
    assert oks(gt[:, :2], gt, 50.0, np.array([0.1, 0.2])) == 1.0


def test_oks_validation():
    gt = np.array([[0.0, 0.0, 2.0]])
    with pytest.raises(MetricsError, match="joint count"):
        oks(np.zeros((2, 2)), gt, 1.0, np.array([0.1]))
    with pytest.raises(MetricsError, match="positive"):
        oks(np.zeros((1, 2)), gt, 0.0, np.array([0.1]))
    with pytest.raises(MetricsError, match="no labeled"):
        oks(np.zeros((1, 2)), np.array([[0.0, 0.0, 0.0]]), 1.0, np.array([0.1]))


def test_oks_matches_oracle(rng):
    for _ in range(50):
        j = int(rng.integers(1, 9))
        gt = np.zeros((j, 3))
        gt[:, :2] = rng.uniform(0, 30, size=(j, 2))
        gt[:, 2] = rng.integers(0, 3, size=j)
        if not (gt[:, 2] > 0).any():
            gt[0, 2] = 2.0
        pred = gt[:, :2] + rng.normal(0, 2, size=(j, 2))
        area = float(rng.uniform(10, 200))
        k = rng.uniform(0.05, 0.2, size=j)
        assert oks(pred, gt, area, k) == pytest.approx(
            oracle_oks(pred, gt, area, k), abs=1e-12)


def single_joint_instances(points, areas=None):
    areas = areas or [1.0] * len(points)
    return [(np.array([[x, y, 2.0]]), a) for (x, y), a in zip(points, areas)]


def test_ap_perfect_predictions():
    gts = [single_joint_instances([(5.0, 5.0), (20.0, 9.0)]),
           single_joint_instances([(7.0, 3.0)])]
    preds = [[(g[0][:, :2], 0.9) for g in img] for img in gts]
    report = average_precision(preds, gts, np.array([0.1]))
    assert report.ap == 1.0
    assert report.ap50 == 1.0
    assert report.n_predictions == 3
    assert report.n_ground_truths == 3
    assert not report.flagged


def test_ap_single_instance_threshold_walk():
    # one gt, one pred with OKS strictly between 0.70 and 0.75
    target = 0.72
    d = math.sqrt(-2.0 * math.log(target))
    gts = [single_joint_instances([(0.0, 0.0)])]
    preds = [[(np.array([[d, 0.0]]), 1.0)]]
    report = average_precision(preds, gts, np.array([1.0]))
    for t in OKS_THRESHOLDS:
        assert report.ap_per_threshold[t] == (1.0 if t <= 0.70 else 0.0)
    assert report.ap == pytest.approx(0.5)
    assert report.ap50 == 1.0


def test_ap_tie_matches_lowest_gt_index():
    # pred A (score 0.9) ties between both gts and must take gt 0, which
    # leaves pred B (score 0.5, exactly on gt 0) unmatched at t = 0.5
    gts = [single_joint_instances([(0.0, 0.0), (2.0, 0.0)])]
    preds = [[(np.array([[1.0, 0.0]]), 0.9), (np.array([[0.0, 0.0]]), 0.5)]]
    report = average_precision(preds, gts, np.array([1.0]))
    # detections in score order: TP then FP; precision 1 then 1/2 at recall 1/2
    assert report.ap_per_threshold[0.5] == pytest.approx(51 / 101)


def test_ap_no_ground_truth_is_flagged():
    report = average_precision([[(np.array([[0.0, 0.0]]), 1.0)]], [[]],
                               np.array([1.0]))
    assert report.flagged
    assert math.isnan(report.ap)
    assert report.n_ground_truths == 0
    with pytest.raises(MetricsError, match="align"):
        average_precision([[], []], [[]], np.array([1.0]))


def random_scenario(rng, j=3):
    k = rng.uniform(0.3, 1.0, size=j)
    preds, gts = [], []
    for _ in range(int(rng.integers(2, 5))):
        img_gts = []
        for _ in range(int(rng.integers(0, 4))):
            kps = np.zeros((j, 3))
            kps[:, :2] = rng.uniform(0, 20, size=(j, 2))
            kps[:, 2] = 2.0
            img_gts.append((kps, float(rng.uniform(5, 50))))
        img_preds = []
        for _ in range(int(rng.integers(0, 5))):
            kps = rng.uniform(0, 20, size=(j, 2))
            img_preds.append((kps, float(rng.uniform(0, 1))))
        preds.append(img_preds)
        gts.append(img_gts)
    if sum(len(g) for g in gts) == 0:
        kps = np.zeros((j, 3))
        kps[:, 2] = 2.0
        gts[0].append((kps, 10.0))
    return preds, gts, k


def test_ap_matches_oracle(rng):
    for _ in range(15):
        preds, gts, k = random_scenario(rng)
        report = average_precision(preds, gts, k)
        oracle_mean, oracle_per = oracle_average_precision(
            preds, gts, k, OKS_THRESHOLDS)
        for t in OKS_THRESHOLDS:
            assert report.ap_per_threshold[t] == pytest.approx(
                oracle_per[t], abs=1e-12), t
        assert report.ap == pytest.approx(oracle_mean, abs=1e-12)


def test_ap_threshold_monotonicity(rng):
    for _ in range(10):
        preds, gts, k = random_scenario(rng)
        report = average_precision(preds, gts, k)
        values = [report.ap_per_threshold[t] for t in OKS_THRESHOLDS]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))
        assert report.ap <= report.ap50 + 1e-12


def test_ap_report_serialization():
    gts = [single_joint_instances([(0.0, 0.0)])]
    preds = [[(np.array([[0.0, 0.0]]), 1.0)]]
    report = average_precision(preds, gts, np.array([1.0]))
    data = json.loads(report.to_json())
    assert data["kind"] == "oks_ap"
    assert data["ap"] == 1.0

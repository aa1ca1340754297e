import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evavoid.evaluation import (ConfusionCounts, angle_diff_deg, comparison_instants,
                                detection_metrics, direction_error, greedy_match, gt_at,
                                match_detections)
from evavoid.reports import read_ground_truth, write_ground_truth, write_rows
from evavoid.sim.simulator import GT_DTYPE


def gt_rows(rows):
    """rows of (t, obj, cx, cy, z, visible, truncated)."""
    out = np.zeros(len(rows), GT_DTYPE)
    for i, (t, obj, cx, cy, z, vis, trunc) in enumerate(rows):
        out[i] = (t, obj, cx, cy, int(cx) - 5, int(cy) - 5, int(cx) + 5, int(cy) + 5,
                  z, vis, 0.0, False, trunc)
    return out


def one_object(times, cx=100.0, cy=80.0, z=3.0, vis=True, trunc=False):
    return gt_rows([(t, 0, cx, cy, z, vis, trunc) for t in times])


# -- matching ---------------------------------------------------------------

def test_greedy_nearest_first():
    dets = [(0, 0), (4, 0)]
    objs = [(3, 0)]
    assert greedy_match(dets, objs, 10) == [(1, 0, 1)]


def test_gate_is_manhattan_and_inclusive():
    assert greedy_match([(0, 0)], [(5, 5)], 10) == [(0, 0, 10)]
    assert greedy_match([(0, 0)], [(5, 5.5)], 10) == []


@settings(max_examples=200)
@given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 40)), max_size=8),
       st.lists(st.tuples(st.integers(0, 40), st.integers(0, 40)), max_size=8),
       st.randoms())
def test_match_count_independent_of_detection_order(dets, objs, rnd):
    shuffled = list(dets)
    rnd.shuffle(shuffled)
    a = greedy_match(dets, objs, 10)
    b = greedy_match(shuffled, objs, 10)
    assert len(a) == len(b)
    assert sorted(d for _, _, d in a) == sorted(d for _, _, d in b)
    assert len({i for i, _, _ in a}) == len(a) and len({j for _, j, _ in a}) == len(a)


# -- confusion counts -------------------------------------------------------

def test_comparison_instants():
    assert comparison_instants(0, 100_000, 25_000).tolist() == [25_000, 50_000, 75_000, 100_000]


def test_gt_at_nearest_frame():
    gt = one_object([0, 1000, 2000])
    assert gt_at(gt, 1400)["t"][0] == 1000
    assert gt_at(gt, 1600)["t"][0] == 2000


def test_hit_miss_and_empty_instants():
    times = list(range(0, 100_001, 1000))
    gt = one_object(times)
    trace = [(25_000, [(101, 82)]), (50_000, [(130, 80)]), (75_000, [])]
    c = match_detections(trace, gt, instants=[25_000, 50_000, 75_000])
    # hit; a far detection is one FP plus one FN; nothing reported is a FN
    assert c == ConfusionCounts(tp=1, fp=1, fn=2, tn=0)


def test_object_free_instant_is_true_negative_or_false_positive():
    gt = one_object(range(0, 60_001, 1000), vis=False)
    assert match_detections([(25_000, [])], gt, instants=[25_000]) == ConfusionCounts(tn=1)
    assert match_detections([(25_000, [(5, 5)])], gt, instants=[25_000]) == ConfusionCounts(fp=1)


def test_truncated_instants_skipped():
    gt = one_object(range(0, 60_001, 1000), trunc=True)
    assert match_detections([(25_000, [])], gt, instants=[25_000]).total == 0
    assert match_detections([(25_000, [])], gt, instants=[25_000], skip_truncated=False).fn == 1


def test_depth_band_skips_only_out_of_band_objects():
    far = one_object(range(0, 60_001, 1000), z=6.0)
    assert match_detections([(25_000, [])], far, instants=[25_000], depth_band=(2, 4)).total == 0
    empty = one_object(range(0, 60_001, 1000), z=6.0, vis=False)
    c = match_detections([(25_000, [])], empty, instants=[25_000], depth_band=(2, 4))
    assert c == ConfusionCounts(tn=1)


def test_compared_at_emission_time():
    # the object jumps after the detection was emitted; the emission-time truth is used
    gt = np.concatenate([one_object(range(0, 20_001, 1000)),
                         one_object(range(21_000, 30_001, 1000), cx=200.0)])
    c = match_detections([(20_000, [(100, 80)])], gt, instants=[25_000])
    assert c == ConfusionCounts(tp=1)


def test_metrics_and_zero_denominators():
    m = detection_metrics(ConfusionCounts(tp=8, fp=2, fn=1, tn=9))
    assert m["accuracy"] == pytest.approx(0.85)
    assert m["precision"] == pytest.approx(0.8)
    assert m["tpr"] == pytest.approx(8 / 9)
    assert m["fpr"] == pytest.approx(2 / 11)
    assert detection_metrics(ConfusionCounts())["accuracy"] is None
    assert detection_metrics(ConfusionCounts(tn=3))["precision"] is None


def test_counts_recomputed_from_csv(tmp_path):
    """Metrics recomputed from the written CSVs equal the in-memory ones."""
    rng = np.random.default_rng(3)
    times = list(range(0, 200_001, 1000))
    gt = gt_rows([(t, 0, 100 + t / 2000, 80.0, 3.0, True, False) for t in times])
    trace = [(t, [(100 + t / 2000 + rng.normal(0, 6), 80.0)] if rng.random() < 0.8 else [])
             for t in range(4000, 200_001, 4000)]
    write_ground_truth(tmp_path / "gt.csv", gt)
    write_rows(tmp_path / "det.csv", ["t_us", "cx", "cy"],
               ((t, x, y) for t, d in trace for x, y in d))
    gt2 = read_ground_truth(tmp_path / "gt.csv")
    rows = np.loadtxt(tmp_path / "det.csv", delimiter=",", skiprows=1, ndmin=2)
    by_t = {t: [] for t, _ in trace}
    for t, x, y in rows:
        by_t[int(t)].append((x, y))
    trace2 = sorted(by_t.items())
    assert match_detections(trace2, gt2) == match_detections(trace, gt)


# -- direction --------------------------------------------------------------

def test_angle_wraps():
    assert angle_diff_deg(math.radians(179), math.radians(-179)) == pytest.approx(2.0)
    assert angle_diff_deg(0.0, math.pi) == pytest.approx(180.0)


def test_direction_error_pairs_by_time():
    gt = [(0, 0.0), (25_000, math.pi / 2)]
    stats = direction_error([(1000, 1.0, 0.0), (24_000, 1.0, 1.0), (90_000, 1.0, 0.0)], gt)
    np.testing.assert_allclose(stats.errors, [0.0, 45.0])
    assert stats.rmse == pytest.approx(math.sqrt(45 ** 2 / 2))
    assert stats.max == pytest.approx(45.0)
    assert direction_error([], gt) is None

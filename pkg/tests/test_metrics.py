from __future__ import annotations

import numpy as np
import pytest

from metalseg.metrics import EsdReport, combine_esd_reports, esd_errors, pixel_metrics
from metalseg.raster import BinaryMask, DimensionMismatchError

from conftest import esd_oracle


def two_bars(h=9, w=12):
    bits = np.zeros((h, w), dtype=bool)
    bits[2, 1:-1] = True
    bits[6, 1:-1] = True
    return bits


class TestEsdErrors:
    def test_identity_has_no_errors(self):
        gt = BinaryMask(two_bars())
        rep = esd_errors(gt, gt)
        assert (rep.opens, rep.shorts, rep.false_positives, rep.false_negatives) == (0, 0, 0, 0)
        assert rep.total == 0
        assert rep.gt_line_count == 2
        assert rep.rate_percent == 0.0

    def test_bridge_counts_one_short(self):
        gt = two_bars()
        pred = gt.copy()
        pred[3:6, 5] = True  # bridge joining the two bars
        rep = esd_errors(BinaryMask(pred), BinaryMask(gt))
        assert rep.shorts == 1
        assert (rep.opens, rep.false_positives, rep.false_negatives) == (0, 0, 0)

    def test_split_counts_one_open(self):
        gt = two_bars()
        pred = gt.copy()
        pred[2, 5:7] = False  # cut the first bar in two
        rep = esd_errors(BinaryMask(pred), BinaryMask(gt))
        assert rep.opens == 1
        assert (rep.shorts, rep.false_positives, rep.false_negatives) == (0, 0, 0)

    def test_fp_and_fn(self):
        gt = two_bars()
        pred = np.zeros_like(gt)
        pred[2, 1:-1] = True  # keep one bar, miss the other
        pred[4, 4] = True  # isolated blob off any line
        rep = esd_errors(BinaryMask(pred), BinaryMask(gt))
        assert rep.false_negatives == 1
        assert rep.false_positives == 1
        assert rep.total == 2

    def test_min_overlap_gates_edges(self):
        gt = np.zeros((6, 6), dtype=bool)
        gt[2, 1:5] = True
        pred = np.zeros_like(gt)
        pred[2, 4] = True  # touches the line in exactly one pixel
        pred[2:5, 4] = True
        rep = esd_errors(BinaryMask(pred), BinaryMask(gt), min_overlap=1)
        assert rep.false_positives == 0
        rep2 = esd_errors(BinaryMask(pred), BinaryMask(gt), min_overlap=2)
        assert rep2.false_positives == 1 and rep2.false_negatives == 1

    def test_zero_gt_components_signals_none_rate(self):
        pred = BinaryMask(np.zeros((4, 4), dtype=bool))
        rep = esd_errors(pred, BinaryMask(np.zeros((4, 4), dtype=bool)))
        assert rep.gt_line_count == 0
        assert rep.rate_percent is None

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            esd_errors(BinaryMask(np.zeros((3, 3), dtype=bool)), BinaryMask(np.zeros((4, 4), dtype=bool)))

    def test_splitting_matched_component_adds_exactly_one_open(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            gt = np.zeros((12, 30), dtype=bool)
            gt[5, 2:28] = True
            pred = gt.copy()
            base = esd_errors(BinaryMask(pred), BinaryMask(gt))
            cut = int(rng.integers(5, 25))
            pred2 = pred.copy()
            pred2[5, cut] = False
            rep = esd_errors(BinaryMask(pred2), BinaryMask(gt))
            assert rep.opens == base.opens + 1
            assert rep.shorts == base.shorts
            assert rep.false_positives == base.false_positives
            assert rep.false_negatives == base.false_negatives

    def test_matches_bipartite_oracle_on_random_masks(self):
        rng = np.random.default_rng(99)
        for _ in range(60):
            h, w = rng.integers(4, 33, size=2)
            density = rng.uniform(0.2, 0.7)
            gt = rng.random((h, w)) < density
            pred = rng.random((h, w)) < density
            mo = int(rng.integers(1, 4))
            rep = esd_errors(BinaryMask(pred), BinaryMask(gt), min_overlap=mo)
            ref = esd_oracle(pred, gt, min_overlap=mo)
            assert rep.opens == ref["opens"]
            assert rep.shorts == ref["shorts"]
            assert rep.false_positives == ref["false_positives"]
            assert rep.false_negatives == ref["false_negatives"]
            assert rep.gt_line_count == ref["gt_line_count"]

    def test_rate_times_lines_recovers_total(self):
        rep = EsdReport.from_counts(3, 5, 2, 1, 700)
        assert rep.rate_percent * rep.gt_line_count / 100.0 == pytest.approx(rep.total, abs=1e-12)


class TestPaperRateArithmetic:
    # Published aggregate rates, reproduced from raw counts.
    @pytest.mark.parametrize(
        "total,lines,expected",
        [(263, 36413, 0.72), (838, 15153, 5.53), (119, 19088, 0.62)],
    )
    def test_rate_two_decimals(self, total, lines, expected):
        rep = EsdReport.from_counts(0, 0, total, 0, lines)
        assert round(rep.rate_percent, 2) == expected


class TestPixelMetrics:
    def test_identity(self):
        m = BinaryMask(two_bars())
        pm = pixel_metrics(m, m)
        assert (pm.pixel_accuracy, pm.dice, pm.iou) == (1.0, 1.0, 1.0)

    def test_disjoint_halves(self):
        gt = np.zeros((4, 4), dtype=bool)
        gt[:2] = True
        pred = ~gt
        pm = pixel_metrics(BinaryMask(pred), BinaryMask(gt))
        assert (pm.pixel_accuracy, pm.dice, pm.iou) == (0.0, 0.0, 0.0)

    def test_half_covered_component(self):
        gt = np.zeros((6, 8), dtype=bool)
        gt[2, 0:8] = True
        pred = np.zeros_like(gt)
        pred[2, 0:4] = True
        pm = pixel_metrics(BinaryMask(pred), BinaryMask(gt))
        assert pm.dice == pytest.approx(2 / 3)
        assert pm.iou == pytest.approx(1 / 2)

    def test_empty_vs_empty_convention(self):
        z = BinaryMask(np.zeros((3, 3), dtype=bool))
        pm = pixel_metrics(z, z)
        assert pm.dice == 1.0 and pm.iou == 1.0 and pm.pixel_accuracy == 1.0

    def test_dice_iou_identity(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            h, w = rng.integers(2, 20, size=2)
            pred = rng.random((h, w)) < 0.5
            gt = rng.random((h, w)) < 0.5
            pm = pixel_metrics(BinaryMask(pred), BinaryMask(gt))
            assert abs(pm.dice - 2 * pm.iou / (1 + pm.iou)) < 1e-12


class TestCombineReports:
    def test_aggregate_counts_and_rate(self):
        parts = [EsdReport.from_counts(1, 2, 3, 4, 100), EsdReport.from_counts(0, 1, 0, 1, 50)]
        agg = combine_esd_reports(parts)
        assert agg.total == 12
        assert agg.gt_line_count == 150
        assert agg.rate_percent == pytest.approx(100 * 12 / 150)

"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``)."""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import pytest

from metalseg.bettiloss import bce_loss, betti_loss, dice_loss, seg_loss
from metalseg.cli import main as cli_main
from metalseg.fileio import write_gray_png, write_mask_png
from metalseg.fusion import FusionConfig, paste_patches, plan_patches, run_pipeline
from metalseg.metrics import EsdReport, combine_esd_reports, esd_errors
from metalseg.persistence import barcode, betti_numbers
from metalseg.prompts import PromptConfig, foreground_seed_mask, sample_prompts
from metalseg.raster import BinaryMask, GrayImage, LikelihoodMap, threshold
from metalseg.synth import DefectSpec, SynthConfig, generate, inject_defects

from conftest import esd_oracle, spawn_stub, sweep_counts

FIXTURES = Path(__file__).parent / "fixtures"


def passed(name: str) -> None:
    print(f"[PASS] {name}")


class TestAcceptance:
    def test_c01_esd_oracle_equivalence(self):
        rng = np.random.default_rng(20240001)
        start = time.monotonic()
        deviations = 0
        for _ in range(1000):
            h = int(rng.integers(4, 65))
            w = int(rng.integers(4, 65))
            density = rng.uniform(0.25, 0.65)
            pred = rng.random((h, w)) < density
            gt = rng.random((h, w)) < density
            rep = esd_errors(BinaryMask(pred), BinaryMask(gt))
            ref = esd_oracle(pred, gt)
            if (
                rep.opens != ref["opens"]
                or rep.shorts != ref["shorts"]
                or rep.false_positives != ref["false_positives"]
                or rep.false_negatives != ref["false_negatives"]
                or rep.gt_line_count != ref["gt_line_count"]
            ):
                deviations += 1
        elapsed = time.monotonic() - start
        assert deviations == 0
        assert elapsed < 30.0, f"ESD oracle sweep took {elapsed:.1f}s"
        passed(f"ESD oracle equivalence: 1000 pairs, 0 deviations, {elapsed:.1f}s")

    @pytest.mark.parametrize(
        "fixture", ["in_distribution.json", "out_of_distribution.json", "full_dataset.json"]
    )
    def test_c02_esd_rate_arithmetic(self, fixture):
        doc = json.loads((FIXTURES / "esd_rates" / fixture).read_text())
        reports = [
            EsdReport.from_counts(
                e["opens"],
                e["shorts"],
                e["false_positives"],
                e["false_negatives"],
                e["gt_line_count"],
            )
            for e in doc["images"]
        ]
        agg = combine_esd_reports(reports)
        assert round(agg.rate_percent, 2) == doc["expected_rate_percent"]
        passed(
            f"ESD rate arithmetic [{fixture}]: {agg.total}/{agg.gt_line_count} "
            f"-> {agg.rate_percent:.2f}%"
        )

    def test_c03_persistence_threshold_sweep(self):
        rng = np.random.default_rng(20240003)
        start = time.monotonic()
        deviations = 0
        for _ in range(500):
            h = int(rng.integers(2, 33))
            w = int(rng.integers(2, 33))
            n_levels = int(rng.integers(2, 17))
            levels = np.sort(rng.random(n_levels))
            vals = levels[rng.integers(0, n_levels, size=(h, w))]
            bc = barcode(vals, "sublevel")
            for eps in np.unique(vals):
                got = betti_numbers(bc, float(eps))
                ref = sweep_counts(vals, float(eps))
                if got != ref:
                    deviations += 1
        elapsed = time.monotonic() - start
        assert deviations == 0
        assert elapsed < 60.0, f"threshold sweep took {elapsed:.1f}s"
        passed(f"persistence threshold-sweep equivalence: 500 maps, 0 deviations, {elapsed:.1f}s")

    @staticmethod
    def _distinct_pair(rng, h, w):
        """Two maps whose values form one jointly distinct, well-spaced grid."""
        n = 2 * h * w
        ticks = 0.05 + 0.9 * (np.arange(n) + 0.5) / n
        perm = rng.permutation(n)
        return ticks[perm[: h * w]].reshape(h, w), ticks[perm[h * w :]].reshape(h, w)

    def _gradient_safe_pair(self, rng):
        # resample until no prediction bar sits near the length threshold,
        # where the loss is deliberately discontinuous
        while True:
            h = int(rng.integers(4, 17))
            w = int(rng.integers(4, 17))
            g_vals, l_vals = self._distinct_pair(rng, h, w)
            res = betti_loss(LikelihoodMap(g_vals), LikelihoodMap(l_vals))
            margins = [abs(b.persistence - 0.345) for b in res.unmatched_pred]
            if all(m > 1e-3 for m in margins):
                return g_vals, l_vals, res

    def test_c04_gradient_checks(self):
        rng = np.random.default_rng(20240004)
        h_step = 1e-4
        for case in range(100):
            g_vals, l_vals, betti_res = self._gradient_safe_pair(rng)
            G = LikelihoodMap(g_vals)

            losses = {
                "betti": (betti_res.grad, lambda lv: betti_loss(G, LikelihoodMap(lv)).loss),
                "bce": (bce_loss(G, LikelihoodMap(l_vals))[1],
                        lambda lv: bce_loss(G, LikelihoodMap(lv))[0]),
                "dice": (dice_loss(G, LikelihoodMap(l_vals))[1],
                         lambda lv: dice_loss(G, LikelihoodMap(lv))[0]),
                "seg": (seg_loss(G, LikelihoodMap(l_vals))[1],
                        lambda lv: seg_loss(G, LikelihoodMap(lv))[0]),
            }
            for name, (grad, func) in losses.items():
                fd = np.zeros_like(l_vals)
                for y in range(l_vals.shape[0]):
                    for x in range(l_vals.shape[1]):
                        hi = l_vals.copy()
                        hi[y, x] += h_step
                        lo = l_vals.copy()
                        lo[y, x] -= h_step
                        fd[y, x] = (func(hi) - func(lo)) / (2 * h_step)
                np.testing.assert_allclose(
                    grad, fd, rtol=1e-3, atol=1e-8,
                    err_msg=f"{name} gradient mismatch on case {case}",
                )
        passed("betti/bce/dice/seg gradient checks: 100 maps, finite differences within 1e-3")

    def test_c05_zero_loss_identity(self):
        rng = np.random.default_rng(20240005)
        for _ in range(100):
            h = int(rng.integers(2, 17))
            w = int(rng.integers(2, 17))
            vals = rng.random((h, w))
            res = betti_loss(LikelihoodMap(vals), LikelihoodMap(vals))
            assert res.loss == 0.0
            assert not res.grad.any()
        passed("zero-loss identity: betti_loss(G, G) == 0 with zero gradient on 100 maps")

    @staticmethod
    def _scene(h=128, w=128):
        gt = np.zeros((h, w), dtype=bool)
        gt[80:85, 8:120] = True
        gt[100:105, 8:120] = True
        image = GrayImage(np.where(gt, 220, 40).astype(np.uint8))
        return image, BinaryMask(gt)

    @staticmethod
    def _dots(shape, box, count):
        bits = np.zeros(shape, dtype=bool)
        y0, y1, x0, x1 = box
        placed = 0
        for y in range(y0, y1, 2):
            for x in range(x0, x1, 2):
                if placed == count:
                    return bits
                bits[y, x] = True
                placed += 1
        raise AssertionError("box too small")

    def test_c06_fusion_error_class_regression(self, tmp_path):
        cfg = FusionConfig(patch_size=64)
        image, gt = self._scene()
        gt_png = tmp_path / "gt.png"
        write_mask_png(gt_png, gt)

        # merged-lines full provider vs correct patch provider
        merged = gt.bits.copy()
        merged[85:100, 60] = True
        merged_png = tmp_path / "merged.png"
        write_mask_png(merged_png, BinaryMask(merged))
        shorts_full_only = esd_errors(BinaryMask(merged), gt).shorts
        with spawn_stub(tmp_path, "a_full", merged_png) as pf, spawn_stub(
            tmp_path, "a_patch", gt_png
        ) as pp:
            fused = run_pipeline(image, pf, pp, cfg, seed=1, workdir=str(tmp_path / "wa"))
        fused_shorts = esd_errors(fused.final_mask, gt).shorts
        assert shorts_full_only >= 1
        assert fused_shorts < shorts_full_only

        # speckled patch provider vs correct full provider
        speckled = gt.bits | self._dots((128, 128), (4, 30, 4, 30), 60)
        speckled_png = tmp_path / "speckled.png"
        write_mask_png(speckled_png, BinaryMask(speckled))
        grid = plan_patches(128, 128, cfg)
        b_only = paste_patches(
            [((x, y), BinaryMask(speckled[y : y + 64, x : x + 64])) for x, y in grid.origins],
            grid, 128, 128,
        )
        fps_patch_only = esd_errors(b_only, gt).false_positives
        with spawn_stub(tmp_path, "c_full", gt_png) as pf, spawn_stub(
            tmp_path, "c_patch", speckled_png
        ) as pp:
            fused_c = run_pipeline(image, pf, pp, cfg, seed=1, workdir=str(tmp_path / "wc"))
        fused_fps = esd_errors(fused_c.final_mask, gt).false_positives
        assert fps_patch_only >= 50
        assert fused_fps < fps_patch_only

        # both sides speckled in one cell: exactly that region flagged
        bad_png = tmp_path / "bad.png"
        write_mask_png(bad_png, BinaryMask(speckled))
        with spawn_stub(tmp_path, "f_full", bad_png) as pf, spawn_stub(
            tmp_path, "f_patch", bad_png
        ) as pp:
            flagged = run_pipeline(image, pf, pp, cfg, seed=1, workdir=str(tmp_path / "wf"))
        assert flagged.flagged_regions == ((0, 0, 64, 64),)
        passed(
            "fusion error-class regression: shorts "
            f"{shorts_full_only}->{fused_shorts}, FPs {fps_patch_only}->{fused_fps}, "
            "both-speckled cell flagged"
        )

    def test_c07_pipeline_determinism(self, tmp_path):
        from conftest import stub_provider_command

        image, gt = self._scene()
        write_gray_png(tmp_path / "image.png", image)
        gt_png = tmp_path / "gt.png"
        write_mask_png(gt_png, gt)
        cfg_file = tmp_path / "fusion.cfg"
        cfg_file.write_text("patch_size = 64\n")
        cmd = " ".join(stub_provider_command(tmp_path, "det", gt_png))
        artifacts = []
        for run in range(2):
            mask_path = tmp_path / f"mask{run}.png"
            flags_path = tmp_path / f"flags{run}.json"
            code = cli_main([
                "fuse", str(tmp_path / "image.png"), str(mask_path), str(flags_path),
                "--provider-full", cmd, "--provider-patch", cmd,
                "--config", str(cfg_file), "--seed", "42",
                "--workdir", str(tmp_path / f"w{run}"),
            ])
            assert code == 0
            artifacts.append((mask_path.read_bytes(), flags_path.read_bytes()))
        assert artifacts[0] == artifacts[1]
        passed("pipeline determinism: cmd_fuse reruns produced byte-identical mask and flags")

    def test_c08_prompt_soundness(self):
        import dataclasses

        cfg = SynthConfig(
            width=128, height=128, line_width_range=(3, 6), line_count_range=(4, 8),
            noise_sigma=5.0, blur_sigma=0.8,
        )
        total = on_gt = 0
        for seed in range(200):
            image, gt, _ = generate(dataclasses.replace(cfg, seed=seed))
            pcfg = PromptConfig(seed=seed)
            mask = foreground_seed_mask(image, pcfg)
            points = sample_prompts(mask, pcfg)
            for x, y in points:
                assert mask.bits[y, x], "sampled point off the seed mask"
                total += 1
                if gt.bits[y, x]:
                    on_gt += 1
        assert total > 0
        precision = on_gt / total
        assert precision >= 0.99
        passed(f"prompt soundness: {on_gt}/{total} points on GT metal ({100*precision:.2f}%)")

    def test_c09_defect_injection_soundness(self):
        mismatches = 0
        for case in range(100):
            cfg = SynthConfig(
                width=220, height=220, line_count_range=(8, 10),
                noise_sigma=0.0, blur_sigma=0.0, seed=30000 + case,
            )
            image, gt, _ = generate(cfg)
            rng = np.random.default_rng(40000 + case)
            specs = []
            bridges = int(rng.integers(0, 3))
            cuts = int(rng.integers(0, 3))
            fields = int(rng.integers(0, 3))
            if bridges:
                specs.append(DefectSpec("bridge", bridges))
            if cuts:
                specs.append(DefectSpec("cut", cuts))
            if fields:
                specs.append(DefectSpec("speckle_field", fields, {"dots": 3}))
            if not specs:
                specs.append(DefectSpec("cut", 1))
            injected, _, delta = inject_defects(image, gt, specs, seed=50000 + case)
            rep = esd_errors(threshold(injected, cfg.midpoint), gt)
            if (
                rep.opens != delta.opens
                or rep.shorts != delta.shorts
                or rep.false_positives != delta.false_positives
                or rep.false_negatives != delta.false_negatives
            ):
                mismatches += 1
        assert mismatches == 0
        passed("defect-injection soundness: 100 seeded cases reproduce the expected ESD delta")

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from lesionforge.augment import AugmentSpec, preset
from lesionforge.config import RunConfig
from lesionforge.imgcore import BinaryMask, Image, RngStream, to_float, write_image
from lesionforge.lesion_bank import LesionType
from lesionforge.synth import (
    CompositionRule,
    CompositionStrategy,
    MixUpMode,
    choose_position,
    mixup_paste,
    read_dataset_manifest,
    synthesize_dataset,
    synthesize_one,
)
from tests.conftest import random_gray, random_patch, random_rgb, solid_patch
from tests.oracles import replay_synthetic_raster, scalar_mixup


class TestMixUpMode:
    def test_validation(self):
        with pytest.raises(ValueError):
            MixUpMode.random(0.9, 0.2)
        with pytest.raises(ValueError):
            MixUpMode.fixed(1.5)

    def test_draws(self):
        gen = RngStream(1).generator()
        mode = MixUpMode.random(0.5, 0.8)
        draws = [mode.draw(gen) for _ in range(1000)]
        assert all(0.5 <= d <= 0.8 for d in draws)
        assert MixUpMode.fixed(0.7).draw(gen) == 0.7
        assert MixUpMode.hard_paste().draw(gen) == 1.0


class TestCompositionStrategy:
    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(ValueError):
            CompositionStrategy((CompositionRule(0.5, frozenset({LesionType.MA})),))

    def test_empty_types_rejected(self):
        with pytest.raises(ValueError):
            CompositionRule(1.0, frozenset())

    def test_dr_grades_shape(self):
        strat = CompositionStrategy.dr_grades()
        assert [r.probability for r in strat.rules] == [0.80, 0.10, 0.05, 0.05]
        assert [len(r.allowed_types) for r in strat.rules] == [1, 2, 3, 4]

    def test_draw_frequencies(self):
        strat = CompositionStrategy.dr_grades()
        gen = RngStream(2).generator()
        n = 20_000
        counts = np.zeros(4)
        for _ in range(n):
            counts[strat.draw_index(gen)] += 1
        assert np.abs(counts / n - [0.8, 0.1, 0.05, 0.05]).max() < 0.01


class TestMixupPaste:
    def test_lambda_zero_returns_base_exactly(self):
        gen = np.random.default_rng(50)
        base = to_float(random_rgb(gen, 12, 12))
        patch = random_patch(gen, 4, 4)
        out = mixup_paste(base, patch, (3, 5), 0.0)
        assert np.array_equal(out, base)

    def test_hard_paste_copies_masked_pixels(self):
        gen = np.random.default_rng(51)
        base = to_float(random_rgb(gen, 12, 12))
        patch = random_patch(gen, 4, 4)
        out = mixup_paste(base, patch, (2, 6), 1.0)
        region = out[6:10, 2:6]
        lesion = to_float(patch.pixels)
        m = patch.mask.bits.astype(bool)
        assert np.array_equal(region[m], lesion[m])
        assert np.array_equal(region[~m], base[6:10, 2:6][~m])

    def test_midpoint_blend_value(self):
        base = np.full((3, 3), 100 / 255, dtype=np.float64)
        patch = solid_patch(200, h=1, w=1, channels=1)
        out = mixup_paste(base, patch, (1, 1), 0.5)
        assert out[1, 1] == scalar_mixup(100 / 255, 200 / 255, 1, 0.5)
        assert abs(out[1, 1] - 150 / 255) < 1e-15

    def test_pixels_outside_rectangle_untouched(self):
        gen = np.random.default_rng(52)
        base = to_float(random_gray(gen, 20, 20))
        patch = random_patch(gen, 5, 5, channels=1)
        out = mixup_paste(base, patch, (7, 3), 0.6)
        untouched = np.ones((20, 20), dtype=bool)
        untouched[3:8, 7:12] = False
        assert np.array_equal(out[untouched], base[untouched])

    def test_matches_scalar_oracle_per_pixel(self):
        gen = np.random.default_rng(53)
        base = to_float(random_gray(gen, 10, 10))
        patch = random_patch(gen, 6, 7, channels=1)
        lam = float(gen.uniform(0, 1))
        out = mixup_paste(base, patch, (2, 1), lam)
        lesion = to_float(patch.pixels)
        for i in range(6):
            for j in range(7):
                expected = scalar_mixup(
                    base[1 + i, 2 + j], lesion[i, j], patch.mask.bits[i, j], lam
                )
                assert out[1 + i, 2 + j] == expected

    def test_out_of_bounds_rejected(self):
        gen = np.random.default_rng(54)
        base = to_float(random_gray(gen, 8, 8))
        patch = random_patch(gen, 4, 4, channels=1)
        for pos in ((6, 0), (0, 6), (-1, 0), (0, -1)):
            with pytest.raises(ValueError):
                mixup_paste(base, patch, pos, 0.5)

    def test_channel_mismatch_rejected(self):
        gen = np.random.default_rng(55)
        base = to_float(random_rgb(gen, 8, 8))
        patch = random_patch(gen, 3, 3, channels=1)
        with pytest.raises(ValueError):
            mixup_paste(base, patch, (0, 0), 0.5)


class TestChoosePosition:
    def test_single_feasible_placement(self):
        x, y = choose_position((256, 256), (256, 256), None, RngStream(3))
        assert (x, y) == (0, 0)

    def test_oversized_patch_rejected(self):
        with pytest.raises(ValueError):
            choose_position((256, 256), (300, 300), None, RngStream(4))

    def test_positions_cover_feasible_grid(self):
        gen = RngStream(5).generator()
        seen = set()
        for _ in range(2000):
            seen.add(choose_position((10, 10), (5, 5), None, gen))
        assert seen == {(x, y) for x in range(6) for y in range(6)}

    def test_placement_mask_constrains_center(self):
        bits = np.zeros((20, 20), dtype=np.uint8)
        bits[:, 10:] = 1  # right half only
        mask = BinaryMask(bits)
        gen = RngStream(6).generator()
        for _ in range(300):
            x, y = choose_position((20, 20), (4, 4), mask, gen)
            assert bits[y + 2, x + 2] == 1

    def test_placement_mask_falls_back_when_unsatisfiable(self):
        mask = BinaryMask(np.zeros((10, 10), dtype=np.uint8))
        x, y = choose_position((10, 10), (4, 4), mask, RngStream(7))
        assert 0 <= x <= 6 and 0 <= y <= 6


class TestSynthesizeOne:
    def test_deterministic_given_stream(self, small_bank):
        gen = np.random.default_rng(56)
        normal = random_rgb(gen, 32, 32)
        strat = CompositionStrategy.single({LesionType.MA})
        a = synthesize_one(
            normal, small_bank, AugmentSpec(), MixUpMode.hard_paste(), strat, RngStream(8, 1)
        )
        b = synthesize_one(
            normal, small_bank, AugmentSpec(), MixUpMode.hard_paste(), strat, RngStream(8, 1)
        )
        assert np.array_equal(a.image.pixels, b.image.pixels)
        assert a.paste_log == b.paste_log

    def test_empty_filtered_bank_propagates(self, small_bank):
        gen = np.random.default_rng(57)
        normal = random_rgb(gen, 32, 32)
        strat = CompositionStrategy.single({LesionType.EX})
        with pytest.raises(ValueError):
            synthesize_one(
                normal, small_bank, AugmentSpec(), MixUpMode.hard_paste(), strat, RngStream(9)
            )

    def test_lambda_recorded_in_range(self, small_bank):
        gen = np.random.default_rng(58)
        normal = random_rgb(gen, 40, 40)
        strat = CompositionStrategy.single({LesionType.MA, LesionType.HE})
        stream_gen = RngStream(10).generator()
        for _ in range(10):
            sample = synthesize_one(
                normal, small_bank, AugmentSpec(), MixUpMode.random(), strat, stream_gen
            )
            assert all(0.5 <= r.lam <= 0.8 for r in sample.paste_log)
            assert len(sample.paste_log) >= 1

    def test_replay_oracle_reproduces_raster(self, small_bank):
        gen = np.random.default_rng(59)
        normal = random_rgb(gen, 48, 48)
        strat = CompositionStrategy.single(set(LesionType))
        stream_gen = RngStream(11).generator()
        for _ in range(5):
            sample = synthesize_one(
                normal, small_bank, preset("all"), MixUpMode.random(), strat, stream_gen
            )
            replayed = replay_synthetic_raster(normal, small_bank, sample.paste_log)
            from lesionforge.imgcore import quantize

            assert np.array_equal(quantize(replayed, depth=8).pixels, sample.image.pixels)


def _write_normals(dir_path: Path, n: int, seed: int = 0, side: int = 24) -> None:
    gen = np.random.default_rng(seed)
    for i in range(n):
        write_image(random_rgb(gen, side, side), dir_path / f"img{i:03d}.png")


def _tree_hash(root: Path) -> dict[str, str]:
    import hashlib

    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


class TestSynthesizeDataset:
    def _config(self, seed: int = 99) -> RunConfig:
        return RunConfig(
            seed=seed,
            augment=AugmentSpec(),
            mixup=MixUpMode.random(),
            strategy=CompositionStrategy.single(set(LesionType)),
        )

    def test_one_to_one_manifest(self, small_bank, tmp_path):
        normals = tmp_path / "normals"
        _write_normals(normals, 10)
        out = tmp_path / "ds"
        records = synthesize_dataset(normals, small_bank, self._config(), out)
        assert sum(1 for r in records if r["label"] == 1) == 10
        assert sum(1 for r in records if r["label"] == 0) == 10
        manifest = read_dataset_manifest(out)
        assert manifest == records
        for r in records:
            assert (out / r["path"]).is_file()

    def test_byte_identical_reruns(self, small_bank, tmp_path):
        normals = tmp_path / "normals"
        _write_normals(normals, 6)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        synthesize_dataset(normals, small_bank, self._config(), out_a)
        synthesize_dataset(normals, small_bank, self._config(), out_b)
        assert _tree_hash(out_a) == _tree_hash(out_b)

    def test_order_and_threads_do_not_matter(self, small_bank, tmp_path):
        normals = tmp_path / "normals"
        _write_normals(normals, 6)
        entries = [(p.stem, p) for p in sorted(normals.glob("*.png"))]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        synthesize_dataset(entries, small_bank, self._config(), out_a, threads=1)
        synthesize_dataset(list(reversed(entries)), small_bank, self._config(), out_b, threads=3)
        assert _tree_hash(out_a) == _tree_hash(out_b)

    def test_different_seed_changes_output(self, small_bank, tmp_path):
        normals = tmp_path / "normals"
        _write_normals(normals, 3)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        synthesize_dataset(normals, small_bank, self._config(seed=1), out_a)
        synthesize_dataset(normals, small_bank, self._config(seed=2), out_b)
        assert _tree_hash(out_a) != _tree_hash(out_b)

    def test_normals_passthrough_pixels(self, small_bank, tmp_path):
        from lesionforge.imgcore import read_image

        normals = tmp_path / "normals"
        _write_normals(normals, 3)
        out = tmp_path / "ds"
        synthesize_dataset(normals, small_bank, self._config(), out)
        for p in sorted(normals.glob("*.png")):
            a = read_image(p).pixels
            b = read_image(out / "normal" / p.name).pixels
            assert np.array_equal(a, b)

    def test_duplicate_ids_rejected(self, small_bank, tmp_path):
        normals = tmp_path / "normals"
        _write_normals(normals, 2)
        entries = [(p.stem, p) for p in sorted(normals.glob("*.png"))]
        entries.append(entries[0])
        with pytest.raises(ValueError):
            synthesize_dataset(entries, small_bank, self._config(), tmp_path / "ds")

    def test_manifest_json_round_trip(self, small_bank, tmp_path):
        normals = tmp_path / "normals"
        _write_normals(normals, 2)
        manifest = [
            {"id": p.stem, "path": p.name} for p in sorted(normals.glob("*.png"))
        ]
        manifest_path = normals / "normals.json"
        manifest_path.write_text(json.dumps(manifest))
        out = tmp_path / "ds"
        records = synthesize_dataset(manifest_path, small_bank, self._config(), out)
        assert len(records) == 4

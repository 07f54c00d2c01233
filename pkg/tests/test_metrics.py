"""Biometric error metrics against brute-force threshold sweeps."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gramnet.errors import ContractError
from gramnet.metrics import (FAKE, LIVE, ScoreRecord, ScoreSet, ace,
                             det_curve, detection_rate, error_rates,
                             read_scores, write_det_csv, write_det_svg,
                             write_scores)


def make_set(live_scores, fake_scores, materials=None):
    records = [ScoreRecord(score=s, label=LIVE) for s in live_scores]
    mats = materials or ["unknown"] * len(fake_scores)
    records += [ScoreRecord(score=s, label=FAKE, material=m)
                for s, m in zip(fake_scores, mats)]
    return ScoreSet(records)


def brute_force_rates(live, fake, threshold):
    fl = 100.0 * sum(1 for s in live if s >= threshold) / len(live)
    ff = 100.0 * sum(1 for s in fake if s < threshold) / len(fake)
    return fl, ff


class TestErrorRates:
    def test_perfectly_separated(self):
        s = make_set([0.1, 0.2], [0.8, 0.9])
        assert error_rates(s, 0.5) == (0.0, 0.0)

    def test_degenerate_all_fake_classifier(self):
        s = make_set([1.0, 1.0], [1.0, 1.0])
        assert error_rates(s, 0.5) == (100.0, 0.0)

    def test_half_and_half(self):
        s = make_set([0.6, 0.2], [0.8, 0.3])
        assert error_rates(s, 0.5) == (50.0, 50.0)

    def test_single_class_rejected(self):
        s = ScoreSet([ScoreRecord(score=0.5, label=LIVE)])
        with pytest.raises(ContractError):
            error_rates(s, 0.5)

    def test_sentinel_orientation_anchors(self):
        s = make_set([0.3, 0.6], [0.4, 0.9])
        assert error_rates(s, 0.3 - 1.0) == (100.0, 0.0)
        assert error_rates(s, 0.9 + 1.0) == (0.0, 100.0)


class TestAce:
    def test_worked_example(self):
        assert ace(10.0, 0.0) == 5.0

    def test_zero(self):
        assert ace(0.0, 0.0) == 0.0

    def test_direct_formula(self):
        assert abs(ace(4.2, 1.0) - 2.6) < 1e-12

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, b = rng.uniform(0, 100, size=2)
            assert ace(a, b) == ace(b, a)
            assert 0.0 <= ace(a, b) <= 100.0

    def test_out_of_range_rejected(self):
        with pytest.raises(ContractError):
            ace(-1.0, 5.0)
        with pytest.raises(ContractError):
            ace(5.0, 101.0)


class TestDetCurve:
    def test_contains_zero_zero_for_separable(self):
        s = make_set([0.1, 0.2], [0.8, 0.9])
        curve = det_curve(s)
        assert any(fl == 0.0 and ff == 0.0 for _, fl, ff in curve.points)

    def test_point_count_is_distinct_plus_two(self):
        s = make_set([0.1, 0.2, 0.2], [0.8, 0.9])
        assert len(det_curve(s).points) == 4 + 2

    def test_corner_points(self):
        s = make_set([0.3, 0.4], [0.5, 0.6])
        points = det_curve(s).points
        assert (points[0][1], points[0][2]) == (100.0, 0.0)
        assert (points[-1][1], points[-1][2]) == (0.0, 100.0)

    def test_monotone_staircase(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(2, 40))
            s = make_set(rng.random(n).round(2), rng.random(n).round(2))
            pts = det_curve(s).points
            fls = [fl for _, fl, _ in pts]
            ffs = [ff for _, _, ff in pts]
            assert all(a >= b for a, b in zip(fls, fls[1:]))
            assert all(a <= b for a, b in zip(ffs, ffs[1:]))

    def test_matches_brute_force_sweep(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            live = rng.random(int(rng.integers(1, 30))).round(1)
            fake = rng.random(int(rng.integers(1, 30))).round(1)
            s = make_set(live, fake)
            for t, fl, ff in det_curve(s).points:
                assert (fl, ff) == brute_force_rates(live, fake, t)

    def test_chance_classifier_passes_near_50_50(self):
        rng = np.random.default_rng(3)
        s = make_set(rng.random(5000), rng.random(5000))
        median = float(np.median(s.scores()))
        fl, ff = error_rates(s, median)
        assert abs(fl - 50.0) < 3.0 and abs(ff - 50.0) < 3.0

    def test_fixed_threshold_never_beats_best_sweep(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            s = make_set(rng.normal(0.3, 0.2, 20), rng.normal(0.7, 0.2, 20))
            best = min(ace(*error_rates(s, t)) for t, _, _ in det_curve(s).points)
            assert best <= ace(*error_rates(s, 0.5)) + 1e-12


class TestDetectionRate:
    def test_all_detected(self):
        s = make_set([0.1], [0.9, 0.9, 0.9])
        assert detection_rate(s) == 100.0

    def test_half_detected(self):
        s = make_set([0.1], [0.9, 0.1, 0.8, 0.2])
        assert detection_rate(s) == 50.0

    def test_material_filter(self):
        s = make_set([0.1], [0.9, 0.1], materials=["gelatin", "silicone"])
        assert detection_rate(s, {"gelatin"}) == 100.0
        assert detection_rate(s, {"silicone"}) == 0.0

    def test_empty_filter_rejected(self):
        s = make_set([0.1], [0.9], materials=["gelatin"])
        with pytest.raises(ContractError):
            detection_rate(s, {"playdoh"})

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30),
           st.floats(0.05, 0.95))
    def test_complement_identity_with_ferrfake(self, fake_scores, threshold):
        """detection_rate == 100 - ferrfake on the same filtered set."""
        s = make_set([0.0, 1.0], fake_scores)
        _, ff = error_rates(s, threshold)
        assert abs(detection_rate(s, None, threshold) - (100.0 - ff)) < 1e-9


class TestScoreIO:
    def test_round_trip(self, tmp_path):
        s = make_set([0.125, 0.25], [0.75, 0.875], materials=["gelatin", "latex"])
        for i, r in enumerate(s.records):
            r.path = f"img{i}.png"
        p = tmp_path / "scores.csv"
        write_scores(s, p)
        loaded = read_scores(p)
        assert [(r.score, r.label, r.material, r.path) for r in loaded.records] \
            == [(r.score, r.label, r.material, r.path) for r in s.records]

    def test_bad_label_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a.png,alive,unknown,0.5\n")
        with pytest.raises(ContractError):
            read_scores(p)

    def test_det_csv_format(self, tmp_path):
        s = make_set([0.1], [0.9])
        p = tmp_path / "det.csv"
        write_det_csv(det_curve(s), p)
        lines = p.read_text().strip().splitlines()
        assert lines[0] == "threshold,ferrlive,ferrfake"
        assert len(lines) == 1 + len(det_curve(s).points)
        parts = lines[1].split(",")
        assert len(parts) == 3 and "." in parts[1]

    def test_det_svg_is_self_contained(self, tmp_path):
        s = make_set([0.1, 0.4], [0.6, 0.9])
        p = tmp_path / "det.svg"
        write_det_svg(det_curve(s), p)
        text = p.read_text()
        assert text.startswith("<svg")
        assert "polyline" in text
        assert "0-20%" in text and "0-100%" in text

    def test_materials_listing(self):
        s = make_set([0.1], [0.9, 0.8], materials=["silicone", "gelatin"])
        assert s.materials() == ["gelatin", "silicone"]

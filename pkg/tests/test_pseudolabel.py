import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import oracles
import probes
from compmotion import pseudolabel as pl
from compmotion.preprocess import FeatureSequence
from compmotion.saliency import PseudoScores

unit = st.floats(0.0, 1.0)
score_arrays = hnp.arrays(np.float64, st.integers(1, 40), elements=st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]) | unit)


def test_single_examples():
    assert not pl.single_threshold(np.array([0.9, 0.1]), 0, 0.5).labels.any()
    np.testing.assert_array_equal(pl.single_threshold(np.array([0.2, 0.8]), 1, 0.5).labels, [0, 1])
    np.testing.assert_array_equal(pl.single_threshold(np.array([0.5]), 1, 0.5).labels, [0])


def test_dual_examples():
    out = pl.dual_threshold(np.array([0.1, 0.5, 0.9]), 1, 0.3, 0.7)
    np.testing.assert_array_equal(out.used, [True, False, True])
    np.testing.assert_array_equal(out.labels[out.used], [0, 1])
    neg = pl.dual_threshold(np.array([0.1, 0.5, 0.9]), 0, 0.3, 0.7)
    assert neg.used.all() and not neg.labels.any()
    edges = pl.dual_threshold(np.array([0.3, 0.7]), 1, 0.3, 0.7)
    assert not edges.used.any()
    with pytest.raises(ValueError):
        pl.dual_threshold(np.array([0.1]), 1, 0.7, 0.7)


@settings(max_examples=300, deadline=None)
@given(score_arrays, st.integers(0, 1), unit)
def test_single_matches_case_analysis(s, pred, tau):
    s = np.r_[s, tau]  # always include the boundary
    out = pl.single_threshold(s, pred, tau)
    labels, used = oracles.single_rule(s, pred, tau)
    assert out.labels.tolist() == labels and out.used.tolist() == used


@settings(max_examples=300, deadline=None)
@given(score_arrays, st.integers(0, 1), unit, unit)
def test_dual_matches_case_analysis(s, pred, a, b):
    assume(a < b)
    s = np.r_[s, a, b]
    out = pl.dual_threshold(s, pred, a, b)
    labels, used = oracles.dual_rule(s, pred, a, b)
    assert out.used.tolist() == used
    assert out.labels[out.used].tolist() == [z for z, u in zip(labels, used) if u]


@settings(max_examples=200, deadline=None)
@given(score_arrays, unit, unit)
def test_raising_tau_never_adds_positives(s, t1, t2):
    lo, hi = sorted((t1, t2))
    a = pl.single_threshold(s, 1, lo).labels
    b = pl.single_threshold(s, 1, hi).labels
    assert np.all(b <= a)


@settings(max_examples=200, deadline=None)
@given(score_arrays, st.lists(unit, min_size=4, max_size=4, unique=True))
def test_widening_band_never_adds_used_frames(s, ts):
    a, b, c, d = sorted(ts)  # [b, c] inside [a, d]
    narrow = pl.dual_threshold(s, 1, b, c).n_used
    wide = pl.dual_threshold(s, 1, a, d).n_used
    assert wide <= narrow


@settings(max_examples=100, deadline=None)
@given(score_arrays, unit, unit)
def test_negative_videos_are_all_used_zero(s, a, b):
    assume(a < b)
    for out in (pl.single_threshold(s, 0, a), pl.dual_threshold(s, 0, a, b)):
        assert out.used.all() and not out.labels.any()


@settings(max_examples=100, deadline=None)
@given(score_arrays, unit)
def test_band_free_dual_equals_single(s, tau2):
    tau1 = np.nextafter(tau2, -np.inf)
    assume(not np.any((s >= tau1) & (s <= tau2)))
    d = pl.dual_threshold(s, 1, tau1, tau2)
    single = pl.single_threshold(s, 1, tau1)
    assert d.used.all()
    np.testing.assert_array_equal(d.labels, single.labels)


def test_threshold_spec_validation_and_round_trip():
    with pytest.raises(ValueError):
        pl.ThresholdSpec.dual(0.6, 0.4)
    with pytest.raises(ValueError):
        pl.ThresholdSpec.single(float("nan"))
    with pytest.raises(ValueError):
        pl.ThresholdSpec("triple", tau=0.1)
    for spec in (pl.ThresholdSpec.single(0.3), pl.ThresholdSpec.dual(0.2, 0.8, pl.RAW)):
        assert pl.ThresholdSpec.from_dict(spec.to_dict()) == spec
    assert pl.ThresholdSpec.single(0.3).label == "1 Thr." and pl.ThresholdSpec.dual(0.1, 0.2).label == "2 Thr."


def test_raw_scale_thresholds_raw_aggregates():
    ps = PseudoScores("v", np.array([0.0, 0.5, 1.0]), np.array([1.0, 4.6, 8.0]))
    out = pl.apply_threshold(ps, 1, pl.ThresholdSpec.single(4.5, pl.RAW))
    np.testing.assert_array_equal(out.labels, [0, 1, 1])


def test_calibration_separable_picks_smallest_gap_point():
    s = np.array([0.0, 0.1, 0.2, 0.7, 0.9, 1.0])
    y = np.array([0, 0, 0, 1, 1, 1])
    cal = pl.calibrate_thresholds([s], [y])
    grid = np.linspace(0.0, 1.0, 101)
    assert cal.fp == cal.fn == 0
    assert cal.spec.tau == grid[20]


def test_calibration_identical_scores():
    cal = pl.calibrate_thresholds([np.full(6, 0.4)], [np.array([1, 0, 1, 0, 0, 1])])
    assert cal.spec.tau > 0.4 and cal.spec.tau == np.nextafter(0.4, 1)
    assert cal.fp == 0 and cal.fn == 3


def test_calibration_errors():
    with pytest.raises(pl.CalibrationError):
        pl.calibrate_thresholds([], [])
    with pytest.raises(pl.CalibrationError):
        pl.calibrate_thresholds([np.zeros(3)], [np.zeros(4)])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_single_calibration_matches_brute_force(seed, n_videos):
    rng = np.random.default_rng(seed)
    vids = [rng.choice([0.0, 0.3, 0.5, 1.0], size=rng.integers(1, 30)) if rng.random() < 0.3
            else rng.random(rng.integers(1, 30)) for _ in range(n_videos)]
    refs = [(rng.random(v.size) < 0.5).astype(int) for v in vids]
    cal = pl.calibrate_thresholds(vids, refs)
    s, y = np.concatenate(vids), np.concatenate(refs)
    lo, hi = s.min(), s.max()
    # same candidate grid; the search over it is the independent part
    grid = np.linspace(lo, hi, 101) if hi > lo else [np.nextafter(lo, np.inf)]
    best = None
    for tau in grid:  # first strict improvement keeps the smaller tau
        fp, fn = oracles.fp_fn(s, y, tau)
        if best is None or abs(fp - fn) < best[0]:
            best = (abs(fp - fn), tau, fp, fn)
    assert (cal.fp, cal.fn) == (best[2], best[3])
    assert cal.spec.tau == best[1]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dual_calibration_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    s = rng.random(40)
    y = (s + rng.normal(0, 0.3, 40) > 0.6).astype(int)
    cal = pl.calibrate_thresholds([s], [y], mode=pl.DUAL, n_grid=21, min_coverage=0.8)
    grid = np.linspace(s.min(), s.max(), 21)
    best = None
    for i in range(21):
        for j in range(i + 1, 21):
            fp, fn, used = oracles.dual_fp_fn_used(s, y, grid[i], grid[j])
            if used < 0.8 * s.size:
                continue
            key = (abs(fp - fn), fp + fn, -used, grid[i], grid[j])
            if best is None or key < best:
                best = key
    assert (cal.spec.tau1, cal.spec.tau2) == (best[3], best[4])
    assert cal.n_used == -best[2]


def test_dual_calibration_impossible_coverage():
    s = np.linspace(0, 1, 10)
    with pytest.raises(pl.CalibrationError):
        pl.calibrate_thresholds([s], [s > 0.5], mode=pl.DUAL, n_grid=3, min_coverage=1.01)


def _feats(rng, n, T=6, D=4):
    return [FeatureSequence(f"v{k}", rng.normal(scale=0.3, size=(T, D))) for k in range(n)]


def test_all_negative_predictions_give_all_zero_labels():
    rng = np.random.default_rng(0)
    feats = _feats(rng, 4)
    model = probes.ConstantModel(-5.0)
    x, z, labels = pl.build_pseudo_dataset(feats, model, "IG", pl.ThresholdSpec.single(0.5), steps=4)
    assert x.shape == (24, 4) and not z.any()
    assert all(l.used.all() for l in labels)


def test_wide_band_excludes_nearly_everything():
    rng = np.random.default_rng(1)
    feats = _feats(rng, 3, T=20)
    model = probes.LinearProbe(rng.normal(size=(20, 4)), bias=5.0)
    spec = pl.ThresholdSpec.dual(1e-9, 1 - 1e-9)
    x, z, labels = pl.build_pseudo_dataset(feats, model, "VG", spec)
    # only the min and max frame of each positive video survive
    assert x.shape[0] == 2 * 3
    assert z.sum() == 3


def test_true_label_override_and_map_callback():
    rng = np.random.default_rng(2)
    feats = _feats(rng, 3)
    seen = []
    out = pl.score_videos(probes.ConstantModel(-5.0), feats, "VG", true_labels=[1, 0, 1], on_map=seen.append)
    assert [sc.prediction for sc in out] == [1, 0, 1]
    assert [m.video_id for m in seen] == ["v0", "v2"]
    assert out[1].scores is None


def test_pseudo_label_file_round_trip(tmp_path):
    labels = [pl.FramePseudoLabels("a", np.array([0, 1, 1], np.int8), np.array([True, False, True])),
              pl.FramePseudoLabels("b", np.zeros(2, np.int8), np.ones(2, bool))]
    pl.write_pseudo_labels(labels, tmp_path / "p.jsonl")
    back = pl.read_pseudo_labels(tmp_path / "p.jsonl")
    for a, b in zip(labels, back):
        assert a.video_id == b.video_id
        assert np.array_equal(a.labels, b.labels) and np.array_equal(a.used, b.used)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
import tdist
from compmotion import evaluation as ev


def test_auc_examples():
    assert ev.auc([0.9, 0.1], [1, 0]) == 1.0
    assert ev.auc([0.3] * 6, [1, 0] * 3) == 0.5
    assert ev.auc([0.1, 0.9], [1, 0]) == 0.0


def test_auc_undefined_for_one_class():
    with pytest.raises(ev.UndefinedAUC):
        ev.auc([0.1, 0.2], [1, 1])
    assert ev.auc_or_none([0.1, 0.2], [0, 0]) is None
    with pytest.raises(ValueError):
        ev.auc([0.1, 0.2], [0, 1, 1])


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 200), st.booleans())
def test_auc_matches_pair_counting(seed, n, ties):
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 5, n).astype(float) if ties else rng.random(n)
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    assert abs(ev.auc(s, y) - oracles.pair_count_auc(s, y)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_auc_rank_invariance(seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=80)
    y = (rng.random(80) < 0.4).astype(int)
    y[:2] = [0, 1]
    a = ev.auc(s, y)
    k, b = rng.uniform(0.1, 3), rng.normal()
    for f in (lambda v: k * v + b, np.exp, lambda v: np.arctan(v) * 7, lambda v: v ** 3):
        assert abs(ev.auc(f(s), y) - a) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_auc_complement_symmetry(seed):
    rng = np.random.default_rng(seed)
    s = rng.permutation(50).astype(float)
    y = rng.integers(0, 2, 50)
    y[:2] = [0, 1]
    assert ev.auc(s, y) + ev.auc(s, 1 - y) == pytest.approx(1.0, abs=1e-12)


def test_confusion_examples():
    y = np.array([1, 0, 1, 1, 0])
    assert ev.confusion_counts(y, y) == ev.Confusion(3, 0, 2, 0)
    inv = ev.confusion_counts(y, 1 - y)
    assert inv.tp == 0 and inv.tn == 0
    with pytest.raises(ValueError):
        ev.confusion_counts(y, y[:3])


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 60))
def test_confusion_matches_loop(seed, n):
    rng = np.random.default_rng(seed)
    y, p, m = rng.integers(0, 2, n), rng.integers(0, 2, n), rng.random(n) < 0.7
    tp = fp = tn = fn = 0
    for yi, pi, mi in zip(y, p, m):
        if not mi:
            continue
        if yi and pi:
            tp += 1
        elif not yi and pi:
            fp += 1
        elif not yi and not pi:
            tn += 1
        else:
            fn += 1
    c = ev.confusion_counts(y, p, m)
    assert c == (tp, fp, tn, fn)
    assert sum(c) == m.sum()


def test_t_test_reference_case():
    res = ev.paired_t_test([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
    assert res.t == pytest.approx(2 / (1 / math.sqrt(3)), rel=1e-12)
    assert f"{res.t:.7f}".startswith("3.4641016")
    assert res.dof == 2
    assert abs(res.p - tdist.two_sided_p(res.t, 2)) < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 20))
def test_t_test_p_matches_quadrature_and_is_symmetric(seed, n):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.normal(size=n)
    r = ev.paired_t_test(a, b)
    assert abs(r.p - tdist.two_sided_p(r.t, r.dof)) < 1e-6
    s = ev.paired_t_test(b, a)
    assert s.t == pytest.approx(-r.t, rel=1e-12) and s.p == pytest.approx(r.p, rel=1e-12)


def test_t_test_degenerate():
    b = np.array([0.2, 0.5, 0.9])
    with pytest.raises(ev.DegenerateTest):
        ev.paired_t_test(b + 0.25, b + 0.25)
    with pytest.raises(ev.DegenerateTest):
        ev.paired_t_test(b, b)
    with pytest.raises(ValueError):
        ev.paired_t_test([1.0], [0.0])


def test_t_test_constant_shift_is_degenerate():
    # the shift must be exact in binary for the differences to be identical
    b = np.array([0.5, 1.0, 2.0])
    with pytest.raises(ev.DegenerateTest):
        ev.paired_t_test(b + 0.25, b)


def fold(subject, frame_auc, condition=ev.PSEUDO, video_auc=0.9):
    model, method, thr = ("TemporalAttention", "IG", "1 Thr.") if condition == ev.PSEUDO else ("-", "-", "-")
    return ev.FoldResult(subject, model, method, thr, condition,
                         video_auc if condition == ev.PSEUDO else None, frame_auc)


def test_aggregate_single_fold_and_two_folds():
    r = ev.aggregate_report([fold("S1", 0.6)])
    assert r.cell("frame_auc").std == 0.0
    r = ev.aggregate_report([fold("S1", 0.6), fold("S2", 0.8)])
    c = r.cell("frame_auc")
    assert c.mean == pytest.approx(0.7, abs=1e-15) and c.std == pytest.approx(0.1, abs=1e-15)
    assert c.fmt() == "0.70 ± 0.10"


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=18))
def test_aggregate_matches_independent_mean_std(values):
    r = ev.aggregate_report([fold(f"S{k:02d}", v) for k, v in enumerate(values)])
    c = r.cell("frame_auc")
    mean = math.fsum(values) / len(values)
    var = math.fsum((v - mean) ** 2 for v in values) / len(values)
    assert c.mean == pytest.approx(mean, abs=1e-12)
    assert c.std == pytest.approx(math.sqrt(var), abs=1e-12)
    assert c.n_folds == len(values)


def test_undefined_auc_is_excluded_not_averaged():
    r = ev.aggregate_report([fold("S1", 0.6), fold("S2", None), fold("S3", 0.8)])
    c = r.cell("frame_auc")
    assert c.n_folds == 2 and c.n_excluded == 1 and c.mean == pytest.approx(0.7)


def test_comparisons_against_reference_conditions():
    results = []
    for k, (p, g, b) in enumerate([(0.7, 0.75, 0.6), (0.8, 0.82, 0.61), (0.75, 0.74, 0.65)]):
        s = f"S{k}"
        results += [fold(s, p), fold(s, g, ev.GROUND_TRUTH), fold(s, b, ev.LABEL_BROADCAST)]
    r = ev.aggregate_report(results)
    assert [(c.left, c.right) for c in r.comparisons] == [
        ("TemporalAttention IG 1 Thr.", "Ground Truth"), ("TemporalAttention IG 1 Thr.", "Video Label")]
    expect = ev.paired_t_test([0.7, 0.8, 0.75], [0.6, 0.61, 0.65])
    assert r.comparisons[1].t == expect.t and r.comparisons[1].p == expect.p
    text = r.to_text()
    assert "Ground Truth" in text and "0.75 ± 0.04" in text
    with pytest.raises(KeyError):
        r.cell("video_auc", ev.GROUND_TRUTH)


def test_csv_has_one_row_per_cell():
    r = ev.aggregate_report([fold("S1", 0.6), fold("S1", 0.7, ev.GROUND_TRUTH)])
    lines = r.to_csv().splitlines()
    assert lines[0].split(",") == ev.CSV_COLUMNS
    assert len(lines) - 1 == len(r.cells) == 3


def test_fold_result_round_trip():
    f = fold("S1", 0.6)
    assert ev.FoldResult.from_dict(f.to_dict()) == f


def test_aggregate_needs_input():
    with pytest.raises(ValueError):
        ev.aggregate_report([])

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compmotion import models as M
from compmotion.models import FrameClassifier, TrainConfig, VideoClassifier

VARIANTS = [M.ATTENTION, M.RECURRENT]


def small_video(variant, seed=0, D=6, max_len=12, hidden=8):
    return VideoClassifier(variant, D, max_len, hidden_size=hidden, dropout=0.2, seed=seed)


def separable_videos(n=24, D=6, seed=0):
    """Positive videos drift on feature 0 over a stretch; negatives stay near rest."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for k in range(n):
        T = int(rng.integers(6, 11))
        x = rng.normal(0.0, 0.005, size=(T, D))
        y = k % 2
        if y:
            x[T // 2:, 0] += 0.3
        xs.append(x)
        ys.append(y)
    return xs, np.array(ys)


def test_default_hidden_sizes():
    assert VideoClassifier(M.RECURRENT, 99, 10).hidden_size == 192
    with pytest.raises(ValueError):
        VideoClassifier("Transformer", 99, 10)


@pytest.mark.parametrize("variant", VARIANTS)
def test_untrained_probability_in_open_interval(variant):
    m = small_video(variant)
    rng = np.random.default_rng(1)
    for T in (2, 7, 12):
        p = M.forward_video(m, rng.normal(size=(T, 6)))
        assert 0.0 < p < 1.0 and math.isfinite(p)


@pytest.mark.parametrize("variant", VARIANTS)
def test_dimension_mismatch(variant):
    with pytest.raises(M.DimensionError):
        M.forward_video(small_video(variant), np.zeros((5, 7)))
    with pytest.raises(M.DimensionError):
        M.forward_frame(FrameClassifier(6, (32,)), np.zeros(5))


@pytest.mark.parametrize("variant", VARIANTS)
def test_padding_length_does_not_change_output(variant):
    m = small_video(variant, max_len=24)
    rng = np.random.default_rng(2)
    seqs = [rng.normal(scale=0.1, size=(T, 6)) for T in (5, 12, 9)]
    x1, m1 = M.pad_batch(seqs, 12)
    x2, m2 = M.pad_batch(seqs, 24)
    p1 = m.logits(x1, m1).data
    p2 = m.logits(x2, m2).data
    np.testing.assert_allclose(p1, p2, rtol=1e-12, atol=1e-12)
    # padded batch agrees with each sequence evaluated alone
    alone = [M.forward_video(m, s) for s in seqs]
    np.testing.assert_allclose(M.predict_videos(m, seqs), alone, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("variant", VARIANTS)
def test_padding_values_are_ignored(variant):
    m = small_video(variant)
    rng = np.random.default_rng(3)
    x, mask = M.pad_batch([rng.normal(size=(5, 6))], 12)
    junk = x.copy()
    junk[0, 5:] = rng.normal(size=(7, 6)) * 100
    np.testing.assert_allclose(m.logits(x, mask).data, m.logits(junk, mask).data, rtol=1e-12)


def test_frame_zero_input_zero_bias_gives_half():
    m = FrameClassifier(6, (32,), seed=4)
    m.params["b_out"].data = np.zeros(1)
    m.params["b0"].data = np.zeros(32)
    assert M.forward_frame(m, np.zeros(6)) == 0.5


def test_frame_eval_is_deterministic():
    m = FrameClassifier(6, (32, 48), dropout=0.3, seed=5)
    v = np.random.default_rng(0).normal(size=6)
    assert M.forward_frame(m, v) == M.forward_frame(m, v)
    with pytest.raises(ValueError):
        FrameClassifier(6, (33,))
    with pytest.raises(ValueError):
        FrameClassifier(6, (32, 32, 32))


@pytest.mark.parametrize("p,thr,expect", [(0.7, 0.5, 1), (0.5, 0.5, 0), (1e-9, 0.0, 1), (0.0, 0.0, 0)])
def test_label_from_probability(p, thr, expect):
    assert M.label_from_probability(p, thr) == expect


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(M.LEARNING_RATES), st.integers(1, 200))
def test_cosine_schedule(lr, max_epochs):
    rates = [M.cosine_lr(lr, e, max_epochs) for e in range(max_epochs + 1)]
    assert rates[0] == lr
    assert all(b <= a for a, b in zip(rates, rates[1:]))
    assert rates[-1] == pytest.approx(0.0, abs=1e-20)
    e = max_epochs // 2
    assert rates[e] == pytest.approx(lr * 0.5 * (1 + math.cos(math.pi * e / max_epochs)), rel=1e-15)


def test_train_config_grid_and_override():
    with pytest.raises(ValueError, match="grid"):
        TrainConfig(learning_rate=0.01)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=8)
    assert TrainConfig(learning_rate=0.01, batch_size=8, allow_override=True).learning_rate == 0.01
    cfg = TrainConfig(seed=9)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_separable_points_loss_decreases():
    rng = np.random.default_rng(0)
    x = np.r_[rng.normal(-1, 0.2, size=(5, 2)), rng.normal(1, 0.2, size=(5, 2))]
    y = np.r_[np.zeros(5), np.ones(5)]
    m = FrameClassifier(2, (32,), dropout=0.0, input_scale=1.0, seed=0)
    cfg = TrainConfig(learning_rate=1e-3, batch_size=16, max_epochs=30, val_fraction=0.0, seed=0)
    rep = M.train(m, x, y, cfg)
    first = rep.train_loss[:5]
    assert all(b <= a + 1e-3 for a, b in zip(first, first[1:]))
    assert rep.train_loss[-1] < rep.train_loss[0]


def scripted_val_losses(monkeypatch, values):
    it = iter(values)
    monkeypatch.setattr(M, "_eval_loss", lambda *a, **k: next(it))


@pytest.mark.parametrize("patience,expect_run", [(0, 3), (1, 4), (2, 5)])
def test_patience_semantics(monkeypatch, patience, expect_run):
    scripted_val_losses(monkeypatch, [1.0, 0.8, 0.9, 0.85, 0.95, 0.7, 0.6, 0.5])
    x, y = np.random.default_rng(0).normal(size=(20, 3)), np.r_[np.zeros(10), np.ones(10)]
    m = FrameClassifier(3, (32,), seed=0)
    rep = M.train(m, x, y, TrainConfig(max_epochs=8, early_stop_patience=patience))
    assert rep.epochs_run == expect_run and rep.stopped_early
    assert rep.best_epoch == 1


def test_best_epoch_parameters_restored(monkeypatch):
    # the best validation loss is at epoch 2; later epochs keep moving the weights
    scripted_val_losses(monkeypatch, [1.0, 0.9, 0.5, 0.6, 0.7, 0.8])
    snaps = []
    real_state = FrameClassifier.state_dict

    def spy(self):
        s = real_state(self)
        snaps.append(s)
        return s

    monkeypatch.setattr(FrameClassifier, "state_dict", spy)
    x, y = np.random.default_rng(0).normal(size=(20, 3)), np.r_[np.zeros(10), np.ones(10)]
    m = FrameClassifier(3, (32,), seed=0)
    rep = M.train(m, x, y, TrainConfig(max_epochs=6, early_stop_patience=10))
    assert rep.best_epoch == int(np.argmin(rep.val_loss)) == 2
    # snapshot 0 is the initial state; snapshots 1..3 follow epochs 0..2
    for k, v in snaps[3].items():
        np.testing.assert_array_equal(m.params[k].data, v)


@pytest.mark.parametrize("variant", VARIANTS)
def test_training_is_bit_reproducible(variant):
    xs, ys = separable_videos(12)
    cfg = TrainConfig(max_epochs=3, seed=4)
    a, b = small_video(variant, seed=1), small_video(variant, seed=1)
    ra, rb = M.train(a, xs, ys, cfg), M.train(b, xs, ys, cfg)
    assert ra.train_loss == rb.train_loss and ra.val_loss == rb.val_loss
    for k in a.params:
        assert np.array_equal(a.params[k].data, b.params[k].data)


def test_attention_model_learns_separable_videos():
    xs, ys = separable_videos(32)
    m = small_video(M.ATTENTION, seed=0)
    M.train(m, xs, ys, TrainConfig(max_epochs=80, early_stop_patience=80, val_fraction=0.0, seed=0))
    probs = M.predict_videos(m, xs)
    assert probs[ys == 1].min() > 0.5
    assert probs[ys == 0].max() < 0.5


def test_training_errors():
    m = FrameClassifier(3, (32,))
    with pytest.raises(M.TrainingError):
        M.train(m, np.zeros((0, 3)), np.zeros(0), TrainConfig())
    with pytest.raises(M.TrainingError):
        M.train(m, np.zeros((4, 3)), np.zeros(3), TrainConfig())


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_names_epoch():
    m = FrameClassifier(3, (32,), seed=0)
    x = np.random.default_rng(0).normal(size=(20, 3))
    x[0, 0] = np.inf
    with pytest.raises(M.TrainingDiverged) as info:
        M.train(m, x, np.r_[np.zeros(10), np.ones(10)], TrainConfig(val_fraction=0.0))
    assert info.value.epoch == 0


def test_stratified_split_keeps_class_balance():
    labels = np.r_[np.zeros(40), np.ones(20)]
    tr, va = M.stratified_split(labels, 0.15, np.random.default_rng(0))
    assert (labels[va] == 0).sum() == 6 and (labels[va] == 1).sum() == 3
    assert sorted(np.r_[tr, va]) == list(range(60))


@pytest.mark.parametrize("variant", VARIANTS)
def test_video_checkpoint_round_trip(tmp_path, variant):
    m = small_video(variant, seed=3)
    M.save_checkpoint(m, tmp_path / "a.json", TrainConfig(seed=3))
    back = M.load_checkpoint(tmp_path / "a.json")
    assert back.architecture() == m.architecture()
    for k in m.params:
        assert np.array_equal(back.params[k].data, m.params[k].data)
    x = np.random.default_rng(0).normal(size=(7, 6))
    assert M.forward_video(back, x) == M.forward_video(m, x)


def test_frame_checkpoint_round_trip(tmp_path):
    m = FrameClassifier(5, (48, 32), seed=2)
    M.save_checkpoint(m, tmp_path / "b.json")
    back = M.load_checkpoint(tmp_path / "b.json")
    v = np.arange(5.0) / 10
    assert M.forward_frame(back, v) == M.forward_frame(m, v)


def test_checkpoint_schema_checked(tmp_path):
    p = tmp_path / "c.json"
    M.save_checkpoint(FrameClassifier(5, (32,)), p)
    doc = json.loads(p.read_text())
    doc["schema_version"] = "99"
    p.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="schema"):
        M.load_checkpoint(p)

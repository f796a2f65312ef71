import math

import numpy as np
import pytest

import fsgnet


def test_guided_filter_constant_and_shape():
    rng = np.random.default_rng(0)
    guide = rng.random((12, 10))
    flat = np.full((12, 10), 0.3)
    out = fsgnet.guided_filter(guide, flat, radius=2, eps=0.01)
    assert out.shape == (12, 10)
    np.testing.assert_allclose(out, 0.3, atol=1e-12)


def test_unit_attention_matches_classical_filter():
    rng = np.random.default_rng(1)
    guide = rng.random((1, 1, 16, 16))
    target = rng.random((1, 1, 16, 16))
    att = fsgnet.attention_guided_filter(guide, target, np.ones_like(guide), radius=1, eps=0.0)
    cls = fsgnet.guided_filter(guide, target, radius=1, eps=0.0)
    np.testing.assert_allclose(att, cls, atol=1e-9)


def test_attention_coefficients_solve_the_window_least_squares():
    rng = np.random.default_rng(2)
    guide, target, att = (rng.random((3, 3)) for _ in range(3))
    a, b = fsgnet.attention_guided_coefficients(guide, target, att, radius=1, eps=0.1)
    w = att.ravel() ** 2
    i, g = guide.ravel(), target.ravel()
    lhs = np.array([[np.sum(w * i * i) + 0.1, np.sum(w * i)], [np.sum(w * i), np.sum(w)]])
    rhs = np.array([np.sum(w * i * g), np.sum(w * g)])
    oa, ob = np.linalg.solve(lhs, rhs)
    assert a[1, 1] == pytest.approx(oa, rel=1e-9)
    assert b[1, 1] == pytest.approx(ob, rel=1e-9)


def test_losses():
    y = (np.random.default_rng(3).random((4, 4)) > 0.5).astype(float)
    assert fsgnet.bce_loss(np.full((4, 4), 0.5), y) == pytest.approx(math.log(2), abs=1e-12)
    assert fsgnet.dice_loss(np.zeros(9), np.ones(9)) == pytest.approx(1 - 1 / 10, abs=1e-15)


def test_metrics():
    probs = np.array([[0.9, 0.4], [0.6, 0.1]], dtype=np.float32)
    mask = np.array([[1, 0], [0, 0]], dtype=np.uint8)
    assert fsgnet.confusion(probs, mask) == {"tp": 1, "fp": 1, "tn": 2, "fn": 0}
    report = fsgnet.score(probs, mask)
    assert list(report) == ["mIoU", "F1", "Acc", "AUC", "Sen", "MCC"]
    assert report["Acc"] == pytest.approx(75.0)
    assert fsgnet.auc(np.full(4, 0.2, dtype=np.float32), np.array([0, 1, 0, 1], dtype=np.uint8)) == 50.0
    assert fsgnet.rank_average([[1.0], [1.0]], [True]) == [1.5, 1.5]
    assert fsgnet.format_delta(-2.92) == "(-2.92)"
    with pytest.raises(ValueError):
        fsgnet.confusion(probs, mask, valid=np.zeros((2, 2), dtype=np.uint8))


def test_padding_and_schedule():
    rec = fsgnet.padding_for(584, 565, "DRIVE")
    assert (rec.pad_h, rec.pad_w, rec.top, rec.left) == (608, 608, 12, 21)
    assert fsgnet.padding_for(97, 33).pad_w == 64
    with pytest.raises(fsgnet.ValidationError):
        fsgnet.padding_for(10, 10, "KITTI")
    assert fsgnet.lr_at(20) == pytest.approx(1e-3)
    assert fsgnet.lr_at(70) == pytest.approx(5.05e-4)


def test_variants():
    counts = [fsgnet.count_parameters(v) for v in fsgnet.variant_names()]
    assert counts == sorted(counts, reverse=True)
    for v, n in zip(fsgnet.variant_names(), counts):
        assert abs(n / 1e6 - fsgnet.reference_params_millions(v)) / fsgnet.reference_params_millions(v) < 0.15


def test_missing_checkpoint_raises():
    with pytest.raises(ValueError):
        fsgnet.Model("/nonexistent/model.pt")

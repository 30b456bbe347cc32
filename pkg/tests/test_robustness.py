import csv
import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgepool.data import ImageSet, synth_dataset
from edgepool.robustness import (
    EvalReport,
    TransformSpec,
    accuracy_under_transform,
    add_gaussian_noise,
    classification_consistency,
    noise_robustness,
    pair_agreement,
    rotate_image,
    stability_curve,
    summarize,
    translate_image,
    write_reports_csv,
    write_reports_json,
)


class ConstantModel:
    """Always predicts ``cls`` with fixed logits."""

    variant_tag = "constant"

    def __init__(self, k=2, cls=0):
        self.logits = np.zeros(k)
        self.logits[cls] = 1.0

    def normalize(self, images):
        return np.asarray(images, dtype=np.float64)

    def __call__(self, x):
        return np.tile(self.logits, (len(x), 1))


class BrightnessModel:
    """Class 1 when the mean of the top-left quadrant is bright; depends on the transform."""

    variant_tag = "brightness"

    def normalize(self, images):
        return np.asarray(images, dtype=np.float64)

    def __call__(self, x):
        h, w = x.shape[-2:]
        s = x[:, :, : h // 2, : w // 2].mean(axis=(1, 2, 3))
        return np.stack([0.3 - s, s - 0.3], axis=1) * 10


@pytest.fixture(scope="module")
def data():
    return synth_dataset("shapes2", 12, 32, seed=0)


# --- transforms -------------------------------------------------------------


def test_identity_transforms_bit_exact():
    x = np.random.default_rng(0).random((2, 3, 9, 7))
    assert np.array_equal(rotate_image(x, 0), x)
    assert np.array_equal(translate_image(x, 0, 0), x)
    assert np.array_equal(add_gaussian_noise(x, 0.0, 0.0, seed=1), x)


def test_rotate_quarter_turns_exact():
    x = np.random.default_rng(1).random((3, 8, 8))
    np.testing.assert_allclose(rotate_image(x, 90), np.flip(np.swapaxes(x, -1, -2), -2), atol=1e-6)
    four = x
    for _ in range(4):
        four = rotate_image(four, 90)
    np.testing.assert_allclose(rotate_image(x, 360), four, atol=1e-6)
    np.testing.assert_allclose(rotate_image(x, 360), x, atol=1e-6)
    np.testing.assert_allclose(rotate_image(x, 180), x[..., ::-1, ::-1], atol=1e-6)


def test_rotate_bilinear_and_zero_fill():
    x = np.ones((1, 9, 9))
    out = rotate_image(x, 45)
    assert out.shape == x.shape
    assert out[0, 4, 4] == pytest.approx(1.0)
    assert out[0, 0, 0] == 0.0  # corner samples fall outside
    assert np.all((out >= 0) & (out <= 1 + 1e-12))
    with pytest.raises(ValueError):
        rotate_image(np.array([[np.nan, 0.0], [0.0, 0.0]]), 10)


def test_translate_impulse_and_inverse():
    x = np.zeros((5, 6))
    x[1, 2] = 1.0
    out = translate_image(x, dx=3, dy=2)
    assert out[3, 5] == 1.0 and out.sum() == 1.0
    y = np.random.default_rng(2).random((6, 6))
    back = translate_image(translate_image(y, 2, -1), -2, 1)
    np.testing.assert_array_equal(back[1:, :4], y[1:, :4])
    with pytest.raises(ValueError):
        translate_image(y, 6, 0)
    with pytest.raises(ValueError):
        translate_image(y, 0.5, 0)


def test_noise_statistics_over_a_million_draws():
    z = np.zeros(10**6)
    noisy = add_gaussian_noise(z, mean=0.5, sigma=2.0, seed=3)
    assert abs(noisy.mean() - 0.5) < 0.01 * 2.0  # 1% of sigma; the mean itself is 0.5
    assert abs(noisy.std() - 2.0) < 0.02
    np.testing.assert_array_equal(add_gaussian_noise(z[:10], 0, 1, seed=3), add_gaussian_noise(z[:10], 0, 1, seed=3))
    with pytest.raises(ValueError):
        add_gaussian_noise(z, sigma=-1)


def test_transform_spec_bounds_and_sampling():
    with pytest.raises(ValueError):
        TransformSpec("rotation", degrees=200)
    with pytest.raises(ValueError):
        TransformSpec("shear")
    rng = np.random.default_rng(0)
    spec = TransformSpec("translation", dx=3, dy=2)
    draws = {spec.sample(rng) for _ in range(500)}
    assert draws == set(itertools.product(range(4), range(3)))
    rot = [TransformSpec("rotation", degrees=90).sample(rng) for _ in range(200)]
    assert 0 <= min(rot) and max(rot) <= 90


# --- statistics -------------------------------------------------------------


def _two_pass(values):
    n = len(values)
    mean = sum(values) / n
    if n == 1:
        return mean, 0.0
    return mean, math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))


@given(st.lists(st.floats(0, 1), min_size=1, max_size=50))
@settings(max_examples=100, deadline=None)
def test_summarize_matches_two_pass(values):
    mean, sd = summarize(values)
    ref_mean, ref_sd = _two_pass(values)
    assert abs(mean - ref_mean) < 1e-12
    assert abs(sd - ref_sd) < 1e-12
    assert min(values) - 1e-12 <= mean <= max(values) + 1e-12
    assert sd >= 0


def test_pair_agreement_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(20):
        preds = rng.integers(0, 3, rng.integers(1, 8))
        pairs = [(i, j) for i in range(len(preds)) for j in range(len(preds)) if i != j]
        ref = 1.0 if not pairs else sum(preds[i] == preds[j] for i, j in pairs) / len(pairs)
        assert abs(pair_agreement(preds) - ref) < 1e-12


def test_report_curve_must_increase():
    with pytest.raises(ValueError):
        EvalReport("v", "m", "t", 0.5, 0.0, 1, curve=[(1.0, 0.5), (1.0, 0.4)])


# --- protocols ---------------------------------------------------------------


def test_constant_model_consistency_is_one(data):
    rot, trans = classification_consistency(ConstantModel(), data)
    assert rot.mean == 1.0 and trans.mean == 1.0
    assert rot.sd == 0.0
    assert len(trans.curve) == 13 and len(rot.curve) == 16
    _, grid = classification_consistency(ConstantModel(), data, max_shift=3, full_grid=True)
    assert grid.mean == 1.0 and "16 steps" in grid.transform


def test_single_step_consistency_is_one(data):
    rot, trans = classification_consistency(BrightnessModel(), data, rotations=[0], max_shift=0)
    assert rot.mean == 1.0 and trans.mean == 1.0


def test_consistency_matches_pair_oracle():
    # 3 images x 4 translations
    subset = synth_dataset("shapes2", 4, 32, seed=5).subset([0, 1, 2])
    model = BrightnessModel()
    _, rep = classification_consistency(model, subset, rotations=[0], max_shift=3)
    expected = []
    for img in subset.images:
        preds = [model(translate_image(img[None], t, t)).argmax(axis=1)[0] for t in range(4)]
        pairs = [(i, j) for i in range(4) for j in range(4) if i != j]
        expected.append(sum(preds[i] == preds[j] for i, j in pairs) / len(pairs))
    np.testing.assert_allclose(rep.values, expected, atol=1e-12)
    assert abs(rep.mean - np.mean(expected)) < 1e-12


def test_identity_accuracy_equals_plain(data):
    model = BrightnessModel()
    plain = float(np.mean(model(data.images).argmax(axis=1) == data.labels))
    rep = accuracy_under_transform(model, data, TransformSpec("rotation", degrees=0), trials=4)
    assert rep.mean == plain and rep.sd == 0.0 and rep.n == 4


def test_constant_model_accuracy_is_class_fraction(data):
    frac = float(np.mean(data.labels == 1))
    for spec in (TransformSpec("rotation", degrees=90), TransformSpec("translation", dx=5, dy=5),
                 TransformSpec("noise", sigma=2.0)):
        rep = accuracy_under_transform(ConstantModel(cls=1), data, spec, trials=3)
        assert rep.mean == frac and rep.sd == 0.0


def test_accuracy_stats_match_two_pass_and_threads_agree(data):
    model = BrightnessModel()
    spec = TransformSpec("translation", dx=12, dy=12)
    rep = accuracy_under_transform(model, data, spec, trials=7, seed=3)
    mean, sd = _two_pass(rep.values)
    assert abs(rep.mean - mean) < 1e-12 and abs(rep.sd - sd) < 1e-12
    again = accuracy_under_transform(model, data, spec, trials=7, seed=3, threads=3)
    assert again.values == rep.values


def test_noise_robustness_drop(data):
    assert noise_robustness(ConstantModel(), data, sigma=5.0, trials=3).drop == 0.0
    rep = noise_robustness(BrightnessModel(), data, sigma=0.0, trials=2)
    assert rep.drop == 0.0
    rep = noise_robustness(BrightnessModel(), data, sigma=3.0, trials=3)
    assert all(0 <= v <= 1 for v in rep.values)


def test_stability_curve(data):
    img, label = data.images[0], int(data.labels[0])
    flat = stability_curve(ConstantModel(cls=label), img, label)
    assert {v for _, v in flat.curve} == {flat.curve[0][1]}
    rep = stability_curve(BrightnessModel(), img, label, "translation")
    model = BrightnessModel()
    logits = model(model.normalize(img[None]))[0]
    p0 = np.exp(logits[label]) / np.exp(logits).sum()
    assert rep.curve[0] == (0.0, pytest.approx(p0, abs=1e-12))
    assert all(0 <= v <= 1 for _, v in rep.curve)
    assert [m for m, _ in rep.curve] == [float(t) for t in range(13)]


def test_empty_dataset_rejected():
    empty = ImageSet(np.zeros((0, 3, 16, 16)), np.zeros(0, np.int64), ("a", "b"))
    with pytest.raises(ValueError):
        accuracy_under_transform(ConstantModel(), empty, TransformSpec())


def test_report_files(tmp_path, data):
    reports = [noise_robustness(BrightnessModel(), data, sigma=1.0, trials=2),
               *classification_consistency(ConstantModel(), data, rotations=[0, 5], max_shift=1)]
    write_reports_csv(reports, tmp_path / "r.csv")
    write_reports_json(reports, tmp_path / "r.json")
    with (tmp_path / "r.csv").open() as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == ["variant", "metric", "transform", "magnitude", "mean", "sd", "n"]
    assert rows[0]["magnitude"] == "all" and float(rows[0]["mean"]) == reports[0].mean
    assert any(r["metric"] == "accuracy_drop" for r in rows)
    doc = json.loads((tmp_path / "r.json").read_text())
    assert len(doc["rows"]) == len(rows)
    assert doc["rows"][0]["mean"] == reports[0].mean
    assert doc["reports"][0]["drop"] == reports[0].drop

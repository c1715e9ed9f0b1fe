import numpy as np
import pytest
import torch

from affgrasp.affnet.model import (
    AffordanceNet,
    ModelConfig,
    load_affordance_checkpoint,
    normalize_directions,
    predict,
    save_affordance_checkpoint,
)
from affgrasp.affnet.train import TrainConfig, TrainingDiverged, train
from affgrasp.labeling import AffordanceLabel, LabeledExample
from oracles import enumerate_label

CFG = ModelConfig(height=48, width=48)


def make_model(seed=0, cfg=CFG):
    torch.manual_seed(seed)
    return AffordanceNet(cfg)


def test_output_shapes_and_ranges():
    model = make_model()
    pred = predict(model, np.random.default_rng(0).random((48, 48), dtype=np.float32))
    assert pred.mask_prob.shape == (48, 48)
    assert pred.directions.shape == (48, 48, 2)
    assert pred.mask_prob.min() >= 0.0 and pred.mask_prob.max() <= 1.0
    pred.validate()


def test_unit_norm_output_for_any_input():
    model = make_model(1)
    for seed in range(5):
        img = np.random.default_rng(seed).random((48, 48), dtype=np.float32)
        pred = predict(model, img)
        norms = np.linalg.norm(pred.directions, axis=-1)
        assert np.abs(norms - 1.0).max() <= 1e-6


def test_deterministic_inference():
    model = make_model(2)
    img = np.random.default_rng(3).random((48, 48), dtype=np.float32)
    a = predict(model, img)
    b = predict(model, img)
    assert np.array_equal(a.mask_prob, b.mask_prob)
    assert np.array_equal(a.directions, b.directions)


def test_grayscale_invariance():
    model = make_model(3)
    rng = np.random.default_rng(4)
    rgb = rng.random((48, 48, 3)).astype(np.float32)
    # shift chroma while preserving Rec.601 luminance exactly in float
    delta = rng.random((48, 48)).astype(np.float32) * 0.1
    jittered = rgb.copy()
    jittered[..., 0] += delta * 0.587
    jittered[..., 1] -= delta * 0.299
    lum = lambda x: x[..., 0] * 0.299 + x[..., 1] * 0.587 + x[..., 2] * 0.114
    assert np.abs(lum(rgb) - lum(jittered)).max() < 1e-6
    a = predict(model, rgb)
    b = predict(model, jittered)
    assert np.abs(a.mask_prob - b.mask_prob).max() <= 1e-5
    assert np.abs(a.directions - b.directions).max() <= 1e-4


def test_shape_mismatch_raises():
    model = make_model()
    with pytest.raises(ValueError):
        predict(model, np.zeros((32, 32), dtype=np.float32))


def test_normalize_eps_guard():
    raw = torch.zeros((1, 2, 4, 4), dtype=torch.float64)
    out = normalize_directions(raw)
    assert torch.isfinite(out).all()


def test_checkpoint_roundtrip(tmp_path):
    model = make_model(7)
    path = tmp_path / "m.ckpt"
    save_affordance_checkpoint(path, model)
    back = load_affordance_checkpoint(path)
    img = np.random.default_rng(1).random((48, 48), dtype=np.float32)
    a = predict(model, img)
    b = predict(back, img)
    assert np.array_equal(a.mask_prob, b.mask_prob)
    assert np.array_equal(a.directions, b.directions)


def disc_examples(n, seed, h=48, w=48, radius=8):
    """Clean synthetic dataset: bright disc on dark background, label on it."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        c = (int(rng.integers(radius, w - radius)), int(rng.integers(radius, h - radius)))
        mask, dirs = enumerate_label((h, w), [c], radius)
        img = np.full((h, w), 0.15, dtype=np.float32)
        yy, xx = np.mgrid[0:h, 0:w]
        blob = (xx - c[0]) ** 2 + (yy - c[1]) ** 2 <= (radius - 2) ** 2
        img[blob] = 0.8
        out.append(
            LabeledExample(
                image=img,
                label=AffordanceLabel(mask=mask, directions=dirs.astype(np.float32), centers=[]),
                session_id="synth",
                frame_index=0,
                camera="gripper",
            )
        )
    return out


class TestTraining:
    def test_zero_steps_identity(self):
        examples = disc_examples(4, 0)
        model, curve = train(examples, CFG, TrainConfig(steps=0, seed=5))
        reference = make_model(5)
        for p, q in zip(model.parameters(), reference.parameters()):
            assert torch.equal(p, q)
        assert curve == []

    def test_same_seed_bit_identical_curves(self):
        examples = disc_examples(8, 1)
        cfg = TrainConfig(learning_rate=1e-2, batch_size=4, steps=12, seed=3)
        _, a = train(examples, CFG, cfg)
        _, b = train(examples, CFG, cfg)
        assert a == b

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            train([], CFG, TrainConfig())

    def test_divergence_aborts_with_diagnostics(self):
        examples = disc_examples(4, 2)
        with pytest.raises(TrainingDiverged, match="step"):
            train(examples, CFG, TrainConfig(learning_rate=1e9, batch_size=4, steps=50, seed=0))

    @pytest.mark.slow
    def test_loss_drops_on_synthetic_discs(self):
        examples = disc_examples(50, 3)
        cfg = TrainConfig(learning_rate=1e-2, batch_size=8, steps=2000, seed=0, log_interval=0)
        _, curve = train(examples, CFG, cfg)
        first = np.mean([r["total"] for r in curve[:20]])
        last = np.mean([r["total"] for r in curve[-20:]])
        assert last < 0.25 * first

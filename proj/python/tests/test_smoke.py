import math

import numpy as np
import pytest

import cgcnn


def test_feature_shape_and_zero_patch():
    bank = cgcnn.FeatureBank.random(64, 11, 3, 4, seed=1)
    assert bank.pooled_window == 19
    assert cgcnn.feature_forward(np.random.default_rng(0).random((19, 19, 3)), bank).shape == (64,)
    zero = cgcnn.FeatureBank(5, 11, 3, 4)
    assert np.all(cgcnn.feature_forward(np.zeros((19, 19, 3)), zero) == 0.0)


def test_conv_matches_numpy():
    rng = np.random.default_rng(2)
    bank = cgcnn.FeatureBank.random(3, 3, 2, 2, seed=3)
    bank.biases = rng.normal(size=3)
    x = rng.random((7, 7, 2))
    out = cgcnn.conv_forward(x, bank)
    w = bank.filters
    expected = np.empty((3, 3, 3))
    for i in range(3):
        for j in range(3):
            window = x[2 * i : 2 * i + 3, 2 * j : 2 * j + 3, :]
            expected[i, j, :] = np.tensordot(w, window, axes=([1, 2, 3], [0, 1, 2])) + bank.biases
    np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-12)


def test_gradient_against_finite_differences():
    rng = np.random.default_rng(4)
    bank = cgcnn.FeatureBank.random(2, 3, 1, 2, seed=5)
    bank.biases = rng.normal(scale=0.3, size=2)
    head = cgcnn.ClassifierHead(3, 2)
    head.weights = rng.normal(size=(3, 2))
    x = rng.normal(size=(2, 7, 7, 1))
    labels = [0, 2]
    g = cgcnn.loss_and_grads(x, labels, bank, head)
    eps = 1e-5
    w = head.weights
    for idx in np.ndindex(w.shape):
        up, down = w.copy(), w.copy()
        up[idx] += eps
        down[idx] -= eps
        head.weights = up
        lu = cgcnn.loss_and_grads(x, labels, bank, head)["loss"]
        head.weights = down
        ld = cgcnn.loss_and_grads(x, labels, bank, head)["loss"]
        head.weights = w
        numeric = (lu - ld) / (2 * eps)
        assert abs(numeric - g["d_head"][idx[0] * 2 + idx[1]]) < 1e-7
    frozen = cgcnn.loss_and_grads(x, labels, bank, head, freeze_bank=True)
    assert np.all(frozen["d_filters"] == 0.0) and np.all(frozen["d_biases"] == 0.0)


def test_classify_uniform_for_zero_head():
    probs = cgcnn.classify(np.arange(6.0), cgcnn.ClassifierHead(4, 6))
    np.testing.assert_allclose(probs, 0.25, atol=1e-15)


def test_sampler_and_utility_identities():
    assert cgcnn.slide_lattice_size(25) == 2601
    assert cgcnn.slide_lattice_size(2) == 25
    images = cgcnn.synthetic_images(2, 80, 80, seed=6)
    patches, labels = cgcnn.build_task(images, classes=3, per_class=4, slide=5, seed=7)
    assert patches.shape == (12, 19, 19, 3)
    assert list(labels) == [0] * 4 + [1] * 4 + [2] * 4
    grid = [1, 2, 4, 8]
    r, s = [1.0, 0.6, 0.4, 0.2], [1.0, 0.9, 0.8, 0.7]
    mid = [(a + b) / 2 for a, b in zip(r, s)]
    assert math.isclose(cgcnn.transfer_utility(grid, r, s, s), 1.0, abs_tol=1e-12)
    assert abs(cgcnn.transfer_utility(grid, r, r, s)) <= 1e-12
    assert math.isclose(cgcnn.transfer_utility(grid, r, mid, s), 0.5, abs_tol=1e-12)


def test_knn_and_convergence():
    train = np.array([[0.0, 0.0], [10.0, 10.0]])
    assert cgcnn.knn_classify(train, [0, 1], np.array([[1.0, 1.0], [9.0, 8.0]]), 1) == [0, 1]
    assert cgcnn.has_converged([0.2, 0.5, 0.8, 0.81, 0.805], 3, 0.02)


def test_train_and_bank_round_trip(tmp_path):
    images = cgcnn.synthetic_images(3, 96, 96, seed=8)
    bank, accuracy = cgcnn.train(images, classes=4, per_class=4, features=8, iterations=2, seed=9)
    assert len(accuracy) == 2 and all(0.0 <= a <= 1.0 for a in accuracy)
    again, _ = cgcnn.train(images, classes=4, per_class=4, features=8, iterations=2, seed=9)
    assert bank == again
    path = tmp_path / "bank.bin"
    bank.save(path)
    assert cgcnn.FeatureBank.load(path) == bank


def test_config_and_errors(tmp_path):
    cfg = cgcnn.default_config("train")
    assert cfg["sampler"]["C"] == 100 and cfg["bank"]["d"] == 64
    with pytest.raises(cgcnn.ConfigError, match="trainer.nope"):
        cgcnn.run("train", {"paths": {"dataset": "x"}}, ["trainer.nope=1"])
    with pytest.raises(cgcnn.IoError, match="bank file not found"):
        cgcnn.run("export-weights", overrides=[f'paths.bank="{tmp_path / "missing.bin"}"', f'paths.out="{tmp_path}"'])
    with pytest.raises(ValueError):
        cgcnn.feature_forward(np.zeros((19, 19, 2)), cgcnn.FeatureBank(2, 11, 3, 4))

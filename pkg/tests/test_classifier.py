import json

import numpy as np
import pytest

from ghostflare.exceptions import DimMismatch, ParseError
from ghostflare.models.classifier import Classifier, build_default, load_classifier, save_classifier, softmax
from ghostflare.models.dataset import CLASS_NAMES, export_dataset, gen_dataset, read_dataset
from ghostflare.models.layers import Dense, Flatten
from ghostflare.models.training import TrainConfig, train
from ghostflare.utils.numkit import RngStream
from tests.conftest import linear_model, random_model


def test_zero_model_gives_uniform_softmax():
    model = linear_model(np.zeros((12, 4)), shape=(2, 2, 3))
    x = np.random.default_rng(0).uniform(size=(2, 2, 3))
    np.testing.assert_array_equal(model.logits(x), np.zeros(4))
    np.testing.assert_allclose(model.probabilities(x), np.full(4, 0.25))


def test_identity_network():
    model = linear_model(np.eye(3))
    np.testing.assert_allclose(model.logits(np.array([[[0.2, 0.5, 0.3]]])), [0.2, 0.5, 0.3])


def test_softmax_sums_to_one(tiny_model, rng):
    probs = softmax(tiny_model.batch_logits(rng.uniform(size=(6, 8, 8, 3))))
    assert np.all((probs >= 0) & (probs <= 1))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_linear_input_gradient_is_weights(rng):
    weights = rng.normal(size=(12, 3))
    model = linear_model(weights, shape=(2, 2, 3))
    cotangent = np.array([1.0, -2.0, 0.5])
    for _ in range(3):
        grad = model.input_grad(rng.uniform(size=(2, 2, 3)), cotangent)
        np.testing.assert_allclose(grad.ravel(), weights @ cotangent)


def test_zero_cotangent_gives_zero_gradient(tiny_model, rng):
    grad = tiny_model.input_grad(rng.uniform(size=(8, 8, 3)), np.zeros(5))
    np.testing.assert_array_equal(grad, np.zeros((8, 8, 3)))


def test_input_gradient_matches_finite_differences(tiny_model, rng):
    x = rng.uniform(size=(8, 8, 3))
    cotangent = rng.normal(size=5)
    analytic = tiny_model.input_grad(x, cotangent)
    h = 1e-5
    for index in rng.choice(x.size, size=100, replace=False):
        plus, minus = x.copy().ravel(), x.copy().ravel()
        plus[index] += h
        minus[index] -= h
        numeric = (
            cotangent @ tiny_model.logits(plus.reshape(x.shape)) - cotangent @ tiny_model.logits(minus.reshape(x.shape))
        ) / (2 * h)
        exact = analytic.ravel()[index]
        assert abs(exact - numeric) <= 1e-4 * max(abs(exact), abs(numeric)) + 1e-8


def test_batch_decomposition(tiny_model, rng):
    batch = rng.uniform(size=(5, 8, 8, 3))
    together = tiny_model.batch_logits(batch)
    for i in range(5):
        np.testing.assert_allclose(tiny_model.logits(batch[i]), together[i], rtol=1e-12, atol=1e-12)


def test_input_shape_is_checked(tiny_model):
    with pytest.raises(DimMismatch):
        tiny_model.logits(np.zeros((9, 8, 3)))
    with pytest.raises(DimMismatch):
        tiny_model.input_grad(np.zeros((8, 8, 3)), np.zeros(4))


def test_layer_chain_is_checked():
    with pytest.raises(DimMismatch):
        Classifier([Flatten(), Dense(np.zeros((10, 2)), np.zeros(2))], (2, 2, 3))


def test_default_architecture():
    model = build_default(RngStream(0), 32, 32, list(CLASS_NAMES))
    assert model.num_classes == 8
    assert model.layers[5].weights.shape == (6 * 6 * 32, 64)
    assert model.class_names == list(CLASS_NAMES)


def test_save_load_is_bit_exact(tmp_path, tiny_model, rng):
    save_classifier(tiny_model, tmp_path / "model.json")
    loaded = load_classifier(tmp_path / "model.json")
    for _ in range(10):
        x = rng.uniform(size=(8, 8, 3))
        assert np.array_equal(loaded.logits(x), tiny_model.logits(x))


def test_load_truncated_file(tmp_path, tiny_model):
    path = tmp_path / "model.json"
    save_classifier(tiny_model, path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ParseError):
        load_classifier(path)


def test_load_mismatched_dims(tmp_path, tiny_model):
    data = tiny_model.to_dict()
    dense = data["layers"][-1]
    # same number of weights, wrong fan-in
    dense["shape"] = [dense["shape"][0] // 2, dense["shape"][1] * 2]
    dense["bias"] = dense["bias"] * 2
    path = tmp_path / "model.json"
    path.write_text(json.dumps(data))
    with pytest.raises(DimMismatch):
        load_classifier(path)


def test_load_rejects_other_formats(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(ParseError):
        load_classifier(path)


def test_dataset_is_deterministic():
    a = gen_dataset(4, 3, 16, 16)
    b = gen_dataset(4, 3, 16, 16)
    assert a.images.tobytes() == b.images.tobytes()
    np.testing.assert_array_equal(a.labels, b.labels)
    assert not np.array_equal(a.images, gen_dataset(5, 3, 16, 16).images)


def test_dataset_is_balanced():
    dataset = gen_dataset(0, 5, 16, 16)
    assert len(dataset) == 40
    np.testing.assert_array_equal(np.bincount(dataset.labels), np.full(8, 5))
    assert dataset.images.min() >= 0 and dataset.images.max() <= 1


def test_dataset_minimum_size():
    with pytest.raises(DimMismatch):
        gen_dataset(0, 1, 15, 32)


def test_classes_are_separable_by_nearest_centroid():
    train_set = gen_dataset(1, 20, 32, 32)
    held_out = gen_dataset(2, 10, 32, 32)
    flat = train_set.images.reshape(len(train_set), -1)
    centroids = np.stack([flat[train_set.labels == c].mean(axis=0) for c in range(8)])
    queries = held_out.images.reshape(len(held_out), -1)
    distances = np.linalg.norm(queries[:, None, :] - centroids[None], axis=2)
    assert np.mean(np.argmin(distances, axis=1) == held_out.labels) >= 0.5


def test_dataset_export_roundtrip(tmp_path):
    dataset = gen_dataset(2, 2, 16, 16)
    export_dataset(dataset, tmp_path)
    assert (tmp_path / "labels.csv").read_text().splitlines()[0] == "file,label,name"
    loaded = read_dataset(tmp_path)
    np.testing.assert_array_equal(loaded.labels, dataset.labels)
    assert loaded.class_names == dataset.class_names
    assert np.max(np.abs(loaded.images - dataset.images)) <= 1 / 510 + 1e-12


def test_one_epoch_reduces_loss():
    dataset = gen_dataset(0, 1, 16, 16)
    _, report = train(TrainConfig(epochs=1, learning_rate=0.01), dataset)
    assert report.train_size == 8
    assert report.epoch_losses[0] < report.initial_loss


def test_training_is_deterministic():
    dataset = gen_dataset(0, 2, 16, 16)
    config = TrainConfig(epochs=2, batch_size=4, seed=9)
    first, _ = train(config, dataset)
    second, _ = train(config, dataset)
    for a, b in zip(first.params(), second.params()):
        for name in a:
            assert np.array_equal(a[name], b[name])


def test_split_keeps_a_fifth_of_each_class():
    _, report = train(TrainConfig(epochs=0), gen_dataset(0, 10, 16, 16))
    assert (report.train_size, report.test_size) == (64, 16)


def test_random_model_fixture_shape():
    assert random_model(size=10, classes=3).num_classes == 3


@pytest.mark.slow
def test_default_training_reaches_accuracy():
    dataset = gen_dataset(0, 200, 32, 32)
    _, report = train(TrainConfig(), dataset)
    assert report.test_accuracy >= 0.9

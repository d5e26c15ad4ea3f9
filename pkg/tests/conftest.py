import numpy as np
import pytest

from modelprobe import gateway
from modelprobe.audio import AudioClip


def make_handle(**overrides):
    desc = {
        "id": "m",
        "kind": "tabular-classifier",
        "backend": "builtin",
        "class_labels": ["A", "B"],
        "output_mode": "label-only",
        "builtin": {"type": "knn", "seed_rows": [[0, 0], [1, 1]], "seed_labels": ["A", "B"]},
    }
    desc.update(overrides)
    return gateway.handle_from_descriptor(desc)


@pytest.fixture
def knn_model():
    return make_handle()


def linear_softmax_handle(weights, bias, class_labels, kind="tabular-classifier",
                          model_id="softmax"):
    return make_handle(
        id=model_id,
        kind=kind,
        class_labels=list(class_labels),
        output_mode="label-with-scores",
        builtin={"type": "linear_softmax",
                 "weights": np.asarray(weights).tolist(),
                 "bias": np.asarray(bias).tolist()},
    )


def tree_handle(nodes, class_labels, kind="tabular-classifier", model_id="tree"):
    return make_handle(
        id=model_id,
        kind=kind,
        class_labels=list(class_labels),
        output_mode="label-only",
        builtin={"type": "tree", "nodes": nodes},
    )


def stt_fixture_handle(fixtures, model_id="stt"):
    return gateway.handle_from_descriptor({
        "id": model_id,
        "kind": "speech-to-text",
        "backend": "builtin",
        "builtin": {"type": "stt_fixture", "fixtures": dict(fixtures)},
    })


def make_clip(samples, rate=16000):
    return AudioClip(samples=np.asarray(samples, dtype=float), sample_rate=rate)

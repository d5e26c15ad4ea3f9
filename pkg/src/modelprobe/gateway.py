"""Uniform predictive interface over black-box models.

Every other module queries models through `query_classifier` / `query_stt`,
whether the model lives behind an HTTP endpoint or is one of the builtin
reference models (1-NN, linear softmax, decision tree, STT fixture table).
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import time
import wave
from dataclasses import dataclass, field

import numpy as np
import requests

from .errors import (
    ContractError,
    MissingFixtureError,
    ProtocolError,
    TransportError,
    ValidationError,
)

CLASSIFIER_KINDS = ("tabular-classifier", "image-classifier")
MODEL_KINDS = CLASSIFIER_KINDS + ("speech-to-text",)
BACKENDS = ("http", "builtin")
OUTPUT_MODES = ("label-only", "label-with-scores")

REGISTRY_ENV_VAR = "MODELPROBE_REGISTRY"
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 0.25


@dataclass(frozen=True)
class Prediction:
    label: str
    scores: tuple[float, ...] | None = None


@dataclass(frozen=True)
class Transcript:
    text: str


@dataclass(frozen=True)
class ModelHandle:
    """A registered black-box model. Immutable and safe to share."""

    id: str
    kind: str
    backend: str
    endpoint: str | None = None
    auth_headers: dict = field(default_factory=dict)
    output_mode: str = "label-with-scores"
    class_labels: tuple[str, ...] = ()
    builtin: dict | None = None
    batch_size: int = 32
    concurrency: int = 4

    def is_classifier(self):
        return self.kind in CLASSIFIER_KINDS


def _validate_descriptor(desc):
    problems = []
    if not isinstance(desc.get("id"), str) or not desc.get("id"):
        problems.append("id")
    kind = desc.get("kind")
    if kind not in MODEL_KINDS:
        problems.append("kind")
    backend = desc.get("backend")
    if backend not in BACKENDS:
        problems.append("backend")
    if backend == "http" and not desc.get("endpoint"):
        problems.append("endpoint")
    if backend == "builtin" and not isinstance(desc.get("builtin"), dict):
        problems.append("builtin")
    if kind in CLASSIFIER_KINDS:
        labels = desc.get("class_labels")
        if not labels or not all(isinstance(c, str) for c in labels):
            problems.append("class_labels")
        if desc.get("output_mode", "label-with-scores") not in OUTPUT_MODES:
            problems.append("output_mode")
    if problems:
        raise ValidationError(
            "invalid model descriptor, bad or missing fields: %s" % ", ".join(problems),
            fields=problems,
        )


def handle_from_descriptor(desc):
    _validate_descriptor(desc)
    return ModelHandle(
        id=desc["id"],
        kind=desc["kind"],
        backend=desc["backend"],
        endpoint=desc.get("endpoint"),
        auth_headers=dict(desc.get("auth_headers", {})),
        output_mode=desc.get("output_mode", "label-with-scores"),
        class_labels=tuple(desc.get("class_labels", ())),
        builtin=desc.get("builtin"),
        batch_size=int(desc.get("batch_size", 32)),
        concurrency=int(desc.get("concurrency", 4)),
    )


def registry_dir(explicit=None):
    if explicit is not None:
        return str(explicit)
    return os.environ.get(REGISTRY_ENV_VAR, os.path.join(os.path.expanduser("~"), ".modelprobe", "registry"))


def register_model(descriptor, registry=None):
    """Validate a descriptor (dict or JSON file path) and persist the handle.

    Re-registration with the same id overwrites the previous entry.
    """
    if isinstance(descriptor, (str, os.PathLike)):
        with open(descriptor, "r", encoding="utf-8") as fh:
            desc = json.load(fh)
    else:
        desc = dict(descriptor)
    handle = handle_from_descriptor(desc)
    reg = registry_dir(registry)
    os.makedirs(reg, exist_ok=True)
    with open(os.path.join(reg, handle.id + ".json"), "w", encoding="utf-8") as fh:
        json.dump(desc, fh, indent=2, sort_keys=True)
    return handle


def load_model(model_id, registry=None):
    path = os.path.join(registry_dir(registry), model_id + ".json")
    if not os.path.exists(path):
        raise ValidationError("model %r is not registered" % model_id, fields=["model_id"])
    with open(path, "r", encoding="utf-8") as fh:
        return handle_from_descriptor(json.load(fh))


# ---------------------------------------------------------------------------
# Builtin reference backends
# ---------------------------------------------------------------------------

def _softmax(z):
    z = np.asarray(z, dtype=float)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _argmax_label(scores, class_labels):
    # ties broken by lowest class index
    return class_labels[int(np.argmax(scores))]


def _predict_knn(builtin, instance):
    rows = np.asarray(builtin["seed_rows"], dtype=float)
    labels = builtin["seed_labels"]
    x = np.asarray(instance, dtype=float).ravel()
    d = np.sum((rows - x) ** 2, axis=1)
    return Prediction(label=labels[int(np.argmin(d))])


def _predict_linear_softmax(builtin, instance, class_labels):
    w = np.asarray(builtin["weights"], dtype=float)  # (C, d)
    b = np.asarray(builtin.get("bias", np.zeros(w.shape[0])), dtype=float)
    x = np.asarray(instance, dtype=float).ravel()
    scores = _softmax(w @ x + b)
    return Prediction(label=_argmax_label(scores, class_labels), scores=tuple(scores))


def _predict_tree(nodes, instance):
    x = np.asarray(instance, dtype=object).ravel()
    i = 0
    while True:
        node = nodes[i]
        if node["kind"] == "leaf":
            return Prediction(label=node["label"])
        v = x[node["feature"]]
        if node["op"] == "le":
            go_left = float(v) <= node["value"]
        else:  # eq
            go_left = v == node["value"]
        i = node["left"] if go_left else node["right"]


def clip_digest(clip):
    """Stable digest of an audio clip (float32 samples + sample rate)."""
    h = hashlib.sha256()
    h.update(np.asarray(clip.samples, dtype=np.float32).tobytes())
    h.update(str(int(clip.sample_rate)).encode())
    return h.hexdigest()


def _builtin_predict(handle, instance):
    builtin = handle.builtin or {}
    btype = builtin.get("type")
    if btype == "knn":
        pred = _predict_knn(builtin, instance)
    elif btype == "linear_softmax":
        pred = _predict_linear_softmax(builtin, instance, handle.class_labels)
    elif btype == "tree":
        pred = _predict_tree(builtin["nodes"], instance)
    else:
        raise ValidationError("unknown builtin classifier type %r" % btype, fields=["builtin.type"])
    if handle.output_mode == "label-only" and pred.scores is not None:
        pred = Prediction(label=pred.label)
    return pred


# ---------------------------------------------------------------------------
# HTTP wire adapter
# ---------------------------------------------------------------------------

def _encode_image_png(img):
    from PIL import Image as PILImage

    arr = np.asarray(img, dtype=float)
    u8 = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    if u8.ndim == 3 and u8.shape[2] == 1:
        u8 = u8[:, :, 0]
    buf = io.BytesIO()
    PILImage.fromarray(u8).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _encode_audio_wav(clip):
    samples = np.asarray(clip.samples, dtype=float)
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype(np.int16)
    buf = io.BytesIO()
    with wave.open(buf, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(clip.sample_rate))
        wf.writeframes(pcm.tobytes())
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _encode_instance(handle, instance):
    if handle.kind == "tabular-classifier":
        return [float(v) if not isinstance(v, str) else v for v in np.asarray(instance, dtype=object).ravel()]
    if handle.kind == "image-classifier":
        return _encode_image_png(instance)
    return _encode_audio_wav(instance)


def _http_post(handle, payload):
    last = None
    for attempt in range(1, DEFAULT_RETRIES + 1):
        try:
            resp = requests.post(
                handle.endpoint,
                json=payload,
                headers=dict(handle.auth_headers),
                timeout=30,
            )
            resp.raise_for_status()
            return resp.json()
        except (requests.ConnectionError, requests.Timeout, requests.HTTPError) as exc:
            last = exc
            if attempt < DEFAULT_RETRIES:
                time.sleep(DEFAULT_BACKOFF * (2 ** (attempt - 1)))
        except ValueError as exc:  # body was not JSON
            raise ProtocolError("response body is not valid JSON: %s" % exc, field="body")
    raise TransportError("POST %s failed after %d attempts: %s" % (handle.endpoint, DEFAULT_RETRIES, last),
                         attempts=DEFAULT_RETRIES)


def _parse_prediction(handle, entry):
    if not isinstance(entry, dict) or "label" not in entry:
        raise ProtocolError("prediction entry missing 'label'", field="predictions[].label")
    label = entry["label"]
    if label not in handle.class_labels:
        raise ContractError("model returned unknown label %r (known: %s)" % (label, list(handle.class_labels)))
    scores = entry.get("scores")
    if handle.output_mode == "label-with-scores":
        if scores is None:
            raise ProtocolError("scores required by output_mode=label-with-scores", field="predictions[].scores")
        scores = [float(s) for s in scores]
        if len(scores) != len(handle.class_labels):
            raise ProtocolError("scores length %d != %d class labels" % (len(scores), len(handle.class_labels)),
                                field="predictions[].scores")
        if abs(sum(scores) - 1.0) > 1e-6:
            raise ProtocolError("scores do not sum to 1", field="predictions[].scores")
        if _argmax_label(scores, handle.class_labels) != label:
            raise ContractError("label %r is not the argmax of the returned scores" % label)
        return Prediction(label=label, scores=tuple(scores))
    return Prediction(label=label)


def _http_query_classifier(handle, instances):
    out = []
    for start in range(0, len(instances), handle.batch_size):
        batch = instances[start:start + handle.batch_size]
        payload = {"instances": [_encode_instance(handle, x) for x in batch]}
        body = _http_post(handle, payload)
        preds = body.get("predictions")
        if not isinstance(preds, list) or len(preds) != len(batch):
            raise ProtocolError("response 'predictions' missing or wrong length", field="predictions")
        out.extend(_parse_prediction(handle, p) for p in preds)
    return out


# ---------------------------------------------------------------------------
# Public query operations
# ---------------------------------------------------------------------------

def query_classifier(model, instances):
    """Query a classifier with a list of instances; order is preserved."""
    if not model.is_classifier():
        raise ValidationError("model %r is not a classifier (kind=%s)" % (model.id, model.kind))
    if len(instances) == 0:
        raise ValidationError("instances must be non-empty")
    if model.backend == "builtin":
        return [_builtin_predict(model, x) for x in instances]
    return _http_query_classifier(model, instances)


def query_stt(model, clip):
    """Transcribe one audio clip. The backend transcript is returned verbatim."""
    if model.kind != "speech-to-text":
        raise ValidationError("model %r is not a speech-to-text model" % model.id)
    if len(np.asarray(clip.samples)) == 0:
        raise ValidationError("clip must be non-empty")
    if model.backend == "builtin":
        table = (model.builtin or {}).get("fixtures", {})
        key = clip_digest(clip)
        if key not in table:
            raise MissingFixtureError("no fixture transcript for clip digest %s" % key[:12])
        return Transcript(text=table[key])
    body = _http_post(model, {"instances": [_encode_audio_wav(clip)]})
    transcripts = body.get("transcripts")
    if not isinstance(transcripts, list) or len(transcripts) != 1 or not isinstance(transcripts[0], str):
        raise ProtocolError("response 'transcripts' missing or malformed", field="transcripts")
    return Transcript(text=transcripts[0])

import http.server
import json
import math
import threading

import numpy as np
import pytest

from conftest import linear_softmax_handle, make_clip, make_handle, stt_fixture_handle
from modelprobe import gateway
from modelprobe.errors import (
    ContractError,
    MissingFixtureError,
    ProtocolError,
    TransportError,
    ValidationError,
)


class TestBuiltinClassifiers:
    def test_knn_nearest_neighbor(self, knn_model):
        preds = gateway.query_classifier(knn_model, [(0.1, 0.1)])
        assert preds[0].label == "A"

    def test_builtin_determinism(self, knn_model):
        a = gateway.query_classifier(knn_model, [(0.4, 0.6)])
        b = gateway.query_classifier(knn_model, [(0.4, 0.6)])
        assert a == b

    def test_linear_softmax_scores(self):
        # logits are (0, 2) for input (2, 0): softmax gives (sigmoid(-2), sigmoid(2))
        model = linear_softmax_handle([[0, 0], [1, 0]], [0, 0], ["neg", "pos"])
        pred = gateway.query_classifier(model, [(2.0, 0.0)])[0]
        sig = lambda z: 1.0 / (1.0 + math.exp(-z))
        assert pred.label == "pos"
        assert pred.scores == pytest.approx((sig(-2), sig(2)))

    def test_order_preservation(self):
        model = linear_softmax_handle([[0, 0], [1, 1]], [0, 0], ["neg", "pos"])
        xs = [(float(i), float(-i)) for i in range(8)]
        preds = gateway.query_classifier(model, xs)
        perm = [5, 2, 7, 0, 1, 6, 3, 4]
        permuted = gateway.query_classifier(model, [xs[i] for i in perm])
        assert permuted == [preds[i] for i in perm]

    def test_score_label_coherence(self):
        model = linear_softmax_handle(np.eye(3), [0, 0, 0], ["a", "b", "c"])
        for x in ([1, 0, 0], [0, 2, 0], [0, 0, 3], [0, 0, 0]):
            pred = gateway.query_classifier(model, [x])[0]
            assert model.class_labels[int(np.argmax(pred.scores))] == pred.label
            assert sum(pred.scores) == pytest.approx(1.0, abs=1e-6)

    def test_empty_instances_rejected(self, knn_model):
        with pytest.raises(ValidationError):
            gateway.query_classifier(knn_model, [])

    def test_stt_model_rejected_by_classifier_query(self):
        model = stt_fixture_handle({})
        with pytest.raises(ValidationError):
            gateway.query_classifier(model, [(1, 2)])


class TestSttFixture:
    def test_fixture_lookup(self):
        clip = make_clip(np.linspace(-0.5, 0.5, 100))
        model = stt_fixture_handle({gateway.clip_digest(clip): "i am ready"})
        assert gateway.query_stt(model, clip).text == "i am ready"

    def test_missing_fixture(self):
        model = stt_fixture_handle({})
        with pytest.raises(MissingFixtureError):
            gateway.query_stt(model, make_clip([0.1, 0.2]))

    def test_perturbed_clip_fixture(self):
        clip = make_clip(np.sin(np.linspace(0, 20, 500)) * 0.5)
        model = stt_fixture_handle({gateway.clip_digest(clip): "find great if"})
        assert gateway.query_stt(model, clip).text == "find great if"


class TestRegistry:
    def test_register_builtin_roundtrip(self, tmp_path):
        desc = {"id": "k", "kind": "tabular-classifier", "backend": "builtin",
                "class_labels": ["A", "B"], "output_mode": "label-only",
                "builtin": {"type": "knn", "seed_rows": [[0], [1]],
                            "seed_labels": ["A", "B"]}}
        handle = gateway.register_model(desc, registry=tmp_path)
        assert handle.backend == "builtin"
        loaded = gateway.load_model("k", registry=tmp_path)
        assert loaded == handle

    def test_http_descriptor_missing_endpoint(self, tmp_path):
        desc = {"id": "h", "kind": "image-classifier", "backend": "http",
                "class_labels": ["x", "y"]}
        with pytest.raises(ValidationError) as err:
            gateway.register_model(desc, registry=tmp_path)
        assert "endpoint" in err.value.fields

    def test_ten_class_labels(self, tmp_path):
        labels = [str(i) for i in range(10)]
        desc = {"id": "ten", "kind": "tabular-classifier", "backend": "builtin",
                "class_labels": labels, "output_mode": "label-only",
                "builtin": {"type": "knn", "seed_rows": [[0]], "seed_labels": ["0"]}}
        handle = gateway.register_model(desc, registry=tmp_path)
        assert len(handle.class_labels) == 10

    def test_reregistration_overwrites(self, tmp_path):
        desc = {"id": "k", "kind": "tabular-classifier", "backend": "builtin",
                "class_labels": ["A"], "output_mode": "label-only",
                "builtin": {"type": "knn", "seed_rows": [[0]], "seed_labels": ["A"]}}
        gateway.register_model(desc, registry=tmp_path)
        desc["class_labels"] = ["A", "B"]
        gateway.register_model(desc, registry=tmp_path)
        assert gateway.load_model("k", registry=tmp_path).class_labels == ("A", "B")

    def test_registry_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv(gateway.REGISTRY_ENV_VAR, str(tmp_path))
        assert gateway.registry_dir() == str(tmp_path)


class _Responder(http.server.BaseHTTPRequestHandler):
    payload = {}

    def do_POST(self):
        body = json.dumps(self.payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_server():
    server = http.server.HTTPServer(("127.0.0.1", 0), _Responder)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield "http://127.0.0.1:%d/" % server.server_address[1]
    server.shutdown()


def _http_handle(endpoint, **overrides):
    desc = {"id": "remote", "kind": "tabular-classifier", "backend": "http",
            "endpoint": endpoint, "class_labels": ["A", "B"],
            "output_mode": "label-with-scores"}
    desc.update(overrides)
    return gateway.handle_from_descriptor(desc)


class TestHttpBackend:
    def test_valid_response(self, http_server):
        _Responder.payload = {"predictions": [{"label": "B", "scores": [0.2, 0.8]}]}
        pred = gateway.query_classifier(_http_handle(http_server), [(1, 2)])[0]
        assert pred == gateway.Prediction(label="B", scores=(0.2, 0.8))

    def test_unknown_label_is_contract_error(self, http_server):
        _Responder.payload = {"predictions": [{"label": "Z", "scores": [0.5, 0.5]}]}
        with pytest.raises(ContractError):
            gateway.query_classifier(_http_handle(http_server), [(1, 2)])

    def test_label_not_argmax_is_contract_error(self, http_server):
        _Responder.payload = {"predictions": [{"label": "A", "scores": [0.2, 0.8]}]}
        with pytest.raises(ContractError):
            gateway.query_classifier(_http_handle(http_server), [(1, 2)])

    def test_missing_scores_is_protocol_error(self, http_server):
        _Responder.payload = {"predictions": [{"label": "A"}]}
        with pytest.raises(ProtocolError) as err:
            gateway.query_classifier(_http_handle(http_server), [(1, 2)])
        assert "scores" in err.value.field

    def test_scores_not_normalized_is_protocol_error(self, http_server):
        _Responder.payload = {"predictions": [{"label": "A", "scores": [0.8, 0.8]}]}
        with pytest.raises(ProtocolError):
            gateway.query_classifier(_http_handle(http_server), [(1, 2)])

    def test_transport_error_carries_attempts(self):
        handle = _http_handle("http://127.0.0.1:1/")  # nothing listens there
        with pytest.raises(TransportError) as err:
            gateway.query_classifier(handle, [(1, 2)])
        assert err.value.attempts == 3

    def test_stt_transcripts(self, http_server):
        _Responder.payload = {"transcripts": ["hello there"]}
        handle = gateway.handle_from_descriptor({
            "id": "stt-remote", "kind": "speech-to-text", "backend": "http",
            "endpoint": http_server})
        out = gateway.query_stt(handle, make_clip(np.zeros(10) + 0.1))
        assert out.text == "hello there"

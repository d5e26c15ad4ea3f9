import json
import os

import numpy as np
import pytest

from conftest import make_clip
from modelprobe import audio, gateway, imaging, runner
from modelprobe.cli import main as cli_main
from modelprobe.errors import ValidationError


@pytest.fixture
def registry(tmp_path):
    return str(tmp_path / "registry")


@pytest.fixture
def image_model(registry):
    # 2-class linear softmax over flattened 8x8 grayscale images
    rng = np.random.default_rng(0)
    w = rng.normal(size=64)
    desc = {
        "id": "img-model", "kind": "image-classifier", "backend": "builtin",
        "class_labels": ["a", "b"], "output_mode": "label-with-scores",
        "builtin": {"type": "linear_softmax",
                    "weights": [w.tolist(), (-w).tolist()],
                    "bias": [0.0, 0.0]},
    }
    return gateway.register_model(desc, registry=registry)


@pytest.fixture
def image_dir(tmp_path):
    d = tmp_path / "images"
    d.mkdir()
    rng = np.random.default_rng(1)
    for i in range(6):
        imaging.save_png(rng.uniform(0, 1, size=(8, 8, 1)), str(d / ("img%02d.png" % i)))
    return str(d)


def base_config(tmp_path, model_id, properties, seed_data=None):
    return {
        "model_id": model_id,
        "properties": properties,
        "seed_data": seed_data or {},
        "global_seed": 7,
        "output_dir": str(tmp_path / "out"),
        "concurrency": 2,
    }


class TestRunBasics:
    def test_empty_properties(self, tmp_path, registry, image_model):
        config = base_config(tmp_path, "img-model", [])
        report, run_dir = runner.run(config, registry=registry)
        assert report["properties"] == []
        assert os.path.exists(os.path.join(run_dir, "report.json"))

    def test_invalid_config_rejected_before_execution(self, tmp_path, registry):
        with pytest.raises(ValidationError):
            runner.run({"model_id": "", "properties": [], "output_dir": "x"},
                       registry=registry)
        with pytest.raises(ValidationError):
            runner.run(base_config(tmp_path, "img-model",
                                   [{"type": "no-such-property"}]),
                       registry=registry)

    def test_modality_mismatch_rejected(self, tmp_path, registry, image_model):
        config = base_config(tmp_path, "img-model", [{"type": "stt_robustness",
                                                      "perturbation": {}}])
        with pytest.raises(ValidationError):
            runner.run(config, registry=registry)


class TestImageRobustnessProperty:
    def test_identity_transform_zero_flip_rate(self, tmp_path, registry,
                                               image_model, image_dir):
        config = base_config(
            tmp_path, "img-model",
            [{"type": "image_robustness",
              "transforms": [{"kind": "brightness", "params": {"offset": 0.0}}],
              "samples_per_transform": 4}],
            seed_data={"image_dir": image_dir})
        report, _ = runner.run(config, registry=registry)
        prop = report["properties"][0]
        assert prop["metrics"]["flip_rate:brightness"] == 0.0
        assert all(c["verdict"] == "pass" for c in prop["cases"])

    def test_failed_cases_have_artifacts(self, tmp_path, registry,
                                         image_model, image_dir):
        config = base_config(
            tmp_path, "img-model",
            [{"type": "image_robustness",
              "transforms": [{"kind": "inverse", "params": {}}]}],
            seed_data={"image_dir": image_dir})
        report, run_dir = runner.run(config, registry=registry)
        prop = report["properties"][0]
        failed = [c for c in prop["cases"] if c["verdict"] == "fail"]
        assert failed, "inverting the image should flip this linear model"
        for c in failed:
            assert c["artifacts"]
            assert os.path.exists(os.path.join(run_dir, c["artifacts"][0]))

    def test_metric_recomputable_from_cases(self, tmp_path, registry,
                                            image_model, image_dir):
        config = base_config(
            tmp_path, "img-model",
            [{"type": "image_robustness",
              "transforms": [{"kind": "gaussian_noise", "params": {"sigma": 0.3}}]}],
            seed_data={"image_dir": image_dir})
        report, _ = runner.run(config, registry=registry)
        prop = report["properties"][0]
        flips = sum(1 for c in prop["cases"] if c["verdict"] == "fail")
        assert prop["metrics"]["flip_rate:gaussian_noise"] == flips / len(prop["cases"])


class TestAdversarialProperty:
    def test_attack_property(self, tmp_path, registry, image_model, image_dir):
        config = base_config(
            tmp_path, "img-model",
            [{"type": "image_adversarial",
              "attack": {"delta_max": 0.3, "iterations": 20, "n_init": 4,
                         "grid": [2, 2]},
              "image_count": 2}],
            seed_data={"image_dir": image_dir})
        report, run_dir = runner.run(config, registry=registry)
        prop = report["properties"][0]
        assert len(prop["cases"]) == 2
        assert 0.0 <= prop["metrics"]["attack_success_rate"] <= 1.0
        for c in prop["cases"]:
            if c["verdict"] == "fail":  # attack succeeded -> model failure
                assert any(a.endswith(".png") for a in c["artifacts"])
                assert any(a.endswith(".delta.json") for a in c["artifacts"])
                for a in c["artifacts"]:
                    assert os.path.exists(os.path.join(run_dir, a))


@pytest.fixture
def stt_setup(tmp_path, registry):
    """Audio manifest + fixture STT that transcribes perturbed clips verbatim."""
    rng = np.random.default_rng(3)
    clips_dir = tmp_path / "clips"
    clips_dir.mkdir()
    refs = ["keep holding", "i need a minute"]
    fixtures = {}
    rows = []
    perturbation = {"kind": "white_noise", "snr_db": 20.0}
    for i, ref in enumerate(refs):
        clip = make_clip(rng.uniform(-0.5, 0.5, 400))
        path = str(clips_dir / ("c%d.wav" % i))
        audio.save_wav(clip, path)
        loaded = audio.load_wav(path)
        perturbed = audio.perturb_clip(loaded, perturbation,
                                       rng_seed=runner.case_seed(7, 0, i))
        fixtures[gateway.clip_digest(perturbed)] = ref
        rows.append((path, ref))
    manifest = tmp_path / "manifest.csv"
    manifest.write_text("clip_path,reference_text\n"
                        + "\n".join("%s,%s" % r for r in rows) + "\n")
    gateway.register_model({
        "id": "stt-model", "kind": "speech-to-text", "backend": "builtin",
        "builtin": {"type": "stt_fixture", "fixtures": fixtures}},
        registry=registry)
    return str(manifest), perturbation


class TestSttProperties:
    def test_stt_robustness_property(self, tmp_path, registry, stt_setup):
        manifest, perturbation = stt_setup
        config = base_config(
            tmp_path, "stt-model",
            [{"type": "stt_robustness", "perturbation": perturbation,
              "wer_threshold": 0.3}],
            seed_data={"audio_manifest": manifest})
        report, _ = runner.run(config, registry=registry)
        prop = report["properties"][0]
        assert prop["metrics"]["mean_wer"] == 0.0
        assert prop["metrics"]["failure_count"] == 0

    def test_stt_fairness_property(self, tmp_path, registry):
        rng = np.random.default_rng(5)
        base = make_clip(rng.uniform(-0.5, 0.5, 300))
        variant = make_clip(rng.uniform(-0.5, 0.5, 300))
        base_path = str(tmp_path / "b.wav")
        var_path = str(tmp_path / "v.wav")
        audio.save_wav(base, base_path)
        audio.save_wav(variant, var_path)
        fixtures = {
            gateway.clip_digest(audio.load_wav(base_path)): "repeat please",
            gateway.clip_digest(audio.load_wav(var_path)): "he peter please",
        }
        gateway.register_model({
            "id": "stt-f", "kind": "speech-to-text", "backend": "builtin",
            "builtin": {"type": "stt_fixture", "fixtures": fixtures}},
            registry=str(tmp_path / "registry"))
        manifest = tmp_path / "fair.csv"
        manifest.write_text(
            "reference_text,baseline_path,attribute,value,variant_path\n"
            "repeat please,%s,accent,French,%s\n" % (base_path, var_path))
        config = base_config(
            tmp_path, "stt-f",
            [{"type": "stt_fairness", "manifest": str(manifest),
              "delta_threshold": 0.2}])
        report, run_dir = runner.run(config, registry=str(tmp_path / "registry"))
        prop = report["properties"][0]
        assert prop["metrics"]["failure_count"] == 1
        assert prop["metrics"]["failures:accent"] == 1
        failed = [c for c in prop["cases"] if c["verdict"] == "fail"]
        assert os.path.exists(os.path.join(run_dir, failed[0]["artifacts"][0]))


class TestReports:
    def _simple_report(self, tmp_path, registry, image_model, image_dir, seed=7):
        config = base_config(
            tmp_path, "img-model",
            [{"type": "image_robustness", "name": "rob",
              "transforms": [{"kind": "gaussian_noise", "params": {"sigma": 0.2}}],
              "samples_per_transform": 3}],
            seed_data={"image_dir": image_dir})
        config["global_seed"] = seed
        return runner.run(config, registry=registry)

    def test_json_roundtrip(self, tmp_path, registry, image_model, image_dir):
        report, run_dir = self._simple_report(tmp_path, registry, image_model, image_dir)
        rendered = runner.render_report(report, "json")
        assert json.loads(rendered) == report
        assert runner.load_report(run_dir) == report

    def test_text_summary_mentions_failures(self, tmp_path, registry,
                                            image_model, image_dir):
        report, _ = self._simple_report(tmp_path, registry, image_model, image_dir)
        text = runner.render_report(report, "text-summary").decode()
        assert "rob" in text
        for c in report["properties"][0]["cases"]:
            if c["verdict"] == "fail":
                assert c["case_id"] in text

    def test_reproducibility(self, tmp_path, registry, image_model, image_dir):
        r1, _ = self._simple_report(tmp_path, registry, image_model, image_dir)
        r2, _ = self._simple_report(tmp_path, registry, image_model, image_dir)
        assert runner.canonical_report_bytes(r1) == runner.canonical_report_bytes(r2)

    def test_compare_with_itself(self, tmp_path, registry, image_model, image_dir):
        report, _ = self._simple_report(tmp_path, registry, image_model, image_dir)
        rows = runner.compare_runs(report, report)
        assert rows
        assert all(r["delta"] == 0 for r in rows if r["delta"] is not None)

    def test_compare_disjoint_properties_flagged(self):
        a = {"model_id": "m", "properties": [{"name": "p1", "metrics": {"x": 1}, "cases": []}]}
        b = {"model_id": "m", "properties": [{"name": "p2", "metrics": {"x": 2}, "cases": []}]}
        rows = runner.compare_runs(a, b)
        assert all(r["flag"] == "one-sided" for r in rows)

    def test_compare_flip_rate_delta(self):
        a = {"model_id": "m", "properties": [{"name": "p", "metrics": {"flip_rate": 0.05}, "cases": []}]}
        b = {"model_id": "m", "properties": [{"name": "p", "metrics": {"flip_rate": 0.12}, "cases": []}]}
        rows = runner.compare_runs(a, b)
        assert rows[0]["delta"] == pytest.approx(0.07)


class TestCli:
    def test_register_run_report_compare(self, tmp_path, image_dir, capsys):
        registry = str(tmp_path / "registry")
        rng = np.random.default_rng(0)
        w = rng.normal(size=64)
        desc_path = tmp_path / "model.json"
        desc_path.write_text(json.dumps({
            "id": "img-model", "kind": "image-classifier", "backend": "builtin",
            "class_labels": ["a", "b"], "output_mode": "label-with-scores",
            "builtin": {"type": "linear_softmax",
                        "weights": [w.tolist(), (-w).tolist()], "bias": [0.0, 0.0]}}))
        assert cli_main(["--registry", registry, "register", str(desc_path)]) == 0

        config_path = tmp_path / "run.json"
        config_path.write_text(json.dumps({
            "model_id": "img-model",
            "properties": [{"type": "image_robustness", "name": "rob",
                            "transforms": [{"kind": "brightness",
                                            "params": {"offset": 0.0}}]}],
            "seed_data": {"image_dir": image_dir},
            "output_dir": str(tmp_path / "out")}))
        # identity transform: no flips, exit 0
        assert cli_main(["--registry", registry, "run", str(config_path),
                         "--seed", "3"]) == 0
        out = capsys.readouterr().out
        run_dir = out.strip().splitlines()[-1].split()[-1]

        assert cli_main(["report", run_dir, "--format", "json"]) == 0
        assert json.loads(capsys.readouterr().out)["model_id"] == "img-model"

        assert cli_main(["compare", run_dir, run_dir]) == 0

    def test_exit_code_on_failures(self, tmp_path, image_dir, capsys):
        registry = str(tmp_path / "registry")
        rng = np.random.default_rng(0)
        w = rng.normal(size=64)
        gateway.register_model({
            "id": "img-model", "kind": "image-classifier", "backend": "builtin",
            "class_labels": ["a", "b"], "output_mode": "label-with-scores",
            "builtin": {"type": "linear_softmax",
                        "weights": [w.tolist(), (-w).tolist()], "bias": [0.0, 0.0]}},
            registry=registry)
        config_path = tmp_path / "run.json"
        config_path.write_text(json.dumps({
            "model_id": "img-model",
            "properties": [{"type": "image_robustness",
                            "transforms": [{"kind": "inverse", "params": {}}]}],
            "seed_data": {"image_dir": image_dir},
            "output_dir": str(tmp_path / "out")}))
        assert cli_main(["--registry", registry, "run", str(config_path)]) == 1

    def test_exit_code_on_config_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"properties\": []}")
        assert cli_main(["run", str(bad)]) == 2

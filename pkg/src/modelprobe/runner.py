"""Batch pipeline: run configured properties against a registered model and
emit a machine-readable report with persisted failure artifacts."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import shutil
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import audio, boattack, gateway, imaging, tabular
from .errors import ModelProbeError, ValidationError

PROPERTY_TYPES = ("interpretability", "image_robustness", "image_adversarial",
                  "stt_robustness", "stt_fairness")

_PROPERTY_MODALITY = {
    "interpretability": "tabular-classifier",
    "image_robustness": "image-classifier",
    "image_adversarial": "image-classifier",
    "stt_robustness": "speech-to-text",
    "stt_fairness": "speech-to-text",
}


def case_seed(global_seed, prop_index, case_index):
    """Stable per-case seed, independent across properties and cases."""
    h = hashlib.sha256(("%d:%d:%d" % (global_seed, prop_index, case_index)).encode())
    return int.from_bytes(h.digest()[:8], "big") % (2 ** 63)


def _pmap(fn, items, concurrency):
    if concurrency <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(fn, items))


def validate_config(config):
    problems = []
    if not config.get("model_id"):
        problems.append("model_id")
    props = config.get("properties")
    if not isinstance(props, list):
        problems.append("properties")
    else:
        for i, p in enumerate(props):
            if not isinstance(p, dict) or p.get("type") not in PROPERTY_TYPES:
                problems.append("properties[%d].type" % i)
    if "output_dir" not in config:
        problems.append("output_dir")
    if problems:
        raise ValidationError("invalid run config: %s" % ", ".join(problems), fields=problems)


# ---------------------------------------------------------------------------
# Seed data loading
# ---------------------------------------------------------------------------

def _load_seed_images(seed_data):
    directory = seed_data.get("image_dir")
    if not directory:
        raise ValidationError("seed_data.image_dir is required for image properties")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".png"))
    if not names:
        raise ValidationError("no PNG images in %s" % directory)
    images = [(n, imaging.load_png(os.path.join(directory, n))) for n in names]
    labels = None
    labels_csv = seed_data.get("image_labels_csv")
    if labels_csv:
        with open(labels_csv, newline="", encoding="utf-8") as fh:
            labels = {row["filename"]: row["label"] for row in csv.DictReader(fh)}
    return images, labels


def _load_audio_manifest(seed_data):
    path = seed_data.get("audio_manifest")
    if not path:
        raise ValidationError("seed_data.audio_manifest is required for STT robustness")
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append((row["clip_path"], row["reference_text"]))
    if not out:
        raise ValidationError("audio manifest %s is empty" % path)
    return out


# ---------------------------------------------------------------------------
# Property executors (each returns a property result dict)
# ---------------------------------------------------------------------------

def _run_interpretability(model, prop, seed_data, global_seed, prop_index, artifacts_dir):
    data = tabular.load_csv(seed_data["csv"], label_column=seed_data.get("label_column"))
    tree_cfg = prop.get("tree", {})
    config = tabular.SurrogateConfig(
        max_depth=int(tree_cfg.get("max_depth", 18)),
        min_node_samples=int(tree_cfg.get("min_node_samples", 30)),
        augment_to=int(tree_cfg.get("augment_to", 100)),
        rng_seed=case_seed(global_seed, prop_index, 0),
    )
    th = prop.get("thresholds", {})
    thresholds = tabular.InterpretabilityThresholds(
        apl_max=float(th.get("apl_max", float("inf"))),
        mpl_max=float(th.get("mpl_max", float("inf"))),
        fidelity_min=float(th.get("fidelity_min", 0.9)),
    )
    verdict = tabular.test_interpretability(model, data, config, thresholds,
                                            split_seed=case_seed(global_seed, prop_index, 1))
    tree_path = os.path.join(artifacts_dir, "surrogate_tree.json")
    with open(tree_path, "w", encoding="utf-8") as fh:
        json.dump(verdict.tree, fh, sort_keys=True, indent=2)
    case = {
        "case_id": "interpretability-0",
        "input": seed_data["csv"],
        "verdict": "pass" if verdict.passed else "fail",
        "detail": {"apl": verdict.apl, "mpl": verdict.mpl, "fidelity": verdict.fidelity},
        "artifacts": [os.path.relpath(tree_path, os.path.dirname(os.path.dirname(artifacts_dir)))],
    }
    return {
        "metrics": {"apl": verdict.apl, "mpl": verdict.mpl, "fidelity": verdict.fidelity},
        "cases": [case],
    }


def _run_image_robustness(model, prop, seed_data, global_seed, prop_index,
                          artifacts_dir, concurrency):
    images, gold = _load_seed_images(seed_data)
    per_transform = int(prop.get("samples_per_transform", len(images)))
    transforms = prop.get("transforms") or [
        {"kind": k, "params": imaging.DEFAULT_PARAMS[k]} for k in imaging.ALL_KINDS
    ]
    cases = []
    metrics = {}
    case_index = 0
    for t in transforms:
        subset = images[:per_transform]
        originals = gateway.query_classifier(model, [img for _, img in subset])

        def one(args):
            idx, (name, img) = args
            spec = imaging.TransformSpec(kind=t["kind"], params=dict(t.get("params", {})),
                                         rng_seed=case_seed(global_seed, prop_index, idx))
            return name, imaging.apply_transform(spec, img)

        transformed = _pmap(one, list(enumerate(subset, start=case_index)), concurrency)
        preds = gateway.query_classifier(model, [img for _, img in transformed])
        flips = 0
        correct = 0
        for (name, timg), orig, pred in zip(transformed, originals, preds):
            flipped = pred.label != orig.label
            flips += flipped
            if gold is not None and pred.label == gold.get(name):
                correct += 1
            cid = "%s-%s" % (t["kind"], name)
            artifacts = []
            if flipped:
                out = os.path.join(artifacts_dir, "%s.png" % cid)
                imaging.save_png(timg, out)
                artifacts.append(os.path.relpath(out, os.path.dirname(os.path.dirname(artifacts_dir))))
            cases.append({
                "case_id": cid,
                "input": name,
                "verdict": "fail" if flipped else "pass",
                "detail": {"original_label": orig.label, "transformed_label": pred.label},
                "artifacts": artifacts,
            })
        case_index += len(subset)
        metrics["flip_rate:%s" % t["kind"]] = flips / len(subset)
        if gold is not None:
            metrics["transformed_accuracy:%s" % t["kind"]] = correct / len(subset)
    return {"metrics": metrics, "cases": cases}


def _run_image_adversarial(model, prop, seed_data, global_seed, prop_index,
                           artifacts_dir, concurrency):
    images, _ = _load_seed_images(seed_data)
    count = int(prop.get("image_count", len(images)))
    subset = images[:count]
    atk = dict(prop.get("attack", {}))
    atk.pop("rng_seed", None)
    if "grid" in atk:
        atk["grid"] = tuple(atk["grid"])

    def one(args):
        idx, (name, img) = args
        y_true = gateway.query_classifier(model, [img])[0].label
        config = boattack.AttackConfig(rng_seed=case_seed(global_seed, prop_index, idx), **atk)
        return name, y_true, boattack.attack(model, img, y_true, config)

    results = _pmap(one, list(enumerate(subset)), concurrency)
    cases = []
    successes = 0
    queries = []
    for name, y_true, result in results:
        cid = "attack-%s" % name
        artifacts = []
        if result.success:
            successes += 1
            png = os.path.join(artifacts_dir, "%s.png" % cid)
            imaging.save_png(result.adversarial_image, png)
            delta_path = os.path.join(artifacts_dir, "%s.delta.json" % cid)
            with open(delta_path, "w", encoding="utf-8") as fh:
                json.dump({"delta": result.delta.tolist()}, fh)
            artifacts = [os.path.relpath(png, os.path.dirname(os.path.dirname(artifacts_dir))),
                         os.path.relpath(delta_path, os.path.dirname(os.path.dirname(artifacts_dir)))]
        queries.append(result.queries_used)
        cases.append({
            "case_id": cid,
            "input": name,
            "verdict": "fail" if result.success else "pass",
            "detail": {"original_label": y_true, "queries_used": result.queries_used},
            "artifacts": artifacts,
        })
    metrics = {
        "attack_success_rate": successes / len(subset),
        "mean_queries": float(np.mean(queries)),
    }
    return {"metrics": metrics, "cases": cases}


def _run_stt_robustness(model, prop, seed_data, global_seed, prop_index, artifacts_dir):
    manifest = _load_audio_manifest(seed_data)
    noise_bank = None
    if seed_data.get("noise_dir"):
        noise_bank = audio.load_noise_bank(seed_data["noise_dir"])
    threshold = float(prop.get("wer_threshold", 0.3))
    perturbation = prop["perturbation"]
    cases = []
    wers = []
    errors = 0
    for idx, (clip_path, reference) in enumerate(manifest):
        cid = "stt-%d" % idx
        try:
            clip = audio.load_wav(clip_path)
            perturbed = audio.perturb_clip(clip, perturbation, noise_bank,
                                           rng_seed=case_seed(global_seed, prop_index, idx))
            transcript = gateway.query_stt(model, perturbed).text
            breakdown = audio.wer(reference, transcript)
            failed = breakdown.wer > threshold
            artifacts = []
            if failed:
                out = os.path.join(artifacts_dir, "%s.wav" % cid)
                audio.save_wav(perturbed, out)
                artifacts.append(os.path.relpath(out, os.path.dirname(os.path.dirname(artifacts_dir))))
            wers.append(breakdown.wer)
            cases.append({
                "case_id": cid,
                "input": clip_path,
                "verdict": "fail" if failed else "pass",
                "detail": {"reference": reference, "transcript": transcript,
                           "wer": breakdown.wer},
                "artifacts": artifacts,
            })
        except (ModelProbeError, OSError) as exc:
            errors += 1
            cases.append({"case_id": cid, "input": clip_path, "verdict": "error",
                          "detail": {"error": str(exc)}, "artifacts": []})
    metrics = {"mean_wer": float(np.mean(wers)) if wers else None,
               "failure_count": sum(1 for c in cases if c["verdict"] == "fail"),
               "error_count": errors}
    return {"metrics": metrics, "cases": cases}


def _run_stt_fairness(model, prop, artifacts_dir):
    entries = audio.load_fairness_manifest(prop["manifest"])
    threshold = float(prop.get("delta_threshold", 0.2))
    verdicts = audio.test_stt_fairness(model, entries, threshold)
    cases = []
    by_attribute = {}
    for idx, v in enumerate(verdicts):
        cid = "fairness-%d" % idx
        if v.error is not None:
            cases.append({"case_id": cid, "input": v.reference, "verdict": "error",
                          "detail": {"error": v.error}, "artifacts": []})
            continue
        failed = not v.passed
        if v.attribute:
            by_attribute.setdefault(v.attribute, 0)
            by_attribute[v.attribute] += failed
        artifacts = []
        if failed:
            detail_path = os.path.join(artifacts_dir, "%s.json" % cid)
            with open(detail_path, "w", encoding="utf-8") as fh:
                json.dump({"reference": v.reference, "attribute": v.attribute,
                           "value": v.value, "baseline_wer": v.baseline_wer,
                           "variant_wer": v.variant_wer, "delta": v.delta}, fh,
                          sort_keys=True, indent=2)
            artifacts.append(os.path.relpath(detail_path, os.path.dirname(os.path.dirname(artifacts_dir))))
        cases.append({
            "case_id": cid,
            "input": v.reference,
            "verdict": "fail" if failed else "pass",
            "detail": {"attribute": v.attribute, "value": v.value,
                       "baseline_wer": v.baseline_wer, "variant_wer": v.variant_wer,
                       "delta": v.delta},
            "artifacts": artifacts,
        })
    metrics = {"failures:%s" % attr: count for attr, count in sorted(by_attribute.items())}
    metrics["failure_count"] = sum(1 for c in cases if c["verdict"] == "fail")
    return {"metrics": metrics, "cases": cases}


# ---------------------------------------------------------------------------
# Run orchestration
# ---------------------------------------------------------------------------

def run_id_for(config, global_seed):
    # output_dir and concurrency affect where and how fast the run executes,
    # not what it computes, so they are excluded from the run identity.
    relevant = {k: v for k, v in config.items()
                if k not in ("output_dir", "concurrency")}
    payload = json.dumps({"config": relevant, "seed": global_seed}, sort_keys=True)
    return "run-" + hashlib.sha256(payload.encode()).hexdigest()[:12]


def run(config, registry=None):
    """Execute every configured property and write the report atomically.

    Returns (report dict, run directory path).
    """
    validate_config(config)
    model = gateway.load_model(config["model_id"], registry=registry)
    global_seed = int(config.get("global_seed", 0))
    seed_data = config.get("seed_data", {})
    concurrency = int(config.get("concurrency", 4))
    rid = run_id_for(config, global_seed)
    output_dir = config["output_dir"]
    os.makedirs(output_dir, exist_ok=True)

    started = time.time()
    properties = []
    for prop_index, prop in enumerate(config["properties"]):
        expected_kind = _PROPERTY_MODALITY[prop["type"]]
        if model.kind != expected_kind:
            raise ValidationError("property %r requires a %s model, got %s"
                                  % (prop["type"], expected_kind, model.kind))

    tmp = tempfile.mkdtemp(prefix=".tmp-" + rid + "-", dir=output_dir)
    try:
        for prop_index, prop in enumerate(config["properties"]):
            name = prop.get("name", "%s-%d" % (prop["type"], prop_index))
            artifacts_dir = os.path.join(tmp, "artifacts", name)
            os.makedirs(artifacts_dir, exist_ok=True)
            t0 = time.time()
            try:
                if prop["type"] == "interpretability":
                    result = _run_interpretability(model, prop, seed_data, global_seed,
                                                   prop_index, artifacts_dir)
                elif prop["type"] == "image_robustness":
                    result = _run_image_robustness(model, prop, seed_data, global_seed,
                                                   prop_index, artifacts_dir, concurrency)
                elif prop["type"] == "image_adversarial":
                    result = _run_image_adversarial(model, prop, seed_data, global_seed,
                                                    prop_index, artifacts_dir, concurrency)
                elif prop["type"] == "stt_robustness":
                    result = _run_stt_robustness(model, prop, seed_data, global_seed,
                                                 prop_index, artifacts_dir)
                else:
                    result = _run_stt_fairness(model, prop, artifacts_dir)
                status = "completed"
            except ModelProbeError as exc:
                result = {"metrics": {}, "cases": [], "error": str(exc)}
                status = "error"
            properties.append({
                "name": name,
                "type": prop["type"],
                "status": status,
                "metrics": result["metrics"],
                "cases": result["cases"],
                **({"error": result["error"]} if "error" in result else {}),
                "elapsed_s": round(time.time() - t0, 6),
            })
        report = {
            "run_id": rid,
            "model_id": config["model_id"],
            "global_seed": global_seed,
            "properties": properties,
            "timing": {"started": started, "elapsed_s": round(time.time() - started, 6)},
        }
        # strip per-property timing out of the canonical body, keep under timing
        report["timing"]["per_property"] = {p["name"]: p.pop("elapsed_s") for p in properties}
        with open(os.path.join(tmp, "report.json"), "wb") as fh:
            fh.write(render_report(report, "json"))
        run_dir = os.path.join(output_dir, rid)
        if os.path.exists(run_dir):
            shutil.rmtree(run_dir)
        os.replace(tmp, run_dir)
    except Exception:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return report, run_dir


def load_report(run_dir):
    path = run_dir if run_dir.endswith(".json") else os.path.join(run_dir, "report.json")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def canonical_report_bytes(report):
    """Canonical JSON with timestamps excluded (used for reproducibility checks)."""
    trimmed = {k: v for k, v in report.items() if k != "timing"}
    return json.dumps(trimmed, sort_keys=True, indent=2).encode() + b"\n"


def render_report(report, fmt="json"):
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2).encode() + b"\n"
    if fmt != "text-summary":
        raise ValidationError("unknown report format %r" % fmt)
    lines = ["Run %s (model %s)" % (report["run_id"], report["model_id"])]
    for prop in report["properties"]:
        cases = prop["cases"]
        failed = [c for c in cases if c["verdict"] == "fail"]
        lines.append("")
        lines.append("[%s] %s: %d cases, %d failed (%s)"
                     % (prop["type"], prop["name"], len(cases), len(failed), prop["status"]))
        for key in sorted(prop["metrics"]):
            lines.append("  %-40s %s" % (key, prop["metrics"][key]))
        for c in failed:
            detail = c.get("detail", {})
            extra = ""
            if "wer" in detail:
                extra = " wer=%.4g" % detail["wer"]
            lines.append("  FAIL %s%s" % (c["case_id"], extra))
    return ("\n".join(lines) + "\n").encode()


def compare_runs(report_a, report_b):
    """Aligned per-property metric deltas; one-sided properties are flagged."""
    if report_a.get("model_id") != report_b.get("model_id"):
        pass  # different models are comparable as long as kinds match; caller's call
    a_props = {p["name"]: p for p in report_a["properties"]}
    b_props = {p["name"]: p for p in report_b["properties"]}
    rows = []
    for name in sorted(set(a_props) | set(b_props)):
        if name not in a_props or name not in b_props:
            rows.append({"property": name, "metric": None, "a": None, "b": None,
                         "delta": None, "flag": "one-sided"})
            continue
        metrics = sorted(set(a_props[name]["metrics"]) | set(b_props[name]["metrics"]))
        for m in metrics:
            va = a_props[name]["metrics"].get(m)
            vb = b_props[name]["metrics"].get(m)
            delta = None
            if isinstance(va, (int, float)) and isinstance(vb, (int, float)):
                delta = vb - va
            rows.append({"property": name, "metric": m, "a": va, "b": vb,
                         "delta": delta, "flag": None})
    return rows

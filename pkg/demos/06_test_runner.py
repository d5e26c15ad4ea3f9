"""End-to-end property runs with the test runner.

A runconfig bundles a registered model, a list of property checks and seed
data. Runs are deterministic given the global seed: the report (minus
timing) is byte-identical across repeats, and every failed case leaves an
artifact on disk. The same flow is available from the command line:

    modelprobe --registry REG register model.json
    modelprobe --registry REG run runconfig.json --seed 42
    modelprobe report RUN_DIR --format text
    modelprobe compare RUN_A RUN_B
"""

import os
import tempfile

import numpy as np

from modelprobe import gateway, imaging, runner

tmp = tempfile.mkdtemp(prefix="runner-demo-")
registry = os.path.join(tmp, "registry")

# Register a builtin image classifier.
rng = np.random.default_rng(0)
w = rng.normal(size=64)
gateway.register_model({
    "id": "demo-classifier",
    "kind": "image-classifier",
    "backend": "builtin",
    "class_labels": ["cat", "dog"],
    "output_mode": "label-with-scores",
    "builtin": {"type": "linear_softmax",
                "weights": [w.tolist(), (-w).tolist()],
                "bias": [0.0, 0.0]},
}, registry=registry)

# Seed images on disk, as a real suite would provide.
image_dir = os.path.join(tmp, "images")
os.makedirs(image_dir)
for i in range(8):
    imaging.save_png(rng.uniform(size=(8, 8, 1)),
                     os.path.join(image_dir, "seed%02d.png" % i))

config = {
    "model_id": "demo-classifier",
    "properties": [
        {"type": "image_robustness",
         "name": "noise-robustness",
         "transforms": [
             {"kind": "gaussian_noise", "params": {"sigma": 0.08}},
             {"kind": "brightness", "params": {"offset": 0.2}},
         ]},
        {"type": "image_adversarial",
         "name": "bo-attack",
         "attack": {"delta_max": 0.15, "iterations": 25, "n_init": 5,
                    "grid": [2, 2]},
         "image_count": 3},
    ],
    "seed_data": {"image_dir": image_dir},
    "global_seed": 42,
    "output_dir": os.path.join(tmp, "runs"),
}

report, run_dir = runner.run(config, registry=registry)
print(runner.render_report(report, "text-summary").decode())
print("run directory:", run_dir)

# Determinism: a second run of the same config yields the same canonical bytes.
report2, _ = runner.run(config, registry=registry)
print("reproducible:",
      runner.canonical_report_bytes(report) ==
      runner.canonical_report_bytes(report2))

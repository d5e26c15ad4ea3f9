"""Query-efficient black-box adversarial attack via Bayesian optimization.

The attack minimizes the model's score margin m = s(y_true) - max_other
over a low-dimensional grid perturbation, modeled with a Gaussian-process
surrogate and an expected-improvement acquisition. Success means the
model's label flips within the l-infinity budget delta_max.
"""

import numpy as np

from modelprobe import boattack, gateway
from modelprobe.boattack import AttackConfig

# Target: a 2-class linear-softmax classifier over 8x8 grayscale images.
rng = np.random.default_rng(1)
w = rng.normal(size=64)
model = gateway.handle_from_descriptor({
    "id": "demo-classifier",
    "kind": "image-classifier",
    "backend": "builtin",
    "class_labels": ["cat", "dog"],
    "output_mode": "label-with-scores",
    "builtin": {"type": "linear_softmax",
                "weights": [w.tolist(), (-w).tolist()],
                "bias": [0.0, 0.0]},
})

# Pick a seed image the model classifies with a modest margin.
x = np.clip(0.5 + 0.02 * w.reshape(8, 8, 1), 0.0, 1.0)
pred = gateway.query_classifier(model, [x])[0]
scores = {c: round(float(s), 4) for c, s in zip(model.class_labels, pred.scores)}
print("clean prediction: %s  scores=%s" % (pred.label, scores))

config = AttackConfig(delta_max=0.15, iterations=60, n_init=10, grid=(4, 4),
                      acquisition="expected-improvement", rng_seed=0)
result = boattack.attack(model, x, pred.label, config)

print("success      =", result.success)
print("queries used =", result.queries_used, "of", config.iterations)
print("||delta||_inf = %.4f (budget %.4f)"
      % (np.max(np.abs(result.delta)), config.delta_max))
print("objective trace (best-so-far margin):")
for i, m in enumerate(result.objective_trace):
    if i % 10 == 0 or m < 0:
        print("  query %3d: m = %+0.4f" % (i + 1, m))
    if m < 0:
        break

if result.success:
    adv = gateway.query_classifier(model, [result.adversarial_image])[0]
    print("adversarial prediction:", adv.label)

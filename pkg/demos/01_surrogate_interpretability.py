"""Global interpretability testing with a decision-tree surrogate.

A black-box tabular classifier is approximated by a CART surrogate trained
purely on the model's own predictions. The surrogate is then scored with
three interpretability characteristics: average path length (APL), maximum
path length (MPL), and fidelity on a held-out suite.
"""

import numpy as np

from modelprobe import gateway, tabular
from modelprobe.tabular import (
    FeatureSpec,
    InterpretabilityThresholds,
    SurrogateConfig,
    TabularDataset,
)

# ---------------------------------------------------------------------------
# The "black box": a builtin decision-tree model. In practice this would be
# a remote HTTP endpoint; the gateway hides the difference.
# ---------------------------------------------------------------------------
nodes = [
    {"kind": "split", "feature": 0, "op": "le", "value": 0.4, "left": 1, "right": 2},
    {"kind": "leaf", "label": "reject"},
    {"kind": "split", "feature": 2, "op": "le", "value": 0.7, "left": 3, "right": 4},
    {"kind": "leaf", "label": "approve"},
    {"kind": "leaf", "label": "review"},
]
model = gateway.handle_from_descriptor({
    "id": "credit-model",
    "kind": "tabular-classifier",
    "backend": "builtin",
    "class_labels": ["approve", "reject", "review"],
    "output_mode": "label-with-scores",
    "builtin": {"type": "tree", "nodes": nodes},
})

# ---------------------------------------------------------------------------
# Unlabeled training data. Any gold labels present would be ignored: the
# surrogate is always trained on model predictions.
# ---------------------------------------------------------------------------
schema = [FeatureSpec(name=n, kind="numeric", numeric_range=(0.0, 1.0))
          for n in ("income", "age", "tenure")]
rng = np.random.default_rng(0)
rows = [tuple(rng.uniform(size=3).tolist()) for _ in range(1000)]
data = TabularDataset(schema=schema, rows=rows)

verdict = tabular.test_interpretability(
    model, data,
    SurrogateConfig(max_depth=6, min_node_samples=30, augment_to=100, rng_seed=0),
    InterpretabilityThresholds(apl_max=4.0, mpl_max=6, fidelity_min=0.9),
)

print("APL      = %.3f" % verdict.apl)
print("MPL      = %d" % verdict.mpl)
print("Fidelity = %.3f" % verdict.fidelity)
print("Verdict  =", "PASS" if verdict.passed else "FAIL")

# The surrogate itself is a plain dict and can be inspected or persisted.
print("\nSurrogate root split:", verdict.tree["nodes"][0])

"""Decision-tree surrogate extraction for black-box tabular classifiers.

A CART surrogate (Gini impurity, binary splits) is trained on model
predictions, with synthetic augmentation at data-sparse nodes, and scored
with average path length, maximum path length and fidelity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import gateway
from .errors import InfeasibleRegionError, ValidationError

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str  # numeric | categorical
    numeric_range: tuple[float, float] | None = None
    categories: tuple[tuple[str, float], ...] | None = None  # (value, frequency)

    def __post_init__(self):
        if self.kind == NUMERIC:
            lo, hi = self.numeric_range
            if lo > hi:
                raise ValidationError("feature %s: min > max" % self.name)
        elif self.kind == CATEGORICAL:
            total = sum(f for _, f in self.categories)
            if abs(total - 1.0) > 1e-9:
                raise ValidationError("feature %s: category frequencies sum to %g" % (self.name, total))
        else:
            raise ValidationError("feature %s: unknown kind %r" % (self.name, self.kind))


@dataclass
class TabularDataset:
    schema: list[FeatureSpec]
    rows: list[tuple]
    source: str = ""
    gold_labels: list[str] | None = None

    def __len__(self):
        return len(self.rows)


def _is_float(s):
    try:
        float(s)
        return True
    except (TypeError, ValueError):
        return False


def schema_from_rows(names, columns, kinds=None):
    """Build FeatureSpecs from raw column values, inferring kinds when absent."""
    specs = []
    for j, name in enumerate(names):
        col = columns[j]
        kind = (kinds or {}).get(name)
        if kind is None:
            kind = NUMERIC if all(_is_float(v) for v in col) else CATEGORICAL
        if kind == NUMERIC:
            vals = np.asarray([float(v) for v in col])
            specs.append(FeatureSpec(name=name, kind=NUMERIC,
                                     numeric_range=(float(vals.min()), float(vals.max()))))
        else:
            values, counts = np.unique([str(v) for v in col], return_counts=True)
            freqs = counts / counts.sum()
            specs.append(FeatureSpec(name=name, kind=CATEGORICAL,
                                     categories=tuple((str(v), float(f)) for v, f in zip(values, freqs))))
    return specs


def load_csv(path, label_column=None, kind_overrides=None):
    """Load a CSV (header row required) into a TabularDataset.

    Feature kinds are inferred (all values parse as float -> numeric) and can
    be overridden per column name. `label_column` is excluded from the
    features and kept as gold labels.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        raw = [row for row in reader if row]
    if not raw:
        raise ValidationError("dataset %s has no rows" % path)
    label_idx = None
    if label_column is not None:
        if label_column not in header:
            raise ValidationError("label column %r not in header" % label_column)
        label_idx = header.index(label_column)
    feat_idx = [j for j in range(len(header)) if j != label_idx]
    names = [header[j] for j in feat_idx]
    columns = [[row[j] for row in raw] for j in feat_idx]
    specs = schema_from_rows(names, columns, kind_overrides)
    rows = []
    for row in raw:
        vals = []
        for spec, j in zip(specs, feat_idx):
            vals.append(float(row[j]) if spec.kind == NUMERIC else str(row[j]))
        rows.append(tuple(vals))
    gold = [row[label_idx] for row in raw] if label_idx is not None else None
    return TabularDataset(schema=specs, rows=rows, source=str(path), gold_labels=gold)


# ---------------------------------------------------------------------------
# Predicates and trees
# ---------------------------------------------------------------------------

# A predicate is (feature_index, op, value) with op in {"le", "gt", "eq", "ne"}.

def eval_predicate(pred, row):
    j, op, v = pred
    if op == "le":
        return float(row[j]) <= v
    if op == "gt":
        return float(row[j]) > v
    if op == "eq":
        return row[j] == v
    if op == "ne":
        return row[j] != v
    raise ValueError("unknown predicate op %r" % op)


class DecisionTree:
    """Binary surrogate tree stored as a node arena.

    Decision nodes: {"kind": "split", "feature", "op": "le"|"eq", "value",
    "left", "right"}; leaves: {"kind": "leaf", "label"}. Root is node 0.
    """

    def __init__(self, nodes):
        self.nodes = nodes

    def predict(self, row):
        i = 0
        while True:
            node = self.nodes[i]
            if node["kind"] == "leaf":
                return node["label"]
            if node["op"] == "le":
                go_left = float(row[node["feature"]]) <= node["value"]
            else:
                go_left = row[node["feature"]] == node["value"]
            i = node["left"] if go_left else node["right"]

    def path_lengths(self):
        """Decision-node count of every root-to-leaf path."""
        out = []
        stack = [(0, 0)]
        while stack:
            i, depth = stack.pop()
            node = self.nodes[i]
            if node["kind"] == "leaf":
                out.append(depth)
            else:
                stack.append((node["right"], depth + 1))
                stack.append((node["left"], depth + 1))
        return out

    def to_dict(self):
        return {"nodes": [dict(n) for n in self.nodes], "root": 0}

    @classmethod
    def from_dict(cls, d):
        return cls([dict(n) for n in d["nodes"]])

    def as_builtin_descriptor(self, model_id, class_labels, kind="tabular-classifier"):
        """Descriptor for a builtin gateway model backed by this tree."""
        return {
            "id": model_id,
            "kind": kind,
            "backend": "builtin",
            "output_mode": "label-only",
            "class_labels": list(class_labels),
            "builtin": {"type": "tree", "nodes": [dict(n) for n in self.nodes]},
        }


def apl(tree):
    """Mean decision-node count over all root-to-leaf paths, uniform over paths."""
    lengths = tree.path_lengths()
    return float(sum(lengths)) / len(lengths)


def mpl(tree):
    """Maximum decision-node count over all root-to-leaf paths."""
    return max(tree.path_lengths())


# ---------------------------------------------------------------------------
# Constrained sample generation
# ---------------------------------------------------------------------------

def generate_samples(schema, path_constraints, n, rng_seed):
    """Draw n rows satisfying every path constraint.

    Numeric features are uniform over the constraint-intersected range;
    categorical features follow the empirical frequencies restricted to the
    allowed values and renormalized.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    samplers = []
    for j, spec in enumerate(schema):
        preds = [p for p in path_constraints if p[0] == j]
        if spec.kind == NUMERIC:
            lo, hi = spec.numeric_range
            lo_strict = False
            for _, op, v in preds:
                if op == "le":
                    hi = min(hi, v)
                elif op == "gt":
                    if v >= lo:
                        lo, lo_strict = v, True
                else:
                    raise ValidationError("categorical predicate on numeric feature %s" % spec.name)
            if hi < lo or (hi == lo and lo_strict):
                raise InfeasibleRegionError("empty interval for feature %s" % spec.name)
            samplers.append(("num", lo, hi))
        else:
            allowed = [v for v, _ in spec.categories]
            for _, op, v in preds:
                if op == "eq":
                    allowed = [a for a in allowed if a == v]
                elif op == "ne":
                    allowed = [a for a in allowed if a != v]
                else:
                    raise ValidationError("numeric predicate on categorical feature %s" % spec.name)
            if not allowed:
                raise InfeasibleRegionError("no allowed category for feature %s" % spec.name)
            freq = dict(spec.categories)
            w = np.asarray([freq[a] for a in allowed])
            samplers.append(("cat", allowed, w / w.sum()))
    rows = []
    for _ in range(n):
        vals = []
        for s in samplers:
            if s[0] == "num":
                _, lo, hi = s
                vals.append(float(rng.uniform(lo, hi)) if hi > lo else lo)
            else:
                _, allowed, p = s
                vals.append(allowed[int(rng.choice(len(allowed), p=p))])
        rows.append(tuple(vals))
    return rows


# ---------------------------------------------------------------------------
# CART induction on model labels
# ---------------------------------------------------------------------------

@dataclass
class SurrogateConfig:
    max_depth: int = 18
    min_node_samples: int = 30
    augment_to: int = 100
    rng_seed: int = 0


def _gini(labels):
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return 1.0 - float(np.sum(p * p))


def _weighted_gini(left_counts, right_counts):
    """Weighted Gini for one or many (left, right) class-count splits.

    Accepts count vectors of shape (C,) or matrices of shape (k, C);
    returns a scalar or a length-k vector.
    """
    left_counts = np.atleast_2d(left_counts).astype(float)
    right_counts = np.atleast_2d(right_counts).astype(float)
    nl = left_counts.sum(axis=1)
    nr = right_counts.sum(axis=1)
    gl = 1.0 - (left_counts ** 2).sum(axis=1) / nl ** 2
    gr = 1.0 - (right_counts ** 2).sum(axis=1) / nr ** 2
    return (nl * gl + nr * gr) / (nl + nr)


def _best_split(schema, rows, labels):
    """Lowest-weighted-Gini single-feature split, or None.

    Ties broken by lowest feature index, then smallest threshold /
    lexicographically smallest category.
    """
    n = len(rows)
    parent = _gini(labels)
    best = None  # (score, feature, op, value)
    classes, y = np.unique(np.asarray(labels), return_inverse=True)
    onehot = np.zeros((n, len(classes)))
    onehot[np.arange(n), y] = 1.0
    total = onehot.sum(axis=0)
    for j, spec in enumerate(schema):
        col = [row[j] for row in rows]
        if spec.kind == NUMERIC:
            vals = np.asarray(col, dtype=float)
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            cum = np.cumsum(onehot[order], axis=0)
            boundary = np.nonzero(sv[:-1] < sv[1:])[0]  # split after index i
            if boundary.size == 0:
                continue
            left = cum[boundary]
            score = _weighted_gini(left, total - left)
            t = (sv[boundary] + sv[boundary + 1]) / 2.0
            k = int(np.lexsort((t, score))[0])
            cand = (float(score[k]), j, "le", float(t[k]))
            if best is None or cand < best:
                best = cand
        else:
            vals = np.asarray(col, dtype=object)
            for v in sorted(set(col)):
                mask = vals == v
                if mask.all():
                    continue
                left = onehot[mask].sum(axis=0)
                score = float(_weighted_gini(left, total - left)[0])
                cand = (score, j, "eq", v)
                if best is None or cand < best:
                    best = cand
    if best is None or best[0] >= parent - 1e-12:
        return None
    return best[1], best[2], best[3]


def _majority(labels):
    values, counts = np.unique(labels, return_counts=True)
    return str(values[int(np.argmax(counts))])


def fit_surrogate(model, data, config=None):
    """Train a CART surrogate of `model` on `data` rows labeled by the model.

    Nodes holding fewer than min_node_samples rows are augmented with
    synthetic rows satisfying the node's path constraints, labeled by
    querying the model. The dataset's own labels are never consulted.
    """
    config = config or SurrogateConfig()
    if config.max_depth < 1:
        raise ValidationError("max_depth must be >= 1")
    if len(data) == 0:
        raise ValidationError("dataset is empty")
    labels = [p.label for p in gateway.query_classifier(model, data.rows)]
    rng = np.random.default_rng(config.rng_seed)
    nodes = []

    def build(rows, ys, constraints, depth):
        idx = len(nodes)
        nodes.append(None)  # reserve slot; filled below
        if len(rows) < config.min_node_samples and depth < config.max_depth:
            extra = config.augment_to - len(rows)
            if extra > 0:
                try:
                    synth = generate_samples(data.schema, constraints, extra,
                                             int(rng.integers(2 ** 31)))
                except InfeasibleRegionError:
                    synth = []
                if synth:
                    rows = list(rows) + synth
                    ys = list(ys) + [p.label for p in gateway.query_classifier(model, synth)]
        if depth >= config.max_depth or len(set(ys)) == 1:
            nodes[idx] = {"kind": "leaf", "label": _majority(ys)}
            return idx
        split = _best_split(data.schema, rows, ys)
        if split is None:
            nodes[idx] = {"kind": "leaf", "label": _majority(ys)}
            return idx
        j, op, v = split
        pred_left = (j, op, v)
        pred_right = (j, "gt" if op == "le" else "ne", v)
        lrows, lys, rrows, rys = [], [], [], []
        for row, y in zip(rows, ys):
            if eval_predicate(pred_left, row):
                lrows.append(row)
                lys.append(y)
            else:
                rrows.append(row)
                rys.append(y)
        left = build(lrows, lys, constraints + [pred_left], depth + 1)
        right = build(rrows, rys, constraints + [pred_right], depth + 1)
        nodes[idx] = {"kind": "split", "feature": j, "op": op, "value": v,
                      "left": left, "right": right}
        return idx

    build(data.rows, labels, [], 0)
    return DecisionTree(nodes)


def fidelity(tree, model, suite):
    """Fraction of suite rows where surrogate and model agree."""
    if len(suite) == 0:
        raise ValidationError("fidelity suite is empty")
    preds = gateway.query_classifier(model, suite.rows)
    agree = sum(1 for row, p in zip(suite.rows, preds) if tree.predict(row) == p.label)
    return agree / len(suite)


@dataclass(frozen=True)
class InterpretabilityThresholds:
    apl_max: float = float("inf")
    mpl_max: float = float("inf")
    fidelity_min: float = 0.9


@dataclass
class InterpretabilityVerdict:
    apl: float
    mpl: int
    fidelity: float
    thresholds: InterpretabilityThresholds
    passed: bool
    tree: dict = field(repr=False, default=None)


def test_interpretability(model, data, config=None, thresholds=None, split_seed=0):
    """Fit a surrogate on a seeded 80/20 split and check all three metrics."""
    config = config or SurrogateConfig()
    thresholds = thresholds or InterpretabilityThresholds()
    if not (0.0 <= thresholds.fidelity_min <= 1.0):
        raise ValidationError("fidelity_min must be in [0, 1]")
    n = len(data)
    order = np.random.default_rng(split_seed).permutation(n)
    n_train = max(1, n - max(1, round(0.2 * n))) if n > 1 else 1
    train_rows = [data.rows[i] for i in order[:n_train]]
    hold_rows = [data.rows[i] for i in order[n_train:]] or train_rows
    train = TabularDataset(schema=data.schema, rows=train_rows, source=data.source)
    holdout = TabularDataset(schema=data.schema, rows=hold_rows, source=data.source)
    tree = fit_surrogate(model, train, config)
    a, m = apl(tree), mpl(tree)
    f = fidelity(tree, model, holdout)
    passed = a <= thresholds.apl_max and m <= thresholds.mpl_max and f >= thresholds.fidelity_min
    return InterpretabilityVerdict(apl=a, mpl=m, fidelity=f, thresholds=thresholds,
                                   passed=passed, tree=tree.to_dict())

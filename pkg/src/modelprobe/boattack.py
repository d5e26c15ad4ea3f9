"""Black-box adversarial example search via Bayesian optimization.

A Gaussian-process surrogate models the score margin as a function of a
low-dimensional perturbation lattice; an acquisition function picks the
next query, all under an L-infinity budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm

from . import gateway
from .errors import NumericalError, UnsupportedModelError, ValidationError


@dataclass(frozen=True)
class AttackConfig:
    delta_max: float = 0.1
    iterations: int = 100
    n_init: int = 10
    grid: tuple[int, int] = (4, 4)
    kernel_lengthscale: float | None = None  # default 0.5 * delta_max * sqrt(dim)
    kernel_variance: float = 1.0
    noise_variance: float = 1e-6
    acquisition: str = "expected-improvement"  # or "ucb"
    ucb_kappa: float = 2.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.delta_max < 0:
            raise ValidationError("delta_max must be >= 0")
        if not self.iterations > self.n_init >= 2:
            raise ValidationError("need iterations > n_init >= 2")
        if self.grid[0] < 1 or self.grid[1] < 1:
            raise ValidationError("grid dims must be >= 1")
        if self.kernel_variance <= 0 or self.noise_variance <= 0:
            raise ValidationError("kernel hyperparameters must be positive")
        if self.acquisition not in ("expected-improvement", "ucb"):
            raise ValidationError("unknown acquisition %r" % self.acquisition)

    def lengthscale(self, dim):
        if self.kernel_lengthscale is not None:
            return self.kernel_lengthscale
        return 0.5 * max(self.delta_max, 1e-12) * np.sqrt(dim)


class GPSurrogate:
    """GP regression with a squared-exponential kernel and cached Cholesky."""

    def __init__(self, lengthscale, variance, noise_variance):
        self.lengthscale = float(lengthscale)
        self.variance = float(variance)
        self.noise_variance = float(noise_variance)
        self.x = np.empty((0, 0))
        self.y = np.empty(0)
        self._chol = None
        self._alpha = None

    def _kernel(self, a, b):
        d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
        return self.variance * np.exp(-0.5 * d2 / self.lengthscale ** 2)

    def observe(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.x.size == 0:
            self.x = x
            self.y = np.asarray([y], dtype=float) if np.isscalar(y) else np.asarray(y, dtype=float)
        else:
            self.x = np.vstack([self.x, x])
            self.y = np.append(self.y, y)
        self._refit()

    def _refit(self):
        k = self._kernel(self.x, self.x)
        jitter = 0.0
        while True:
            try:
                self._chol = cho_factor(k + (self.noise_variance + jitter) * np.eye(len(k)), lower=True)
                break
            except np.linalg.LinAlgError:
                jitter = 1e-8 if jitter == 0.0 else jitter * 100.0
                if jitter > 1e-4:
                    raise NumericalError("kernel matrix not positive definite after jitter escalation")
        self._alpha = cho_solve(self._chol, self.y)

    def posterior(self, query):
        """Posterior (mean, variance) at one query point."""
        if len(self.y) == 0:
            raise ValidationError("surrogate has no observations")
        q = np.atleast_2d(np.asarray(query, dtype=float))
        ks = self._kernel(q, self.x)[0]
        mean = float(ks @ self._alpha)
        v = cho_solve(self._chol, ks)
        var = float(self.variance - ks @ v)
        return mean, max(var, 0.0)


def gp_posterior(surrogate, query):
    return surrogate.posterior(query)


def upsample_delta(grid_delta, target_hw):
    """Nearest-neighbor upsample of a (d_r, d_c, C) lattice to (H, W, C)."""
    g = np.asarray(grid_delta, dtype=float)
    dr, dc, _ = g.shape
    h, w = target_hw
    if dr > h or dc > w:
        raise ValidationError("grid dims exceed target dims")
    rows = (np.arange(h) * dr) // h
    cols = (np.arange(w) * dc) // w
    return g[rows][:, cols]


def objective(model, x, delta, y_true):
    """Score margin of y_true at clamp(x + delta); negative means flipped.

    Exactly one gateway query per call.
    """
    if model.output_mode != "label-with-scores":
        raise UnsupportedModelError(
            "the optimization attack needs per-class scores; "
            "use the static transforms for label-only models")
    adv = np.clip(np.asarray(x, dtype=float) + delta, 0.0, 1.0)
    pred = gateway.query_classifier(model, [adv])[0]
    scores = np.asarray(pred.scores)
    ti = model.class_labels.index(y_true)
    others = np.delete(scores, ti)
    return float(scores[ti] - others.max())


def _acquisition_value(surrogate, config, point, best):
    mean, var = surrogate.posterior(point)
    sd = np.sqrt(var)
    if config.acquisition == "ucb":
        # lower confidence bound for minimization, maximized as its negation
        return -(mean - config.ucb_kappa * sd)
    # expected improvement below the incumbent
    if sd <= 0.0:
        return max(best - mean, 0.0)
    z = (best - mean) / sd
    return float((best - mean) * norm.cdf(z) + sd * norm.pdf(z))


def expected_improvement(surrogate, point, best):
    mean, var = surrogate.posterior(point)
    sd = np.sqrt(var)
    if sd <= 0.0:
        return max(best - mean, 0.0)
    z = (best - mean) / sd
    return float((best - mean) * norm.cdf(z) + sd * norm.pdf(z))


def next_query(surrogate, config, rng, dim=None):
    """Approximate acquisition argmax over the perturbation box.

    1000 seeded uniform candidates, then 20 coordinate-wise refinement
    passes on the best one. The result always lies inside the box.
    """
    if len(surrogate.y) == 0:
        raise ValidationError("surrogate has no observations")
    d = dim if dim is not None else surrogate.x.shape[1]
    b = config.delta_max
    best_y = float(np.min(surrogate.y))
    cands = rng.uniform(-b, b, size=(1000, d))
    vals = [_acquisition_value(surrogate, config, c, best_y) for c in cands]
    best = cands[int(np.argmax(vals))].copy()
    best_val = max(vals)
    step = b / 2.0
    for _ in range(20):
        for j in range(d):
            for direction in (-1.0, 1.0):
                trial = best.copy()
                trial[j] = np.clip(trial[j] + direction * step, -b, b)
                v = _acquisition_value(surrogate, config, trial, best_y)
                if v > best_val:
                    best, best_val = trial, v
        step *= 0.7
    return np.clip(best, -b, b)


@dataclass
class AttackResult:
    success: bool
    adversarial_image: np.ndarray | None
    delta: np.ndarray | None
    queries_used: int
    objective_trace: list = field(default_factory=list)


def attack(model, x, y_true, config=None):
    """Run the BO attack loop against one image.

    Probes n_init random perturbations, then repeatedly fits the GP
    surrogate and queries the acquisition argmax, stopping early once the
    margin goes negative. Success is re-verified with one final
    confirmation query.
    """
    config = config or AttackConfig()
    x = np.asarray(x, dtype=float)
    h, w, c = x.shape
    dr, dc = config.grid
    dim = dr * dc * c
    rng = np.random.default_rng(config.rng_seed)

    initial = gateway.query_classifier(model, [x])[0]
    if initial.label != y_true:
        return AttackResult(success=True, adversarial_image=x.copy(),
                            delta=np.zeros_like(x), queries_used=0)

    surrogate = GPSurrogate(config.lengthscale(dim), config.kernel_variance,
                            config.noise_variance)
    trace = []
    best = np.inf
    best_grid = None
    queries = 0

    def evaluate(grid_vec):
        nonlocal best, best_grid, queries
        grid_delta = grid_vec.reshape(dr, dc, c)
        full = upsample_delta(grid_delta, (h, w))
        assert np.max(np.abs(full)) <= config.delta_max + 1e-12
        m = objective(model, x, full, y_true)
        queries += 1
        surrogate.observe(grid_vec, m)
        if m < best:
            best, best_grid = m, grid_vec.copy()
        trace.append(best)
        return m

    for _ in range(config.n_init):
        m = evaluate(rng.uniform(-config.delta_max, config.delta_max, size=dim))
        if m < 0:
            break
    while best >= 0 and queries < config.iterations:
        cand = next_query(surrogate, config, rng, dim=dim)
        evaluate(cand)

    if best >= 0:
        return AttackResult(success=False, adversarial_image=None, delta=None,
                            queries_used=queries, objective_trace=trace)

    full = upsample_delta(best_grid.reshape(dr, dc, c), (h, w))
    adv = np.clip(x + full, 0.0, 1.0)
    eff = adv - x
    confirm = gateway.query_classifier(model, [adv])[0]
    queries += 1
    success = confirm.label != y_true and float(np.max(np.abs(eff))) <= config.delta_max + 1e-12
    return AttackResult(success=success,
                        adversarial_image=adv if success else None,
                        delta=eff if success else None,
                        queries_used=queries, objective_trace=trace)

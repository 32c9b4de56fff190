"""Training algorithms.

* :func:`weak_learn` - the correlation-thresholding weak learner for linear
  functions (accept iff the empirical correlation vector is long enough).
* :func:`train_omnipredictor` - alternating multiaccuracy boosting and bucket
  recalibration on top of the weak learner.
* :func:`train_glmtron` - unit-step projected gradient descent whose update
  is exactly the negative matching-loss gradient of a known activation.
* :func:`train_isotron` - alternating Lipschitz isotonic fits and
  GLMtron-style weight updates for unknown activations.
* :func:`train_matching_gd` / :func:`train_logistic` - projected gradient
  descent with backtracking on an empirical matching loss.

Everything is deterministic given its seed; randomized steps consume an
explicit generator and there is no ambient RNG use.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression

from . import fenchel
from .errors import (
    ConfigError,
    DivergenceError,
    InvalidInputError,
    PreconditionError,
)

DEFAULT_BUCKET_WIDTH = 0.02
DEFAULT_OUTPUT_CLAMP = 1e-6
DEFAULT_ROUND_CAP = 1000
DEFAULT_CHEBYSHEV_CONSTANT = 64.0
DEFAULT_FAILURE_PROB = 1.0 / 6.0


def project_ball(w, radius):
    """Radial projection onto the Euclidean ball of the given radius."""
    norm = float(np.linalg.norm(w))
    if norm > radius:
        return w * (radius / norm)
    return w


# ---------------------------------------------------------------------------
# Weak learner
# ---------------------------------------------------------------------------


@dataclass
class LinearWeakLearnerResult:
    accepted: bool
    w: np.ndarray = None           # norm exactly B when accepted
    correlation_estimate: float = 0.0   # ||mean(z x)||, the decision statistic

    def __bool__(self):
        return self.accepted


def weak_learner_sample_requirement(d, second_moment, B, eps,
                                    C=DEFAULT_CHEBYSHEV_CONSTANT,
                                    failure_prob=DEFAULT_FAILURE_PROB):
    """Sample count demanded by the Chebyshev analysis of the weak learner."""
    return int(math.ceil(C * d ** 2 * second_moment * B ** 2
                         * math.log(1.0 / failure_prob) / eps ** 2))


def weak_learn(features, z, B, eps, seed=None, *, second_moment=1.0,
               C=DEFAULT_CHEBYSHEV_CONSTANT, failure_prob=DEFAULT_FAILURE_PROB,
               enforce_sample_size=True):
    """Accept-and-return or reject based on the correlation vector mean(z x).

    Accepts iff ``||mean(z x)|| > 3 eps / (4 B)`` and then returns that vector
    rescaled to norm exactly B.  Completeness: any ``||w|| <= B`` with
    ``E[z (w.x)] >= eps`` makes it accept with high probability; soundness:
    an accepted output has ``E[z (w.x)] >= eps / 4`` with high probability.
    The algorithm itself is deterministic; ``seed`` is accepted for interface
    uniformity with the other learners.
    """
    x = np.asarray(features, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.ndim != 2 or z.shape != (x.shape[0],):
        raise InvalidInputError("need features (n, d) and z (n,)")
    if np.any(np.abs(z) > 1.0 + 1e-12):
        raise InvalidInputError("z values must lie in [-1, 1]")
    if eps <= 0 or B <= 0:
        raise InvalidInputError("eps and B must be positive")
    n, d = x.shape
    if enforce_sample_size:
        need = weak_learner_sample_requirement(d, second_moment, B, eps,
                                               C=C, failure_prob=failure_prob)
        if n < need:
            raise PreconditionError(
                f"weak learner needs at least {need} samples "
                f"(got {n}) for d={d}, B={B}, eps={eps}")
    v = x.T @ z / n
    norm_v = float(np.linalg.norm(v))
    if norm_v <= 3.0 * eps / (4.0 * B):
        return LinearWeakLearnerResult(False, None, norm_v)
    return LinearWeakLearnerResult(True, v * (B / norm_v), norm_v)


# ---------------------------------------------------------------------------
# Omnipredictor: calibrated multiaccuracy
# ---------------------------------------------------------------------------


@dataclass
class OmniConfig:
    eps_ma: float = 0.02
    eps_cal: float = 0.02
    eps_weak: float = None          # defaults to eps_ma / 4
    step: float = None              # defaults to eps_weak / (2 B^2 lambda)
    bucket_width: float = DEFAULT_BUCKET_WIDTH
    output_clamp: float = DEFAULT_OUTPUT_CLAMP
    round_cap: int = DEFAULT_ROUND_CAP
    bernoulli_reduction: bool = False

    def resolved_eps_weak(self):
        return self.eps_weak if self.eps_weak is not None else self.eps_ma / 4.0


@dataclass
class CalibrationTable:
    """Bucket-mean calibration over the unit interval."""

    bucket_width: float
    values: np.ndarray              # one value per bucket, inside (0, 1)

    @property
    def n_buckets(self):
        return self.values.size

    def bucket_of(self, raw):
        idx = np.floor(np.asarray(raw, dtype=float) / self.bucket_width).astype(int)
        return np.clip(idx, 0, self.n_buckets - 1)

    def __call__(self, raw):
        return self.values[self.bucket_of(raw)]


def fit_calibration_table(raw, labels, bucket_width, clamp):
    """Replace each raw-score bucket by the mean label it carries.

    Empty buckets inherit their midpoint value.  Values are clamped into
    (0, 1) so downstream links stay finite.
    """
    n_buckets = int(round(1.0 / bucket_width))
    idx = np.clip(np.floor(raw / bucket_width).astype(int), 0, n_buckets - 1)
    sums = np.bincount(idx, weights=labels, minlength=n_buckets)
    counts = np.bincount(idx, minlength=n_buckets)
    mids = (np.arange(n_buckets) + 0.5) * bucket_width
    with np.errstate(invalid="ignore"):
        values = np.where(counts > 0, sums / np.maximum(counts, 1), mids)
    return CalibrationTable(bucket_width, np.clip(values, clamp, 1.0 - clamp))


def calibration_error(pred, labels):
    """Sum over level sets of |mean residual restricted to the level set|."""
    values, inverse = np.unique(pred, return_inverse=True)
    resid_sums = np.bincount(inverse, weights=labels - pred)
    return float(np.sum(np.abs(resid_sums))) / labels.size


@dataclass
class OmniPredictor:
    """Clipped linear-update score followed by bucket calibration."""

    updates: list                   # list of (sigma, w) pairs
    table: CalibrationTable
    base: float = 0.5
    converged: bool = True
    trace: list = field(default_factory=list)

    def raw_score(self, features):
        x = np.asarray(features, dtype=float)
        s = np.full(x.shape[0], self.base)
        for sigma, w in self.updates:
            s += sigma * (x @ w)
        return np.clip(s, 0.0, 1.0)

    def predict(self, features):
        return self.table(self.raw_score(features))

    # -- serialization ------------------------------------------------------

    def serialize(self):
        buf = io.StringIO()
        buf.write(f"#simlearn-predictor v1 kind=omnipredictor base={self.base!r} "
                  f"converged={int(self.converged)}\n")
        for sigma, w in self.updates:
            buf.write("update %.17g %s\n"
                      % (sigma, " ".join("%.17g" % c for c in w)))
        buf.write("calibration %.17g\n" % self.table.bucket_width)
        buf.write("values %s\n" % " ".join("%.17g" % v for v in self.table.values))
        return buf.getvalue()

    @staticmethod
    def deserialize(text):
        lines = text.strip().split("\n")
        head = lines[0].split()
        if head[0] != "#simlearn-predictor" or head[1] != "v1" \
                or head[2] != "kind=omnipredictor":
            raise ConfigError("not an omnipredictor serialization")
        kv = dict(p.split("=", 1) for p in head[2:])
        updates = []
        table = None
        width = None
        for line in lines[1:]:
            parts = line.split()
            if parts[0] == "update":
                updates.append((float(parts[1]),
                                np.array([float(v) for v in parts[2:]])))
            elif parts[0] == "calibration":
                width = float(parts[1])
            elif parts[0] == "values":
                table = CalibrationTable(width, np.array([float(v) for v in parts[1:]]))
        return OmniPredictor(updates, table, base=float(kv["base"]),
                             converged=bool(int(kv["converged"])))


def train_omnipredictor(dataset, B, config=None, seed=0):
    """Alternate multiaccuracy boosting rounds with bucket recalibration.

    Each round rebuilds the calibration table from the current raw scores,
    then runs the weak learner on the residual y - p(x).  On accept, the
    returned direction is appended with step ``sigma = eps_weak / (2 B^2
    lambda)``; on reject with calibration error below ``eps_cal`` training
    stops.  Hitting the round cap returns the best state so far flagged as
    non-converged.
    """
    cfg = config or OmniConfig()
    x = dataset.features
    y = dataset.labels.astype(float)
    lam = dataset.second_moment
    eps3 = cfg.resolved_eps_weak()
    sigma = cfg.step if cfg.step is not None else eps3 / (2.0 * B ** 2 * lam)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x0821]))
    if cfg.bernoulli_reduction and dataset.label_space == "interval":
        y = (rng.random(y.shape) < y).astype(float)

    # unclipped running score; clipping happens where the predictor clips,
    # over the accumulated sum
    raw = np.full(x.shape[0], 0.5)
    updates = []
    trace = []
    best = None  # (err2, n_updates, table) for the cap fallback
    for round_no in range(cfg.round_cap):
        table = fit_calibration_table(np.clip(raw, 0.0, 1.0), y,
                                      cfg.bucket_width, cfg.output_clamp)
        pred = table(np.clip(raw, 0.0, 1.0))
        cal_err = calibration_error(pred, y)
        err2 = squared_error(pred, y)
        if best is None or err2 < best[0]:
            best = (err2, len(updates), table)
        residual = y - pred
        result = weak_learn(x, residual, B, eps3, second_moment=lam,
                            enforce_sample_size=False)
        trace.append({"round": round_no, "err2": err2,
                      "ma_violation": result.correlation_estimate,
                      "calibration_error": cal_err})
        if not result.accepted:
            # recalibration already ran this round, so a residual the weak
            # learner cannot improve ends training either way
            return OmniPredictor(updates, table,
                                 converged=cal_err <= cfg.eps_cal, trace=trace)
        updates.append((sigma, result.w))
        raw = raw + sigma * (x @ result.w)

    # round cap: fall back to the best state seen, flagged non-converged
    _, n_upd, table = best
    return OmniPredictor(updates[:n_upd], table, converged=False, trace=trace)


@dataclass
class ConstantPredictor:
    """Predicts one fixed value everywhere; useful as a baseline."""

    value: float

    def predict(self, features):
        return np.full(np.asarray(features).shape[0], float(self.value))


# ---------------------------------------------------------------------------
# GLM predictors and GLMtron
# ---------------------------------------------------------------------------


@dataclass
class GlmPredictor:
    w: np.ndarray
    activation_tag: str
    converged: bool = True
    trace: list = field(default_factory=list)

    @property
    def activation(self):
        return fenchel.activation_from_tag(self.activation_tag)

    def score(self, features):
        return np.asarray(features, dtype=float) @ self.w

    def predict(self, features):
        return np.clip(self.activation(self.score(features)), 0.0, 1.0)

    def serialize(self):
        buf = io.StringIO()
        buf.write(f"#simlearn-predictor v1 kind=glm activation={self.activation_tag} "
                  f"converged={int(self.converged)}\n")
        buf.write("w %s\n" % " ".join("%.17g" % c for c in self.w))
        return buf.getvalue()

    @staticmethod
    def deserialize(text):
        lines = text.strip().split("\n")
        head = lines[0].split()
        if head[0] != "#simlearn-predictor" or head[2] != "kind=glm":
            raise ConfigError("not a glm serialization")
        kv = dict(p.split("=", 1) for p in head[2:])
        w = np.array([float(v) for v in lines[1].split()[1:]])
        return GlmPredictor(w, kv["activation"], converged=bool(int(kv["converged"])))


def _check_finite(w):
    if not np.all(np.isfinite(w)):
        raise DivergenceError("training iterates became non-finite")


def squared_error(pred, labels):
    return float(np.mean((pred - labels) ** 2))


def train_glmtron(dataset, activation_tag, B, iters=500, tol=1e-8):
    """Unit-step projected updates w += mean((y - a(w.x)) x).

    The update equals the negative gradient of the empirical matching loss
    of the activation.  Stops at the first iterate whose squared error is
    within ``tol`` of the running minimum; at the cap it returns the
    running-minimum iterate.
    """
    act = fenchel.activation_from_tag(activation_tag)
    pair = fenchel.FenchelPair(act)
    x, y = dataset.features, dataset.labels
    n = dataset.n
    w = np.zeros(dataset.d)
    best_w, best_err = w.copy(), math.inf
    trace = []
    for t in range(iters):
        scores = x @ w
        pred = np.clip(act(scores), 0.0, 1.0)
        err = squared_error(pred, y)
        trace.append({"iter": t, "err2": err,
                      "matching_loss": empirical_matching_loss(pair, scores, y)})
        if t > 0 and best_err - tol <= err <= best_err + tol:
            # stalled within tol of the running minimum
            if err < best_err:
                best_err, best_w = err, w.copy()
            return GlmPredictor(w, activation_tag, converged=True, trace=trace)
        if err < best_err:
            best_err, best_w = err, w.copy()
        grad_step = x.T @ (y - act(scores)) / n
        w = project_ball(w + grad_step, B)
        _check_finite(w)
    return GlmPredictor(best_w, activation_tag, converged=False, trace=trace)


# ---------------------------------------------------------------------------
# Isotron: unknown activation via Lipschitz isotonic fits
# ---------------------------------------------------------------------------


def lipschitz_isotonic_fit(t_sorted, y, max_iters=2000, tol=1e-9):
    """Least squares fit that is non-decreasing and 1-Lipschitz in t.

    Dykstra's alternating projections between the monotone cone and the
    cone of 1-Lipschitz-in-t sequences (u monotone and t - u monotone);
    both projections are plain isotonic regressions.
    """
    u = np.asarray(y, dtype=float).copy()
    t = np.asarray(t_sorted, dtype=float)
    p = np.zeros_like(u)
    q = np.zeros_like(u)
    for _ in range(max_iters):
        v = isotonic_regression(u + p).x
        p = u + p - v
        u_new = t - isotonic_regression(t - (v + q)).x
        q = v + q - u_new
        # stop only when the two projection sequences agree: a small step
        # alone can be a plateau while the iterate is still infeasible
        if np.max(np.abs(u_new - u)) < tol and np.max(np.abs(u_new - v)) < tol:
            return u_new
        u = u_new
    return u


@dataclass
class SimPredictor:
    """Weights plus a fitted monotone 1-Lipschitz activation (knot form)."""

    w: np.ndarray
    knots_t: np.ndarray
    knots_u: np.ndarray
    converged: bool = True
    trace: list = field(default_factory=list)

    def score(self, features):
        return np.asarray(features, dtype=float) @ self.w

    def activation_values(self, scores):
        return np.interp(scores, self.knots_t, self.knots_u)

    def predict(self, features):
        return np.clip(self.activation_values(self.score(features)), 0.0, 1.0)

    def serialize(self):
        buf = io.StringIO()
        buf.write(f"#simlearn-predictor v1 kind=sim converged={int(self.converged)}\n")
        buf.write("w %s\n" % " ".join("%.17g" % c for c in self.w))
        buf.write("knots_t %s\n" % " ".join("%.17g" % c for c in self.knots_t))
        buf.write("knots_u %s\n" % " ".join("%.17g" % c for c in self.knots_u))
        return buf.getvalue()

    @staticmethod
    def deserialize(text):
        lines = text.strip().split("\n")
        head = lines[0].split()
        if head[0] != "#simlearn-predictor" or head[2] != "kind=sim":
            raise ConfigError("not a sim serialization")
        kv = dict(p.split("=", 1) for p in head[2:])
        arrays = {}
        for line in lines[1:]:
            parts = line.split()
            arrays[parts[0]] = np.array([float(v) for v in parts[1:]])
        return SimPredictor(arrays["w"], arrays["knots_t"], arrays["knots_u"],
                            converged=bool(int(kv["converged"])))


def _dedupe_knots(t_sorted, u_sorted):
    """Collapse tied scores to a single knot (their common fitted value)."""
    uniq, first = np.unique(t_sorted, return_index=True)
    return uniq, u_sorted[first]


def train_isotron(dataset, B, iters=50):
    """Alternate Lipschitz isotonic activation fits with weight updates.

    Each round sorts scores (stable, ties keep input order), fits the
    activation by :func:`lipschitz_isotonic_fit`, then takes a projected
    GLMtron-style step against the fitted activation.  Returns the
    best-squared-error round.
    """
    x, y = dataset.features, dataset.labels
    n = dataset.n
    w = np.zeros(dataset.d)
    best = None
    trace = []
    for t in range(iters):
        scores = x @ w
        order = np.argsort(scores, kind="stable")
        u_fit = lipschitz_isotonic_fit(scores[order], y[order])
        knots_t, knots_u = _dedupe_knots(scores[order], u_fit)
        pred = np.clip(np.interp(scores, knots_t, knots_u), 0.0, 1.0)
        err = squared_error(pred, y)
        trace.append({"iter": t, "err2": err})
        if best is None or err < best[0]:
            best = (err, w.copy(), knots_t.copy(), knots_u.copy())
        w = project_ball(w + x.T @ (y - pred) / n, B)
        _check_finite(w)
    _, w_best, kt, ku = best
    return SimPredictor(w_best, kt, ku, converged=True, trace=trace)


# ---------------------------------------------------------------------------
# Matching-loss gradient descent (logistic regression and friends)
# ---------------------------------------------------------------------------


def empirical_matching_loss(pair, scores, labels):
    return float(np.mean(pair.g(scores) - labels * scores))


def train_matching_gd(dataset, pair, B, step=1.0, iters=300, tol=1e-10,
                      min_step=2.0 ** -40):
    """Projected gradient descent with backtracking on the matching loss.

    The loss trace is non-increasing: a step that fails to improve is halved
    until it does or the step floor trips a divergence error.  Returns the
    iterate whose loss is within ``tol`` of the best seen.
    """
    x, y = dataset.features, dataset.labels
    n = dataset.n
    w = np.zeros(dataset.d)
    loss = empirical_matching_loss(pair, x @ w, y)
    best_w, best_loss = w.copy(), loss
    trace = [{"iter": 0, "loss": loss, "step": step}]
    cur_step = step
    for t in range(1, iters + 1):
        grad = x.T @ (pair.g_prime(x @ w) - y) / n
        while True:
            w_new = project_ball(w - cur_step * grad, B)
            _check_finite(w_new)
            loss_new = empirical_matching_loss(pair, x @ w_new, y)
            if loss_new <= loss or np.allclose(w_new, w):
                break
            cur_step *= 0.5
            if cur_step < min_step:
                raise DivergenceError("backtracking drove the step to zero")
        w, loss = w_new, loss_new
        trace.append({"iter": t, "loss": loss, "step": cur_step})
        if loss < best_loss:
            best_loss, best_w = loss, w.copy()
        if abs(trace[-2]["loss"] - loss) <= tol and t > 1:
            break
    return GlmPredictor(best_w, pair.tag, converged=True, trace=trace)


def train_logistic(dataset, B, step=1.0, iters=300, tol=1e-10):
    """Projected gradient descent on the empirical logistic matching loss."""
    return train_matching_gd(dataset, fenchel.pair_from_tag("sigmoid"), B,
                             step=step, iters=iters, tol=tol)

"""Relative-attribute ranking of questioning intensity.

A linear scorer ``f(x) = w . x`` is trained so every question outranks
every statement by a unit margin while samples of the same class score
alike. With squared slacks the constrained problem is equivalent to the
smooth unconstrained objective

    J(w) = 1/2 |w|^2 + C * ( sum_ordered max(0, 1 - w.(x_a - x_b))^2
                             + sum_similar (w.(x_a - x_b))^2 )

which is minimised by gradient descent with a backtracking line search.
"""

import json
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_is_fitted

from ._validation import as_binary_labels, as_matrix, as_vector
from .exceptions import EmptyClassError, ModelFormatError, NonFiniteObjectiveError
from .features import FEATURE_NAMES, N_FEATURES, Standardizer

SCHEMA_VERSION = 1
ARMIJO_C = 1e-4
MIN_STEP = 1e-20


@dataclass(frozen=True)
class RankerConfig:
    C: float = 0.1
    max_iters: int = 10000
    grad_tol: float = 1e-8
    max_similar_pairs: int = 5000
    seed: int = 0

    def __post_init__(self):
        if not self.C >= 0:
            raise ValueError("C must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be > 0")
        if self.max_similar_pairs < 0:
            raise ValueError("max_similar_pairs must be >= 0")


@dataclass(frozen=True)
class PairConstraints:
    """Index pairs: ``ordered`` rows are (question, statement); ``similar``
    rows are two members of the same class."""

    ordered_pairs: np.ndarray
    similar_pairs: np.ndarray

    @property
    def n_ordered(self):
        return self.ordered_pairs.shape[0]

    @property
    def n_similar(self):
        return self.similar_pairs.shape[0]


def _pairs_array(pairs):
    return np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)


def build_constraints(labels, config=RankerConfig()):
    """Enumerate ordered (question > statement) and similar pairs.

    Similar pairs are all within-class pairs unless there are more than
    ``config.max_similar_pairs``, in which case a seeded uniform sample of
    exactly that many is kept (in enumeration order).
    """
    y = as_binary_labels(labels)
    A = np.flatnonzero(y == 1)
    B = np.flatnonzero(y == 0)
    if A.size == 0 or B.size == 0:
        raise EmptyClassError("both question and statement sets must be nonempty")
    ordered = np.stack(np.meshgrid(A, B, indexing="ij"), axis=-1).reshape(-1, 2)
    similar = _pairs_array(list(combinations(A, 2)) + list(combinations(B, 2)))
    cap = config.max_similar_pairs
    if similar.shape[0] > cap:
        rng = np.random.default_rng(config.seed)
        keep = np.sort(rng.choice(similar.shape[0], size=cap, replace=False))
        similar = similar[keep]
    return PairConstraints(ordered_pairs=ordered, similar_pairs=similar)


class _Objective:
    """J(w) and its gradient, with the similar-pair term folded into a
    Gram matrix."""

    def __init__(self, X, constraints, C):
        X = np.asarray(X, dtype=np.float64)
        op, sp = constraints.ordered_pairs, constraints.similar_pairs
        self.D = X[op[:, 0]] - X[op[:, 1]]
        Ds = X[sp[:, 0]] - X[sp[:, 1]]
        self.S = Ds.T @ Ds
        self.C = float(C)

    def value_and_grad(self, w):
        slack = np.maximum(0.0, 1.0 - self.D @ w)
        Sw = self.S @ w
        value = 0.5 * w @ w + self.C * (slack @ slack + w @ Sw)
        grad = w + self.C * (2.0 * Sw - 2.0 * (self.D.T @ slack))
        return float(value), grad

    def delta(self, w, dw):
        """J(w + dw) - J(w), computed from the step so that it stays
        accurate when the change is far below the resolution of J."""
        m, dm = self.D @ w, self.D @ dw
        s_old = np.maximum(0.0, 1.0 - m)
        s_new = np.maximum(0.0, 1.0 - m - dm)
        both = (s_old > 0) & (s_new > 0)
        ds = np.where(both, -dm, s_new - s_old)
        Sdw = self.S @ dw
        quad = w @ dw + 0.5 * dw @ dw
        sim = 2.0 * w @ Sdw + dw @ Sdw
        return float(quad + self.C * (ds @ (s_new + s_old) + sim))


def ranking_objective(w, X, constraints, C):
    """Evaluate J at ``w``."""
    return _Objective(X, constraints, C).value_and_grad(as_vector(w, "w"))[0]


@dataclass
class TrainResult:
    w: np.ndarray
    objective: float
    grad_norm: float
    n_iter: int
    converged: bool
    history: list = field(default_factory=list)


def train_ranker(X, constraints, config=RankerConfig()):
    """Minimise J from ``w = 0`` on already standardised rows ``X``.

    Each step starts from a Barzilai-Borwein length and is halved until the
    Armijo sufficient-decrease condition holds, so J never increases. The
    decrease is evaluated from the step itself rather than by subtracting
    two objective values.

    Raises
    ------
    NonFiniteObjectiveError
        If J or its gradient stops being finite.
    """
    X = as_matrix(X)
    obj = _Objective(X, constraints, config.C)
    w = np.zeros(X.shape[1])
    J, g = obj.value_and_grad(w)
    history = [J]
    prev = None
    n_iter = 0
    gnorm = float(np.linalg.norm(g))
    while gnorm > config.grad_tol and n_iter < config.max_iters:
        if not (np.isfinite(J) and np.all(np.isfinite(g))):
            raise NonFiniteObjectiveError(f"objective became non-finite: {J}")
        step = 1.0
        if prev is not None:
            s, yv = w - prev[0], g - prev[1]
            sy = s @ yv
            if sy > 0:
                step = (s @ s) / sy
        with np.errstate(over="ignore", invalid="ignore"):
            gg = g @ g
            if not np.isfinite(gg):
                raise NonFiniteObjectiveError("gradient norm overflowed")
            finite_trial = False
            while step >= MIN_STEP:
                dJ = obj.delta(w, -step * g)
                finite_trial |= bool(np.isfinite(dJ))
                if np.isfinite(dJ) and dJ <= -ARMIJO_C * step * gg:
                    break
                step *= 0.5
            else:
                if not finite_trial:
                    raise NonFiniteObjectiveError("line search met only non-finite objectives")
                break
        prev = (w, g)
        w = w - step * g
        J, g = obj.value_and_grad(w)
        gnorm = float(np.linalg.norm(g))
        history.append(J)
        n_iter += 1
    if not np.isfinite(J):
        raise NonFiniteObjectiveError(f"objective became non-finite: {J}")
    return TrainResult(
        w=w, objective=J, grad_norm=gnorm, n_iter=n_iter,
        converged=gnorm <= config.grad_tol, history=history,
    )


def brute_force_oracle(X, constraints, config, grid):
    """Exhaustive grid minimisation of J for 1-D or 2-D features.

    Parameters
    ----------
    grid : tuple (lo, hi, steps)
        Each axis is ``linspace(lo, hi, steps)``; ``steps >= 100``.

    Returns
    -------
    (w, J) at the best grid point.
    """
    X = as_matrix(X)
    dim = X.shape[1]
    if dim > 2:
        raise ValueError("grid oracle supports at most 2 feature dimensions")
    lo, hi, steps = grid
    if steps < 100:
        raise ValueError("grid oracle needs at least 100 steps per axis")
    axis = np.linspace(lo, hi, int(steps))
    W = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)

    total = 0.5 * np.sum(W**2, axis=1)
    for a, b in constraints.ordered_pairs:
        margin = W @ (X[a] - X[b])
        total += config.C * np.maximum(0.0, 1.0 - margin) ** 2
    for a, b in constraints.similar_pairs:
        total += config.C * (W @ (X[a] - X[b])) ** 2
    best = int(np.argmin(total))
    return W[best].copy(), float(total[best])


def pair_order_accuracy(scores, labels):
    """Fraction of (question, statement) pairs with question scoring higher."""
    y = as_binary_labels(labels)
    s = np.asarray(scores, dtype=np.float64)
    q, st = s[y == 1], s[y == 0]
    if q.size == 0 or st.size == 0:
        raise EmptyClassError("both classes are needed for pair-order accuracy")
    return float(np.mean(q[:, None] > st[None, :]))


class RelativeAttributeRanker(BaseEstimator):
    """Linear questioning-intensity ranker.

    ``fit`` standardises raw feature rows, builds the question/statement
    pair constraints and learns the weight vector. ``decision_function``
    returns raw scores; ``predict`` returns intensities min-max normalised
    against the training scores and clamped to [0, 1].

    Parameters
    ----------
    C : float, default=0.1
        Trade-off between the margin and the squared slacks.
    max_iters : int, default=10000
    grad_tol : float, default=1e-8
    max_similar_pairs : int, default=5000
    random_state : int, default=0
        Seeds similar-pair subsampling.
    """

    def __init__(self, C=0.1, max_iters=10000, grad_tol=1e-8,
                 max_similar_pairs=5000, random_state=0):
        self.C = C
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.max_similar_pairs = max_similar_pairs
        self.random_state = random_state

    @property
    def config(self):
        return RankerConfig(
            C=float(self.C), max_iters=int(self.max_iters),
            grad_tol=float(self.grad_tol),
            max_similar_pairs=int(self.max_similar_pairs),
            seed=int(self.random_state),
        )

    def fit(self, X, y):
        config = self.config
        X = as_matrix(X, min_samples=2)
        self.standardizer_ = Standardizer().fit(X)
        Z = self.standardizer_.transform(X)
        self.constraints_ = build_constraints(y, config)
        result = train_ranker(Z, self.constraints_, config)
        if not result.converged:
            warnings.warn(
                f"ranker stopped after {result.n_iter} iterations with "
                f"gradient norm {result.grad_norm:.3g}",
                ConvergenceWarning,
            )
        self.coef_ = result.w
        self.objective_ = result.objective
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        self.objective_history_ = result.history
        train_scores = Z @ self.coef_
        self.score_min_ = float(train_scores.min())
        self.score_max_ = float(train_scores.max())
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return self.standardizer_.transform(X) @ self.coef_

    def normalize(self, raw):
        check_is_fitted(self, "coef_")
        raw = np.asarray(raw, dtype=np.float64)
        span = self.score_max_ - self.score_min_
        if span == 0:
            return np.full_like(raw, 0.5)
        return np.clip((raw - self.score_min_) / span, 0.0, 1.0)

    def predict(self, X):
        return self.normalize(self.decision_function(X))

    def score(self, X, y):
        """Pair-order accuracy of the raw scores on ``(X, y)``."""
        return pair_order_accuracy(self.decision_function(X), y)

    # -- persistence -----------------------------------------------------

    def to_dict(self):
        check_is_fitted(self, "coef_")
        return {
            "schema_version": SCHEMA_VERSION,
            "w": [float(v) for v in self.coef_],
            "C": float(self.C),
            "score_min": self.score_min_,
            "score_max": self.score_max_,
            "standardizer": {
                "mean": [float(v) for v in self.standardizer_.mean_],
                "std": [float(v) for v in self.standardizer_.std_],
            },
            "feature_order": list(FEATURE_NAMES),
            "config": {
                "max_iters": int(self.max_iters),
                "grad_tol": float(self.grad_tol),
                "max_similar_pairs": int(self.max_similar_pairs),
                "seed": int(self.random_state),
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc):
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ModelFormatError(
                f"unsupported schema_version {doc.get('schema_version')!r}"
            )
        try:
            cfg = doc.get("config", {})
            model = cls(
                C=doc["C"],
                max_iters=cfg.get("max_iters", 10000),
                grad_tol=cfg.get("grad_tol", 1e-8),
                max_similar_pairs=cfg.get("max_similar_pairs", 5000),
                random_state=cfg.get("seed", 0),
            )
            w = np.asarray(doc["w"], dtype=np.float64)
            mean = doc["standardizer"]["mean"]
            std = doc["standardizer"]["std"]
            order = list(doc["feature_order"])
            score_min, score_max = float(doc["score_min"]), float(doc["score_max"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"malformed model document: {exc}") from exc
        if w.shape != (N_FEATURES,) or len(mean) != N_FEATURES or len(std) != N_FEATURES:
            raise ModelFormatError(f"model must have dimension {N_FEATURES}")
        if order != list(FEATURE_NAMES):
            raise ModelFormatError("feature_order does not match this build")
        if not np.all(np.isfinite(w)) or not score_min <= score_max:
            raise ModelFormatError("model weights or score range invalid")
        model.coef_ = w
        model.standardizer_ = Standardizer.from_params(mean, std)
        model.score_min_, model.score_max_ = score_min, score_max
        model.n_features_in_ = N_FEATURES
        return model

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"model file is not JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ModelFormatError("model document must be a JSON object")
        return cls.from_dict(doc)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return RelativeAttributeRanker.from_json(fh.read())


def score(model, x):
    """Raw ranking score ``w . standardize(x)`` of one feature vector."""
    x = as_vector(x, "x", length=model.n_features_in_)
    return float(model.decision_function(x[None, :])[0])


def normalize_intensity(model, raw):
    """Min-max normalise a raw score to [0, 1] (0.5 if the range is empty)."""
    return float(model.normalize(raw))

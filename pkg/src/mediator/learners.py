"""Built-in regression learners and a cross-validated stacking ensemble.

The library is deliberately small: mean, linear/ridge (optionally on a
polynomial basis), logistic, k-nearest neighbours, and gradient-boosted
trees of depth one or two.  ``fit`` stacks a list of candidates either by
picking the candidate with the lowest cross-validated risk (``discrete``) or
by a simplex-constrained least-squares blend of their cross-validated
predictions (``convex``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ArityMismatch, DegenerateTarget, ValidationError
from .features import Standardizer, binary_columns, expand, monomials

EPS = 1e-6
EXACT_MAX = 6  # stacks up to this size get exact simplex weights

LEARNER_NAMES = ("mean", "linear", "ridge", "logistic", "knn", "boost")


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    target_type: str = "continuous"
    lam: float = 1.0
    degree: int = 1
    k: int = 10
    trees: int = 200
    depth: int = 2
    rate: float = 0.1

    def __post_init__(self):
        if self.kind not in LEARNER_NAMES:
            raise ValidationError(f"unknown learner {self.kind!r}; expected one of {LEARNER_NAMES}")
        if self.target_type not in ("continuous", "binary"):
            raise ValidationError(f"unknown target type {self.target_type!r}")
        if self.kind == "logistic" and self.target_type != "binary":
            raise ValidationError("logistic learner requires a binary target")
        if self.kind == "ridge" and not self.lam > 0:
            raise ValidationError("ridge penalty must be positive")
        if self.degree < 1 or self.k < 1 or self.trees < 1 or self.rate <= 0:
            raise ValidationError(f"non-positive hyperparameter in {self}")
        if self.depth not in (1, 2):
            raise ValidationError("boosted trees support depth 1 or 2")

    @property
    def name(self) -> str:
        if self.kind == "ridge":
            tag = f"ridge({self.lam:g})"
        elif self.kind == "knn":
            tag = f"knn({self.k})"
        elif self.kind == "boost":
            tag = f"boost({self.trees},{self.depth},{self.rate:g})"
        else:
            tag = self.kind
        return tag if self.degree == 1 else f"{tag}^{self.degree}"

    @classmethod
    def parse(cls, item, target_type: str = "continuous") -> "LearnerSpec":
        """Build from a config entry: a name or a mapping with ``name`` plus hyperparameters."""
        if isinstance(item, LearnerSpec):
            return item
        if isinstance(item, str):
            item = {"name": item}
        item = dict(item)
        kind = item.pop("name", item.pop("kind", None))
        if kind == "logistic":
            target_type = "binary"
        if "lambda" in item:
            item["lam"] = item.pop("lambda")
        item.setdefault("target_type", target_type)
        try:
            return cls(kind, **item)
        except TypeError as e:
            raise ValidationError(f"bad learner entry: {e}") from None

    def to_dict(self) -> dict:
        d = {"name": self.kind}
        defaults = LearnerSpec("mean")
        for k in ("lam", "degree", "k", "trees", "depth", "rate"):
            v = getattr(self, k)
            if v != getattr(defaults, k):
                d["lambda" if k == "lam" else k] = v
        return d


@dataclass(frozen=True)
class EnsembleSpec:
    candidates: tuple[LearnerSpec, ...]
    cv_folds: int = 5
    stacking: str = "convex"

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(LearnerSpec.parse(c) for c in self.candidates))
        if not self.candidates:
            raise ValidationError("ensemble needs at least one candidate")
        if self.cv_folds < 2:
            raise ValidationError("cv_folds must be >= 2")
        if self.stacking not in ("discrete", "convex"):
            raise ValidationError(f"unknown stacking {self.stacking!r}")

    @classmethod
    def from_names(cls, names: Sequence, cv_folds: int = 5, stacking: str = "convex") -> "EnsembleSpec":
        return cls(tuple(LearnerSpec.parse(n) for n in names), cv_folds, stacking)


# -- base learners -----------------------------------------------------------

class _Mean:
    def fit(self, x, y):
        self.value = float(np.mean(y))
        return self

    def predict(self, x):
        return np.full(len(x), self.value)


class _Linear:
    """Least squares (lam=0) or ridge on standardized, optionally polynomial features.

    Ridge minimizes ``mean((y - f b)^2) + lam * |b|^2``; the intercept is
    never penalized.
    """

    def __init__(self, lam=0.0, degree=1):
        self.lam = lam
        self.degree = degree

    def _features(self, x):
        return expand(self.scaler(x), self.terms)

    def fit(self, x, y):
        self.scaler = Standardizer(x)
        self.terms = monomials(x.shape[1], self.degree, binary_columns(x))
        f = self._features(x)
        self.f_mean = f.mean(axis=0)
        sd = f.std(axis=0)
        self.f_scale = np.where(sd > 1e-12, sd, 1.0)
        fc = (f - self.f_mean) / self.f_scale
        self.y_mean = float(np.mean(y))
        yc = y - self.y_mean
        n = len(y)
        if self.lam > 0:
            g = fc.T @ fc / n + self.lam * np.eye(fc.shape[1])
            self.coef = np.linalg.solve(g, fc.T @ yc / n)
        else:
            self.coef = np.linalg.lstsq(fc, yc, rcond=None)[0]
        return self

    def predict(self, x):
        fc = (self._features(x) - self.f_mean) / self.f_scale
        return self.y_mean + fc @ self.coef


class _Logistic:
    """Logistic regression by Newton iterations with a small ridge term.

    Accepts targets in [0, 1] (quasi-binomial for fractional pseudo-outcomes).
    """

    def __init__(self, degree=1, lam=1e-4, max_iter=50):
        self.degree = degree
        self.lam = lam
        self.max_iter = max_iter

    def _design(self, x):
        f = expand(self.scaler(x), self.terms)
        return np.column_stack([np.ones(len(f)), f])

    def fit(self, x, y):
        self.scaler = Standardizer(x)
        self.terms = monomials(x.shape[1], self.degree, binary_columns(x))
        d = self._design(x)
        n, p = d.shape
        beta = np.zeros(p)
        ybar = np.clip(np.mean(y), EPS, 1 - EPS)
        beta[0] = np.log(ybar / (1 - ybar))
        pen = self.lam * np.eye(p)
        pen[0, 0] = 0.0
        for _ in range(self.max_iter):
            eta = np.clip(d @ beta, -30, 30)
            mu = 1 / (1 + np.exp(-eta))
            grad = d.T @ (mu - y) / n + pen @ beta
            hess = (d * (mu * (1 - mu))[:, None]).T @ d / n + pen + 1e-10 * np.eye(p)
            step = np.linalg.solve(hess, grad)
            beta -= step
            if np.max(np.abs(step)) < 1e-8:
                break
        self.beta = beta
        return self

    def predict(self, x):
        eta = np.clip(self._design(x) @ self.beta, -30, 30)
        return 1 / (1 + np.exp(-eta))


class _KNN:
    def __init__(self, k=10):
        self.k = k

    def fit(self, x, y):
        self.scaler = Standardizer(x)
        self.tree = cKDTree(self.scaler(x))
        self.y = np.asarray(y, dtype=float)
        return self

    def predict(self, x):
        k = min(self.k, len(self.y))
        _, idx = self.tree.query(self.scaler(x), k=k)
        idx = np.asarray(idx).reshape(len(x), k)
        return self.y[idx].mean(axis=1)


class _Boost:
    """Least-squares gradient boosting with trees of depth one (stumps) or two."""

    def __init__(self, trees=200, depth=2, rate=0.1, min_leaf=5):
        self.trees = trees
        self.depth = depth
        self.rate = rate
        self.min_leaf = min_leaf

    def fit(self, x, y):
        x = np.asarray(x, dtype=float)
        n, p = x.shape
        self.init = float(np.mean(y))
        self.model = []
        if p == 0:
            return self
        order = np.argsort(x, axis=0, kind="stable")
        xs = np.take_along_axis(x, order, axis=0)
        resid = y - self.init
        for _ in range(self.trees):
            tree = self._grow(x, xs, order, resid, np.ones(n, dtype=bool), self.depth)
            if tree is None:
                break
            pred = self._apply(tree, x)
            resid = resid - self.rate * pred
            self.model.append(tree)
        return self

    def _best_split(self, xs, order, resid, mask):
        """Best (feature, threshold, gain) over rows in ``mask``; columns of ``xs`` are presorted."""
        n, p = xs.shape
        msorted = mask[order]
        cnt = msorted.sum(axis=0)[0] if p else 0
        if cnt < 2 * self.min_leaf:
            return None
        best = None
        r = np.where(msorted, resid[order], 0.0)
        csum = np.cumsum(r, axis=0)
        ccnt = np.cumsum(msorted, axis=0)
        total = csum[-1]
        # the value at each sorted position, carried forward only over masked rows
        for j in range(p):
            pos = np.flatnonzero(msorted[:, j])
            vals = xs[pos, j]
            s = csum[pos, j]
            c = ccnt[pos, j].astype(float)
            valid = (vals[:-1] < vals[1:]) & (c[:-1] >= self.min_leaf) & (cnt - c[:-1] >= self.min_leaf)
            if not valid.any():
                continue
            sl, cl = s[:-1], c[:-1]
            gain = sl ** 2 / cl + (total[j] - sl) ** 2 / (cnt - cl)
            gain = np.where(valid, gain, -np.inf)
            i = int(np.argmax(gain))
            if best is None or gain[i] > best[2]:
                best = (j, 0.5 * (vals[i] + vals[i + 1]), gain[i])
        return best

    def _grow(self, x, xs, order, resid, mask, depth):
        split = self._best_split(xs, order, resid, mask)
        if split is None:
            return None
        j, thr, _ = split
        left = mask & (x[:, j] <= thr)
        right = mask & ~left
        node = {"j": j, "t": thr}
        for side, m in (("l", left), ("r", right)):
            child = self._grow(x, xs, order, resid, m, depth - 1) if depth > 1 else None
            node[side] = child if child is not None else float(resid[m].mean())
        return node

    def _apply(self, node, x):
        if not isinstance(node, dict):
            return np.full(len(x), node)
        go_left = x[:, node["j"]] <= node["t"]
        out = np.empty(len(x))
        out[go_left] = self._apply(node["l"], x[go_left])
        out[~go_left] = self._apply(node["r"], x[~go_left])
        return out

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(len(x), self.init)
        for tree in self.model:
            out += self.rate * self._apply(tree, x)
        return out


def _make(spec: LearnerSpec):
    if spec.kind == "mean":
        return _Mean()
    if spec.kind == "linear":
        return _Linear(0.0, spec.degree)
    if spec.kind == "ridge":
        return _Linear(spec.lam, spec.degree)
    if spec.kind == "logistic":
        return _Logistic(spec.degree)
    if spec.kind == "knn":
        return _KNN(spec.k)
    return _Boost(spec.trees, spec.depth, spec.rate)


# -- ensemble ----------------------------------------------------------------

@dataclass
class FittedRegressor:
    names: list[str]
    models: list
    weights: np.ndarray
    cv_risk: dict
    n_features: int
    binary: bool
    notes: list[str] = field(default_factory=list)

    @property
    def selected(self) -> dict:
        return {nm: float(w) for nm, w in zip(self.names, self.weights) if w > 0}

    def predict(self, x) -> np.ndarray:
        return predict(self, x)


def _risk(pred, y, binary):
    if binary:
        p = np.clip(pred, EPS, 1 - EPS)
        return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
    return float(np.mean((pred - y) ** 2))


def simplex_weights(preds: np.ndarray, y: np.ndarray, iters: int = 500, step: float = 0.1,
                    tol: float = 1e-8) -> np.ndarray:
    """Minimize ``||preds @ w - y||^2`` over the probability simplex.

    Up to ``EXACT_MAX`` candidates the problem is solved exactly by
    enumerating supports; larger stacks use projected gradient descent with
    residual columns rescaled to unit mean square so the fixed step is
    scale-free.
    """
    k = preds.shape[1]
    w = np.full(k, 1.0 / k)
    if k == 1:
        return w
    r = preds - y[:, None]
    scale = np.sqrt(np.mean(r ** 2))
    if scale == 0:
        return w
    r = r / scale
    g_mat = r.T @ r / len(y)
    if k <= EXACT_MAX:
        return _simplex_qp_exact(g_mat)
    lip = 2 * np.linalg.eigvalsh(g_mat)[-1]
    eta = step if lip * step < 2 else 1.0 / lip
    for _ in range(iters):
        new = project_simplex(w - eta * 2 * g_mat @ w)
        if np.max(np.abs(new - w)) < tol:
            w = new
            break
        w = new
    return w



def _simplex_qp_exact(g: np.ndarray) -> np.ndarray:
    """``argmin w' G w`` over the simplex by checking the KKT point of every support."""
    k = len(g)
    best, best_val = None, np.inf
    for mask in range(1, 2 ** k):
        s = [j for j in range(k) if mask >> j & 1]
        gs = g[np.ix_(s, s)]
        # stationary point of w'Gw subject to sum(w) = 1 on the support
        try:
            u = np.linalg.solve(gs + 1e-12 * np.eye(len(s)), np.ones(len(s)))
        except np.linalg.LinAlgError:
            continue
        if u.sum() <= 0:
            continue
        ws = u / u.sum()
        if ws.min() < -1e-12:
            continue
        w = np.zeros(k)
        w[s] = np.maximum(ws, 0)
        w /= w.sum()
        val = float(w @ g @ w)
        if val < best_val - 1e-15:
            best, best_val = w, val
    return best if best is not None else np.full(k, 1.0 / k)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1
    rho = np.nonzero(u - css / np.arange(1, len(v) + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0)


def fit(spec: EnsembleSpec, x, y, seed: int = 0) -> FittedRegressor:
    """Fit the stacked ensemble; see module docstring for the stacking rules."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float)
    n = len(y)
    if len(x) != n:
        raise ArityMismatch(f"x has {len(x)} rows but y has {n}")
    binary = bool(np.all(np.isin(y, (0.0, 1.0))))
    notes = []
    if n == 0 or np.ptp(y) == 0:
        warnings.warn("constant target; falling back to the mean learner", DegenerateTarget, stacklevel=2)
        return FittedRegressor(["mean"], [_Mean().fit(x, y)], np.ones(1), {}, x.shape[1], binary,
                               ["degenerate target"])
    in_unit = bool(np.all((y >= 0) & (y <= 1)))
    cands = []
    for c in spec.candidates:
        if c.kind == "logistic" and not in_unit:
            notes.append(f"{c.name} dropped: target outside [0, 1]")
            continue
        cands.append(c)
    if not cands:
        cands = [LearnerSpec("mean")]
    if n < spec.cv_folds:
        raise ArityMismatch(f"need at least {spec.cv_folds} rows, got {n}")

    names = [c.name for c in cands]
    risks = {}
    if len(cands) == 1:
        weights = np.ones(1)
    else:
        rng = np.random.default_rng(seed)
        folds = rng.permutation(n) % spec.cv_folds
        cv_pred = np.empty((n, len(cands)))
        for v in range(spec.cv_folds):
            tr, te = folds != v, folds == v
            for j, c in enumerate(cands):
                cv_pred[te, j] = _make(c).fit(x[tr], y[tr]).predict(x[te])
        if binary:
            cv_pred = np.clip(cv_pred, EPS, 1 - EPS)
        for j, nm in enumerate(names):
            risks[nm] = _risk(cv_pred[:, j], y, binary)
        if spec.stacking == "discrete":
            weights = np.zeros(len(cands))
            weights[int(np.argmin([risks[nm] for nm in names]))] = 1.0
        else:
            weights = simplex_weights(cv_pred, y)
            risks["ensemble"] = _risk(cv_pred @ weights, y, binary)
    models = [(_make(c).fit(x, y) if w > 0 else None) for c, w in zip(cands, weights)]
    return FittedRegressor(names, models, weights, risks, x.shape[1], binary, notes)


def predict(model: FittedRegressor, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != model.n_features:
        raise ArityMismatch(f"expected {model.n_features} features, got {x.shape[1]}")
    out = np.zeros(len(x))
    for m, w in zip(model.models, model.weights):
        if w > 0:
            out += w * m.predict(x)
    if model.binary:
        out = np.clip(out, EPS, 1 - EPS)
    return out

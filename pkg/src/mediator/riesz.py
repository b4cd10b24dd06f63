"""Riesz representers of the nested-regression functionals.

For a step with conditioning features ``x``, a shift ``S`` and an outer
weight ``w(x)``, the representer ``alpha`` minimizes

    L(alpha) = mean( alpha(x)^2 - 2 * w(x) * alpha(S(x)) ).

The minimizer is the weight that turns ``h -> E[w(X) h(S(X))]`` into
``E[alpha(X) h(X)]``, i.e. a (conditional) density ratio, without ever
estimating a density.  Two function classes are provided: a linear basis
(solved in closed form) and a one-hidden-layer network trained by
mini-batch Adam.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dataset import AugmentedDataset
from .errors import DivergedLoss, NonFiniteLoss, SingularGram, ValidationError
from .estimands import RegressionProgram
from .features import Standardizer, binary_columns, expand, monomials
from .policies import IDENTITY, ShiftMap

__all__ = [
    "ShiftMap",
    "RieszFunctionClass",
    "RieszFit",
    "riesz_loss",
    "fit_riesz_linear",
    "fit_riesz_ff",
    "fit_riesz",
    "recursive_riesz",
]

MAX_LEVELS = 12


@dataclass(frozen=True)
class RieszFunctionClass:
    """Hypothesis class for representers.

    ``linear_basis``: treatment-level indicators times a polynomial of the
    other step variables (degree ``degree``), ridge penalty ``lam``.
    ``feedforward``: one hidden layer per entry in ``hidden``, softplus
    activation, trained for ``epochs`` passes.
    """

    kind: str = "linear_basis"
    degree: int = 2
    lam: float = 1e-3
    hidden: tuple[int, ...] = (32,)
    epochs: int = 20
    lr: float = 1e-2
    batch: int = 64
    clip: float = 50.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in np.atleast_1d(self.hidden)))
        if self.kind not in ("linear_basis", "feedforward"):
            raise ValidationError(f"unknown Riesz class {self.kind!r}")
        if self.lam < 0:
            raise ValidationError("ridge penalty must be >= 0")
        if self.epochs < 1 or self.degree < 0 or any(h < 1 for h in self.hidden):
            raise ValidationError("epochs, widths must be >= 1 and degree >= 0")
        if self.lr <= 0 or self.batch < 1 or self.clip <= 0:
            raise ValidationError("lr, batch and clip must be positive")

    @classmethod
    def from_dict(cls, d) -> "RieszFunctionClass":
        d = dict(d)
        if d.get("kind") in ("linear", "linear_basis"):
            d["kind"] = "linear_basis"
        elif d.get("kind") in ("ff", "nn", "feedforward"):
            d["kind"] = "feedforward"
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        try:
            return cls(**d)
        except TypeError as e:
            raise ValidationError(f"bad riesz settings: {e}") from None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "degree": self.degree, "lambda": self.lam, "hidden": list(self.hidden),
            "epochs": self.epochs, "lr": self.lr, "batch": self.batch, "clip": self.clip,
        }


@dataclass
class RieszFit:
    evaluator: Callable[[np.ndarray], np.ndarray]
    loss: float
    trace: list[float]
    clip: float
    coef: np.ndarray | None = None
    gram: np.ndarray | None = None
    rhs: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.clip(self.evaluator(x), -self.clip, self.clip)


def _loss(alpha_obs, alpha_shift, weight) -> float:
    terms = alpha_obs ** 2 - 2 * weight * alpha_shift
    if not np.all(np.isfinite(terms)):
        raise NonFiniteLoss("non-finite term in Riesz loss")
    return float(np.mean(terms))


def _shifted(data: AugmentedDataset, groups, shift: ShiftMap, origin, rows) -> list[np.ndarray]:
    """Shifted designs, one per permuted Z copy when the shift swaps Z."""
    copies = data.copies if shift.swap_z else 1
    return [data.design(groups, shift, origin, rows, copy=c) for c in range(copies)]


def riesz_loss(alpha, data: AugmentedDataset, outer_weight=None, shift: ShiftMap = IDENTITY,
               groups: Sequence[str] = ("A", "Z", "M", "W"), origin=None, rows=None) -> float:
    """Empirical Riesz loss of ``alpha`` (a callable on design matrices).

    ``outer_weight`` may be a callable on the same design, an array over
    ``rows``, or None for the constant weight 1.
    """
    x = data.design(groups, IDENTITY, origin, rows)
    xs = _shifted(data, groups, shift, origin, rows)
    if outer_weight is None:
        wt = np.ones(len(x))
    elif callable(outer_weight):
        wt = np.asarray(outer_weight(x), dtype=float)
    else:
        wt = np.asarray(outer_weight, dtype=float)
    a_shift = np.mean([np.asarray(alpha(m), float) for m in xs], axis=0)
    return _loss(np.asarray(alpha(x), float), a_shift, wt)


def _as_list(x_shift) -> list[np.ndarray]:
    return list(x_shift) if isinstance(x_shift, (list, tuple)) else [x_shift]


class _Basis:
    """Treatment-level indicators times a polynomial in the remaining columns."""

    def __init__(self, x_obs, x_shift, degree, treat_col=0):
        self.treat_col = treat_col
        self.levels = None
        if treat_col is not None and x_obs.shape[1]:
            levels = np.unique(np.concatenate([x_obs[:, treat_col]] + [x[:, treat_col] for x in x_shift]))
            if levels.size <= MAX_LEVELS:
                self.levels = levels
        rest = self._rest(x_obs)
        self.scaler = Standardizer(rest)
        self.terms = monomials(rest.shape[1], degree, binary_columns(rest))

    def _rest(self, x):
        if self.levels is None:
            return x
        return np.delete(x, self.treat_col, axis=1)

    def __call__(self, x):
        poly = expand(self.scaler(self._rest(x)), self.terms)
        base = np.column_stack([np.ones(len(x)), poly])
        if self.levels is None:
            return base
        a = x[:, self.treat_col]
        blocks = [base * (a == lv)[:, None] for lv in self.levels]
        return np.hstack(blocks)


def fit_riesz_linear(x_obs, x_shift, weight, cls: RieszFunctionClass = RieszFunctionClass(),
                     treat_col: int | None = 0) -> RieszFit:
    """Closed-form representer over a linear basis: ``c = (G + lam I)^-1 b``.

    ``x_shift`` may be a list of shifted designs; their basis values are averaged.
    """
    weight = np.broadcast_to(np.asarray(weight, dtype=float), (len(x_obs),))
    x_shift = _as_list(x_shift)
    basis = _Basis(x_obs, x_shift, cls.degree, treat_col)
    phi = basis(x_obs)
    phi_s = np.mean([basis(x) for x in x_shift], axis=0)
    n = len(phi)
    gram = phi.T @ phi / n
    rhs = phi_s.T @ weight / n
    mat = gram + cls.lam * np.eye(len(gram))
    if not np.all(np.isfinite(mat)) or np.linalg.cond(mat) > 1e12:
        raise SingularGram(f"Gram matrix is numerically singular ({mat.shape[0]} basis functions)")
    coef = np.linalg.solve(mat, rhs)

    def evaluator(x, _basis=basis, _coef=coef):
        return _basis(x) @ _coef

    loss = _loss(phi @ coef, phi_s @ coef, weight)
    return RieszFit(evaluator, loss, [loss], cls.clip, coef=coef, gram=gram, rhs=rhs)


class _Net:
    def __init__(self, d_in, hidden, rng):
        self.params = []
        prev = d_in
        for h in hidden:
            self.params.append(rng.normal(0, 1 / np.sqrt(max(prev, 1)), (prev, h)))
            self.params.append(np.zeros(h))
            prev = h
        # zero output layer: the network starts at alpha == 0
        self.params.append(np.zeros((prev, 1)))
        self.params.append(np.zeros(1))

    def forward(self, x, params=None):
        params = self.params if params is None else params
        acts = [x]
        pre = []
        h = x
        for i in range(0, len(params) - 2, 2):
            z = h @ params[i] + params[i + 1]
            pre.append(z)
            h = np.logaddexp(0, z)
            acts.append(h)
        out = (h @ params[-2] + params[-1])[:, 0]
        return out, acts, pre

    def backward(self, grad_out, acts, pre):
        grads = [None] * len(self.params)
        g = grad_out[:, None]
        grads[-2] = acts[-1].T @ g
        grads[-1] = g.sum(axis=0)
        g = g @ self.params[-2].T
        for li in range(len(pre) - 1, -1, -1):
            g = g / (1 + np.exp(-pre[li]))  # softplus'
            grads[2 * li] = acts[li].T @ g
            grads[2 * li + 1] = g.sum(axis=0)
            g = g @ self.params[2 * li].T
        return grads


def _ff_inputs(x_obs, x_shift, treat_col):
    """Standardized columns plus treatment-level indicators when the treatment is discrete."""
    scaler = Standardizer(x_obs)
    levels = None
    if treat_col is not None and x_obs.shape[1]:
        lv = np.unique(np.concatenate([x_obs[:, treat_col]] + [x[:, treat_col] for x in x_shift]))
        if lv.size <= MAX_LEVELS:
            levels = lv

    def transform(x):
        z = scaler(x)
        if levels is None:
            return z
        ind = (x[:, treat_col][:, None] == levels[None, :]).astype(float)
        return np.hstack([z, ind])

    return transform


def fit_riesz_ff(x_obs, x_shift, weight, cls: RieszFunctionClass = RieszFunctionClass(kind="feedforward"),
                 seed: int = 0, treat_col: int | None = 0) -> RieszFit:
    """Representer as a small softplus network trained with mini-batch Adam.

    Returns the parameters with the lowest epoch-end full-data loss.
    """
    weight = np.broadcast_to(np.asarray(weight, dtype=float), (len(x_obs),))
    x_shift = _as_list(x_shift)
    transform = _ff_inputs(x_obs, x_shift, treat_col)
    f_obs = transform(x_obs)
    f_shifts = [transform(x) for x in x_shift]
    c = len(f_shifts)
    rng = np.random.default_rng(seed)
    net = _Net(f_obs.shape[1], cls.hidden, rng)
    n = len(f_obs)
    batch = min(cls.batch, n)
    m = [np.zeros_like(p) for p in net.params]
    v = [np.zeros_like(p) for p in net.params]
    b1, b2, t = 0.9, 0.999, 0
    best_loss, best_params = np.inf, [p.copy() for p in net.params]
    trace = []
    for _ in range(cls.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            a_o, acts_o, pre_o = net.forward(f_obs[idx])
            k = len(idx)
            grads = net.backward(2 * a_o / k, acts_o, pre_o)
            for f_shift in f_shifts:
                _, acts_s, pre_s = net.forward(f_shift[idx])
                g_s = net.backward(-2 * weight[idx] / (k * c), acts_s, pre_s)
                grads = [a + b for a, b in zip(grads, g_s)]
            t += 1
            for i, p in enumerate(net.params):
                g = grads[i]
                m[i] = b1 * m[i] + (1 - b1) * g
                v[i] = b2 * v[i] + (1 - b2) * g * g
                mhat = m[i] / (1 - b1 ** t)
                vhat = v[i] / (1 - b2 ** t)
                p -= cls.lr * mhat / (np.sqrt(vhat) + 1e-8)
        loss = _loss(net.forward(f_obs)[0], np.mean([net.forward(f)[0] for f in f_shifts], axis=0), weight)
        if loss > 1e6:
            raise DivergedLoss(f"Riesz loss diverged ({loss:.3g})")
        trace.append(loss)
        if loss < best_loss:
            best_loss, best_params = loss, [p.copy() for p in net.params]

    def evaluator(x, _net=net, _params=best_params, _tf=transform):
        return _net.forward(_tf(x), _params)[0]

    return RieszFit(evaluator, float(best_loss), trace, cls.clip)


def fit_riesz(x_obs, x_shift, weight, cls: RieszFunctionClass, seed: int = 0,
              treat_col: int | None = 0) -> RieszFit:
    if cls.kind == "linear_basis":
        return fit_riesz_linear(x_obs, x_shift, weight, cls, treat_col)
    return fit_riesz_ff(x_obs, x_shift, weight, cls, seed, treat_col)


def recursive_riesz(program: RegressionProgram, data: AugmentedDataset, cls: RieszFunctionClass,
                    seed: int = 0, rows=None, origin=None, outer_weight=None) -> list[RieszFit]:
    """Representers for every step of ``program``, outermost first.

    The outermost one uses ``outer_weight`` (default 1) and the terminal
    shift; each inner one is weighted by the clipped representer of the step
    above it and uses the shift that step applies to form its pseudo-outcome.
    """
    rows = np.arange(data.n) if rows is None else np.asarray(rows)
    steps = program.steps
    shifts = program.shifts()  # shifts[k] is applied to step k's function (0-based)
    weight = np.ones(len(rows)) if outer_weight is None else np.asarray(outer_weight, float)
    fits: list[RieszFit] = []
    for k in range(len(steps) - 1, -1, -1):
        groups = steps[k].groups
        x = data.design(groups, IDENTITY, origin, rows)
        xs = _shifted(data, groups, shifts[k], origin, rows)
        treat_col = 0 if "A" in groups else None
        try:
            fit = fit_riesz(x, xs, weight, cls, seed + k, treat_col)
        except (SingularGram, NonFiniteLoss, DivergedLoss) as e:
            raise type(e)(f"step {k + 1}: {e}") from e
        fits.append(fit)
        weight = fit(x)
    return fits

"""Tabular mediation data: loading, validation, Z-permutation and folds."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    InvalidFoldCount,
    MissingColumn,
    MissingValue,
    NonNumericCell,
    PositivityWarning,
    RoleConflict,
    StratumTooSmall,
)
from .policies import IDENTITY, ShiftMap

_NA_TOKENS = {"", "na", "nan", "null", "none", "."}

# Role groups, in the column order used by every design matrix.
ROLE_ORDER = ("A", "Z", "M", "W")


@dataclass(frozen=True)
class VariableRoles:
    covariates: tuple[str, ...]
    treatment: str
    moc: tuple[str, ...]
    mediators: tuple[str, ...]
    outcome: str
    id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "moc", tuple(self.moc))
        object.__setattr__(self, "mediators", tuple(self.mediators))
        if not self.mediators:
            raise RoleConflict("at least one mediator is required")
        groups = {
            "covariates": self.covariates,
            "treatment": (self.treatment,),
            "moc": self.moc,
            "mediators": self.mediators,
            "outcome": (self.outcome,),
        }
        seen: dict[str, str] = {}
        for role, names in groups.items():
            for name in names:
                if name in seen:
                    raise RoleConflict(f"column {name!r} assigned to both {seen[name]} and {role}")
                seen[name] = role
        if self.id is not None and self.id in seen:
            raise RoleConflict(f"id column {self.id!r} also has role {seen[self.id]}")

    @property
    def has_moc(self) -> bool:
        return bool(self.moc)

    def columns(self) -> list[str]:
        cols = [*self.covariates, self.treatment, *self.moc, *self.mediators, self.outcome]
        if self.id is not None:
            cols.append(self.id)
        return cols

    def without_moc(self) -> "VariableRoles":
        return replace(self, moc=())

    def to_dict(self) -> dict:
        return {
            "covar": list(self.covariates),
            "trt": self.treatment,
            "moc": list(self.moc),
            "mediators": list(self.mediators),
            "outcome": self.outcome,
            **({"id": self.id} if self.id is not None else {}),
        }


@dataclass(frozen=True, eq=False)
class MediationDataset:
    """Validated numeric table with variable roles; immutable after construction."""

    columns: Mapping[str, np.ndarray]
    roles: VariableRoles
    n: int

    @classmethod
    def from_columns(cls, columns: Mapping[str, Sequence[float]], roles: VariableRoles):
        cols = {}
        n = None
        for name in roles.columns():
            if name not in columns:
                raise MissingColumn(name)
            arr = np.asarray(columns[name], dtype=float).reshape(-1)
            bad = np.flatnonzero(~np.isfinite(arr))
            if bad.size:
                raise MissingValue(int(bad[0]) + 1, name)
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise RoleConflict(f"column {name!r} has {arr.size} rows, expected {n}")
            arr = arr.copy()
            arr.setflags(write=False)
            cols[name] = arr
        return cls(columns=cols, roles=roles, n=int(n or 0))

    def _stack(self, names) -> np.ndarray:
        if not names:
            return np.empty((self.n, 0))
        return np.column_stack([self.columns[c] for c in names])

    @property
    def w(self) -> np.ndarray:
        return self._stack(self.roles.covariates)

    @property
    def a(self) -> np.ndarray:
        return self.columns[self.roles.treatment]

    @property
    def z(self) -> np.ndarray:
        return self._stack(self.roles.moc)

    @property
    def m(self) -> np.ndarray:
        return self._stack(self.roles.mediators)

    @property
    def y(self) -> np.ndarray:
        return self.columns[self.roles.outcome]

    def treatment_levels(self) -> np.ndarray:
        return np.unique(self.a)

    def is_binary_outcome(self) -> bool:
        return bool(np.all(np.isin(self.y, (0.0, 1.0))))

    def with_roles(self, roles: VariableRoles) -> "MediationDataset":
        return MediationDataset.from_columns(self.columns, roles)


def load_csv(path, roles: VariableRoles) -> MediationDataset:
    """Read a comma-separated file with a header row.

    Only the role columns are parsed; row order is preserved.  Missing
    tokens (empty, NA, NaN, null) raise :class:`MissingValue`.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumn(roles.treatment) from None
        index = {}
        for name in roles.columns():
            if name not in header:
                raise MissingColumn(name)
            index[name] = header.index(name)
        values: dict[str, list[float]] = {name: [] for name in index}
        for r, record in enumerate(reader, start=1):
            if not record:
                continue
            for name, j in index.items():
                cell = record[j].strip() if j < len(record) else ""
                if cell.lower() in _NA_TOKENS:
                    raise MissingValue(r, name)
                try:
                    x = float(cell)
                except ValueError:
                    raise NonNumericCell(r, name, cell) from None
                if math.isnan(x):
                    raise MissingValue(r, name)
                values[name].append(x)
    return MediationDataset.from_columns(values, roles)


@dataclass(frozen=True, eq=False)
class AugmentedDataset:
    """Base data plus permuted copies of Z and cross-fitting fold labels (1..V).

    ``zpi`` is the first permuted copy; ``zpi_copies`` holds every copy
    (``zpi`` included) and shifted evaluations average over them.
    """

    base: MediationDataset
    zpi: np.ndarray
    fold: np.ndarray
    seed: int
    strategy: str = "treatment"
    zpi_copies: tuple = ()

    def __post_init__(self):
        if not self.zpi_copies:
            object.__setattr__(self, "zpi_copies", (self.zpi,))

    @property
    def copies(self) -> int:
        return len(self.zpi_copies)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def roles(self) -> VariableRoles:
        return self.base.roles

    @property
    def folds(self) -> int:
        return int(self.fold.max())

    def fold_sizes(self) -> list[int]:
        return [int(np.sum(self.fold == v)) for v in range(1, self.folds + 1)]

    def split(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """Training and held-out row indices for fold ``v``; with one fold both are all rows."""
        if self.folds == 1:
            idx = np.arange(self.n)
            return idx, idx
        held = np.flatnonzero(self.fold == v)
        train = np.flatnonzero(self.fold != v)
        return train, held

    def treatment_after(self, shift: ShiftMap, origin: np.ndarray | None = None) -> np.ndarray:
        base = self.base
        a = base.a if origin is None else np.broadcast_to(np.asarray(origin, float), (self.n,))
        if shift.set_treatment is None:
            return base.a
        cov = dict(base.columns)
        cov[base.roles.treatment] = a
        return np.asarray(shift.set_treatment(a, cov), dtype=float)

    def design(
        self,
        groups: Sequence[str],
        shift: ShiftMap = IDENTITY,
        origin: np.ndarray | None = None,
        rows: np.ndarray | None = None,
        copy: int = 0,
    ) -> np.ndarray:
        """Feature matrix over role groups (subset of ``A, Z, M, W``) after a shift.

        ``origin`` is the treatment the policy is applied to; it defaults to
        the observed treatment.  ``copy`` selects the permuted Z copy used
        when the shift swaps Z.
        """
        blocks = []
        for g in ROLE_ORDER:
            if g not in groups:
                continue
            if g == "A":
                blocks.append(self.treatment_after(shift, origin)[:, None])
            elif g == "Z":
                blocks.append(self.zpi_copies[copy] if shift.swap_z else self.base.z)
            elif g == "M":
                blocks.append(self.base.m)
            elif g == "W":
                blocks.append(self.base.w)
        x = np.hstack(blocks) if blocks else np.empty((self.n, 0))
        return x if rows is None else x[rows]


def augment_zpi(data: MediationDataset, seed: int = 0, strategy: str = "treatment",
                copies: int = 1) -> AugmentedDataset:
    """Attach ``Z^pi``, within-stratum permutations of the Z columns.

    ``strategy="treatment"`` permutes uniformly within each treatment level.
    ``strategy="matched"`` pairs rows inside a treatment level greedily by
    nearest standardized covariates and swaps Z within pairs, which
    approximates permutation conditional on W.  ``copies`` independent
    permutations are drawn; the first is ``zpi``.
    """
    if strategy not in ("treatment", "matched"):
        raise ValueError(f"unknown permutation strategy {strategy!r}")
    if copies < 1:
        raise ValueError("copies must be >= 1")
    n = data.n
    fold = np.ones(n, dtype=int)
    z = data.z
    if z.shape[1] == 0:
        return AugmentedDataset(data, np.empty((n, 0)), fold, seed, strategy)
    rng = np.random.default_rng(seed)
    perms = []
    for c in range(copies):
        with warnings.catch_warnings():
            if c:
                warnings.simplefilter("ignore", StratumTooSmall)
            perms.append(_permute(data, rng, strategy))
    zs = []
    for order in perms:
        zpi = z[order]
        zpi.setflags(write=False)
        zs.append(zpi)
    return AugmentedDataset(data, zs[0], fold, seed, strategy, tuple(zs))


def _permute(data: MediationDataset, rng: np.random.Generator, strategy: str) -> np.ndarray:
    n = data.n
    order = np.empty(n, dtype=int)
    a = data.a
    w = data.w
    if w.shape[1]:
        sd = w.std(axis=0)
        wz = (w - w.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    else:
        wz = w
    for level in np.unique(a):
        idx = np.flatnonzero(a == level)
        if idx.size < 2:
            warnings.warn(f"treatment stratum {level:g} has {idx.size} row(s); Z left unpermuted",
                          StratumTooSmall, stacklevel=3)
            order[idx] = idx
            continue
        if strategy == "matched" and wz.shape[1]:
            order[idx] = idx[_greedy_pairs(wz[idx], rng)]
        else:
            order[idx] = rng.permutation(idx)
    return order


def _greedy_pairs(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Permutation of ``range(len(x))`` made of nearest-neighbour transpositions."""
    k = len(x)
    perm = np.arange(k)
    free = np.ones(k, dtype=bool)
    tree = cKDTree(x)
    for i in rng.permutation(k):
        if not free[i]:
            continue
        free[i] = False
        nn = min(8, k)
        while True:
            _, cand = tree.query(x[i], k=nn)
            cand = np.atleast_1d(cand)
            hits = [j for j in cand if j < k and free[j]]
            if hits or nn >= k:
                break
            nn = min(2 * nn, k)
        if not hits:
            # odd one out
            continue
        j = hits[0]
        free[j] = False
        perm[i], perm[j] = j, i
    return perm


def make_folds(data: AugmentedDataset, v: int, seed: int = 0) -> AugmentedDataset:
    """Assign fold labels 1..v, stratified on the outcome when it is binary."""
    n = data.n
    if not isinstance(v, (int, np.integer)) or v < 1 or v > n:
        raise InvalidFoldCount(f"fold count must be in [1, {n}], got {v!r}")
    fold = np.ones(n, dtype=int)
    if v > 1:
        rng = np.random.default_rng(seed)
        if data.base.is_binary_outcome():
            y = data.base.y
            order = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in (0.0, 1.0)])
        else:
            order = rng.permutation(n)
        fold[order] = np.arange(n) % v + 1
    fold.setflags(write=False)
    return replace(data, fold=fold)


@dataclass(frozen=True)
class PositivityReport:
    minimum: float
    maximum: float
    quantiles: dict
    fraction_clipped: float
    bound: float
    flagged: bool

    def to_dict(self) -> dict:
        return {
            "min": self.minimum,
            "max": self.maximum,
            "quantiles": self.quantiles,
            "fraction_clipped": self.fraction_clipped,
            "bound": self.bound,
            "flagged": self.flagged,
        }


def positivity_diagnostics(data: AugmentedDataset | None, estimated_weights, bound: float = 50.0,
                           threshold: float = 0.01) -> PositivityReport:
    """Summarize estimated representer weights and flag heavy clipping."""
    wts = np.asarray(estimated_weights, dtype=float).reshape(-1)
    if data is not None and wts.size % data.n:
        raise ValueError("weights must come in blocks of n rows")
    clipped = float(np.mean(np.abs(wts) >= bound * (1 - 1e-12))) if wts.size else 0.0
    qs = {f"q{int(q * 100):02d}": float(np.quantile(wts, q)) for q in (0.01, 0.25, 0.5, 0.75, 0.99)} if wts.size else {}
    flagged = clipped > threshold
    if flagged:
        warnings.warn(f"{clipped:.1%} of representer weights hit the clip bound {bound:g}; "
                      "positivity may be violated", PositivityWarning, stacklevel=2)
    return PositivityReport(
        minimum=float(wts.min()) if wts.size else math.nan,
        maximum=float(wts.max()) if wts.size else math.nan,
        quantiles=qs,
        fraction_clipped=clipped,
        bound=float(bound),
        flagged=flagged,
    )


def write_csv(data: MediationDataset, path) -> None:
    """Write the role columns with a header row; floats use their shortest round-trip form."""
    names = data.roles.columns()
    cols = [data.columns[c] for c in names]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(names)
        for i in range(data.n):
            out.writerow([_fmt(c[i]) for c in cols])


def _fmt(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)

"""Synthetic agent populations.

IPF reweights seed microdata so weighted category totals match aggregate
marginals; the fitted weights are realised as discrete agents by multinomial
sampling, remaining gaps are filled by hot-deck imputation within the joint
categorical cell, and behavioural attributes (theta, eta) are drawn from
prior distributions.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.base import BaseEstimator

from .exceptions import EmptyCategory, InconsistentMarginals, InvalidPrior, NoDonor, NonConvergence


@dataclass
class MarginalConstraint:
    dimension_name: str
    category_labels: list
    target_counts: np.ndarray

    def __post_init__(self):
        self.category_labels = [str(c) for c in self.category_labels]
        self.target_counts = np.asarray(self.target_counts, dtype=float)
        if len(set(self.category_labels)) != len(self.category_labels):
            raise ValueError(f"duplicate category labels in {self.dimension_name!r}")
        if self.target_counts.shape != (len(self.category_labels),):
            raise ValueError(f"{self.dimension_name!r}: one target count per category required")
        if np.any(self.target_counts < 0) or not np.any(self.target_counts > 0):
            raise ValueError(f"{self.dimension_name!r}: counts must be >= 0 with at least one > 0")

    @property
    def total(self):
        return float(self.target_counts.sum())


@dataclass
class SeedSample:
    """Seed microdata: one row per record, plus a positive weight per record."""

    records: pd.DataFrame
    weights: np.ndarray = None

    def __post_init__(self):
        self.records = self.records.reset_index(drop=True)
        if self.weights is None:
            self.weights = np.ones(len(self.records))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.records),):
            raise ValueError("one weight per record required")
        if np.any(self.weights < 0):
            raise ValueError("seed weights must be non-negative")


@dataclass
class AttributePrior:
    """``kind`` is ``uniform``, ``normal`` (truncated to [low, high]) or ``categorical``."""

    attribute_name: str
    kind: str
    low: float = 0.0
    high: float = 0.0
    mean: float = 0.0
    sd: float = 0.0
    probabilities: dict = field(default_factory=dict)

    def validate(self):
        if self.kind == "uniform":
            if not self.high >= self.low:
                raise InvalidPrior(f"{self.attribute_name}: uniform needs high >= low")
        elif self.kind == "normal":
            if self.sd < 0:
                raise InvalidPrior(f"{self.attribute_name}: sd must be >= 0")
            if not self.high > self.low:
                raise InvalidPrior(f"{self.attribute_name}: truncation bounds need high > low")
        elif self.kind == "categorical":
            p = np.array(list(self.probabilities.values()), dtype=float)
            if p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise InvalidPrior(f"{self.attribute_name}: probabilities must be >= 0 and sum to 1")
        else:
            raise InvalidPrior(f"{self.attribute_name}: unknown distribution {self.kind!r}")
        return self

    def sample(self, n, rng):
        self.validate()
        if self.kind == "uniform":
            if self.high == self.low:
                return np.full(n, float(self.low))
            return rng.uniform(self.low, self.high, n)
        if self.kind == "normal":
            if self.sd == 0:
                return np.full(n, float(np.clip(self.mean, self.low, self.high)))
            a = (self.low - self.mean) / self.sd
            b = (self.high - self.mean) / self.sd
            return stats.truncnorm.rvs(a, b, loc=self.mean, scale=self.sd, size=n, random_state=rng)
        labels = list(self.probabilities)
        p = np.array([self.probabilities[k] for k in labels], dtype=float)
        return np.asarray(labels, dtype=object)[rng.choice(len(labels), size=n, p=p / p.sum())]

    @classmethod
    def from_spec(cls, name, spec):
        """Build from a config value: a number (point mass) or a mapping with ``dist``."""
        if isinstance(spec, (int, float)):
            return cls(name, "uniform", low=float(spec), high=float(spec))
        spec = dict(spec)
        kind = spec.pop("dist", "uniform")
        if kind == "categorical":
            return cls(name, kind, probabilities=dict(spec.get("probabilities", {}))).validate()
        if kind == "normal":
            return cls(
                name,
                kind,
                low=float(spec.get("low", -math.inf)),
                high=float(spec.get("high", math.inf)),
                mean=float(spec.get("mean", 0.0)),
                sd=float(spec.get("sd", 1.0)),
            ).validate()
        return cls(name, kind, low=float(spec.get("low", 0.0)), high=float(spec.get("high", 0.0))).validate()


# ---------------------------------------------------------------------------
# IPF
# ---------------------------------------------------------------------------


class IPF(BaseEstimator):
    """Iterative proportional fitting of record weights to categorical marginals.

    Parameters
    ----------
    constraints : list of MarginalConstraint
        One per constrained column of the records passed to :meth:`fit`.
    tol : float
        Relative L-infinity tolerance on every marginal.
    max_iter : int
        Maximum number of full sweeps over the constraints.

    Attributes
    ----------
    weights_ : ndarray
    n_iter_ : int
        Sweeps performed (1 when the seed already matches).
    residual_ : float
    rescaled_ : bool
        True when inconsistent marginal totals were rescaled to their mean.
    """

    def __init__(self, constraints=(), tol=1e-8, max_iter=1000):
        self.constraints = constraints
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None, sample_weight=None):
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        records = X if isinstance(X, pd.DataFrame) else pd.DataFrame(X)
        w = np.ones(len(records)) if sample_weight is None else np.asarray(sample_weight, dtype=float).copy()
        targets, codes = self._encode(records, w)
        self.rescaled_ = False
        totals = np.array([t.sum() for t in targets])
        if np.ptp(totals) > 1e-6 * totals.mean():
            warnings.warn(
                f"marginal totals disagree {totals.tolist()}; rescaled to mean {totals.mean():g}",
                InconsistentMarginals,
                stacklevel=2,
            )
            targets = [t * (totals.mean() / t.sum()) for t in targets]
            self.rescaled_ = True

        residual = _ipf_residual(w, codes, targets)
        it = 0
        while residual > self.tol and it < self.max_iter:
            for code, target in zip(codes, targets):
                sums = np.bincount(code, weights=w, minlength=target.size)
                factor = np.divide(target, sums, out=np.zeros_like(target), where=sums > 0)
                w *= factor[code]
            it += 1
            residual = _ipf_residual(w, codes, targets)
        self.weights_ = w
        self.n_iter_ = max(it, 1)
        self.residual_ = residual
        if residual > self.tol:
            raise NonConvergence(it, residual)
        return self

    def _encode(self, records, w):
        targets, codes = [], []
        for con in self.constraints:
            if con.dimension_name not in records.columns:
                raise KeyError(f"records lack constrained column {con.dimension_name!r}")
            col = records[con.dimension_name].astype(str)
            unknown = set(col) - set(con.category_labels)
            if unknown:
                raise ValueError(f"{con.dimension_name!r}: categories {sorted(unknown)} have no target")
            lookup = {c: i for i, c in enumerate(con.category_labels)}
            code = col.map(lookup).to_numpy(dtype=np.int64)
            seed_tot = np.bincount(code, weights=w, minlength=len(lookup))
            empty = (seed_tot == 0) & (con.target_counts > 0)
            if empty.any():
                missing = [con.category_labels[i] for i in np.flatnonzero(empty)]
                raise EmptyCategory(f"{con.dimension_name!r}: no seed weight in {missing}")
            targets.append(con.target_counts.astype(float))
            codes.append(code)
        return targets, codes


def _ipf_residual(w, codes, targets):
    worst = 0.0
    for code, target in zip(codes, targets):
        sums = np.bincount(code, weights=w, minlength=target.size)
        err = np.abs(sums - target) / np.where(target > 0, target, 1.0)
        worst = max(worst, float(err.max()))
    return worst


def ipf_fit(seed, constraints, tol=1e-8, max_iter=1000):
    """Fitted weights per seed record (see :class:`IPF`)."""
    return IPF(constraints, tol, max_iter).fit(seed.records, sample_weight=seed.weights).weights_


# ---------------------------------------------------------------------------
# realisation
# ---------------------------------------------------------------------------


def sample_population(weights, seed, n_agents, rng_seed):
    """Draw ``n_agents`` records multinomially in proportion to ``weights``."""
    weights = np.asarray(weights, dtype=float)
    if n_agents <= 0:
        raise ValueError("n_agents must be > 0")
    if weights.sum() <= 0:
        raise ValueError("weights must have a positive sum")
    rng = np.random.default_rng(rng_seed)
    counts = rng.multinomial(n_agents, weights / weights.sum())
    idx = np.repeat(np.arange(weights.size), counts)
    agents = seed.records.iloc[idx].reset_index(drop=True)
    agents.insert(0, "id", np.arange(n_agents))
    agents["_record"] = idx
    return agents


def impute_missing(population, seed, cell_columns, rng_seed):
    """Single hot-deck imputation of missing attributes.

    Donors are complete seed records in the same joint categorical cell; when
    a cell has none, the whole seed sample is the donor pool.
    """
    pop = population.copy()
    rng = np.random.default_rng(rng_seed)
    donors_all = seed.records
    cells = list(cell_columns)
    for col in [c for c in pop.columns if c in donors_all.columns and c not in cells]:
        missing = pop[col].isna().to_numpy()
        if not missing.any():
            continue
        pool = donors_all[donors_all[col].notna()]
        if pool.empty:
            raise NoDonor(f"no donor has a value for {col!r}")
        keys = pool[cells].astype(str).agg("|".join, axis=1) if cells else pd.Series("", index=pool.index)
        by_cell = {k: g[col].to_numpy() for k, g in pool.groupby(keys)}
        global_values = pool[col].to_numpy()
        rows = np.flatnonzero(missing)
        values = pop[col].to_numpy(dtype=object).copy()
        pop_keys = pop[cells].astype(str).agg("|".join, axis=1).to_numpy() if cells else np.full(len(pop), "")
        for r in rows:
            candidates = by_cell.get(pop_keys[r], global_values)
            values[r] = candidates[rng.integers(candidates.size)]
        pop[col] = pd.Series(values, index=pop.index).infer_objects()
    return pop


def draw_behavioral_attributes(population, priors, rng_seed):
    """Populate ``theta`` and ``eta`` (and any other prior-covered columns)."""
    pop = population.copy()
    names = {p.attribute_name for p in priors}
    if not {"theta", "eta"} <= names:
        raise InvalidPrior("priors must cover theta and eta")
    rng = np.random.default_rng(rng_seed)
    for prior in priors:
        values = prior.sample(len(pop), rng)
        if prior.attribute_name in ("theta", "eta"):
            values = np.asarray(values, dtype=float)
            if np.any(values < 0):
                raise InvalidPrior(f"{prior.attribute_name} prior yields negative values")
        pop[prior.attribute_name] = values
    return pop


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def read_marginals(path):
    """Long-format marginals CSV with columns ``dimension, category, count``."""
    df = pd.read_csv(path, dtype={"dimension": str, "category": str})
    for col in ("dimension", "category", "count"):
        if col not in df.columns:
            raise ValueError(f"marginals file lacks column {col!r}")
    out = []
    for dim, g in df.groupby("dimension", sort=False):
        out.append(MarginalConstraint(dim, g["category"].tolist(), g["count"].to_numpy(dtype=float)))
    return out


def read_microdata(path, constrained):
    """Seed microdata CSV; an optional ``weight`` column defaults to 1.0."""
    df = pd.read_csv(path, dtype={c: str for c in constrained})
    w = df.pop("weight").to_numpy(dtype=float) if "weight" in df.columns else None
    for c in constrained:
        if c not in df.columns:
            raise ValueError(f"microdata lacks constrained column {c!r}")
        if df[c].isna().any():
            raise ValueError(f"constrained column {c!r} has missing values")
    return SeedSample(df, w)


def write_population(pop, path, categorical):
    extra = [c for c in pop.columns if c not in ("id", "theta", "eta", "node", "_record", *categorical)]
    cols = ["id", "theta", "eta", *categorical, *extra, "node"]
    out = pop.copy()
    if "node" not in out.columns:
        out["node"] = 0
    out[cols].to_csv(path, index=False, lineterminator="\n", float_format="%.17g")

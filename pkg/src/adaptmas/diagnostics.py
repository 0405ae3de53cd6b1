"""Information-theoretic diagnostics for aggregate trajectories.

Series are symbolized (quantile bins or an overload indicator), then
summarised by plug-in block entropies, the block-difference entropy rate,
the finite-block predictive information and a reconstructed epsilon-machine
(CSSR-style state splitting followed by determinization).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import (
    BlockTooLong,
    DegenerateSeries,
    InsufficientData,
    SeriesTooShort,
    ShortSeries,
)

# ---------------------------------------------------------------------------
# symbolization
# ---------------------------------------------------------------------------


@dataclass
class SymbolSeries:
    symbols: np.ndarray
    alphabet_size: int
    edges: np.ndarray = field(default_factory=lambda: np.empty(0))
    degenerate: bool = False

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.int64)
        if self.alphabet_size < 2:
            raise ValueError("alphabet size must be >= 2")
        if self.symbols.ndim != 1 or self.symbols.size < 1:
            raise ValueError("symbol series must be a non-empty 1-d sequence")
        if self.symbols.min() < 0 or self.symbols.max() >= self.alphabet_size:
            raise ValueError("symbols must lie in 0..A-1")

    def __len__(self):
        return self.symbols.size


class QuantileSymbolizer(TransformerMixin, BaseEstimator):
    """Map a real series to ``n_symbols`` empirical-quantile bins.

    Bin edges sit at the k/A quantiles of the training series; a value equal
    to an edge goes to the lower bin, so A=2 is a median split.
    """

    def __init__(self, n_symbols=2):
        self.n_symbols = n_symbols

    def fit(self, X, y=None):
        x = _as_series(X)
        if self.n_symbols < 2:
            raise ValueError("n_symbols must be >= 2")
        if x.size < self.n_symbols:
            raise SeriesTooShort(f"need at least {self.n_symbols} values, got {x.size}")
        self.degenerate_ = bool(np.ptp(x) == 0.0)
        qs = np.arange(1, self.n_symbols) / self.n_symbols
        self.edges_ = np.quantile(x, qs)
        return self

    def transform(self, X):
        check_is_fitted(self, "edges_")
        x = _as_series(X)
        if self.degenerate_:
            return np.zeros(x.size, dtype=np.int64)
        return np.searchsorted(self.edges_, x, side="left").astype(np.int64)


def _as_series(X):
    x = np.asarray(X, dtype=float)
    if x.ndim == 2 and 1 in x.shape:
        x = x.ravel()
    if x.ndim != 1:
        raise ValueError("expected a 1-d series")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    return x


def symbolize(series, n_symbols=2, method="quantile"):
    """Symbolize ``series``; ``method`` is ``"quantile"`` or ``"overload"``.

    The overload method emits 1 where the value is strictly positive (meant
    for the overload series O_t) and always uses a binary alphabet.
    """
    x = _as_series(series)
    if method == "overload":
        sym = (x > 0).astype(np.int64)
        return SymbolSeries(sym, 2, np.array([0.0]), degenerate=bool(np.ptp(sym) == 0))
    if method != "quantile":
        raise ValueError(f"unknown symbolization method {method!r}")
    sz = QuantileSymbolizer(n_symbols).fit(x)
    if sz.degenerate_:
        warnings.warn("constant series symbolized to all zeros", DegenerateSeries, stacklevel=2)
    return SymbolSeries(sz.transform(x), n_symbols, sz.edges_, sz.degenerate_)


def _coerce(sym, alphabet_size=None):
    if isinstance(sym, SymbolSeries):
        return sym
    arr = np.asarray(sym, dtype=np.int64)
    A = alphabet_size if alphabet_size is not None else max(2, int(arr.max()) + 1)
    return SymbolSeries(arr, A)


# ---------------------------------------------------------------------------
# block statistics
# ---------------------------------------------------------------------------


def block_codes(symbols, L, A):
    """Integer codes of the overlapping length-L blocks (oldest symbol most significant)."""
    s = np.asarray(symbols, dtype=np.int64)
    n = s.size - L + 1
    codes = np.zeros(n, dtype=np.int64)
    for k in range(L):
        codes = codes * A + s[k:k + n]
    return codes


def _entropy_bits(counts):
    counts = np.asarray(counts, dtype=float)
    counts = counts[counts > 0]
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def block_entropy(sym, L, alphabet_size=None, n_blocks=None):
    """Plug-in Shannon entropy (bits) of the empirical overlapping L-block distribution.

    ``n_blocks`` restricts the count to blocks starting at the first
    ``n_blocks`` positions, so entropies at several L can share one sample.
    """
    sym = _coerce(sym, alphabet_size)
    if L < 0:
        raise ValueError("L must be >= 0")
    if L > len(sym):
        raise BlockTooLong(f"block length {L} exceeds series length {len(sym)}")
    if L == 0:
        return 0.0
    codes = block_codes(sym.symbols, L, sym.alphabet_size)
    if n_blocks is not None:
        codes = codes[:n_blocks]
    _, counts = np.unique(codes, return_counts=True)
    return _entropy_bits(counts)


def entropy_rate_curve(sym, L_max, alphabet_size=None):
    """Return (H(0..L_max), h(1..L_max)) where h(L) = H(L) - H(L-1).

    All block lengths are counted at the same start positions, which makes
    H(L) nondecreasing in L (each shorter block is a prefix of a longer one).
    """
    sym = _coerce(sym, alphabet_size)
    if L_max > len(sym):
        raise BlockTooLong(f"block length {L_max} exceeds series length {len(sym)}")
    n_blocks = len(sym) - L_max + 1
    H = np.array([block_entropy(sym, L, n_blocks=n_blocks) for L in range(L_max + 1)])
    assert np.all(np.diff(H) >= -1e-12), "block entropy decreased in L"
    return H, np.diff(H)


def entropy_rate(sym, L_max, alphabet_size=None):
    """Block-difference entropy rate H(L_max) - H(L_max - 1), clipped to [0, log2 A]."""
    sym = _coerce(sym, alphabet_size)
    if L_max < 1:
        raise ValueError("L_max must be >= 1")
    if len(sym) < 10 * sym.alphabet_size ** L_max:
        warnings.warn(
            f"series of length {len(sym)} is short for L_max={L_max}", ShortSeries, stacklevel=2
        )
    h = entropy_rate_curve(sym, L_max)[1][-1]
    return float(min(max(h, 0.0), math.log2(sym.alphabet_size)))


def predictive_information(sym, L, alphabet_size=None):
    """Finite-block excess entropy estimate 2 H(L) - H(2L), floored at zero."""
    sym = _coerce(sym, alphabet_size)
    if L < 1:
        raise ValueError("L must be >= 1")
    if 2 * L > len(sym):
        raise BlockTooLong(f"2L={2 * L} exceeds series length {len(sym)}")
    e = 2.0 * block_entropy(sym, L) - block_entropy(sym, 2 * L)
    if e < -0.01:
        warnings.warn(f"predictive information estimate {e:.4f} < 0 clipped", InsufficientData, stacklevel=2)
    return max(e, 0.0)


def usable_length(n, A, L_max, factor=10):
    """Largest L <= L_max with n >= factor * A**L (at least 1)."""
    L = L_max
    while L > 1 and n < factor * A ** L:
        L -= 1
    return L


# ---------------------------------------------------------------------------
# epsilon-machine reconstruction
# ---------------------------------------------------------------------------


@dataclass
class EpsilonMachine:
    """Unifilar machine: ``probs[s, a]`` is P(a | s), ``next_state[s, a]`` its successor (-1 if none)."""

    probs: np.ndarray
    next_state: np.ndarray
    stationary: np.ndarray
    histories: list = field(default_factory=list)
    alphabet_size: int = 2

    @property
    def n_states(self):
        return self.probs.shape[0]

    def transition_matrix(self):
        n = self.n_states
        T = np.zeros((n, n))
        for s in range(n):
            for a in range(self.alphabet_size):
                t = self.next_state[s, a]
                if t >= 0:
                    T[s, t] += self.probs[s, a]
        return T


def stationary_distribution(T, tol=1e-12, max_iter=100_000):
    """Principal left eigenvector of a row-stochastic matrix by power iteration.

    Iterates the lazy chain (I + T)/2, which has the same stationary
    distribution but no period, so periodic machines converge too.
    """
    n = T.shape[0]
    lazy = 0.5 * (np.eye(n) + T)
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = pi @ lazy
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() < tol:
            return nxt
        pi = nxt
    return pi


def _chi2_pvalue(a, b):
    """Two-sample chi-squared test on next-symbol counts (Yates for 2x2)."""
    table = np.vstack([a, b]).astype(float)
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2 or np.any(table.sum(axis=1) == 0):
        return 1.0
    _, p, _, _ = stats.chi2_contingency(table, correction=True)
    return float(p)


class CausalStateReconstructor(BaseEstimator):
    """CSSR-style causal state reconstruction from a symbol sequence.

    Parameters
    ----------
    max_length : int
        Longest history length L_max.
    alpha : float
        Significance level of the next-symbol homogeneity test.
    min_count : int
        Histories observed fewer times than this are skipped (and flagged).
    alphabet_size : int or None
        Defaults to ``max(symbol) + 1`` (at least 2).

    Attributes
    ----------
    machine_ : EpsilonMachine
    skipped_histories_ : list of tuple
        Histories with 0 < count < min_count that were not tested.
    """

    def __init__(self, max_length=8, alpha=0.005, min_count=10, alphabet_size=None):
        self.max_length = max_length
        self.alpha = alpha
        self.min_count = min_count
        self.alphabet_size = alphabet_size

    def fit(self, X, y=None):
        sym = _coerce(X, self.alphabet_size)
        if self.max_length < 1:
            raise ValueError("max_length must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        A, Lmax = sym.alphabet_size, self.max_length
        if len(sym) <= Lmax:
            raise SeriesTooShort(f"series of length {len(sym)} too short for L_max={Lmax}")
        counts = self._count(sym.symbols, A, Lmax)
        assign, state_counts = self._homogenize(counts, A, Lmax)
        self.machine_ = self._determinize(counts, assign, A, Lmax)
        self.n_states_ = self.machine_.n_states
        if self.skipped_histories_:
            warnings.warn(
                f"{len(self.skipped_histories_)} histories had fewer than {self.min_count} observations",
                InsufficientData,
                stacklevel=2,
            )
        return self

    @staticmethod
    def _count(s, A, Lmax):
        # every length uses the same positions so parent counts equal the sum of child counts
        nxt = s[Lmax:]
        out = []
        for L in range(Lmax + 1):
            if L == 0:
                codes = np.zeros(nxt.size, dtype=np.int64)
            else:
                codes = block_codes(s[Lmax - L:-1], L, A)
            out.append(np.bincount(codes * A + nxt, minlength=A ** (L + 1)).reshape(A ** L, A))
        return out

    def _homogenize(self, counts, A, Lmax):
        assign = {(0, 0): 0}
        state_counts = [counts[0][0].copy()]
        self.skipped_histories_ = []
        for L in range(Lmax):
            parents = sorted((k for k in assign if k[0] == L), key=lambda k: (assign[k], k[1]))
            n_tests = sum(
                int((counts[L + 1][a * A ** L + code].sum() >= self.min_count))
                for _, code in parents
                for a in range(A)
            )
            # family-wise level per history length; per-test alpha splits iid data spuriously
            level = self.alpha / max(n_tests, 1)
            for _, code in parents:
                home = assign[(L, code)]
                for a in range(A):
                    child = a * A ** L + code
                    c = counts[L + 1][child]
                    n = c.sum()
                    if n == 0:
                        continue
                    if n < self.min_count:
                        self.skipped_histories_.append((L + 1, int(child)))
                        continue
                    if _chi2_pvalue(c, state_counts[home]) > level:
                        target = home
                    else:
                        best, best_p = None, level
                        for s, sc in enumerate(state_counts):
                            if s == home:
                                continue
                            p = _chi2_pvalue(c, sc)
                            if p > best_p:
                                best, best_p = s, p
                        if best is None:
                            state_counts.append(np.zeros(A, dtype=np.int64))
                            best = len(state_counts) - 1
                        target = best
                    assign[(L + 1, int(child))] = target
                    state_counts[target] = state_counts[target] + c
        return assign, state_counts

    def _determinize(self, counts, assign, A, Lmax):
        carriers = np.array(sorted(code for (L, code) in assign if L == Lmax), dtype=np.int64)
        if carriers.size == 0:
            # nothing long enough was observed often enough; fall back to a single state
            p = counts[0][0] / counts[0][0].sum()
            return EpsilonMachine(p[None, :], np.zeros((1, A), dtype=np.int64), np.ones(1), [[()]], A)
        index = {int(c): i for i, c in enumerate(carriers)}
        C = counts[Lmax][carriers]
        succ = np.full((carriers.size, A), -1, dtype=np.int64)
        for i, code in enumerate(carriers):
            for a in range(A):
                if C[i, a] > 0:
                    succ[i, a] = index.get(int((code * A + a) % A ** Lmax), -1)
        labels = np.array([assign[(Lmax, int(c))] for c in carriers], dtype=np.int64)
        labels = _relabel(labels[:, None])
        while True:
            succ_lab = np.where(succ >= 0, labels[np.maximum(succ, 0)], -1)
            refined = _relabel(np.column_stack([labels, succ_lab]))
            if refined.max() == labels.max():
                break
            labels = refined
        k = labels.max() + 1
        probs = np.zeros((k, A))
        nxt = np.full((k, A), -1, dtype=np.int64)
        for s in range(k):
            members = labels == s
            tot = C[members].sum(axis=0)
            probs[s] = tot / tot.sum()
            for a in range(A):
                targets = succ[members, a]
                targets = targets[targets >= 0]
                if targets.size:
                    nxt[s, a] = labels[targets[0]]
        # symbols whose successor history was never retained carry no transition
        for s in range(k):
            missing = (nxt[s] < 0) & (probs[s] > 0)
            if missing.any():
                probs[s, missing] = 0.0
                probs[s] /= probs[s].sum()
        pi = stationary_distribution(_transition(probs, nxt))
        keep = pi > 1e-12
        if not keep.all():
            remap = -np.ones(k, dtype=np.int64)
            remap[keep] = np.arange(keep.sum())
            kept = nxt[keep]
            probs, nxt = probs[keep], np.where(kept >= 0, remap[np.maximum(kept, 0)], -1)
            # transitions from recurrent states never point at transient ones
            pi = stationary_distribution(_transition(probs, nxt))
            labels = remap[labels]
        histories = [
            [_decode(int(c), Lmax, A) for c, lab in zip(carriers, labels) if lab == s]
            for s in range(probs.shape[0])
        ]
        return EpsilonMachine(probs, nxt, pi, histories, A)


def _transition(probs, nxt):
    k, A = probs.shape
    T = np.zeros((k, k))
    for s in range(k):
        for a in range(A):
            if nxt[s, a] >= 0:
                T[s, nxt[s, a]] += probs[s, a]
    return T


def _relabel(rows):
    """Dense labels for unique rows, numbered in order of first appearance."""
    _, first, inv = np.unique(rows, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv.ravel()]


def _decode(code, L, A):
    out = []
    for _ in range(L):
        out.append(code % A)
        code //= A
    return tuple(reversed(out))


def reconstruct_epsilon_machine(sym, L_max=8, alpha=0.005, min_count=10, alphabet_size=None):
    return CausalStateReconstructor(L_max, alpha, min_count, alphabet_size).fit(sym).machine_


def statistical_complexity(machine):
    """Shannon entropy (bits) of the stationary causal-state distribution."""
    return _entropy_bits(machine.stationary)


def machine_entropy_rate(machine):
    """sum_s pi_s H[next symbol | s] in bits."""
    h = 0.0
    for pi_s, p in zip(machine.stationary, machine.probs):
        h += pi_s * _entropy_bits(p) if p.sum() > 0 else 0.0
    return float(h)


# ---------------------------------------------------------------------------
# trajectory classification
# ---------------------------------------------------------------------------


def classify_trajectory(series, s_drift=2.0, f_cyc=0.4):
    """Label a post-burn-in series as ``stationary``, ``cyclic`` or ``drifting``.

    Drifting when |LS slope| * n exceeds ``s_drift`` sample sds; otherwise
    cyclic when the largest non-zero-frequency periodogram ordinate holds
    more than ``f_cyc`` of the non-zero-frequency power.
    """
    x = _as_series(series)
    n = x.size
    if n < 64:
        raise SeriesTooShort(f"need at least 64 points, got {n}")
    sd = x.std(ddof=1)
    if sd == 0.0:
        return "stationary"
    t = np.arange(n, dtype=float)
    slope = np.polyfit(t, x, 1)[0]
    if abs(slope) * n > s_drift * sd:
        return "drifting"
    power = np.abs(np.fft.rfft(x - x.mean()))[1:] ** 2
    total = power.sum()
    if total > 0 and power.max() / total > f_cyc:
        return "cyclic"
    return "stationary"


# ---------------------------------------------------------------------------
# combined summary
# ---------------------------------------------------------------------------


@dataclass
class InfoMeasures:
    h_mu: float
    C_mu: float
    E_pred: float
    n_states: int
    L_used: int
    A: int
    machine_h_mu: float = float("nan")

    def as_dict(self):
        return {
            "h_mu": self.h_mu,
            "C_mu": self.C_mu,
            "E_pred": self.E_pred,
            "n_states": self.n_states,
            "L_used": self.L_used,
            "A": self.A,
        }


DEFAULT_MAX_LENGTH = {2: 8, 4: 5}


def info_measures(sym, L_max=None, alpha=0.005, min_count=10):
    """Entropy rate, statistical complexity and predictive information of a symbol series.

    ``L_max`` defaults to 8 for binary and 5 for 4-symbol alphabets and is
    reduced until the series holds at least 10 * A**L observations.
    """
    sym = _coerce(sym)
    A = sym.alphabet_size
    if L_max is None:
        L_max = DEFAULT_MAX_LENGTH.get(A, max(1, int(math.log(1e5 / 10, A))))
    L = usable_length(len(sym), A, L_max)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", InsufficientData)
        machine = CausalStateReconstructor(L, alpha, min_count, A).fit(sym).machine_
    h = entropy_rate(sym, L)
    e = predictive_information(sym, max(1, L // 2))
    return InfoMeasures(
        h_mu=h,
        C_mu=statistical_complexity(machine),
        E_pred=e,
        n_states=machine.n_states,
        L_used=L,
        A=A,
        machine_h_mu=machine_entropy_rate(machine),
    )

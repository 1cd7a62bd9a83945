"""Dataset ingestion (libsvm, CSV), min-max scaling, splitting and generators."""
import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .objective import FiniteSumProblem


class ParseError(ValueError):
    def __init__(self, lineno, msg):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass
class RawDataset:
    """Sparse rows ``(label, ((index, value), ...))`` with 1-based, increasing indices."""

    rows: list
    d_declared: Optional[int] = None

    @property
    def d(self):
        if self.d_declared is not None:
            return self.d_declared
        return max((pairs[-1][0] for _, pairs in self.rows if pairs), default=0)


@dataclass
class SplitDataset:
    train: FiniteSumProblem
    test: FiniteSumProblem


def _label(tok, lineno):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(lineno, f"non-numeric label {tok!r}") from None
    if v == 1:
        return 1
    if v == 0 or v == -1:
        return 0
    raise ParseError(lineno, f"label {tok!r} is not binary")


def parse_libsvm(text, d=None):
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        label = _label(toks[0], lineno)
        pairs = {}
        for tok in toks[1:]:
            idx, sep, val = tok.partition(":")
            if not sep:
                raise ParseError(lineno, f"malformed pair {tok!r}")
            try:
                i = int(idx)
                v = float(val)
            except ValueError:
                raise ParseError(lineno, f"malformed pair {tok!r}") from None
            if i < 1:
                raise ParseError(lineno, f"index {i} below 1")
            if i in pairs:
                raise ParseError(lineno, f"duplicate index {i}")
            if d is not None and i > d:
                raise ParseError(lineno, f"index {i} exceeds declared dimension {d}")
            pairs[i] = v
        rows.append((label, tuple(sorted(pairs.items()))))
    return RawDataset(rows, d)


def serialize_libsvm(raw):
    out = io.StringIO()
    for label, pairs in raw.rows:
        out.write(str(int(label)))
        for i, v in pairs:
            out.write(" %d:%.17g" % (i, v))
        out.write("\n")
    return out.getvalue()


def to_dense(raw, d=None):
    d = raw.d if d is None else d
    X = np.zeros((len(raw.rows), d))
    y = np.empty(len(raw.rows))
    for r, (label, pairs) in enumerate(raw.rows):
        y[r] = label
        for i, v in pairs:
            if i > d:
                raise ValueError(f"row {r} has index {i} beyond dimension {d}")
            X[r, i - 1] = v
    return X, y


def from_dense(X, y):
    rows = []
    for xr, label in zip(np.asarray(X, dtype=float), y):
        nz = np.flatnonzero(xr)
        rows.append((int(label), tuple((int(i) + 1, float(xr[i])) for i in nz)))
    return RawDataset(rows, X.shape[1])


def read_libsvm(path, d=None):
    with open(path, encoding="utf-8") as fh:
        return to_dense(parse_libsvm(fh.read(), d), d)


def write_libsvm(path, X, y):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_libsvm(from_dense(X, y)))


def read_csv(path, label_column="label"):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "empty file") from None
        if label_column not in header:
            raise ParseError(1, f"no {label_column!r} column")
        j = header.index(label_column)
        X, y = [], []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(lineno, f"expected {len(header)} fields, got {len(row)}")
            y.append(_label(row[j], lineno))
            try:
                X.append([float(v) for c, v in enumerate(row) if c != j])
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from None
    return np.array(X, dtype=float).reshape(len(y), len(header) - 1), np.array(y, dtype=float)


def minmax_scale(D, ref=None):
    """Map each column to [0, 1] using extrema of ``ref`` (default ``D``); constant columns go to 0."""
    D = np.asarray(D, dtype=float)
    R = D if ref is None else np.asarray(ref, dtype=float)
    lo, hi = R.min(axis=0), R.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (D - lo) / safe, 0.0)


def scale_pair(X_train, X_test, leak=True):
    """Scale train and test together (``leak``) or with train extrema only."""
    if leak:
        both = minmax_scale(np.vstack([X_train, X_test]))
        return both[:len(X_train)], both[len(X_train):]
    return minmax_scale(X_train), minmax_scale(X_test, ref=X_train)


def split(X, y, n_test, seed):
    if not 0 < n_test < len(y):
        raise ValueError("n_test must leave both parts non-empty")
    perm = np.random.default_rng(seed).permutation(len(y))
    te, tr = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    return (X[tr], y[tr]), (X[te], y[te])


def make_split(X_train, y_train, X_test, y_test, scale=True, leak=True):
    if scale:
        X_train, X_test = scale_pair(X_train, X_test, leak)
    return SplitDataset(FiniteSumProblem(X_train, y_train), FiniteSumProblem(X_test, y_test))


def _random_orthogonal(d, rng):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def second_moment_cond(X):
    ev = np.linalg.eigvalsh(X.T @ X / len(X))
    return float(ev[-1] / ev[0]) if ev[0] > 0 else math.inf


def synthetic_arrays(N, N_T, d, cond_target, seed, signal=5.0, calibrate=True):
    """Unscaled features z Lambda^{1/2} Q and Bernoulli labels from a planted model.

    Lambda is log-uniform over a span chosen by bisection so that, after
    min-max scaling, the second-moment matrix of the features has condition
    number close to ``cond_target`` (with ``calibrate``); otherwise the span
    is ``cond_target`` itself.
    """
    if not cond_target >= 1:
        raise ValueError("cond_target must be at least 1")
    if N < 1 or N_T < 0 or d < 1:
        raise ValueError("need N >= 1, N_T >= 0, d >= 1")
    rng = np.random.default_rng(seed)
    Q = _random_orthogonal(d, rng)
    Z = rng.standard_normal((N + N_T, d))
    w = rng.standard_normal(d)
    u = rng.random(N + N_T)

    def features(log_span):
        lam = np.logspace(0.0, -log_span, d) if d > 1 else np.ones(1)
        return (Z * np.sqrt(lam)) @ Q

    top = math.log10(cond_target)
    log_span = top
    if calibrate and d > 1 and cond_target > 1:
        lo, hi = 0.0, top
        if second_moment_cond(minmax_scale(features(lo))) >= cond_target:
            hi = lo
        for _ in range(40):
            if hi - lo < 1e-3:
                break
            mid = 0.5 * (lo + hi)
            if second_moment_cond(minmax_scale(features(mid))) < cond_target:
                lo = mid
            else:
                hi = mid
        log_span = 0.5 * (lo + hi)
    X = features(log_span)
    margins = X @ w
    w = w * (signal / max(float(np.std(margins)), 1e-300))
    y = (u < 1.0 / (1.0 + np.exp(-(X @ w)))).astype(float)
    return X, y, w


def gen_synthetic(N, N_T, d, cond_target, seed, leak=True):
    X, y, _ = synthetic_arrays(N, N_T, d, cond_target, seed)
    if N_T == 0:
        raise ValueError("need at least one test row")
    return make_split(X[:N], y[:N], X[N:], y[N:], scale=True, leak=leak)


def gen_separable(N, d, seed, margin=1.0, N_T=0):
    """Linearly separable rows through the origin with |a^T w| >= margin, w = planted unit normal."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d)
    w /= np.linalg.norm(w)
    X = rng.uniform(-1.0, 1.0, size=(N + N_T, d)) * np.sqrt(3.0)
    t = X @ w
    # push each row off the hyperplane by the margin along w
    X += np.outer(np.where(t >= 0, margin, -margin), w)
    y = (X @ w > 0).astype(float)
    train = FiniteSumProblem(X[:N], y[:N])
    test = FiniteSumProblem(X[N:], y[N:]) if N_T else None
    return SplitDataset(train, test), w

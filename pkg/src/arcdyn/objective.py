"""Sigmoid least-squares finite-sum objective for binary classification.

    f(x) = (1/N) sum_i (y_i - sigmoid(a_i^T x))^2

Every component Hessian is rank one, c_i(x) a_i a_i^T, so Hessian-vector
products over a sample D cost |D| scalar products and are never formed as
matrices.  Costs are tracked in component evaluations on a ``CostLedger``;
one effective gradient evaluation (EGE) equals N component evaluations.

All reductions over components run in a fixed sequential row order, so a
result depends only on the inputs and never on BLAS threading.
"""
from dataclasses import dataclass

import numpy as np

# rows per block in the fixed-order reductions; does not affect results
_BLOCK = 4096


@dataclass
class CostLedger:
    """Integer count of component evaluations charged against a problem of size N."""

    N: int
    component_evals: int = 0

    def charge(self, count):
        count = int(count)
        if count < 0:
            raise ValueError("negative charge")
        self.component_evals += count

    @property
    def ege(self):
        return self.component_evals / self.N


def sigmoid(z):
    """Logistic function, evaluated without overflow for any finite z."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def row_dots(M, v):
    """``M @ v`` with each row summed by numpy's own pairwise loop."""
    out = np.empty(M.shape[0])
    for lo in range(0, M.shape[0], _BLOCK):
        blk = M[lo:lo + _BLOCK]
        out[lo:lo + _BLOCK] = (blk * v).sum(axis=1)
    return out


def weighted_row_sum(w, M):
    """``sum_i w_i M[i]`` accumulated strictly in row order."""
    acc = np.zeros(M.shape[1])
    buf = None
    for lo in range(0, M.shape[0], _BLOCK):
        blk = M[lo:lo + _BLOCK]
        if buf is None or buf.shape[0] != blk.shape[0] + 1:
            buf = np.empty((blk.shape[0] + 1, M.shape[1]))
        buf[0] = acc
        np.multiply(w[lo:lo + _BLOCK, None], blk, out=buf[1:])
        acc = buf.sum(axis=0)
    return acc


def _residual(y, s, t):
    # y - sigmoid(z); for y = 1 this is sigmoid(-z), which keeps full precision
    return np.where(y == 1, t, y - s)


def grad_coefficients(z, y):
    """Scalar factor of each component gradient along a_i."""
    s = sigmoid(z)
    t = sigmoid(-z)
    return -2.0 * _residual(y, s, t) * s * t


def hessian_coefficients(z, y):
    """c_i with grad^2 phi_i = c_i a_i a_i^T.

    Same quantity as -2 e (1+e)^-4 (y (e^2 - 1) + 1 - 2e), e = exp(-z),
    rewritten through s = sigmoid(z) so large |z| cannot overflow.
    """
    s = sigmoid(z)
    t = sigmoid(-z)
    return 2.0 * s * t * (s * t - _residual(y, s, t) * (t - s))


class FiniteSumProblem:
    """Training rows ``features`` (N x d) with labels in {0, 1}."""

    def __init__(self, features, labels):
        A = np.ascontiguousarray(features, dtype=float)
        y = np.asarray(labels, dtype=float)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise ValueError("features must be a non-empty N x d matrix")
        if y.shape != (A.shape[0],):
            raise ValueError("need exactly one label per row")
        if not np.all(np.isfinite(A)):
            raise ValueError("features must be finite")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        self.A = A
        self.y = y
        self.N, self.d = A.shape
        self.row_sq_norms = (A * A).sum(axis=1)
        self._margins = None

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.d},)")
        return x

    def margins(self, x):
        """a_i^T x for every row, reused while the point is unchanged."""
        x = self._check(x)
        cached = self._margins
        if cached is not None and np.array_equal(cached[0], x):
            return cached[1]
        z = row_dots(self.A, x)
        self._margins = (x.copy(), z)
        return z

    def f(self, x, ledger=None):
        z = self.margins(x)
        r = _residual(self.y, sigmoid(z), sigmoid(-z))
        if ledger is not None:
            ledger.charge(self.N)
        return float((r * r).sum() / self.N)

    def grad(self, x, ledger=None):
        w = grad_coefficients(self.margins(x), self.y)
        if ledger is not None:
            ledger.charge(self.N)
        return weighted_row_sum(w, self.A) / self.N

    def hessian_operator(self, x, D=None, ledger=None):
        """Bind the (sub)sampled Hessian at ``x`` to a reusable operator."""
        z = self.margins(x)
        if D is None or len(D) == self.N:
            return HessianOperator(self.A, hessian_coefficients(z, self.y), ledger)
        D = np.asarray(D, dtype=np.intp)
        if D.size == 0:
            raise ValueError("empty sample")
        return HessianOperator(self.A[D], hessian_coefficients(z[D], self.y[D]), ledger)

    def kappa_phi(self, x):
        """max_i |c_i(x)| ||a_i||^2, a bound on every component Hessian norm."""
        c = hessian_coefficients(self.margins(x), self.y)
        return float(np.max(np.abs(c) * self.row_sq_norms))


class HessianOperator:
    """v -> (1/|D|) sum_{i in D} c_i (a_i^T v) a_i, charging |D| per product."""

    def __init__(self, rows, coef, ledger=None):
        self.rows = rows
        self.coef = coef
        self.ledger = ledger
        self.size = rows.shape[0]
        self.products = 0

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.rows.shape[1],):
            raise ValueError("dimension mismatch")
        if self.ledger is not None:
            self.ledger.charge(self.size)
        self.products += 1
        return weighted_row_sum(self.coef * row_dots(self.rows, v), self.rows) / self.size


def eval_f(p, x, ledger):
    return p.f(x, ledger)


def eval_grad(p, x, ledger):
    return p.grad(x, ledger)


def hvp(p, x, v, D, ledger):
    """Single (sub)sampled Hessian-vector product over the indices in ``D``."""
    if D is not None and len(D) == 0:
        raise ValueError("empty sample")
    return p.hessian_operator(x, D, ledger)(v)


def kappa_phi(p, x):
    return p.kappa_phi(x)

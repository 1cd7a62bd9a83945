"""Dense helpers for verification only.

Nothing here charges a ledger, and nothing in the solver imports it.
"""
import numpy as np

from .objective import hessian_coefficients


def assemble_hessian(p, x, D=None):
    """Dense (1/|D|) sum_{i in D} c_i(x) a_i a_i^T."""
    z = p.A @ np.asarray(x, dtype=float)
    idx = np.arange(p.N) if D is None else np.asarray(D, dtype=np.intp)
    rows = p.A[idx]
    c = hessian_coefficients(z[idx], p.y[idx])
    return (rows.T * c) @ rows / len(idx)


def component_hessian_norms(p, x):
    """Spectral norm of each rank-one component Hessian, |c_i| ||a_i||^2."""
    z = p.A @ np.asarray(x, dtype=float)
    return np.abs(hessian_coefficients(z, p.y)) * p.row_sq_norms


def dense_operator(M, ledger=None, charge=1):
    """Wrap a symmetric matrix as a Hessian operator for model-level tests."""
    M = np.asarray(M, dtype=float)

    def op(v):
        if ledger is not None:
            ledger.charge(charge)
        return M @ v

    return op


class DenseSampleOperator:
    """A fixed matrix posing as a sampled Hessian: charges ``size`` per product."""

    def __init__(self, H, size, ledger):
        self.H = H
        self.size = size
        self.ledger = ledger
        self.products = 0

    def __call__(self, v):
        if self.ledger is not None:
            self.ledger.charge(self.size)
        self.products += 1
        return self.H @ v


class SaddleSum:
    """Finite sum on R^2 with a strict saddle at the origin.

        phi_i(x) = 1/2 x1^2 + b_i (q x2^4 / 4 - x2^2 / 2) + t_i x1

    with the t_i cancelling in pairs and mean(b_i) = 1, so f has g(0) = 0,
    Hessian diag(1, -1) at 0 and minimizers (0, +-1/sqrt(q)) with
    f = -1/(4q).  The default q is flat enough that the first eigen-step,
    of length 1/sigma0, is accepted.
    """

    def __init__(self, pairs=2, spread=0.2, tilt=1.0, q=0.01):
        self.q = q
        b = np.linspace(1 - spread, 1 + spread, pairs)
        self.b = np.concatenate([b, b])
        self.t = np.concatenate([np.full(pairs, tilt), np.full(pairs, -tilt)])
        self.N, self.d = 2 * pairs, 2

    def _phi(self, x):
        x1, x2 = x
        return 0.5 * x1 * x1 + self.b * (0.25 * self.q * x2 ** 4 - 0.5 * x2 * x2) + self.t * x1

    def f(self, x, ledger=None):
        if ledger is not None:
            ledger.charge(self.N)
        return float(np.mean(self._phi(np.asarray(x, dtype=float))))

    def grad(self, x, ledger=None):
        if ledger is not None:
            ledger.charge(self.N)
        x1, x2 = np.asarray(x, dtype=float)
        return np.array([x1 + np.mean(self.t), np.mean(self.b) * (self.q * x2 ** 3 - x2)])

    def component_hessians(self, x):
        x2 = float(x[1])
        return [np.diag([1.0, bi * (3 * self.q * x2 * x2 - 1)]) for bi in self.b]

    def hessian(self, x, D=None):
        H = self.component_hessians(x)
        idx = range(self.N) if D is None else D
        return sum(H[i] for i in idx) / len(idx)

    def hessian_operator(self, x, D=None, ledger=None):
        size = self.N if D is None else len(D)
        return DenseSampleOperator(self.hessian(x, D), size, ledger)

    def kappa_phi(self, x):
        return max(np.linalg.norm(h, 2) for h in self.component_hessians(x))

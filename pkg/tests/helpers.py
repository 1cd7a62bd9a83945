import numpy as np

from arcdyn.objective import FiniteSumProblem


def random_problem(rng, N=None, d=None, scale=1.0):
    N = N or int(rng.integers(5, 101))
    d = d or int(rng.integers(1, 21))
    A = rng.standard_normal((N, d)) * scale
    y = (rng.random(N) < 0.5).astype(float)
    return FiniteSumProblem(A, y)


def random_symmetric(rng, d, scale=1.0):
    M = rng.standard_normal((d, d)) * scale
    return (M + M.T) / 2


def central_diff(fun, x, h):
    out = np.empty_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        out[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return out


class QuadraticSum:
    """phi_i(x) = 1/2 x^T H_i x + c_i^T x with every H_i positive definite."""

    def __init__(self, rng, N=8, d=3):
        self.N, self.d = N, d
        self.H = []
        for _ in range(N):
            M = rng.standard_normal((d, d))
            self.H.append(M @ M.T + np.eye(d))
        self.c = rng.standard_normal((N, d))

    def f(self, x, ledger=None):
        if ledger is not None:
            ledger.charge(self.N)
        return float(np.mean([0.5 * x @ H @ x + c @ x for H, c in zip(self.H, self.c)]))

    def grad(self, x, ledger=None):
        if ledger is not None:
            ledger.charge(self.N)
        return np.mean([H @ x + c for H, c in zip(self.H, self.c)], axis=0)

    def hessian_operator(self, x, D=None, ledger=None):
        from arcdyn.testing import DenseSampleOperator
        idx = range(self.N) if D is None else D
        return DenseSampleOperator(sum(self.H[i] for i in idx) / len(idx), len(idx), ledger)

    def kappa_phi(self, x):
        return max(np.linalg.norm(H, 2) for H in self.H)

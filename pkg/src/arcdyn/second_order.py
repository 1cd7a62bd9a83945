"""Second-order extension: negative-curvature steps and the (eps, eps_H) stop.

When the sampled Hessian B_k is indefinite, the accepted step must do at
least as well on the cubic model as s_E = alpha_E u, the global minimizer
of the model along an approximate leftmost eigenvector u (with g^T u <= 0).
"""
from dataclasses import dataclass, field

import numpy as np

from .arc import ArcConfig, drive
from .cubic_model import SubsolverReport, solve_subproblem


@dataclass
class EigEstimate:
    lambda_min_est: float
    u: np.ndarray
    residual: float
    Bu: np.ndarray = field(repr=False, default=None)
    products: int = 0


def estimate_min_eig(B_op, d, tol=1e-8, budget=None, rng=None, g=None):
    """Leftmost Ritz pair of ``B_op`` by Lanczos with full reorthogonalization.

    A Krylov breakdown restarts from a fresh random direction orthogonal to
    the basis, so with ``budget == d`` the whole space is always spanned.
    """
    budget = min(d, 100) if budget is None else min(budget, d)
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(0) if rng is None else rng
    Q = np.zeros((budget, d))
    BQ = np.zeros((budget, d))
    alpha = np.zeros(budget)
    beta = np.zeros(budget)
    q = rng.standard_normal(d)
    Q[0] = q / np.linalg.norm(q)
    for j in range(budget):
        w = np.asarray(B_op(Q[j]), dtype=float)
        BQ[j] = w
        alpha[j] = Q[j] @ w
        w = w - alpha[j] * Q[j]
        if j > 0:
            w -= beta[j - 1] * Q[j - 1]
        for _ in range(2):
            w -= Q[:j + 1].T @ (Q[:j + 1] @ w)
        T = np.diag(alpha[:j + 1]) + np.diag(beta[:j], 1) + np.diag(beta[:j], -1)
        evals, evecs = np.linalg.eigh(T)
        y = evecs[:, 0]
        u = Q[:j + 1].T @ y
        Bu = BQ[:j + 1].T @ y
        nu = np.linalg.norm(u)
        u, Bu = u / nu, Bu / nu
        lam = float(u @ Bu)
        residual = float(np.linalg.norm(Bu - lam * u))
        if j + 1 == budget:
            break
        b = np.linalg.norm(w)
        scale = max(1.0, float(np.max(np.abs(alpha[:j + 1]))))
        broke = b <= 1e-10 * scale
        # after a breakdown every Ritz pair looks converged, so keep spanning
        if residual <= tol and not broke:
            break
        if not broke:
            beta[j] = b
            Q[j + 1] = w / b
        else:
            beta[j] = 0.0
            r = rng.standard_normal(d)
            for _ in range(2):
                r -= Q[:j + 1].T @ (Q[:j + 1] @ r)
            Q[j + 1] = r / np.linalg.norm(r)
    if g is not None and float(g @ u) > 0:
        u, Bu = -u, -Bu
    return EigEstimate(lam, u, residual, Bu, j + 1)


def eig_step_length(c, b, sigma, u_norm=1.0):
    """Positive root of c + a b + sigma a^2 |u|^3 = 0 for c = g^T u <= 0."""
    s3 = sigma * u_norm ** 3
    disc = np.sqrt(b * b - 4.0 * s3 * c)
    if b < 0:
        return float((disc - b) / (2.0 * s3))
    return float(-2.0 * c / (b + disc)) if disc > 0 else 0.0


def eig_step(mc, est):
    if not est.lambda_min_est < 0:
        raise ValueError("eigen step needs a negative curvature estimate")
    u = est.u
    Bu = est.Bu if est.Bu is not None else mc.hv(u)
    a = eig_step_length(float(mc.g @ u), float(u @ Bu), mc.sigma, float(np.linalg.norm(u)))
    return a * u


def so_terminate(grad_norm, lambda_min_est, eps, eps_H):
    return bool(grad_norm <= eps and lambda_min_est >= -eps_H)


class SecondOrderPolicy:
    """Hooks used by the shared driver for the second-order variant."""

    def __init__(self, eps_H, seed=0, tol=1e-8, budget=None):
        if not eps_H > 0:
            raise ValueError("eps_H must be positive")
        self.eps_H = eps_H
        self.tol = tol
        self.budget = budget
        self.rng = np.random.default_rng([seed, 2])
        self.eig_steps = []

    def estimate(self, op, g):
        return estimate_min_eig(op, len(g), self.tol, self.budget, self.rng, g)

    def terminate(self, grad_norm, lam, eps):
        return so_terminate(grad_norm, lam, eps, self.eps_H)

    def step(self, mc, est, cfg):
        g_norm = float(np.linalg.norm(mc.g))
        report = solve_subproblem(mc, cfg.inner, cfg.inner_budget) if g_norm > 0 else None
        if est.lambda_min_est >= 0:
            return report
        u, Bu, sigma = est.u, est.Bu, mc.sigma
        a = eig_step_length(float(mc.g @ u), float(u @ Bu), sigma, float(np.linalg.norm(u)))
        s_e, Bs_e = a * u, a * Bu
        ns = float(np.linalg.norm(s_e))
        curv = float(s_e @ Bs_e) + sigma * ns ** 3
        dec = -(float(mc.g @ s_e) + 0.5 * float(s_e @ Bs_e) + sigma / 3.0 * ns ** 3)
        grad_e = mc.g + Bs_e + sigma * ns * s_e
        used = report is None or dec > report.model_decrease
        self.eig_steps.append({
            "lambda": est.lambda_min_est,
            "stationarity": float(mc.g @ s_e) + curv,
            "curvature": curv,
            "scale": 1.0 + g_norm,
            "decrease": dec,
            "used": used,
        })
        if not used:
            return report
        gn = float(np.linalg.norm(grad_e))
        met = bool(g_norm > 0 and gn <= cfg.inner.threshold(ns, g_norm))
        iters = report.inner_iters if report is not None else 0
        return SubsolverReport(s_e, dec, gn, iters, met, dec)


def run_so(problem, cfg=None, eps_H=None, seed=0, x0=None, callback=None):
    """Driver run with the second-order stop and negative-curvature safeguard."""
    cfg = cfg or ArcConfig()
    if eps_H is None:
        eps_H = cfg.eps ** (2.0 / 3.0)
    policy = SecondOrderPolicy(eps_H, seed)
    trace = drive(problem, cfg, seed, x0=x0, policy=policy, callback=callback)
    trace.eig_steps = policy.eig_steps
    return trace

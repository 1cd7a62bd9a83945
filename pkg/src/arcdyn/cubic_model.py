"""Cubic regularized model and its approximate minimization.

    m(s) = f + g^T s + 1/2 s^T B s + sigma/3 ||s||^3

The minimizer is a Barzilai-Borwein gradient iteration on m with a
nonmonotone (max over the last M values) Armijo backtracking.  Because m is
quadratic-plus-cubic, B(s + t d) = Bs + t Bd, so each inner iteration needs
exactly one product with B regardless of how many backtracks it takes.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

THETA_GRAD = "theta_grad"
MIN_SQUARE = "min_square"
STEP_SCALED = "step_scaled"


@dataclass(frozen=True)
class CubicModel:
    f: float
    g: np.ndarray
    hv: Callable[[np.ndarray], np.ndarray]
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class InnerCriterion:
    kind: str = THETA_GRAD
    theta: float = 0.5

    def __post_init__(self):
        if self.kind not in (THETA_GRAD, MIN_SQUARE, STEP_SCALED):
            raise ValueError(f"unknown inner criterion {self.kind!r}")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")

    def threshold(self, s_norm, g_norm):
        if self.kind == THETA_GRAD:
            return self.theta * g_norm
        if self.kind == MIN_SQUARE:
            return self.theta * min(s_norm * s_norm, g_norm)
        return self.theta * min(1.0, s_norm) * g_norm


@dataclass
class SubsolverReport:
    s: np.ndarray
    model_decrease: float  # m(0) - m(s)
    grad_norm_at_s: float
    inner_iters: int
    criterion_met: bool
    cauchy_decrease: float = 0.0


def _shift(g, s, Bs, sigma):
    """m(s) - m(0)."""
    ns = np.linalg.norm(s)
    return float(g @ s + 0.5 * (s @ Bs) + sigma / 3.0 * ns ** 3)


def model_value(mc, s):
    s = np.asarray(s, dtype=float)
    return mc.f + _shift(mc.g, s, mc.hv(s), mc.sigma)


def model_grad(mc, s):
    s = np.asarray(s, dtype=float)
    return mc.g + mc.hv(s) + mc.sigma * np.linalg.norm(s) * s


def cauchy_length(g_norm, gBg, sigma):
    """Positive root of -|g|^2 + a g^T B g + sigma a^2 |g|^3 = 0."""
    c3 = sigma * g_norm ** 3
    disc = np.sqrt(gBg * gBg + 4.0 * c3 * g_norm * g_norm)
    if gBg >= 0:
        return float(2.0 * g_norm * g_norm / (gBg + disc))
    return float((disc - gBg) / (2.0 * c3))


def cauchy_step(mc):
    g_norm = np.linalg.norm(mc.g)
    if g_norm == 0:
        raise ValueError("Cauchy step undefined at a zero gradient")
    return -cauchy_length(g_norm, float(mc.g @ mc.hv(mc.g)), mc.sigma) * mc.g


def solve_subproblem(mc, crit, budget=500, memory=10, armijo=1e-4, shrink=0.5,
                     lam_bounds=(1e-10, 1e10)):
    """Approximately minimize ``mc`` until ``crit`` holds or ``budget`` products are spent.

    The first iterate is the Cauchy point.  The returned step always has
    m(s) <= m(s_C) < m(0); ``criterion_met`` is set only when the inner
    stopping test also holds at it.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    g, sigma = mc.g, mc.sigma
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0:
        raise ValueError("zero gradient: nothing to minimize along")
    lo, hi = lam_bounds

    Bg = mc.hv(g)
    alpha_c = cauchy_length(g_norm, float(g @ Bg), sigma)
    s = np.zeros_like(g)
    Bs = np.zeros_like(g)
    m = 0.0
    grad = g
    d, Bd = -alpha_c * g, -alpha_c * Bg
    history = [0.0]
    best = None
    m_cauchy = None
    iters = 1
    while True:
        if not np.all(np.isfinite(Bd)):
            raise FloatingPointError("non-finite Hessian product in cubic model")
        slope = float(grad @ d)
        ref = max(history[-memory:])
        t = 1.0
        while True:
            st = s + t * d
            Bst = Bs + t * Bd
            mt = _shift(g, st, Bst, sigma)
            if not np.isfinite(mt):
                if t < 1e-30:
                    raise FloatingPointError("non-finite cubic model value")
            elif mt <= ref + armijo * t * slope:
                break
            t *= shrink
            if t < 1e-30:
                break
        if t < 1e-30:
            break
        grad_t = g + Bst + sigma * np.linalg.norm(st) * st
        ds, dy = st - s, grad_t - grad
        s, Bs, m, grad = st, Bst, mt, grad_t
        history.append(m)
        if m_cauchy is None:
            m_cauchy = m
        if best is None or m < best[1]:
            best = (s, m, grad)

        gn = float(np.linalg.norm(grad))
        if m < 0 and m <= m_cauchy and gn <= crit.threshold(float(np.linalg.norm(s)), g_norm):
            return SubsolverReport(s, -m, gn, iters, True, -m_cauchy)
        if iters >= budget:
            break
        sy = float(ds @ dy)
        lam = min(max(float(ds @ ds) / sy, lo), hi) if sy > 0 else hi
        d = -lam * grad
        Bd = mc.hv(d)
        iters += 1

    if best is None:
        # backtracking never accepted even the Cauchy point: numerical breakdown
        s_c = -alpha_c * g
        m_c = _shift(g, s_c, -alpha_c * Bg, sigma)
        gc = g + (-alpha_c * Bg) + sigma * np.linalg.norm(s_c) * s_c
        return SubsolverReport(s_c, -m_c, float(np.linalg.norm(gc)), iters, False, -m_c)
    s, m, grad = best
    return SubsolverReport(s, -m, float(np.linalg.norm(grad)), iters, False, -m_cauchy)

"""Measurements over finished runs: test loss, classification rate, savings, profiles."""
import math
from dataclasses import dataclass

import numpy as np


def predict(p, x):
    """Labels 1 where sigmoid(a^T x) >= 0.5, ties included."""
    return (p.margins(x) >= 0).astype(float)


def classification_rate(p_test, x):
    return float(np.mean(predict(p_test, x) == p_test.y))


def testing_loss(p_test, x):
    return p_test.f(x)


@dataclass(frozen=True)
class ProfilePoint:
    tau: float
    rho: tuple


def performance_profile(E, taus):
    """Fraction of problems each solver finishes within ``tau`` times the best cost.

    ``E[t, s]`` is the cost of solver s on problem t; ``inf`` marks a failure.
    """
    E = np.asarray(E, dtype=float)
    if E.ndim != 2 or E.size == 0:
        raise ValueError("cost matrix must be problems x solvers")
    if np.any(np.isnan(E)) or np.any(E <= 0):
        raise ValueError("costs must be positive (inf for failures)")
    best = E.min(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        ratios = np.where(np.isfinite(E), E / best, np.inf)
    points = []
    for tau in taus:
        if not tau >= 1:
            raise ValueError("tau must be at least 1")
        rho = tuple(float(v) for v in np.mean(ratios <= tau, axis=0))
        points.append(ProfilePoint(float(tau), rho))
    return points


def savings(ege_ref, ege_cmp):
    """Percent by which the reference is cheaper than the comparison run."""
    if not (ege_ref > 0 and ege_cmp > 0):
        raise ValueError("costs must be positive")
    return 100.0 * (ege_cmp - ege_ref) / ege_cmp


def savings_summary(ref, cmp):
    """Worst, best and mean per-seed savings over paired runs."""
    if len(ref) != len(cmp) or not ref:
        raise ValueError("need the same non-zero number of runs on both sides")
    vals = [savings(a, b) for a, b in zip(ref, cmp)]
    return {"save_w": min(vals), "save_b": max(vals), "save_m": math.fsum(vals) / len(vals)}


def series(trace, field):
    return [getattr(r, field) for r in trace.records]


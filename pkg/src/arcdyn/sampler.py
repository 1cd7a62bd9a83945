"""Hessian sample sizes from a requested accuracy, and uniform index draws.

For components with ||grad^2 phi_i|| <= kappa, a uniform sample D with

    |D| >= ceil( 4 kappa/C (2 kappa/C + 1/3) log(2n / delta_bar) )

gives ||grad^2 f - B_D|| <= C with probability at least 1 - delta_bar
(matrix Bernstein).  The quantity depends on kappa and C only through the
ratio u = kappa / C, which makes every calibration closed-form.
"""
import math
from dataclasses import dataclass

import numpy as np

LEMMA_BOUND = "lemma_bound"
SAFEGUARD_FLOOR = "safeguard_floor"
SAFEGUARD_CAP = "safeguard_cap"
FULL = "full"


@dataclass(frozen=True)
class AccuracySpec:
    C_k: float
    delta_bar: float = 0.2

    def __post_init__(self):
        if not self.C_k > 0:
            raise ValueError("accuracy C_k must be positive")
        if not 0 < self.delta_bar < 1:
            raise ValueError("delta_bar must lie in (0, 1)")


@dataclass(frozen=True)
class SamplePlan:
    size: int
    rationale: str


def bernstein_count(ratio, n, delta_bar):
    """Unrounded 4u(2u + 1/3) log(2n/delta_bar) for u = kappa/C."""
    return 4.0 * ratio * (2.0 * ratio + 1.0 / 3.0) * math.log(2.0 * n / delta_bar)


def ratio_for_count(count, n, delta_bar):
    """The u >= 0 at which ``bernstein_count`` equals ``count``."""
    q = count / math.log(2.0 * n / delta_bar)
    # 8u^2 + (4/3)u - q = 0, positive root written without cancellation
    return 2.0 * q / (4.0 / 3.0 + math.sqrt(16.0 / 9.0 + 32.0 * q))


def sample_size(spec, kappa, n, N):
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    raw = math.ceil(bernstein_count(kappa / spec.C_k, n, spec.delta_bar))
    if raw >= N:
        return SamplePlan(N, FULL)
    return SamplePlan(max(1, raw), LEMMA_BOUND)


def safeguarded_size(spec, rho, n, N):
    """Bernstein count with the constant ``rho`` in place of kappa, clamped to [5%, 10%] of N."""
    lo = max(1, math.ceil(0.05 * N))
    hi = max(lo, math.floor(0.1 * N))
    raw = math.ceil(bernstein_count(rho / spec.C_k, n, spec.delta_bar))
    if raw <= lo:
        return SamplePlan(lo, SAFEGUARD_FLOOR)
    if raw >= hi:
        return SamplePlan(hi, SAFEGUARD_CAP)
    return SamplePlan(raw, LEMMA_BOUND)


def calibrate_C(target_frac, kappa0, n, N, delta_bar):
    """Accuracy C for which ``sample_size`` returns ceil(target_frac * N)."""
    target = math.ceil(target_frac * N)
    if not 0 < target_frac <= 1 or target < 1:
        raise ValueError("target_frac * N must be at least 1")
    if kappa0 <= 0:
        if target == 1:
            return 1.0
        raise ValueError("zero curvature bound: every sample size collapses to 1")
    C = kappa0 / ratio_for_count(target, n, delta_bar)
    spec = AccuracySpec(C, delta_bar)
    # land on the target despite rounding in the ceiling
    for _ in range(64):
        size = sample_size(spec, kappa0, n, N).size
        if size <= target:
            break
        spec = AccuracySpec(spec.C_k * (1 + 1e-13), delta_bar)
    return spec.C_k


def calibrate_rho(C_ref, target_frac, n, N, delta_bar):
    """Constant rho such that the safeguarded count at accuracy ``C_ref`` is ceil(target_frac N)."""
    return C_ref * ratio_for_count(math.ceil(target_frac * N), n, delta_bar)


def delta_bar_for_run(delta, iterations):
    """Per-draw failure probability giving overall success 1 - delta over ``iterations`` draws."""
    if not 0 < delta < 1 or iterations < 1:
        raise ValueError("need delta in (0, 1) and at least one iteration")
    return -math.expm1(math.log1p(-delta) / iterations)


def draw(plan, N, rng):
    """Uniform subset of range(N) without replacement, sorted."""
    if plan.size > N or plan.size < 1:
        raise ValueError("sample size must lie in [1, N]")
    if plan.size == N:
        return np.arange(N)
    return np.sort(rng.choice(N, size=plan.size, replace=False))

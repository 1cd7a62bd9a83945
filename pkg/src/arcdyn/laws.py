"""Invariants every ARC trace must satisfy, checked record by record.

Used by the test-suite and by ``arcdyn run --check``.  Each checker returns a
list of :class:`Violation`; an empty list means the law holds.
"""
import math
from dataclasses import dataclass

from . import arc


@dataclass(frozen=True)
class Violation:
    law: str
    k: int
    detail: str


def _rel_le(a, b, tol=1e-12):
    return a <= b + tol * max(1.0, abs(b))


def sigma_law(trace, cfg):
    out = []
    recs = trace.records
    for r, nxt in zip(recs, recs[1:]):
        if nxt.sigma != r.sigma_next:
            out.append(Violation("sigma_law", r.k, "next record does not start from sigma_next"))
    for r in recs:
        s, s1 = r.sigma, r.sigma_next
        if r.outcome == arc.VERY_SUCCESSFUL:
            ok = max(cfg.sigma_min, cfg.gamma1 * s) <= s1 <= s
        elif r.outcome == arc.SUCCESSFUL:
            ok = s <= s1 <= cfg.gamma2 * s
        elif r.outcome == arc.UNSUCCESSFUL_STEP5:
            ok = cfg.gamma2 * s <= s1 <= cfg.gamma3 * s
        else:
            ok = s1 == s
        if not ok:
            out.append(Violation("sigma_law", r.k, f"{r.outcome}: {s!r} -> {s1!r}"))
        if s < cfg.sigma_min:
            out.append(Violation("sigma_floor", r.k, f"sigma {s!r} below floor"))
    return out


def accuracy_contract(trace, cfg):
    """Accepted steps respect the accuracy in force.

    A step shorter than one needs C_k <= alpha (1 - theta) ||g_k||; a longer
    one needs C_k no coarser than the constant C.  The safeguarded rule pins
    C to the 5% sample size, which can be finer than alpha (1 - theta) ||g_k||,
    so only the short-step half is asserted for it.
    """
    if trace.variant is None or not trace.variant.uses_flag:
        return []
    out = []
    bound = cfg.alpha * (1 - cfg.theta)
    for r in trace.records:
        if r.outcome in (arc.VERY_SUCCESSFUL, arc.SUCCESSFUL) and r.step_norm < 1:
            if not _rel_le(r.C_k, bound * r.grad_norm):
                out.append(Violation("accuracy_contract", r.k,
                                     f"C_k {r.C_k!r} > {bound * r.grad_norm!r} with |s| < 1"))
        if (trace.variant.kind == arc.DYNAMIC and r.step_norm >= 1
                and r.outcome in (arc.VERY_SUCCESSFUL, arc.SUCCESSFUL)):
            if not _rel_le(r.C_k, trace.C):
                out.append(Violation("accuracy_contract", r.k,
                                     f"C_k {r.C_k!r} coarser than C {trace.C!r} with |s| >= 1"))
    return out


def step4_scarcity(trace):
    """At most one accuracy rejection per success-to-success stretch, none if it opens with flag 0."""
    out = []
    count, opening_flag = 0, None
    for r in trace.records:
        if opening_flag is None:
            opening_flag = r.flag
        if r.outcome == arc.UNSUCCESSFUL_STEP4:
            count += 1
            if count > 1 or opening_flag == 0:
                out.append(Violation("step4_scarcity", r.k,
                                     f"rejection #{count} with opening flag {opening_flag}"))
        if r.outcome in (arc.VERY_SUCCESSFUL, arc.SUCCESSFUL):
            count, opening_flag = 0, None
    return out


def f_decrease(trace):
    out = []
    recs = trace.records
    for r, nxt in zip(recs, recs[1:]):
        if r.outcome in (arc.VERY_SUCCESSFUL, arc.SUCCESSFUL) and not nxt.f_value < r.f_value:
            out.append(Violation("f_decrease", r.k, f"{r.f_value!r} -> {nxt.f_value!r}"))
        if r.outcome not in (arc.VERY_SUCCESSFUL, arc.SUCCESSFUL) and nxt.f_value != r.f_value:
            out.append(Violation("f_decrease", r.k, "point moved on a rejected step"))
    return out


def ledger_replay(trace):
    """Cumulative component evaluations rebuilt from per-record counts, exactly."""
    out = []
    N = trace.N
    total = 2 * N
    for r in trace.records:
        total += N * r.f_evals + N * r.grad_evals + r.sample_size * r.hv_products
        if total != r.cum_evals:
            out.append(Violation("ledger_replay", r.k, f"replayed {total}, recorded {r.cum_evals}"))
        if r.cum_EGE != r.cum_evals / N:
            out.append(Violation("ledger_replay", r.k, "EGE differs from evals / N"))
    return out


def sample_law(trace):
    v = trace.variant
    if v is None:
        return []
    out = []
    for r in trace.records:
        if r.sample_size == 0:
            continue
        if v.kind == arc.FULL and r.sample_size != trace.N:
            out.append(Violation("sample_law", r.k, "full variant used a subsample"))
        if v.kind == arc.FIX_P and r.sample_size != min(trace.N, max(1, math.ceil(v.p * trace.N))):
            out.append(Violation("sample_law", r.k, f"size {r.sample_size} != ceil(pN)"))
        if v.kind == arc.SAFEGUARDED and not (
                max(1, math.ceil(0.05 * trace.N)) <= r.sample_size
                <= max(math.ceil(0.05 * trace.N), math.floor(0.1 * trace.N))):
            out.append(Violation("sample_law", r.k, f"size {r.sample_size} outside [5%, 10%]"))
    return out


def check_trace(trace, cfg=None):
    cfg = cfg or arc.ArcConfig()
    return (sigma_law(trace, cfg) + accuracy_contract(trace, cfg) + step4_scarcity(trace)
            + f_decrease(trace) + ledger_replay(trace) + sample_law(trace))

"""ARC outer iteration with a dynamically chosen Hessian accuracy.

One call to :func:`run` executes the state machine

    1  stop if ||g_k|| <= eps
    2  build B_k on a sample sized for the accuracy C_k
    3  approximately minimize the cubic model
    4  if ||s_k|| < 1 while the coarse accuracy C is in force (flag = 1)
       and C > alpha (1 - theta) ||g_k||: reject, tighten C_k, redraw B
    5  ratio test, sigma update, and the accuracy/flag for the next step

and every comparison variant (exact Hessian, fixed accuracy eps, the
previous-step rule, fixed sample fraction, safeguarded dynamic rule).
"""
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import sampler
from .cubic_model import CubicModel, InnerCriterion, solve_subproblem
from .objective import CostLedger

DYNAMIC = "dynamic"
SAFEGUARDED = "dynamic_safeguarded"
FULL = "full"
SUB_EPS = "sub_eps"
KL = "kl"
FIX_P = "fix_p"
VARIANTS = (DYNAMIC, SAFEGUARDED, FULL, SUB_EPS, KL, FIX_P)

VERY_SUCCESSFUL = "very_successful"
SUCCESSFUL = "successful"
UNSUCCESSFUL_STEP5 = "unsuccessful_step5"
UNSUCCESSFUL_STEP4 = "unsuccessful_step4"
TERMINATED = "terminated"

CONVERGED = "converged_first_order"
STAGNATED = "converged_f_stagnation"
ITER_BUDGET = "iter_budget"
INNER_FAILURE = "inner_failure"

RHO_FLOOR = 1e-300


class DegenerateStep(ArithmeticError):
    """Predicted decrease too small to form a ratio."""


@dataclass(frozen=True)
class HessianVariant:
    kind: str = DYNAMIC
    p: Optional[float] = None  # fix_p: sample fraction
    chi: Optional[float] = None  # kl: C_k = chi ||s_{k-1}||, calibrated when None
    rho: Optional[float] = None  # dynamic_safeguarded: curvature constant, calibrated when None
    C_sub: Optional[float] = None  # sub_eps: fixed accuracy, defaults to eps

    def __post_init__(self):
        if self.kind not in VARIANTS:
            raise ValueError(f"unknown variant {self.kind!r}")
        if self.kind == FIX_P and not (self.p is not None and 0 < self.p < 1):
            raise ValueError("fix_p needs a fraction p in (0, 1)")
        if self.chi is not None and not self.chi > 0:
            raise ValueError("chi must be positive")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")

    @property
    def uses_flag(self):
        return self.kind in (DYNAMIC, SAFEGUARDED)


@dataclass(frozen=True)
class ArcConfig:
    sigma0: float = 0.1
    sigma_min: float = 1e-5
    eta1: float = 0.1
    eta2: float = 0.8
    gamma1: float = 0.5
    gamma2: float = 1.5
    gamma3: float = 2.0
    alpha: float = 0.1
    theta: float = 0.5
    eps: float = 1e-3
    C: Optional[float] = None  # coarse accuracy; calibrated to |D_0| = 0.1 N when None
    delta_bar: float = 0.2
    max_iters: int = 500
    f_rel_stop: float = 1e-6
    inner: InnerCriterion = field(default_factory=InnerCriterion)
    inner_budget: int = 500
    variant: HessianVariant = field(default_factory=HessianVariant)
    calib_frac: float = 0.1

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if not 0 <= self.alpha < 2 / 3:
            raise ValueError("alpha must lie in [0, 2/3)")
        if not 0 < self.sigma_min <= self.sigma0:
            raise ValueError("need 0 < sigma_min <= sigma0")
        if not 0 < self.eta1 <= self.eta2 < (2 - 3 * self.alpha) / 2:
            raise ValueError("need 0 < eta1 <= eta2 < (2 - 3 alpha) / 2")
        if not 0 < self.gamma1 < 1 < self.gamma2 < self.gamma3:
            raise ValueError("need 0 < gamma1 < 1 < gamma2 < gamma3")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.C is not None and not self.C > 0:
            raise ValueError("C must be positive")
        if not 0 < self.delta_bar < 1:
            raise ValueError("delta_bar must lie in (0, 1)")
        if self.inner.theta > self.theta:
            raise ValueError("inner theta may not exceed theta")


@dataclass
class ArcState:
    x: np.ndarray
    f: float
    g: np.ndarray
    sigma: float
    C_k: float
    flag: int
    k: int = 0
    sample: Optional[np.ndarray] = None
    op: object = None
    last_step_norm: Optional[float] = None

    @property
    def grad_norm(self):
        return float(np.linalg.norm(self.g))


@dataclass
class IterationRecord:
    k: int
    outcome: str
    sigma: float
    sigma_next: float
    C_k: float
    flag: int
    sample_size: int
    step_norm: float
    grad_norm: float
    f_value: float
    rho: Optional[float]
    cum_EGE: float
    cum_evals: int
    f_evals: int
    grad_evals: int
    hv_products: int
    inner_iters: int
    criterion_met: bool
    model_decrease: float
    lambda_min: Optional[float] = None


@dataclass
class Trace:
    records: list
    status: str
    x_final: np.ndarray
    N: int
    C: Optional[float] = None
    variant: Optional[HessianVariant] = None
    eig_steps: Optional[list] = None

    @property
    def iterations(self):
        return sum(1 for r in self.records if r.outcome != TERMINATED)

    @property
    def final_ege(self):
        return self.records[-1].cum_EGE


def compute_rho(f_x, f_xs, t2_decrease, floor=RHO_FLOOR):
    if not t2_decrease > floor:
        raise DegenerateStep(f"second-order decrease {t2_decrease!r} below {floor}")
    return (f_x - f_xs) / t2_decrease


def update_sigma(sigma, rho, cfg):
    if rho >= cfg.eta2:
        return max(cfg.sigma_min, cfg.gamma1 * sigma)
    if rho >= cfg.eta1:
        return sigma
    return cfg.gamma2 * sigma


def accuracy_for_next(cfg, variant, flag_in, step_norm, grad_norm_next, prev_C):
    """(C_{k+1}, flag) after a successful step of length ``step_norm``."""
    if variant.uses_flag:
        if step_norm >= 1:
            return cfg.C, 1
        return cfg.alpha * (1 - cfg.theta) * grad_norm_next, 0
    if variant.kind == SUB_EPS:
        return prev_C, 0
    if variant.kind == KL:
        return variant.chi * step_norm, 0
    return prev_C, 0


def step4_check(state, step_norm, grad_norm, cfg):
    """True when the step is too short for the coarse accuracy in force."""
    return bool(step_norm < 1 and state.flag == 1
                and state.C_k > cfg.alpha * (1 - cfg.theta) * grad_norm)


def _resolve(cfg, problem, x0):
    """Fill in calibrated constants: C, and rho for the safeguarded rule."""
    v = cfg.variant
    N, n = problem.N, problem.d
    C = cfg.C
    if v.kind == SAFEGUARDED:
        rho = v.rho
        if rho is None:
            C_ref = cfg.alpha * (1 - cfg.theta) * cfg.eps ** (2 / 3)
            rho = sampler.calibrate_rho(C_ref, 0.1, n, N, cfg.delta_bar)
            v = dataclasses.replace(v, rho=rho)
        if C is None:
            C = rho / sampler.ratio_for_count(math.ceil(0.05 * N), n, cfg.delta_bar)
    elif v.kind == SUB_EPS:
        if v.C_sub is None:
            v = dataclasses.replace(v, C_sub=cfg.eps)
    elif C is None and v.kind == DYNAMIC:
        C = sampler.calibrate_C(cfg.calib_frac, problem.kappa_phi(x0), n, N, cfg.delta_bar)
    return dataclasses.replace(cfg, C=C, variant=v)


def _initial_accuracy(cfg):
    v = cfg.variant
    if v.uses_flag:
        return cfg.C, 1
    if v.kind == SUB_EPS:
        return v.C_sub, 0
    return math.nan, 0  # kl starts from a fixed fraction; full/fix_p ignore accuracy


def _plan(cfg, problem, x, C_k):
    v = cfg.variant
    N, n = problem.N, problem.d
    if v.kind == FULL:
        return sampler.SamplePlan(N, sampler.FULL)
    if v.kind == FIX_P:
        return sampler.SamplePlan(min(N, max(1, math.ceil(v.p * N))), sampler.LEMMA_BOUND)
    if v.kind == KL and math.isnan(C_k):
        return sampler.SamplePlan(max(1, math.ceil(cfg.calib_frac * N)), sampler.LEMMA_BOUND)
    if not C_k > 0:
        return sampler.SamplePlan(N, sampler.FULL)
    spec = sampler.AccuracySpec(C_k, cfg.delta_bar)
    if v.kind == SAFEGUARDED:
        return sampler.safeguarded_size(spec, v.rho, n, N)
    return sampler.sample_size(spec, problem.kappa_phi(x), n, N)


def run(problem, cfg=None, seed=0, callback=None):
    """Minimize ``problem`` from the origin; returns the full iteration trace."""
    return drive(problem, cfg or ArcConfig(), seed, callback=callback)


def drive(problem, cfg, seed, x0=None, policy=None, callback=None):
    """Shared state machine; ``policy`` adds the second-order machinery when given."""
    rng = np.random.default_rng(seed)
    ledger = CostLedger(problem.N)
    x = np.zeros(problem.d) if x0 is None else np.array(x0, dtype=float)
    f = problem.f(x, ledger)
    g = problem.grad(x, ledger)
    cfg = _resolve(cfg, problem, x)
    C_k, flag = _initial_accuracy(cfg)
    st = ArcState(x=x, f=f, g=g, sigma=cfg.sigma0, C_k=C_k, flag=flag)
    v = cfg.variant
    records = []
    need_B = True
    fresh = True
    stagnated = False
    est = None
    pending = (0, 0, 0)  # f evals, grad evals, hv products not yet on a record
    status = None

    def record(outcome, sigma_next, step_norm, rho, report, counts):
        fe, ge, hv = counts
        records.append(IterationRecord(
            k=st.k, outcome=outcome, sigma=st.sigma, sigma_next=sigma_next,
            C_k=float(st.C_k), flag=st.flag,
            sample_size=st.op.size if st.op is not None else 0,
            step_norm=step_norm, grad_norm=st.grad_norm, f_value=st.f, rho=rho,
            cum_EGE=ledger.ege, cum_evals=ledger.component_evals,
            f_evals=fe, grad_evals=ge, hv_products=hv,
            inner_iters=report.inner_iters if report else 0,
            criterion_met=bool(report.criterion_met) if report else False,
            model_decrease=report.model_decrease if report else math.nan,
            lambda_min=est.lambda_min_est if est is not None else None))
        if callback is not None:
            callback(records[-1], st)

    while True:
        if policy is not None and need_B:
            st.sample = sampler.draw(_plan(cfg, problem, st.x, st.C_k), problem.N, rng)
            st.op = problem.hessian_operator(st.x, st.sample, ledger)
            need_B = False
            before = st.op.products
            est = policy.estimate(st.op, st.g)
            pending = (pending[0], pending[1], pending[2] + st.op.products - before)
        if fresh:
            if policy is None:
                done = st.grad_norm <= cfg.eps
            else:
                done = policy.terminate(st.grad_norm, est.lambda_min_est, cfg.eps)
            if done:
                status = CONVERGED
                break
            if stagnated:
                status = STAGNATED
                break
        if st.k >= cfg.max_iters:
            status = ITER_BUDGET
            break
        if need_B:
            st.sample = sampler.draw(_plan(cfg, problem, st.x, st.C_k), problem.N, rng)
            st.op = problem.hessian_operator(st.x, st.sample, ledger)
            need_B = False

        mc = CubicModel(st.f, st.g, st.op, st.sigma)
        before = st.op.products
        if policy is None:
            report = solve_subproblem(mc, cfg.inner, cfg.inner_budget)
        else:
            report = policy.step(mc, est, cfg)
        counts = (pending[0], pending[1], pending[2] + st.op.products - before)
        pending = (0, 0, 0)
        s = report.s
        step_norm = float(np.linalg.norm(s))
        if not report.model_decrease > 0 or not np.all(np.isfinite(s)):
            pending = counts
            status = INNER_FAILURE
            break

        if step4_check(st, step_norm, st.grad_norm, cfg):
            record(UNSUCCESSFUL_STEP4, st.sigma, step_norm, None, report, counts)
            st.C_k = cfg.alpha * (1 - cfg.theta) * st.grad_norm
            st.flag = 0
            st.k += 1
            need_B = True
            fresh = False
            continue

        x_trial = st.x + s
        f_trial = problem.f(x_trial, ledger)
        counts = (counts[0] + 1, counts[1], counts[2])
        t2_decrease = report.model_decrease + st.sigma / 3.0 * step_norm ** 3
        try:
            rho = compute_rho(st.f, f_trial, t2_decrease)
        except DegenerateStep:
            rho = None

        if rho is not None and rho >= cfg.eta1:
            outcome = VERY_SUCCESSFUL if rho >= cfg.eta2 else SUCCESSFUL
            sigma_next = update_sigma(st.sigma, rho, cfg)
            g_new = problem.grad(x_trial, ledger)
            counts = (counts[0], counts[1] + 1, counts[2])
            if v.kind == KL and v.chi is None:
                C1 = sampler.calibrate_C(cfg.calib_frac, problem.kappa_phi(x_trial),
                                         problem.d, problem.N, cfg.delta_bar)
                v = dataclasses.replace(v, chi=C1 / step_norm)
                cfg = dataclasses.replace(cfg, variant=v)
            C_next, flag_next = accuracy_for_next(
                cfg, v, st.flag, step_norm, float(np.linalg.norm(g_new)), st.C_k)
            record(outcome, sigma_next, step_norm, rho, report, counts)
            stagnated = abs(f_trial - st.f) <= cfg.f_rel_stop * abs(f_trial)
            st.x, st.f, st.g = x_trial, f_trial, g_new
            st.sigma, st.C_k, st.flag = sigma_next, C_next, flag_next
            st.last_step_norm = step_norm
            need_B = True
            fresh = True
        else:
            sigma_next = cfg.gamma2 * st.sigma
            record(UNSUCCESSFUL_STEP5, sigma_next, step_norm, rho, report, counts)
            st.sigma = sigma_next
            fresh = False
        st.k += 1

    record(TERMINATED, st.sigma, math.nan, None, None, pending)
    return Trace(records=records, status=status, x_final=st.x, N=problem.N, C=cfg.C,
                 variant=v)

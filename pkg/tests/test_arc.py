import dataclasses
import math

import numpy as np
import pytest

from arcdyn import arc, data_io, laws, sampler
from arcdyn.arc import ArcConfig, ArcState, HessianVariant


@pytest.fixture(scope="module")
def split():
    return data_io.gen_synthetic(1200, 100, 15, 1e3, seed=21)


def test_compute_rho_examples():
    assert arc.compute_rho(1.0, 0.8, 0.2) == pytest.approx(1.0)
    assert arc.compute_rho(1.0, 1.0, 0.2) == 0.0
    assert arc.compute_rho(1.0, 0.9, 0.2) == pytest.approx(0.5)
    with pytest.raises(arc.DegenerateStep):
        arc.compute_rho(1.0, 0.9, 1e-301)


@pytest.mark.parametrize("rho,expected", [(0.9, 0.05), (0.5, 0.1), (0.05, 0.15)])
def test_update_sigma_examples(rho, expected):
    assert arc.update_sigma(0.1, rho, ArcConfig()) == pytest.approx(expected)


def test_update_sigma_floor():
    assert arc.update_sigma(1.5e-5, 0.95, ArcConfig()) == 1e-5


def test_accuracy_for_next_examples():
    cfg = ArcConfig(C=0.7)
    dyn = HessianVariant()
    assert arc.accuracy_for_next(cfg, dyn, 1, 1.2, 3.0, 0.7) == (0.7, 1)
    C, flag = arc.accuracy_for_next(cfg, dyn, 1, 0.5, 2.0, 0.7)
    assert C == pytest.approx(0.1) and flag == 0
    assert arc.accuracy_for_next(cfg, HessianVariant(arc.SUB_EPS), 0, 0.5, 2.0, 1e-3) == (1e-3, 0)
    assert arc.accuracy_for_next(cfg, HessianVariant(arc.KL, chi=2.0), 0, 0.25, 2.0, 9.0) == (0.5, 0)


def _state(flag, C_k):
    return ArcState(x=np.zeros(1), f=0.0, g=np.zeros(1), sigma=1.0, C_k=C_k, flag=flag)


def test_step4_check_examples():
    cfg = ArcConfig()
    assert arc.step4_check(_state(1, 1.0), 0.5, 1.0, cfg)  # 1 > 0.05
    assert not arc.step4_check(_state(0, 1.0), 0.5, 1.0, cfg)
    assert not arc.step4_check(_state(1, 1.0), 1.0, 1.0, cfg)
    assert not arc.step4_check(_state(1, 0.05), 0.5, 1.0, cfg)


@pytest.mark.parametrize("kw", [
    {"theta": 1.0}, {"alpha": 0.7}, {"sigma_min": 1.0}, {"eta2": 0.9, "alpha": 0.3},
    {"gamma1": 1.2}, {"gamma3": 1.4}, {"eps": 0.0}, {"C": -1.0}, {"delta_bar": 1.0},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ArcConfig(**kw)


@pytest.mark.parametrize("kw", [{"kind": "bogus"}, {"kind": arc.FIX_P}, {"kind": arc.FIX_P, "p": 1.5},
                                {"kind": arc.KL, "chi": -1.0}])
def test_variant_validation(kw):
    with pytest.raises(ValueError):
        HessianVariant(**kw)


def test_huge_eps_stops_before_any_step(split):
    tr = arc.run(split.train, ArcConfig(eps=1e3))
    assert tr.status == arc.CONVERGED
    assert tr.iterations == 0
    assert [r.outcome for r in tr.records] == [arc.TERMINATED]
    assert tr.final_ege == 2.0


def test_iteration_budget(split):
    tr = arc.run(split.train, ArcConfig(max_iters=3, f_rel_stop=0.0, eps=1e-12))
    assert tr.status == arc.ITER_BUDGET
    assert tr.iterations == 3


def test_separable_full_regression():
    ds, _ = data_io.gen_separable(1000, 20, seed=0)
    tr = arc.run(ds.train, ArcConfig(variant=HessianVariant(arc.FULL)))
    assert tr.status == arc.CONVERGED
    assert tr.iterations <= 100
    dyn = arc.run(ds.train, ArcConfig())
    assert dyn.status == tr.status
    assert laws.check_trace(dyn, ArcConfig()) == []


@pytest.mark.parametrize("variant", [
    HessianVariant(arc.DYNAMIC), HessianVariant(arc.SAFEGUARDED), HessianVariant(arc.FULL),
    HessianVariant(arc.SUB_EPS), HessianVariant(arc.KL), HessianVariant(arc.FIX_P, p=0.05),
])
def test_every_variant_obeys_laws(split, variant):
    cfg = ArcConfig(variant=variant)
    for seed in range(3):
        tr = arc.run(split.train, cfg, seed=seed)
        assert tr.status in (arc.CONVERGED, arc.STAGNATED)
        assert laws.check_trace(tr, cfg) == []


def test_first_iteration_uses_calibrated_fraction(split):
    tr = arc.run(split.train, ArcConfig())
    assert tr.records[0].sample_size == math.ceil(0.1 * split.train.N)
    assert tr.records[0].flag == 1
    assert tr.records[0].C_k == tr.C


def test_kl_bootstrap(split):
    tr = arc.run(split.train, ArcConfig(variant=HessianVariant(arc.KL)))
    assert tr.records[0].sample_size == math.ceil(0.1 * split.train.N)
    chi = tr.variant.chi
    assert chi > 0
    first_ok = next(i for i, r in enumerate(tr.records) if r.outcome.endswith("successful")
                    and not r.outcome.startswith("un"))
    nxt = tr.records[first_ok + 1]
    assert nxt.C_k == pytest.approx(chi * tr.records[first_ok].step_norm, rel=1e-15)
    # chi was calibrated so that this accuracy maps to the 10% sample at x_1
    assert nxt.sample_size == math.ceil(0.1 * split.train.N)


def test_sub_eps_requests_eps(split):
    tr = arc.run(split.train, ArcConfig(variant=HessianVariant(arc.SUB_EPS)))
    assert all(r.C_k == 1e-3 for r in tr.records)


def test_step5_failure_reuses_sample():
    # a steep quartic makes the first long eigen-steps fail the ratio test
    from arcdyn.second_order import run_so
    from arcdyn.testing import SaddleSum
    p = SaddleSum(pairs=5, q=1.0)
    cfg = ArcConfig(variant=HessianVariant(arc.FIX_P, p=0.3))
    seen = []
    tr = run_so(p, cfg, seed=2, callback=lambda rec, st: seen.append((rec.outcome, st.sample)))
    fails = [i for i, (o, _) in enumerate(seen) if o == arc.UNSUCCESSFUL_STEP5]
    assert fails
    for i in fails:
        assert np.array_equal(seen[i][1], seen[i + 1][1])
    assert laws.check_trace(tr, cfg) == []


def test_same_seed_same_trace(split):
    a = arc.run(split.train, ArcConfig(), seed=5)
    b = arc.run(split.train, ArcConfig(), seed=5)
    assert [dataclasses.astuple(r) for r in a.records] == [dataclasses.astuple(r) for r in b.records]


def test_explicit_C_is_used(split):
    tr = arc.run(split.train, ArcConfig(C=0.5))
    assert tr.C == 0.5
    kappa = split.train.kappa_phi(np.zeros(split.train.d))
    expect = sampler.sample_size(sampler.AccuracySpec(0.5, 0.2), kappa, split.train.d, split.train.N)
    assert tr.records[0].sample_size == expect.size


def test_non_finite_hessian_raises():
    class Flat:
        N, d = 4, 2

        def f(self, x, ledger=None):
            if ledger is not None:
                ledger.charge(4)
            return 0.0

        def grad(self, x, ledger=None):
            if ledger is not None:
                ledger.charge(4)
            return np.array([1.0, 0.0])

        def hessian_operator(self, x, D=None, ledger=None):
            from arcdyn.testing import DenseSampleOperator
            return DenseSampleOperator(np.full((2, 2), np.inf), 4, ledger)

        def kappa_phi(self, x):
            return 1.0

    with pytest.raises(FloatingPointError), np.errstate(invalid="ignore"):
        arc.run(Flat(), ArcConfig(variant=HessianVariant(arc.FULL)))

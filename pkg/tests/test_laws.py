import copy
import dataclasses

import pytest

from arcdyn import arc, data_io, laws
from arcdyn.arc import ArcConfig, HessianVariant


@pytest.fixture(scope="module")
def clean():
    ds = data_io.gen_synthetic(800, 50, 10, 1e3, seed=3)
    cfg = ArcConfig()
    tr = arc.run(ds.train, cfg, seed=1)
    assert laws.check_trace(tr, cfg) == []
    return tr, cfg


def _planted(trace, i, **changes):
    t = copy.copy(trace)
    t.records = list(trace.records)
    t.records[i] = dataclasses.replace(t.records[i], **changes)
    return t


def _index(trace, outcomes):
    return next(i for i, r in enumerate(trace.records[:-1]) if r.outcome in outcomes)


def _laws(violations):
    return {v.law for v in violations}


def test_sigma_jump_detected(clean):
    tr, cfg = clean
    i = _index(tr, (arc.VERY_SUCCESSFUL,))
    bad = _planted(tr, i, sigma_next=tr.records[i].sigma * 2)
    assert "sigma_law" in _laws(laws.check_trace(bad, cfg))


def test_sigma_floor_detected(clean):
    tr, cfg = clean
    bad = _planted(tr, 0, sigma=1e-9)
    assert "sigma_floor" in _laws(laws.sigma_law(bad, cfg))


def test_accuracy_contract_detected(clean):
    tr, cfg = clean
    i = _index(tr, (arc.VERY_SUCCESSFUL, arc.SUCCESSFUL))
    r = tr.records[i]
    bad = _planted(tr, i, C_k=10 * (r.grad_norm + tr.C), step_norm=0.5)
    assert _laws(laws.accuracy_contract(bad, cfg)) == {"accuracy_contract"}
    long = _planted(tr, i, C_k=10 * tr.C, step_norm=2.0)
    assert _laws(laws.accuracy_contract(long, cfg)) == {"accuracy_contract"}


def test_double_step4_detected(clean):
    tr, _ = clean
    t = copy.copy(tr)
    r = dataclasses.replace(tr.records[1], outcome=arc.UNSUCCESSFUL_STEP4, flag=1)
    t.records = [tr.records[0], r, r] + list(tr.records[2:])
    assert _laws(laws.step4_scarcity(t)) == {"step4_scarcity"}


def test_step4_after_flag_zero_detected(clean):
    tr, _ = clean
    bad = _planted(tr, 1, outcome=arc.UNSUCCESSFUL_STEP4, flag=0)
    bad.records[0] = dataclasses.replace(bad.records[0], outcome=arc.SUCCESSFUL)
    assert laws.step4_scarcity(bad)


def test_f_increase_detected(clean):
    tr, _ = clean
    i = _index(tr, (arc.VERY_SUCCESSFUL, arc.SUCCESSFUL))
    bad = _planted(tr, i + 1, f_value=tr.records[i].f_value + 1)
    assert _laws(laws.f_decrease(bad)) == {"f_decrease"}


def test_ledger_tamper_detected(clean):
    tr, _ = clean
    bad = _planted(tr, 2, hv_products=tr.records[2].hv_products + 1)
    assert _laws(laws.ledger_replay(bad)) == {"ledger_replay"}


def test_sample_law_detected():
    ds = data_io.gen_synthetic(400, 20, 5, 10.0, seed=0)
    for variant, size in ((HessianVariant(arc.FULL), 7), (HessianVariant(arc.FIX_P, p=0.1), 41),
                          (HessianVariant(arc.SAFEGUARDED), 5)):
        tr = arc.run(ds.train, ArcConfig(variant=variant, max_iters=3))
        assert laws.sample_law(tr) == []
        assert _laws(laws.sample_law(_planted(tr, 0, sample_size=size))) == {"sample_law"}

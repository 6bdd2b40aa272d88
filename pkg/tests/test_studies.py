"""Study drivers: mesh ladder, convergence runs, adaptive cycles."""

import json

import numpy as np
import pytest

from stwave.analysis import read_error_report
from stwave.errors import InvalidDims
from stwave.mesh import build_structured, validate_mesh
from stwave.problems import ExperimentConfig
from stwave.studies import (level_mesh, marked_near_characteristics,
                            run_adaptive, run_convergence_study)

LADDER_H = {1: 1.57e-1, 2: 8.2e-2, 3: 4.0e-2, 4: 2.3e-2, 5: 1.25e-2}


def test_level_mesh_ladder():
    for lv, target in LADDER_H.items():
        m = level_mesh(lv)
        assert abs(m.h - target) <= 0.2 * target
        assert m.omega == (0.1, 0.3)
    for bad in (0, 6):
        with pytest.raises(InvalidDims):
            level_mesh(bad)


@pytest.fixture(scope="module")
def quick_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("quick")
    cfg = ExperimentConfig(example=1, p=(2,), q=(1,), levels=(1, 2),
                           out=out, deterministic=True)
    return out, run_convergence_study(cfg)


def test_study_frozen_values(quick_study):
    _, results = quick_study
    (pair,) = results
    assert pair.p == 2 and pair.q == 1
    assert not pair.failures
    errs = [r.rel_l2_M for r in pair.reports]
    # regression anchors for the first two ladder levels
    assert errs[0] == pytest.approx(0.15306, rel=1e-4)
    assert errs[1] == pytest.approx(0.032432, rel=1e-4)
    fit = pair.rates["rel_l2_M"]
    assert fit.tau == pytest.approx(2.24, abs=0.05)
    # the residual-norm gap to the interpolant decays near order p
    assert pair.rates["triple_norm"].tau >= pair.p - 0.5
    # deterministic mode blanks the timing column
    assert all(r.solve_seconds == 0.0 for r in pair.reports)


def test_study_artifacts(quick_study):
    out, results = quick_study
    reports = read_error_report(out / "errors_ex1_p2_q1.csv")
    assert [r.level for r in reports] == [1, 2]
    assert reports[0].rel_l2_M == results[0].reports[0].rel_l2_M
    rates = (out / "rates.csv").read_text().strip().splitlines()
    assert rates[0] == "p,q,metric,beta,tau,r2"
    assert any(line.startswith("2,1,rel_l2_M,") for line in rates[1:])
    lines = (out / "solves.jsonl").read_text().strip().splitlines()
    records = [json.loads(line) for line in lines]
    assert len(records) == 2
    assert all(r["status"] == "ok" for r in records)
    assert all(r["solve_seconds"] == 0.0 for r in records)
    svg = out / "convergence_ex1_p2_q1.svg"
    assert svg.exists() and svg.stat().st_size > 0


def test_failed_level_recorded(tmp_path):
    # q > p locks; the driver records the failure and keeps going
    cfg = ExperimentConfig(example=1, p=(1,), q=(2,), levels=(1, 2),
                           out=tmp_path, deterministic=True)
    (pair,) = run_convergence_study(cfg)
    assert len(pair.failures) == 2
    assert all("lock" in msg for _, msg in pair.failures)
    assert pair.reports == [] and pair.rates == {}
    records = [json.loads(line) for line in
               (tmp_path / "solves.jsonl").read_text().strip().splitlines()]
    assert all(r["status"] == "failed" for r in records)


@pytest.fixture(scope="module")
def quick_adaptive(tmp_path_factory):
    out = tmp_path_factory.mktemp("adapt")
    cfg = ExperimentConfig(example=2, p=(2,), q=(1,), adaptive=True,
                           cycles=3, theta=0.5, out=out, deterministic=True)
    return out, run_adaptive(cfg)


def test_adaptive_cycles(quick_adaptive):
    out, cycles = quick_adaptive
    assert len(cycles) == 3
    assert cycles[0].ntri == 280  # 10 x 14 diagonal start
    ntris = [c.ntri for c in cycles]
    assert all(a < b for a, b in zip(ntris, ntris[1:]))
    etas = [c.eta_total for c in cycles]
    assert etas[-1] < etas[0]
    assert all(len(c.marked) > 0 for c in cycles)
    # snapshots reload as conforming meshes
    from stwave.mesh import load_mesh
    for cyc in range(3):
        m = load_mesh(out / f"adaptive_mesh_cycle{cyc}.txt")
        assert validate_mesh(m) == pytest.approx(2.0)
    rows = (out / "adaptive.csv").read_text().strip().splitlines()
    assert rows[0] == "cycle,ntri,nvert,h_min,eta_total,rel_l2_M,dual_norm"
    assert len(rows) == 4


def test_marked_near_characteristics_empty():
    mesh = build_structured(4, 4, 2.0)
    assert marked_near_characteristics(mesh, np.array([], dtype=int)) == 0.0

import json
import math
from importlib import resources

import pytest

from asmf.errors import InvariantViolation, ParameterError
from asmf.experiments import (
    CSV_COLUMNS,
    StudyConfig,
    StudyResult,
    compare_budget,
    run_study,
    sweep_intrinsic_dim,
    sweep_m1,
)
from asmf.models import InputDensity, QuadraticModelSpec, exact_H, quadratic_pair, rank_deficient_a

SMALL = dict(d=20, deltas=[1, 5], m1_values=[5, 20], trials=4, seed=3)


def test_sweep_grid_and_ordering():
    res = sweep_m1(StudyConfig(**SMALL))
    assert len(res.cells) == 2 * 2 * 2
    assert [(c.estimator, c.delta, c.m1) for c in res.cells[:4]] == [
        ("SF", 1, 5), ("SF", 1, 20), ("SF", 5, 5), ("SF", 5, 20)]
    res2 = sweep_intrinsic_dim(StudyConfig(**SMALL))
    assert [(c.delta, c.m1) for c in res2.cells[:4]] == [(1, 5), (5, 5), (1, 20), (5, 20)]
    assert sorted(map(id, res.cells)) != sorted(map(id, res2.cells))
    same = {(c.estimator, c.delta, c.m1): c.mean_err for c in res.cells}
    assert all(same[(c.estimator, c.delta, c.m1)] == c.mean_err for c in res2.cells)


def test_cell_contents():
    res = sweep_m1(StudyConfig(**SMALL))
    mf = res.cell("MF", 1, 5)
    assert mf.m2 == 5 * 63
    assert mf.trial_count == 4
    assert mf.min_err <= mf.mean_err <= mf.max_err
    assert mf.seeds == [[3, t] for t in range(4)]
    assert mf.cost == 5 * 1 + (5 + 315) * 1
    assert mf.bound > mf.mean_err
    assert res.cell("SF", 5, 20).m2 == 0
    assert not res.violations()
    res.check_bound_domination()


def test_determinism_across_workers():
    a = sweep_m1(StudyConfig(**SMALL), workers=1)
    b = sweep_m1(StudyConfig(**SMALL), workers=3)
    assert a.to_csv() == b.to_csv()
    assert a.to_json() == b.to_json()


def test_csv_and_json_exports():
    res = sweep_m1(StudyConfig(**SMALL))
    lines = res.to_csv().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + len(res.cells)
    doc = json.loads(res.to_json())
    assert doc["config"]["seed"] == 3
    assert len(doc["cells"][0]["errors"]) == 4


def test_planner_m2_rule_and_warning():
    cfg = StudyConfig(**{**SMALL, "m2_rule": "planner", "m1_values": [10], "estimators": ["MF"]})
    res = run_study(cfg)
    assert res.cells[0].m2 == math.ceil(10 * 23.162391809506)
    with pytest.warns(UserWarning, match="not guaranteed"):
        res = run_study(StudyConfig(**{**SMALL, "m2_rule": 2, "estimators": ["MF"]}))
    assert res.notes


def test_bound_violation_raises():
    res = sweep_m1(StudyConfig(**SMALL))
    res.cells[0].bound = 0.0
    with pytest.raises(InvariantViolation, match="SF delta=1 m1=5"):
        res.check_bound_domination()


def test_custom_and_full_rank_families():
    res = run_study(StudyConfig(family="custom", a=[1.0, 0.5, 0.1], m1_values=[8], trials=3, seed=1))
    assert res.cells[0].delta == pytest.approx(1.26)
    fr = run_study(StudyConfig(family="full-rank", d=30, deltas=[2], m1_values=[8], trials=2, seed=1))
    assert fr.notes


@pytest.mark.parametrize(
    "bad",
    [{"m1_values": []}, {"trials": 0}, {"family": "x"}, {"estimators": ["ZZ"]},
     {"m2_rule": -1}, {"sweep": "r"}, {"family": "custom"}, {"deltas": []}],
)
def test_config_validation(bad):
    with pytest.raises(ParameterError):
        StudyConfig(**{**SMALL, **bad})


def test_config_from_dict_rejects_unknown_keys():
    with pytest.raises(ParameterError, match="unknown"):
        StudyConfig.from_dict({"nope": 1})


def test_shipped_configs_load():
    names = [p.name for p in resources.files("asmf").joinpath("configs").iterdir()]
    for name in ("rank_deficient_fig3.json", "rank_deficient_fig4.json",
                 "full_rank_fig5.json", "full_rank_fig6.json"):
        assert name in names
        cfg = StudyConfig.from_json(resources.files("asmf").joinpath("configs", name))
        assert cfg.m1_values == [10, 100, 1000]
        assert cfg.trials == 100


@pytest.fixture
def budget_pair():
    spec = QuadraticModelSpec(tuple(rank_deficient_a(10, 2)), math.sqrt(0.05), 0.1)
    dens = InputDensity.uniform(10)
    return quadratic_pair(spec, dens, cost_ratio=7.0), exact_H(spec, dens)


def test_compare_budget(budget_pair):
    pair, h = budget_pair
    res = compare_budget(pair, [2, 4], h, trials=5, seed=1)
    assert [c.m1 for c in res.cells] == [6, 4, 12, 8]
    sf, mf = res.cells[0], res.cells[1]
    assert sf.cost == mf.cost == 42
    assert mf.m2 == 10
    assert mf.gamma == 2
    assert isinstance(res, StudyResult)


def test_compare_budget_mismatch_and_empty(budget_pair):
    pair, h = budget_pair
    with pytest.raises(ParameterError, match="mismatch"):
        compare_budget(pair, [3], h, sf_split=2, trials=2)
    assert compare_budget(pair, [0], h, trials=2).cells == []

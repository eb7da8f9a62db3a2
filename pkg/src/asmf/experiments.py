"""Parametric studies on the analytic quadratic family.

Every trial ``t`` of a cell uses the counter stream ``t`` of the base seed, so
a cell's statistics do not depend on trial order or worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import bounds
from .errors import AsmfError, InvariantViolation, ParameterError
from .estimators import estimate_mf, estimate_sf, resolve_workers
from .models import (
    InputDensity,
    QuadraticModelSpec,
    exact_H,
    exact_fidelity_params,
    full_rank_a,
    quadratic_pair,
    rank_deficient_a,
)
from .symmat import intrinsic_dimension, relative_error

DEFAULT_B = math.sqrt(0.05)
DEFAULT_T = 0.1
FAMILIES = ("rank-deficient", "full-rank", "custom")
CSV_COLUMNS = (
    "estimator", "delta", "m1", "m2", "trial_count",
    "mean_err", "min_err", "max_err", "bound", "cost",
)


@dataclass
class StudyConfig:
    """Grid definition for a sweep over intrinsic dimension and ``m1``.

    ``m2_rule`` is a fixed ratio ``m2 / m1`` or the string ``"planner"``
    (smallest admissible ratio, rounded up).
    """

    family: str = "rank-deficient"
    d: int = 100
    deltas: list = field(default_factory=lambda: [1, 10, 100])
    m1_values: list = field(default_factory=lambda: [10, 100, 1000])
    m2_rule: object = 63
    trials: int = 100
    seed: int = 0
    estimators: list = field(default_factory=lambda: ["SF", "MF"])
    b: float = DEFAULT_B
    T: float = DEFAULT_T
    a: Optional[list] = None
    cost_ratio: float = 1.0
    sweep: str = "m1"
    name: str = "study"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if not self.m1_values:
            raise ParameterError("m1_values must not be empty")
        if any(int(m) < 1 for m in self.m1_values):
            raise ParameterError("every m1 must be >= 1")
        if self.family == "custom":
            if self.a is None:
                raise ParameterError("custom family requires the vector a")
            self.d = len(self.a)
        elif not self.deltas:
            raise ParameterError("deltas must not be empty")
        if self.sweep not in ("m1", "delta"):
            raise ParameterError(f"sweep must be 'm1' or 'delta', got {self.sweep!r}")
        bad = [k for k in self.estimators if k not in ("SF", "MF")]
        if bad:
            raise ParameterError(f"unknown estimators {bad}")
        if not (self.m2_rule == "planner" or (isinstance(self.m2_rule, (int, float)) and self.m2_rule > 0)):
            raise ParameterError("m2_rule must be a positive ratio or 'planner'")

    @classmethod
    def from_dict(cls, obj):
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ParameterError(f"unknown study config keys: {sorted(extra)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ParameterError(str(exc)) from exc

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)

    def model_specs(self):
        """``(delta_label, spec)`` per grid point."""
        if self.family == "custom":
            spec = QuadraticModelSpec(tuple(self.a), self.b, self.T)
            return [(exact_fidelity_params(spec).delta_H, spec)]
        out = []
        for delta in self.deltas:
            if self.family == "rank-deficient":
                if float(delta) != int(delta):
                    raise ParameterError("rank-deficient deltas must be integers")
                a = rank_deficient_a(self.d, int(delta))
            else:
                a = full_rank_a(self.d, float(delta))
            out.append((delta, QuadraticModelSpec(tuple(a), self.b, self.T)))
        return out

    def m2_for(self, m1, params):
        if self.m2_rule == "planner":
            return math.ceil(m1 * bounds.min_m2_ratio(params.theta, params.beta))
        return max(1, int(round(m1 * float(self.m2_rule))))


@dataclass
class StudyCell:
    estimator: str
    delta: float
    m1: int
    m2: int
    trial_count: int
    mean_err: float
    min_err: float
    max_err: float
    bound: Optional[float]
    cost: float
    seeds: list
    errors: list = field(default_factory=list, repr=False)
    diagnostic: Optional[str] = None
    gamma: Optional[int] = None

    def row(self):
        return {
            "estimator": self.estimator,
            "delta": self.delta,
            "m1": self.m1,
            "m2": self.m2,
            "trial_count": self.trial_count,
            "mean_err": self.mean_err,
            "min_err": self.min_err,
            "max_err": self.max_err,
            "bound": self.bound,
            "cost": self.cost,
        }

    @property
    def dominated(self):
        if self.bound is None or self.diagnostic is not None:
            return True
        return self.mean_err <= self.bound


@dataclass
class StudyResult:
    cells: list
    config: Optional[dict] = None
    notes: list = field(default_factory=list)

    def cell(self, estimator, delta=None, m1=None):
        for c in self.cells:
            if c.estimator == estimator and (delta is None or c.delta == delta) and (m1 is None or c.m1 == m1):
                return c
        raise KeyError((estimator, delta, m1))

    def violations(self):
        return [c for c in self.cells if not c.dominated]

    def check_bound_domination(self):
        bad = self.violations()
        if bad:
            c = bad[0]
            raise InvariantViolation(
                f"{len(bad)} cell(s) exceed the theoretical bound; first: "
                f"{c.estimator} delta={c.delta} m1={c.m1}: mean {c.mean_err:.4g} > bound {c.bound:.4g}"
            )

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in self.cells:
            row = c.row()
            w.writerow(["" if row[k] is None else _fmt(row[k]) for k in CSV_COLUMNS])
        return buf.getvalue()

    def to_dict(self):
        cells = []
        for c in self.cells:
            item = c.row()
            item["seeds"] = c.seeds
            item["errors"] = c.errors
            if c.diagnostic:
                item["diagnostic"] = c.diagnostic
            if c.gamma is not None:
                item["gamma"] = c.gamma
            cells.append(item)
        return {"config": self.config, "notes": self.notes, "cells": cells}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(type(o))


# running -----------------------------------------------------------------


def _run_trials(run_one, trials, workers):
    if workers == 1:
        return [run_one(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_one, range(trials)))


def _make_cell(kind, delta, m1, m2, errs, bound, cost, seed, trials, diagnostic=None, gamma=None):
    seeds = [[seed, t] for t in range(trials)]
    if diagnostic is not None:
        nan = float("nan")
        return StudyCell(kind, delta, m1, m2, 0, nan, nan, nan, bound, cost, seeds, [], diagnostic, gamma)
    arr = np.asarray(errs)
    return StudyCell(
        kind, delta, m1, m2, len(errs), float(arr.mean()), float(arr.min()), float(arr.max()),
        bound, cost, seeds, [float(e) for e in errs], None, gamma,
    )


def run_cell(pair, h_ref, kind, m1, m2, trials, seed, workers=1):
    """Relative errors of ``trials`` independent estimates against ``h_ref``."""

    def one(t):
        if kind == "MF":
            est = estimate_mf(pair, m1, m2, seed, stream=t, workers=1)
        else:
            est = estimate_sf(pair.hi, m1, seed, stream=t, workers=1)
        return relative_error(h_ref, est.matrix)

    return _run_trials(one, trials, workers)


def _run_grid(cfg, workers):
    workers = resolve_workers(workers)
    cells, notes = [], []
    lo_cost = 1.0
    for delta, spec in cfg.model_specs():
        density = InputDensity.uniform(spec.dim)
        params = exact_fidelity_params(spec, density)
        pair = quadratic_pair(spec, density, cost_ratio=cfg.cost_ratio)
        h = exact_H(spec, density)
        for m1 in (int(m) for m in cfg.m1_values):
            for kind in cfg.estimators:
                if kind == "MF":
                    m2 = cfg.m2_for(m1, params)
                    if params.theta > 0:
                        need = bounds.min_m2_ratio(params.theta, params.beta)
                        if m2 < need * m1:
                            msg = f"m2={m2} < {need:.4g} m1 for delta={delta}, m1={m1}: MF bound not guaranteed"
                            warnings.warn(msg)
                            notes.append(msg)
                        bound = bounds.mf_relative_overlay(params, m1, m2)
                    else:
                        bound = None
                    cost = m1 * cfg.cost_ratio + (m1 + m2) * lo_cost
                else:
                    m2 = 0
                    bound = bounds.sf_relative_overlay(params, m1)
                    cost = m1 * cfg.cost_ratio
                try:
                    errs = run_cell(pair, h, kind, m1, m2, cfg.trials, cfg.seed, workers)
                    cells.append(_make_cell(kind, delta, m1, m2, errs, bound, cost, cfg.seed, cfg.trials))
                except AsmfError as exc:
                    cells.append(_make_cell(kind, delta, m1, m2, None, bound, cost, cfg.seed,
                                            cfg.trials, diagnostic=str(exc)))
    return cells, notes


_FULL_RANK_NOTE = (
    "reference values quoted for 'delta_H = 1' in the full-rank study are "
    "attributed to the smallest grid point; the full-rank grid starts at 2"
)


def sweep_m1(cfg, workers=None):
    """Error versus ``m1`` for each intrinsic dimension (rows grouped by delta)."""
    cells, notes = _run_grid(cfg, workers)
    cells.sort(key=lambda c: (cfg.estimators.index(c.estimator), _delta_key(cfg, c.delta), c.m1))
    if cfg.family == "full-rank":
        notes.append(_FULL_RANK_NOTE)
    return StudyResult(cells, cfg.to_dict(), notes)


def sweep_intrinsic_dim(cfg, workers=None):
    """Error versus intrinsic dimension for each ``m1`` (rows grouped by m1)."""
    cells, notes = _run_grid(cfg, workers)
    cells.sort(key=lambda c: (cfg.estimators.index(c.estimator), c.m1, _delta_key(cfg, c.delta)))
    if cfg.family == "full-rank":
        notes.append(_FULL_RANK_NOTE)
    return StudyResult(cells, cfg.to_dict(), notes)


def run_study(cfg, workers=None):
    """Dispatch on ``cfg.sweep``."""
    if cfg.sweep == "delta":
        return sweep_intrinsic_dim(cfg, workers)
    return sweep_m1(cfg, workers)


def _delta_key(cfg, delta):
    if cfg.family == "custom":
        return 0
    return list(cfg.deltas).index(delta)


def compare_budget(pair, budgets, reference, sf_split=3, mf_split=(2, 5), trials=100, seed=0,
                   workers=None):
    """Matched-cost SF/MF comparison.

    For cost coefficient ``gamma`` the SF estimator uses ``sf_split * gamma``
    samples; the MF estimator ``mf_split[0] * gamma`` paired and
    ``mf_split[1] * gamma`` extra samples. Costs are in ``cost_weight`` units
    and must agree within one low-fidelity evaluation.
    """
    workers = resolve_workers(workers)
    hi_c, lo_c = pair.hi.cost_weight, pair.lo.cost_weight
    a1, a2 = mf_split
    for gamma in budgets:
        sf_cost = sf_split * gamma * hi_c
        mf_cost = a1 * gamma * hi_c + (a1 + a2) * gamma * lo_c
        if abs(sf_cost - mf_cost) > lo_c * (1 + 1e-12):
            raise ParameterError(
                f"budget mismatch at gamma={gamma}: SF cost {sf_cost:g} vs MF cost {mf_cost:g}"
            )
    try:
        delta = intrinsic_dimension(reference)
    except AsmfError:
        delta = float("nan")
    cells = []
    for gamma in budgets:
        if gamma <= 0:
            continue
        m1_sf, m1_mf, m2_mf = sf_split * gamma, a1 * gamma, a2 * gamma
        errs = run_cell(pair, reference, "SF", m1_sf, 0, trials, seed, workers)
        cells.append(_make_cell("SF", delta, m1_sf, 0, errs, None, m1_sf * hi_c, seed, trials, gamma=gamma))
        errs = run_cell(pair, reference, "MF", m1_mf, m2_mf, trials, seed, workers)
        cost = m1_mf * hi_c + (m1_mf + m2_mf) * lo_c
        cells.append(_make_cell("MF", delta, m1_mf, m2_mf, errs, None, cost, seed, trials, gamma=gamma))
    config = {
        "budgets": list(budgets), "sf_split": sf_split, "mf_split": list(mf_split),
        "trials": trials, "seed": seed, "cost_ratio": pair.cost_ratio,
    }
    return StudyResult(cells, config)

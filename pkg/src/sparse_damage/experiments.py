"""Synthetic measurements, the localization success metric, and sweeps.

Element ids are 0-based in memory. Scenario files, CSV tables and the CLI
use 1-based element labels, converted at the (de)serialization boundary.

Monte Carlo streams are Philox generators seeded from
``SeedSequence(seed, spawn_key=(method_index, m, level_micro, realization))``
so every cell and realization is independent of scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ModelError, NumericalError
from .fem_truss import TrussModel
from .modal import ModalData, model_modes
from .sensitivity import SensitivitySystem, feature_residual, jacobian_from_modes
from .sparse_solvers import DEFAULT_TAU_ABS, DEFAULT_TAU_REL, support
from .updating import METHODS, UpdateConfig, UpdateResult, run_update, solve_step

EVALUATIONS = ("one_shot", "iterated")
RNG_NAME = "numpy.random.Philox"


@dataclass(frozen=True)
class DamageScenario:
    """Stiffness losses on a few elements: ``damaged`` holds (id, severity)."""

    damaged: tuple[tuple[int, float], ...]
    label: str = ""

    def __post_init__(self) -> None:
        pairs = tuple((int(e), float(s)) for e, s in self.damaged)
        object.__setattr__(self, "damaged", pairs)
        ids = [e for e, _ in pairs]
        if len(set(ids)) != len(ids):
            raise ModelError("duplicate element in scenario")
        for e, s in pairs:
            if e < 0:
                raise ModelError(f"invalid element id {e}")
            if not 0.0 < s < 1.0:
                raise ModelError(f"severity must be in (0, 1), got {s}")

    @property
    def element_ids(self) -> frozenset[int]:
        return frozenset(e for e, _ in self.damaged)

    def check(self, model: TrussModel) -> None:
        for e in self.element_ids:
            if e >= model.n_elements:
                raise ModelError(f"scenario element {e + 1} not in model ({model.n_elements} elements)")

    def theta(self, model: TrussModel) -> NDArray[np.float64]:
        """Stiffness multipliers of the damaged structure."""
        self.check(model)
        t = np.ones(model.n_elements)
        for e, s in self.damaged:
            t[e] = 1.0 - s
        return t

    def change(self, model: TrussModel) -> NDArray[np.float64]:
        """True parameter change theta_truth - 1."""
        return self.theta(model) - 1.0

    def to_dict(self) -> dict[str, Any]:
        return {"damaged": [{"element": e + 1, "severity": s} for e, s in self.damaged],
                "label": self.label}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "DamageScenario":
        try:
            pairs = [(int(d["element"]) - 1, float(d["severity"])) for d in doc["damaged"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed scenario: {exc}") from exc
        return cls(tuple(pairs), str(doc.get("label", "")))


def canonical_scenario(severity: float = 0.2) -> DamageScenario:
    """Equal damage on elements 2 and 18 (1-based) of the canonical truss."""
    return DamageScenario(((1, severity), (17, severity)), f"bars 2 and 18, {severity:g}")


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative frequency noise, Uniform(-level, +level) percent per mode."""

    level_percent: float = 0.0

    def __post_init__(self) -> None:
        if not (self.level_percent >= 0 and math.isfinite(self.level_percent)):
            raise ModelError("noise level must be a finite nonnegative percentage")


def _perturb(f_exact: NDArray[np.float64], noise: NoiseSpec,
             stream: np.random.Generator | None) -> NDArray[np.float64]:
    level = noise.level_percent
    if level == 0:
        return f_exact.copy()
    if stream is None:
        raise ModelError("a random stream is required for nonzero noise")
    u = stream.uniform(-level, level, size=f_exact.size)
    f = f_exact * (1.0 + u / 100.0)
    # rounding can push |f/f_e - 1| past the bound by an ulp or so
    assert np.all(np.abs(f / f_exact - 1.0) <= level / 100.0 * (1 + 1e-12)), "noise bound violated"
    return f


def simulate_measurement(model: TrussModel, scenario: DamageScenario, m: int,
                         noise: NoiseSpec, stream: np.random.Generator | None = None) -> NDArray[np.float64]:
    """The m lowest frequencies of the damaged model with noise applied (Hz)."""
    if not 1 <= m <= model.n_dof:
        raise ModelError(f"m must be in [1, {model.n_dof}]")
    f_exact = model_modes(model, scenario.theta(model)).frequencies[:m]
    return _perturb(f_exact, noise, stream)


def is_success(x, scenario: DamageScenario, m: int,
               tau_rel: float = DEFAULT_TAU_REL, tau_abs: float = DEFAULT_TAU_ABS) -> bool:
    """Support contains every damaged element and has fewer than m entries."""
    s = set(support(x, tau_rel, tau_abs))
    return scenario.element_ids <= s and len(s) < m


def cell_stream(seed: int, method: str, m: int, level: float, realization: int) -> np.random.Generator:
    """Independent generator for one realization of one sweep cell."""
    key = (METHODS.index(method), int(m), int(round(level * 1e6)), int(realization))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass(frozen=True)
class MonteCarloConfig:
    """Sweep definition. ``noise_assumed=None`` gives the L1 bound the true level."""

    scenario: DamageScenario = field(default_factory=canonical_scenario)
    noise_levels: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0)
    freq_counts: tuple[int, ...] = (9, 10, 11, 12)
    methods: tuple[str, ...] = ("l1_ineq", "lp_irls")
    p: float = 0.5
    realizations: int = 1000
    seed: int = 0
    tau_rel: float = DEFAULT_TAU_REL
    tau_abs: float = DEFAULT_TAU_ABS
    noise_assumed: float | None = None
    evaluate: str = "one_shot"

    def __post_init__(self) -> None:
        for name in ("noise_levels", "freq_counts", "methods"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.realizations < 1:
            raise ModelError("realizations must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ModelError("seed must be an unsigned 64-bit integer")
        if not self.methods or not self.freq_counts or not self.noise_levels:
            raise ModelError("methods, freq_counts and noise_levels must be non-empty")
        for meth in self.methods:
            if meth not in METHODS:
                raise ModelError(f"unknown method {meth!r}")
        for lvl in self.noise_levels:
            NoiseSpec(lvl)
        if any(int(m) < 1 for m in self.freq_counts):
            raise ModelError("frequency counts must be >= 1")
        if self.evaluate not in EVALUATIONS:
            raise ModelError(f"evaluate must be one of {EVALUATIONS}")

    def update_config(self, method: str, m: int, level: float) -> UpdateConfig:
        assumed = level if self.noise_assumed is None else self.noise_assumed
        return UpdateConfig(method=method, m=int(m), p=self.p, noise_assumed=assumed,
                            tau_rel=self.tau_rel, tau_abs=self.tau_abs)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario.to_dict(),
            "noise_levels": list(self.noise_levels),
            "freq_counts": list(self.freq_counts),
            "methods": list(self.methods),
            "p": self.p,
            "realizations": self.realizations,
            "seed": self.seed,
            "tau_rel": self.tau_rel,
            "tau_abs": self.tau_abs,
            "noise_assumed": self.noise_assumed,
            "evaluate": self.evaluate,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "MonteCarloConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ModelError(f"unknown sweep config keys: {sorted(extra)}")
        kw = dict(doc)
        if "scenario" in kw:
            kw["scenario"] = DamageScenario.from_dict(kw["scenario"])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ModelError(f"malformed sweep config: {exc}") from exc


@dataclass(frozen=True)
class CellResult:
    method: str
    m: int
    noise_pct: float
    successes: int
    failures: int  # solver errors, counted as non-success
    realizations: int

    @property
    def rate(self) -> float:
        return self.successes / self.realizations


@dataclass(frozen=True)
class ExperimentReport:
    """Success counts per (method, m, noise level) plus provenance.

    ``runtime_s`` is kept out of :meth:`to_dict` so reports from the same
    config and seed serialize identically.
    """

    config: MonteCarloConfig
    cells: tuple[CellResult, ...]
    runtime_s: float = 0.0

    def rate(self, method: str, m: int, level: float) -> float:
        for c in self.cells:
            if c.method == method and c.m == m and c.noise_pct == level:
                return c.rate
        raise KeyError((method, m, level))

    @property
    def success_rate(self) -> dict[tuple[str, int, float], float]:
        return {(c.method, c.m, c.noise_pct): c.rate for c in self.cells}

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "rng": {
                "generator": RNG_NAME,
                "seeding": "SeedSequence(seed, spawn_key=(method_index, m, round(noise_pct*1e6), realization))",
                "method_index": {meth: METHODS.index(meth) for meth in self.config.methods},
            },
            "epsilon_rule": ("oracle: noise_pct/100*sqrt(m)" if self.config.noise_assumed is None
                             else f"assumed: {self.config.noise_assumed}/100*sqrt(m)"),
            "cells": [
                {"method": c.method, "m": c.m, "noise_pct": c.noise_pct, "successes": c.successes,
                 "failures": c.failures, "realizations": c.realizations, "rate": c.rate}
                for c in self.cells
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["method", "m", "noise_pct", "successes", "realizations", "rate"])
        for c in self.cells:
            w.writerow([c.method, c.m, repr(c.noise_pct), c.successes, c.realizations, repr(c.rate)])
        return buf.getvalue()


def _one_shot_change(model: TrussModel, nominal: ModalData, A: NDArray[np.float64],
                     f_meas: NDArray[np.float64], cfg: UpdateConfig) -> NDArray[np.float64]:
    # run_update's first iteration, reusing the nominal modal solve and Jacobian
    b = feature_residual(f_meas, nominal, cfg.m)
    if np.max(np.abs(b)) < cfg.residual_tol:
        return np.zeros(model.n_elements)
    sol = solve_step(SensitivitySystem(A, b, np.ones(model.n_elements)), cfg)
    return np.maximum(1.0 + sol.x, cfg.theta_floor) - 1.0


def _run_cell(model: TrussModel, config: MonteCarloConfig, method: str, m: int,
              level: float, f_truth: NDArray[np.float64], nominal: ModalData) -> CellResult:
    cfg = config.update_config(method, m, level)
    A = jacobian_from_modes(model, nominal, m)
    noise = NoiseSpec(level)
    successes = failures = 0
    for r in range(config.realizations):
        f_meas = _perturb(f_truth[:m], noise, cell_stream(config.seed, method, m, level, r))
        try:
            if config.evaluate == "one_shot":
                change = _one_shot_change(model, nominal, A, f_meas, cfg)
            else:
                change = run_update(model, f_meas, cfg).theta_final - 1.0
        except (ModelError, NumericalError):
            failures += 1
            continue
        successes += is_success(change, config.scenario, m, config.tau_rel, config.tau_abs)
    return CellResult(method, int(m), float(level), successes, failures, config.realizations)


def _run_cell_task(args):
    return _run_cell(*args)


def run_monte_carlo(model: TrussModel, config: MonteCarloConfig, workers: int = 1) -> ExperimentReport:
    """Success rate of each (method, m, noise level) cell.

    Cells are independent; with ``workers > 1`` they run in separate
    processes and are collected in config order, so the report does not
    depend on the worker count.
    """
    config.scenario.check(model)
    if max(config.freq_counts) > model.n_dof:
        raise ModelError(f"frequency count exceeds the model's {model.n_dof} modes")
    start = time.perf_counter()
    nominal = model_modes(model)
    f_truth = model_modes(model, config.scenario.theta(model)).frequencies
    tasks = [(model, config, meth, int(m), float(lvl), f_truth, nominal)
             for meth in config.methods for m in config.freq_counts for lvl in config.noise_levels]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell_task, tasks))
    else:
        cells = [_run_cell(*t) for t in tasks]
    return ExperimentReport(config, tuple(cells), time.perf_counter() - start)


@dataclass(frozen=True)
class DamageStudy:
    """Per-iteration damage estimates for an errorless measurement."""

    scenario: DamageScenario
    m: int
    method: str
    result: UpdateResult
    truth_damage: NDArray[np.float64]

    def rows(self) -> list[tuple[int, int, float]]:
        """(iteration, 1-based element, damage estimate) for every iteration."""
        return [(rec.iteration, e + 1, float(d))
                for rec in self.result.per_iteration for e, d in enumerate(rec.damage)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["iteration", "element", "damage_estimate"])
        for it, e, d in self.rows():
            w.writerow([it, e, repr(d)])
        return buf.getvalue()

    def to_dict(self) -> dict[str, Any]:
        res = self.result
        return {
            "scenario": self.scenario.to_dict(),
            "m": self.m,
            "method": self.method,
            "converged": res.converged,
            "iterations": [
                {"iteration": r.iteration, "damage": r.damage.tolist(),
                 "support": sorted(e + 1 for e in r.support),
                 "residual_before": r.residual_before, "residual_after": r.residual_after}
                for r in res.per_iteration
            ],
            "final_damage": res.damage_estimates.tolist(),
            "support_changed_after_first": res.support_changed_after_first,
            "truth_damage": self.truth_damage.tolist(),
        }


def run_damage_study(model: TrussModel, scenario: DamageScenario, m: int = 9,
                     method: str = "l1_eq", max_iterations: int = 20,
                     config: UpdateConfig | None = None) -> DamageStudy:
    """Iterated identification from the exact frequencies of ``scenario``."""
    cfg = config or UpdateConfig()
    cfg = replace(cfg, method=method, m=m, max_iterations=max_iterations)
    if method == "l1_ineq" and cfg.epsilon is None and cfg.noise_assumed is None:
        cfg = replace(cfg, epsilon=0.0)
    f_meas = simulate_measurement(model, scenario, m, NoiseSpec(0.0))
    result = run_update(model, f_meas, cfg)
    return DamageStudy(scenario, m, method, result, 1.0 - scenario.theta(model))


def load_json(source: str | Path) -> Any:
    try:
        return json.loads(Path(source).read_text())
    except OSError as exc:
        raise ModelError(f"cannot read {source}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelError(f"{source}: invalid JSON: {exc}") from exc


def load_scenario(source: str | Path | Mapping[str, Any]) -> DamageScenario:
    doc = source if isinstance(source, Mapping) else load_json(source)
    return DamageScenario.from_dict(doc)


def load_sweep(source: str | Path | Mapping[str, Any]) -> MonteCarloConfig:
    doc = source if isinstance(source, Mapping) else load_json(source)
    if not isinstance(doc, Mapping):
        raise ModelError("sweep config must be a JSON object")
    return MonteCarloConfig.from_dict(doc)


def mean_rate_gap(report: ExperimentReport, a: str, b: str) -> float:
    """Mean |rate_a - rate_b| over the (m, level) cells both methods share."""
    ra = {(c.m, c.noise_pct): c.rate for c in report.cells if c.method == a}
    rb = {(c.m, c.noise_pct): c.rate for c in report.cells if c.method == b}
    keys: Sequence = sorted(set(ra) & set(rb))
    if not keys:
        raise ModelError(f"no shared cells for {a} and {b}")
    return float(np.mean([abs(ra[k] - rb[k]) for k in keys]))

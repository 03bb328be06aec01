"""Iterative sensitivity-based model updating.

Each iteration linearizes at the current theta, solves the sparse problem
for the parameter change, and applies it additively (clamped at
``theta_floor``). Damage is reported as ``1 - theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from .errors import ModelError, NumericalError
from .fem_truss import TrussModel, check_theta
from .modal import model_modes
from .sensitivity import SensitivitySystem, feature_residual, jacobian_from_modes
from .sparse_solvers import (
    DEFAULT_TAU_ABS,
    DEFAULT_TAU_REL,
    IRLSOptions,
    SparseProblem,
    SparseSolution,
    solve_l0,
    solve_l1_eq,
    solve_l1_ineq,
    solve_lp_irls,
    support,
)

METHODS = ("l0", "l1_eq", "l1_ineq", "lp_irls")


@dataclass(frozen=True)
class UpdateConfig:
    """Settings for :func:`run_update`.

    For ``l1_ineq`` the residual bound is ``epsilon`` when given, otherwise
    ``noise_assumed / 100 * sqrt(m)`` (uniform multiplicative noise of at
    most ``noise_assumed`` percent per frequency). A zero bound falls back
    to the equality-constrained L1 solve.
    """

    method: str = "l1_eq"
    m: int = 9
    epsilon: float | None = None
    noise_assumed: float | None = None
    p: float = 0.5
    max_iterations: int = 20
    step_tol: float = 1e-6
    residual_tol: float = 1e-8
    theta_floor: float = 0.05
    sign_constraint: str = "none"
    penalize: str = "total"
    tau_rel: float = DEFAULT_TAU_REL
    tau_abs: float = DEFAULT_TAU_ABS
    irls: IRLSOptions = field(default_factory=IRLSOptions)

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ModelError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.m < 1:
            raise ModelError("m must be >= 1")
        if self.max_iterations < 1:
            raise ModelError("max_iterations must be >= 1")
        if not 0 < self.theta_floor < 1:
            raise ModelError("theta_floor must be in (0, 1)")
        if self.epsilon is not None and self.epsilon < 0:
            raise ModelError("epsilon must be nonnegative")
        if self.noise_assumed is not None and self.noise_assumed < 0:
            raise ModelError("noise_assumed must be nonnegative")
        if self.penalize not in ("total", "step"):
            raise ModelError("penalize must be 'total' or 'step'")
        if self.method == "lp_irls" and not 0 < self.p < 1:
            raise ModelError("p must be in (0, 1)")

    def residual_bound(self) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        if self.noise_assumed is not None:
            return self.noise_assumed / 100.0 * math.sqrt(self.m)
        raise ModelError("l1_ineq needs epsilon or noise_assumed")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    x: NDArray[np.float64]  # parameter change applied this iteration
    theta: NDArray[np.float64]  # theta after the update
    support: frozenset[int]  # nonzeros of the cumulative change theta - theta_0
    step_support: frozenset[int]  # nonzeros of x alone
    residual_before: float  # ||b||_2 at the linearization point
    residual_after: float  # ||b||_2 at the updated theta
    solver_converged: bool

    @property
    def damage(self) -> NDArray[np.float64]:
        return 1.0 - self.theta


@dataclass(frozen=True)
class UpdateResult:
    theta_final: NDArray[np.float64]
    per_iteration: tuple[IterationRecord, ...]
    converged: bool

    @property
    def damage_estimates(self) -> NDArray[np.float64]:
        return 1.0 - self.theta_final

    @property
    def iterations_used(self) -> int:
        return len(self.per_iteration)

    @property
    def support_changed_after_first(self) -> bool:
        if not self.per_iteration:
            return False
        first = self.per_iteration[0].support
        return any(r.support != first for r in self.per_iteration[1:])

    @property
    def final_support(self) -> frozenset[int]:
        return self.per_iteration[-1].support if self.per_iteration else frozenset()


def solve_step(system: SensitivitySystem, config: UpdateConfig) -> SparseSolution:
    """Solve A x = b (or its eps-relaxation) with the configured method."""
    A, b = system.jacobian, system.residual
    method = config.method
    if method == "l1_ineq":
        eps = config.residual_bound()
        if eps == 0:
            return solve_l1_eq(SparseProblem(A, b, None, config.sign_constraint))
        return solve_l1_ineq(SparseProblem(A, b, eps, config.sign_constraint))
    problem = SparseProblem(A, b, None, config.sign_constraint)
    if method == "l0":
        return solve_l0(problem)
    if method == "l1_eq":
        return solve_l1_eq(problem)
    return solve_lp_irls(problem, config.p, config.irls)


def run_update(model: TrussModel, f_measured, config: UpdateConfig, theta0=None) -> UpdateResult:
    """Iterate linearize / sparse solve / update until the step or residual is small."""
    f_meas = np.asarray(f_measured, dtype=float).ravel()
    if f_meas.size < config.m:
        raise ModelError(f"need at least {config.m} measured frequencies, got {f_meas.size}")
    if config.m > model.n_dof:
        raise ModelError(f"m = {config.m} exceeds the model's {model.n_dof} modes")
    theta_start = check_theta(model, theta0)
    theta = theta_start.copy()
    modal = model_modes(model, theta)
    b = feature_residual(f_meas, modal, config.m)
    records: list[IterationRecord] = []
    converged = False

    for k in range(1, config.max_iterations + 1):
        if k == 1 and np.max(np.abs(b)) < config.residual_tol:
            zero = np.zeros(model.n_elements)
            r = float(np.linalg.norm(b))
            records.append(IterationRecord(k, zero, theta.copy(), frozenset(), frozenset(), r, r, True))
            converged = True
            break
        try:
            A = jacobian_from_modes(model, modal, config.m)
            if config.penalize == "total":
                # sparsity is imposed on theta - theta_0, not on this step alone
                offset = theta - theta_start
                sol = solve_step(SensitivitySystem(A, b + A @ offset, theta.copy()), config)
                x = sol.x - offset
            else:
                sol = solve_step(SensitivitySystem(A, b, theta.copy()), config)
                x = sol.x
            theta_next = np.maximum(theta + x, config.theta_floor)
            modal = model_modes(model, theta_next)
            b_next = feature_residual(f_meas, modal, config.m)
        except (ModelError, NumericalError) as exc:
            raise type(exc)(f"iteration {k}: {exc}") from exc
        cumulative = theta_next - theta_start
        records.append(IterationRecord(
            iteration=k,
            x=x,
            theta=theta_next,
            support=frozenset(support(cumulative, config.tau_rel, config.tau_abs)),
            step_support=frozenset(support(x, config.tau_rel, config.tau_abs)),
            residual_before=float(np.linalg.norm(b)),
            residual_after=float(np.linalg.norm(b_next)),
            solver_converged=sol.converged,
        ))
        theta, b = theta_next, b_next
        if np.max(np.abs(x)) < config.step_tol or np.max(np.abs(b)) < config.residual_tol:
            converged = True
            break

    return UpdateResult(theta_final=theta, per_iteration=tuple(records), converged=converged)


def one_shot(model: TrussModel, f_measured, config: UpdateConfig) -> UpdateResult:
    """A single linearization at the nominal model; no re-linearization."""
    return run_update(model, f_measured, replace(config, max_iterations=1))

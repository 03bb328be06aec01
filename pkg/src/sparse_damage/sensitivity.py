"""Linearized frequency system b = A x at a parameter point.

Features are relative frequency changes. For mass-normalized modes the
derivative of f_j / f_j(theta_ref) with respect to theta_i is

    A[j, i] = phi_j^T K_i phi_j / (2 lambda_j)

and the residual is b_j = (f_meas_j - f_j) / f_j, both evaluated at the
current point so they stay consistent across updating iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ModelError, NumericalError
from .fem_truss import TrussModel, check_theta
from .modal import ModalData, model_modes

DEGENERACY_TOL = 1e-9


@dataclass(frozen=True)
class SensitivitySystem:
    jacobian: NDArray[np.float64]  # (m, n)
    residual: NDArray[np.float64] | None  # (m,)
    linearization_point: NDArray[np.float64]  # theta, (n,)

    @property
    def feature_count(self) -> int:
        return self.jacobian.shape[0]

    @property
    def parameter_count(self) -> int:
        return self.jacobian.shape[1]


def _check_separated(eigenvalues: NDArray[np.float64], m: int) -> None:
    lam = eigenvalues
    for j in range(m):
        for k in (j - 1, j + 1):
            if 0 <= k < lam.size and abs(lam[k] - lam[j]) <= DEGENERACY_TOL * abs(lam[j]):
                raise NumericalError("derivative undefined at degenerate eigenvalue")


def jacobian_from_modes(model: TrussModel, modal: ModalData, m: int) -> NDArray[np.float64]:
    if not 1 <= m <= modal.n_modes:
        raise ModelError(f"feature count must be in [1, {modal.n_modes}]")
    _check_separated(modal.eigenvalues, m)
    elong = model.elongation_operator @ modal.mode_shapes[:, :m]  # (n_el, m)
    strain_energy = model.axial_stiffness[:, None] * elong**2  # phi_j^T K_i phi_j
    return (strain_energy / (2.0 * modal.eigenvalues[:m])).T


def eigen_jacobian(model: TrussModel, theta=None, m: int | None = None,
                   modal: ModalData | None = None) -> NDArray[np.float64]:
    """Jacobian of the m lowest relative frequencies w.r.t. stiffness multipliers.

    ``modal`` may be passed to reuse a solve already done at ``theta``.
    """
    t = check_theta(model, theta)
    if modal is None:
        modal = model_modes(model, t)
    if m is None:
        m = modal.n_modes
    return jacobian_from_modes(model, modal, m)


def feature_residual(f_measured, modal_current: ModalData, m: int) -> NDArray[np.float64]:
    """b_j = (f_measured_j - f_j) / f_j for the m lowest modes."""
    f_meas = np.asarray(f_measured, dtype=float).ravel()
    if m < 1 or f_meas.size < m:
        raise ModelError(f"need at least {m} measured frequencies, got {f_meas.size}")
    if modal_current.n_modes < m:
        raise ModelError(f"model has only {modal_current.n_modes} modes, {m} requested")
    f_cur = modal_current.frequencies[:m]
    return (f_meas[:m] - f_cur) / f_cur


def linearize(model: TrussModel, theta, f_measured, m: int) -> tuple[SensitivitySystem, ModalData]:
    """Build (A, b) at ``theta``; also returns the modal solve used."""
    t = check_theta(model, theta)
    modal = model_modes(model, t)
    A = jacobian_from_modes(model, modal, m)
    b = feature_residual(f_measured, modal, m)
    return SensitivitySystem(A, b, t.copy()), modal

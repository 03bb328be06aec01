"""Generalized symmetric eigenproblem K phi = lambda M phi for diagonal M."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ModelError, NumericalError
from .fem_truss import TrussModel, assemble_mass, assemble_stiffness

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 60


@dataclass(frozen=True)
class ModalData:
    eigenvalues: NDArray[np.float64]  # rad^2/s^2, ascending
    mode_shapes: NDArray[np.float64]  # (n_dof, n_modes), phi.T @ M @ phi = I

    @property
    def frequencies(self) -> NDArray[np.float64]:
        """Natural frequencies in Hz."""
        return np.sqrt(self.eigenvalues) / (2 * np.pi)

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size


def jacobi_eigh(S: NDArray[np.float64], tol: float = JACOBI_TOL,
                max_sweeps: int = JACOBI_MAX_SWEEPS) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Cyclic Jacobi eigensolver for a dense symmetric matrix.

    Sweeps until the off-diagonal Frobenius norm drops below
    ``tol * ||S||_F``. Returns unsorted eigenvalues and the orthogonal
    eigenvector matrix (columns).
    """
    a = np.array(S, dtype=float, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if n == 1 or scale == 0.0:
        return np.diag(a).copy(), v
    iu = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        off = math.sqrt(2.0 * float(np.sum(a[iu] ** 2)))
        if off <= tol * scale:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp = a[p].copy()
                rq = a[q].copy()
                a[p] = c * rp - s * rq
                a[q] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    raise NumericalError("eigensolver did not converge")


def solve_modes(K: NDArray[np.float64], M: NDArray[np.float64], count: int | None = None) -> ModalData:
    """Lowest ``count`` eigenpairs of K phi = lambda M phi.

    ``M`` must be diagonal (a full matrix or its diagonal vector). Mode
    shapes are mass-normalized and sign-fixed so the largest-magnitude
    entry of each is positive.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if K.ndim != 2 or K.shape != (n, n) or n == 0:
        raise ModelError("K must be a non-empty square matrix")
    m_diag = np.asarray(M, dtype=float)
    if m_diag.ndim == 2:
        if m_diag.shape != (n, n):
            raise ModelError("M and K sizes differ")
        if np.any(m_diag - np.diag(np.diag(m_diag))):
            raise ModelError("M must be diagonal")
        m_diag = np.diag(m_diag)
    if m_diag.shape != (n,) or np.any(m_diag <= 0):
        raise ModelError("M must be diagonal with positive entries")
    count = n if count is None else int(count)
    if not 1 <= count <= n:
        raise ModelError(f"count must be in [1, {n}]")
    if np.max(np.abs(K - K.T)) > 1e-12 * max(np.max(np.abs(K)), 1e-300):
        raise ModelError("K must be symmetric")

    r = 1.0 / np.sqrt(m_diag)
    S = r[:, None] * K * r[None, :]
    S = 0.5 * (S + S.T)
    lam, vecs = jacobi_eigh(S)
    order = np.argsort(lam, kind="stable")[:count]
    lam = lam[order]
    if lam[0] <= 0:
        raise NumericalError("stiffness matrix is not positive definite")
    phi = r[:, None] * vecs[:, order]
    # Jacobi returns orthonormal columns of S, so phi is already M-normalized
    for j in range(count):
        k = int(np.argmax(np.abs(phi[:, j])))
        if phi[k, j] < 0:
            phi[:, j] = -phi[:, j]
    return ModalData(eigenvalues=lam, mode_shapes=phi)


def frequency_changes(modal_a: ModalData, modal_b: ModalData) -> NDArray[np.float64]:
    """Relative change (f_b - f_a) / f_a, modes matched by index."""
    if modal_a.n_modes != modal_b.n_modes:
        raise ModelError("mode counts differ")
    fa = modal_a.frequencies
    if np.any(fa == 0):
        raise NumericalError("zero frequency in reference modes")
    return (modal_b.frequencies - fa) / fa


def model_modes(model: TrussModel, theta=None, count: int | None = None) -> ModalData:
    """Assemble K(theta), M for ``model`` and solve."""
    return solve_modes(assemble_stiffness(model, theta), np.diag(assemble_mass(model)), count)

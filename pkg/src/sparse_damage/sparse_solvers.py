"""Sparse solutions of under-determined systems A x = b.

Four solvers share one problem/solution pair:

* :func:`solve_l0`      minimum cardinality by support enumeration
* :func:`solve_l1_eq`   min ||x||_1 s.t. A x = b (primal-dual interior point LP)
* :func:`solve_l1_ineq` min ||x||_1 s.t. ||A x - b||_2 <= eps (log barrier)
* :func:`solve_lp_irls` min ||x||_p s.t. A x = b, 0 < p < 1 (IRLS, local)

Every returned :class:`SparseSolution` checks its own constraint on
construction, so an infeasible answer can never leave this module.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from math import comb
from typing import Any, Callable, Literal

import numpy as np
from numpy.typing import NDArray

from .errors import ModelError, NumericalError

SignConstraint = Literal["none", "nonpositive"]

DEFAULT_TAU_REL = 0.05
DEFAULT_TAU_ABS = 1e-4
L0_MAX_N = 25
L0_CHUNK = 20000

EQ_FEAS_TOL = 1e-8
LP_GAP_TOL = 1e-9
LP_MAX_ITER = 200
BARRIER_MU = 10.0
BARRIER_NEWTON_TOL = 1e-8
BARRIER_GAP_TOL = 1e-9
BARRIER_MAX_NEWTON = 100


@dataclass(frozen=True)
class SparseProblem:
    A: NDArray[np.float64]
    b: NDArray[np.float64]
    epsilon: float | None = None
    sign_constraint: SignConstraint = "none"

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).ravel()
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise ModelError("A must be a non-empty 2-D matrix")
        if b.shape != (A.shape[0],):
            raise ModelError(f"b has length {b.size}, expected {A.shape[0]}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ModelError("A and b must be finite")
        if self.epsilon is not None and not self.epsilon >= 0:
            raise ModelError("epsilon must be nonnegative")
        if self.sign_constraint not in ("none", "nonpositive"):
            raise ModelError(f"unknown sign constraint {self.sign_constraint!r}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def scaled(self, alpha: float) -> "SparseProblem":
        eps = None if self.epsilon is None else alpha * self.epsilon
        return SparseProblem(self.A, alpha * self.b, eps, self.sign_constraint)


@dataclass(frozen=True)
class SparseSolution:
    """Solver output.

    ``residual_bound`` is the constraint the solution satisfies:
    ``residual_norm <= residual_bound`` is checked at construction.
    """

    x: NDArray[np.float64]
    objective: float
    method: str
    iterations: int
    converged: bool
    residual_norm: float
    residual_bound: float
    support: frozenset[int] = field(default=frozenset())
    diagnostics: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.x)):
            raise NumericalError(f"{self.method}: non-finite solution")
        if not self.residual_norm <= self.residual_bound:
            raise NumericalError(
                f"{self.method}: residual {self.residual_norm:.3e} violates bound {self.residual_bound:.3e}"
            )
        if not self.support:
            object.__setattr__(self, "support", frozenset(support(self.x)))


def norms(x, p: float) -> float:
    """L0 count (p = 0), L1 (p = 1), or the Lp quasi-norm for 0 < p < 1."""
    x = np.asarray(x, dtype=float).ravel()
    if p == 0:
        return float(np.count_nonzero(x))
    if p == 1:
        return float(np.sum(np.abs(x)))
    if not 0 < p < 1:
        raise ModelError("p must be 0 or in (0, 1]")
    return float(np.sum(np.abs(x) ** p) ** (1.0 / p))


def support(x, tau_rel: float = DEFAULT_TAU_REL, tau_abs: float = DEFAULT_TAU_ABS) -> list[int]:
    """Indices with |x_i| > max(tau_abs, tau_rel * max|x|), ascending."""
    if not 0 <= tau_rel < 1 or tau_abs < 0:
        raise ModelError("need 0 <= tau_rel < 1 and tau_abs >= 0")
    ax = np.abs(np.asarray(x, dtype=float).ravel())
    if ax.size == 0:
        return []
    cut = max(tau_abs, tau_rel * float(ax.max()))
    return [int(i) for i in np.flatnonzero(ax > cut)]


def _eq_bound(b: NDArray[np.float64]) -> float:
    return EQ_FEAS_TOL * (1.0 + float(np.linalg.norm(b)))


def _min_energy(A: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
    """Minimum-norm least-squares point, A^T (A A^T)^-1 b when A has full row rank."""
    return np.linalg.lstsq(A, b, rcond=None)[0]


def _require_consistent(problem: SparseProblem) -> NDArray[np.float64]:
    x0 = _min_energy(problem.A, problem.b)
    if np.linalg.norm(problem.A @ x0 - problem.b) > _eq_bound(problem.b):
        raise NumericalError("inconsistent system: b is not in the range of A")
    return x0


# ---------------------------------------------------------------------- L0


def solve_l0(problem: SparseProblem, residual_tol: float | None = None) -> SparseSolution:
    """Minimum-cardinality x with ||A x - b||_2 <= residual_tol.

    Supports of size k = 0, 1, 2, ... are scanned in lexicographic order;
    the first one whose least-squares fit meets the tolerance wins, so ties
    resolve to the lexicographically smallest support.
    """
    if problem.sign_constraint != "none":
        raise ModelError("solve_l0 does not support sign constraints")
    A, b = problem.A, problem.b
    m, n = A.shape
    if n > L0_MAX_N:
        raise ModelError(f"enumeration limited to n <= {L0_MAX_N}, got {n}")
    tol = _eq_bound(b) if residual_tol is None else float(residual_tol)
    if tol < 0:
        raise ModelError("residual_tol must be nonnegative")

    bnorm = float(np.linalg.norm(b))
    tested = 1
    if bnorm <= tol:
        return SparseSolution(np.zeros(n), 0.0, "l0", tested, True, bnorm, tol, frozenset(),
                              {"supports_tested": tested})
    for k in range(1, min(m, n) + 1):
        combos = itertools.combinations(range(n), k)
        total = comb(n, k)
        for start in range(0, total, L0_CHUNK):
            idx = np.array(list(itertools.islice(combos, L0_CHUNK)), dtype=np.int64)
            sub = A[:, idx].transpose(1, 0, 2)  # (C, m, k)
            U, s, _ = np.linalg.svd(sub, full_matrices=False)
            keep = s > (max(m, k) * np.finfo(float).eps * s[:, :1])
            coef = np.einsum("cmk,m->ck", U, b) * keep
            res = np.linalg.norm(b - np.einsum("cmk,ck->cm", U, coef), axis=1)
            hits = np.flatnonzero(res <= tol)
            tested += hits[0] + 1 if hits.size else idx.shape[0]
            for h in hits:
                cols = idx[h]
                xs = np.linalg.lstsq(A[:, cols], b, rcond=None)[0]
                x = np.zeros(n)
                x[cols] = xs
                r = float(np.linalg.norm(A @ x - b))
                if r <= tol:
                    return SparseSolution(x, float(np.count_nonzero(x)), "l0", int(tested), True, r, tol,
                                          frozenset(int(c) for c in cols if x[c] != 0),
                                          {"supports_tested": int(tested), "cardinality": k})
    raise NumericalError("infeasible at tolerance")


# ---------------------------------------------------------------- L1 (LP)


def _lp_interior_point(c: NDArray[np.float64], B: NDArray[np.float64], b: NDArray[np.float64],
                       feas_tol: float, gap_tol: float, max_iter: int = LP_MAX_ITER):
    """min c^T z  s.t.  B z = b, z >= 0 by Mehrotra predictor-corrector.

    Returns (z, y, iterations). Termination: primal residual <= feas_tol, y
    dual feasible, and complementarity gap z^T (c - B^T y) <= gap_tol*(1+|c^T z|). Once
    complementarity reaches round-off the iterate is polished on its active
    set, which also gives exact zeros off the support.
    """
    m, N = B.shape
    BBt = B @ B.T
    ridge = 1e-14 * max(np.trace(BBt) / m, 1.0)
    BBt_inv = np.linalg.pinv(BBt + ridge * np.eye(m))
    z = B.T @ (BBt_inv @ b)
    y = BBt_inv @ (B @ c)
    s = c - B.T @ y
    z = z + max(-1.5 * z.min(), 0.0)
    s = s + max(-1.5 * s.min(), 0.0)
    zs = float(z @ s)
    z = z + 0.5 * zs / max(s.sum(), 1e-300)
    s = s + 0.5 * zs / max(z.sum(), 1e-300)
    # bump away from zero when b = 0 or c is already dual-optimal
    z = np.maximum(z, 1e-8)
    s = np.maximum(s, 1e-8)

    cnorm = float(np.linalg.norm(c))

    def accept(zz, yy):
        slack = c - B.T @ yy
        if np.any(zz < 0) or np.min(slack) < -gap_tol * (1 + cnorm):
            return False
        obj = float(c @ zz)
        return (np.linalg.norm(B @ zz - b) <= feas_tol
                and float(zz @ np.maximum(slack, 0.0)) <= gap_tol * (1 + abs(obj)))

    def polish(zz, ss, yy):
        """Crossover to the basis of the m largest z/s ratios; else refit the active set."""
        basis = np.argsort(-(zz / ss), kind="stable")[:m]
        Bb = B[:, basis]
        if np.linalg.cond(Bb) < 1e12:
            zb = np.linalg.solve(Bb, b)
            if np.all(zb >= -1e-12 * max(1.0, float(np.abs(zb).max()))):
                zp = np.zeros(N)
                zp[basis] = np.maximum(zb, 0.0)
                yp = np.linalg.solve(Bb.T, c[basis])
                if accept(zp, yp):
                    return zp, yp
        active = np.flatnonzero(zz > ss)
        if 0 < active.size <= m:
            zp = np.zeros(N)
            zp[active] = np.linalg.lstsq(B[:, active], b, rcond=None)[0]
            if np.all(zp >= 0) and accept(zp, yy):
                return zp, yy
        return None

    it = 0
    for it in range(1, max_iter + 1):
        rp = b - B @ z
        rd = c - B.T @ y - s
        mu = float(z @ s) / N
        obj_p = float(c @ z)
        if accept(z, y) and np.linalg.norm(rd) <= gap_tol * (1 + cnorm):
            polished = polish(z, s, y)
            if polished is not None:
                return polished[0], polished[1], it - 1
            return z, y, it - 1
        if mu <= 1e-15 * (1.0 + abs(obj_p)) / N:
            break
        d = z / s
        normal = (B * d) @ B.T
        try:
            L = np.linalg.cholesky(normal)
        except np.linalg.LinAlgError:
            L = np.linalg.cholesky(normal + 1e-14 * np.trace(normal) / m * np.eye(m))
        solve = lambda r: np.linalg.solve(L.T, np.linalg.solve(L, r))  # noqa: E731

        def direction(rc):
            dy = solve(rp - B @ ((rc - z * rd) / s))
            ds = rd - B.T @ dy
            dz = (rc - z * ds) / s
            return dz, dy, ds

        def max_step(v, dv):
            neg = dv < 0
            return min(1.0, float(np.min(-v[neg] / dv[neg]))) if np.any(neg) else 1.0

        dz_a, dy_a, ds_a = direction(-z * s)
        ap, ad = max_step(z, dz_a), max_step(s, ds_a)
        mu_aff = float((z + ap * dz_a) @ (s + ad * ds_a)) / N
        sigma = (mu_aff / mu) ** 3
        dz, dy, ds = direction(-z * s + sigma * mu - dz_a * ds_a)
        eta = min(0.9995, max(0.9, 1.0 - mu))
        ap, ad = eta * max_step(z, dz), eta * max_step(s, ds)
        z = z + ap * dz
        y = y + ad * dy
        s = s + ad * ds
    else:
        raise NumericalError(f"interior point LP did not converge in {max_iter} iterations")
    # complementarity is exhausted but feasibility/gap is not met: polish
    polished = polish(z, s, y)
    if polished is not None:
        return polished[0], polished[1], it
    raise NumericalError("interior point LP stalled before reaching tolerance")


def solve_l1_eq(problem: SparseProblem) -> SparseSolution:
    """Basis pursuit: min ||x||_1 s.t. A x = b.

    Solved as the LP over x = u - v with u, v >= 0 (or x = -v when the
    sign constraint is ``nonpositive``).
    """
    A, b = problem.A, problem.b
    m, n = A.shape
    bound = _eq_bound(b)
    if problem.sign_constraint == "none":
        _require_consistent(problem)
        B = np.hstack([A, -A])
    else:
        B = -A
    c = np.ones(B.shape[1])
    if float(np.linalg.norm(b)) == 0.0:
        return SparseSolution(np.zeros(n), 0.0, "l1_eq", 0, True, 0.0, bound)
    try:
        z, _, iters = _lp_interior_point(c, B, b, bound, LP_GAP_TOL)
    except NumericalError:
        if problem.sign_constraint != "none" and not _cone_feasible(B, b, bound):
            raise NumericalError("inconsistent system: b is not reachable with nonpositive x") from None
        raise
    x = z[:n] - z[n:] if problem.sign_constraint == "none" else -z
    r = float(np.linalg.norm(A @ x - b))
    if r > bound:
        raise NumericalError("inconsistent system: no feasible point found")
    return SparseSolution(x, norms(x, 1), "l1_eq", iters, True, r, bound)


def _cone_feasible(B: NDArray[np.float64], b: NDArray[np.float64], tol: float) -> bool:
    """Whether B z = b has a solution z >= 0, via the always-feasible phase-I LP."""
    m = B.shape[0]
    I = np.eye(m)
    B1 = np.hstack([B, I, -I])
    c1 = np.concatenate([np.zeros(B.shape[1]), np.ones(2 * m)])
    z, _, _ = _lp_interior_point(c1, B1, b, tol, LP_GAP_TOL)
    return float(np.sum(z[B.shape[1]:])) <= tol


# ------------------------------------------------------- L1 with eps (barrier)


def _barrier(c, G, h, C, d, e, eps2, z0, tau0, gap_tol,
             stop: Callable[[NDArray[np.float64]], bool] | None = None):
    """Log-barrier minimization of c^T z over

        G z <= h   and   q(z) = 1/2 ||C z - d||^2 - 1/2 eps2 - e^T z <= 0,

    from a strictly feasible z0. Returns (z, newton_steps, outer_steps).
    """
    z = z0.copy()
    n_con = G.shape[0] + 1
    CtC = C.T @ C
    tau = tau0
    newton_total = 0

    def q_parts(zz):
        r = C @ zz - d
        return 0.5 * float(r @ r) - 0.5 * eps2 - float(e @ zz), C.T @ r - e

    outer = 0
    while True:
        outer += 1
        for _ in range(BARRIER_MAX_NEWTON):
            sl = h - G @ z
            qv, gq = q_parts(z)
            grad = tau * c + G.T @ (1.0 / sl) + gq / (-qv)
            H = (G.T * (1.0 / sl**2)) @ G + np.outer(gq, gq) / qv**2 + CtC / (-qv)
            try:
                dz = -np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                dz = -np.linalg.lstsq(H, grad, rcond=None)[0]
            dec2 = -float(grad @ dz)
            if dec2 / 2 <= BARRIER_NEWTON_TOL:
                break
            # largest step keeping the linear and quadratic constraints strict
            Gdz = G @ dz
            pos = Gdz > 0
            smax = float(np.min(sl[pos] / Gdz[pos])) if np.any(pos) else math.inf
            Cdz = C @ dz
            qa = 0.5 * float(Cdz @ Cdz)
            qb = float(gq @ dz)
            if qa > 0:
                root = (-qb + math.sqrt(qb * qb - 2 * qa * qv)) / (2 * qa)
                smax = min(smax, root)
            elif qb > 0:
                smax = min(smax, -qv / qb)
            step = min(1.0, 0.99 * smax)
            cdz = float(c @ dz)
            slope = float(grad @ dz)

            def change(t):
                # phi(z + t dz) - phi(z), evaluated without cancellation
                ratio_l = -t * Gdz / sl
                ratio_q = (t * qb + t * t * qa) / qv
                if np.any(ratio_l <= -1.0) or ratio_q <= -1.0:
                    return math.inf
                return tau * t * cdz - float(np.sum(np.log1p(ratio_l))) - math.log1p(ratio_q)

            while change(step) > 0.01 * step * slope:
                step *= 0.5
                if step < 1e-20:
                    break
            z = z + step * dz
            newton_total += 1
            if stop is not None and stop(z):
                return z, newton_total, outer
            if step < 1e-20:
                break
        if n_con / tau <= gap_tol:
            return z, newton_total, outer
        tau *= BARRIER_MU


def solve_l1_ineq(problem: SparseProblem) -> SparseSolution:
    """min ||x||_1 s.t. ||A x - b||_2 <= epsilon, by a log-barrier method.

    Starts from the minimum-energy point; returns zero directly when
    ||b||_2 <= epsilon.
    """
    A, b, eps = problem.A, problem.b, problem.epsilon
    m, n = A.shape
    if eps is None or not eps > 0:
        raise ModelError("solve_l1_ineq requires epsilon > 0")
    bound = eps * (1.0 + 1e-8)
    bnorm = float(np.linalg.norm(b))
    if bnorm <= eps:
        return SparseSolution(np.zeros(n), 0.0, "l1_ineq", 0, True, bnorm, bound)

    if problem.sign_constraint == "none":
        x0 = _min_energy(A, b)
        if np.linalg.norm(A @ x0 - b) >= eps:
            raise NumericalError("no strictly feasible point: epsilon below least-squares residual")
        ax = np.abs(x0)
        u0 = 0.95 * ax + 0.10 * ax.max()
        I = np.eye(n)
        G = np.block([[I, -I], [-I, -I]])
        c = np.concatenate([np.zeros(n), np.ones(n)])
        C = np.hstack([A, np.zeros((m, n))])
        z0 = np.concatenate([x0, u0])
        tau0 = max((2 * n + 1) / float(u0.sum()), 1.0)
        gap_tol = BARRIER_GAP_TOL * (1.0 + float(u0.sum()))
        z, newton, outer = _barrier(c, G, h=np.zeros(2 * n), C=C, d=b, e=np.zeros(2 * n),
                                    eps2=eps**2, z0=z0, tau0=tau0, gap_tol=gap_tol)
        x = z[:n]
    else:
        x0 = _nonpositive_start(A, b, eps)
        c = -np.ones(n)
        tau0 = max((n + 1) / float(-x0.sum()), 1.0)
        gap_tol = BARRIER_GAP_TOL * (1.0 + float(-x0.sum()))
        z, newton, outer = _barrier(c, np.eye(n), np.zeros(n), A, b, np.zeros(n),
                                    eps**2, x0, tau0, gap_tol)
        x = z
    r = float(np.linalg.norm(A @ x - b))
    return SparseSolution(x, norms(x, 1), "l1_ineq", newton, True, r, bound,
                          diagnostics={"barrier_steps": outer})


def _nonpositive_start(A, b, eps):
    """Phase I: a point with x < 0 and ||A x - b|| < eps, or NumericalError.

    Minimizes s subject to x_i <= s and q(x) <= s inside the box x >= -R.
    Without the box the barrier is unbounded whenever A has a null-space
    direction with all entries negative; R grows until a point is found.
    """
    m, n = A.shape
    scale = 1.0 + float(np.abs(_min_energy(A, b)).max())
    x0 = -np.full(n, 1e-3 * scale)
    r = A @ x0 - b
    q0 = 0.5 * float(r @ r) - 0.5 * eps**2
    s0 = max(float(x0.max()), q0) + 1.0
    I = np.eye(n)
    G = np.block([[I, -np.ones((n, 1))], [-I, np.zeros((n, 1))]])
    c = np.zeros(n + 1)
    c[-1] = 1.0
    C = np.hstack([A, np.zeros((m, 1))])
    e = c.copy()
    for k in range(7):
        R = 10.0 * scale * 10.0**k
        h = np.concatenate([np.zeros(n), np.full(n, R)])
        z, _, _ = _barrier(c, G, h, C, b, e, eps**2, np.append(x0, s0), 1.0, 1e-10,
                           stop=lambda zz: zz[-1] < 0)
        x = z[:n]
        if np.all(x < 0) and np.linalg.norm(A @ x - b) < eps:
            return x
    raise NumericalError("no strictly feasible nonpositive point within epsilon")


# ----------------------------------------------------------------- Lp IRLS


@dataclass(frozen=True)
class IRLSOptions:
    eps0: float = 1.0
    eps_min: float = 1e-10
    eps_factor: float = 0.1
    max_iterations: int = 100
    step_tol: float = 1e-8


def _smoothed_objective(x, eps, p):
    return float(np.sum((x * x + eps) ** (p / 2)))


def solve_lp_irls(problem: SparseProblem, p: float = 0.5, options: IRLSOptions | None = None) -> SparseSolution:
    """Local minimizer of ||x||_p s.t. A x = b via IRLS with eps continuation.

    Each step solves the weighted minimum-norm problem in closed form,
    x = Q A^T (A Q A^T)^-1 b with Q = diag((x^2 + eps)^(1 - p/2)).

    The iteration runs on b / s, where s is the largest entry of the
    minimum-energy start, so the eps schedule and step tolerance are in
    units of the solution's scale and the result is equivariant under
    b -> alpha b. History objectives are in these scaled units.
    """
    if not 0 < p < 1:
        raise ModelError("p must be in (0, 1)")
    if problem.sign_constraint != "none":
        raise ModelError("solve_lp_irls does not support sign constraints")
    opt = options or IRLSOptions()
    A, b = problem.A, problem.b
    m, n = A.shape
    bound = _eq_bound(b)
    x = _require_consistent(problem)
    scale = float(np.abs(x).max())
    if scale == 0.0:
        return SparseSolution(np.zeros(n), 0.0, "lp_irls", 0, True, float(np.linalg.norm(b)), bound,
                              diagnostics={"p": p, "history": [], "regularized": 0, "scale": 0.0})
    b_unit = b / scale
    x = x / scale
    eps = opt.eps0
    history: list[tuple[float, float]] = []
    converged = False
    it = 0
    regularized = 0
    for it in range(1, opt.max_iterations + 1):
        q = (x * x + eps) ** (1.0 - p / 2)
        AQ = A * q
        G = AQ @ A.T
        try:
            L = np.linalg.cholesky(G)
            if np.min(np.diag(L)) ** 2 < 1e-15 * np.max(np.diag(G)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            regularized += 1
            G = G + 1e-12 * np.trace(G) / m * np.eye(m)
            L = np.linalg.cholesky(G)
        lam = np.linalg.solve(L.T, np.linalg.solve(L, b_unit))
        x_new = AQ.T @ lam
        history.append((eps, _smoothed_objective(x_new, eps, p)))
        step = float(np.max(np.abs(x_new - x)))
        x = x_new
        if eps <= opt.eps_min and step < opt.step_tol:
            converged = True
            break
        if step < math.sqrt(eps) / 100 and eps > opt.eps_min:
            eps = max(eps * opt.eps_factor, opt.eps_min)
    x = scale * x
    r = float(np.linalg.norm(A @ x - b))
    if r > bound:
        # regularized solves can drift off the constraint; project back
        x = x + _min_energy(A, b - A @ x)
        r = float(np.linalg.norm(A @ x - b))
    return SparseSolution(x, norms(x, p), "lp_irls", it, converged, r, bound,
                          diagnostics={"p": p, "history": history, "regularized": regularized,
                                       "scale": scale})


def solve(problem: SparseProblem, method: str, p: float = 0.5, **kwargs) -> SparseSolution:
    """Dispatch by method name: l0, l1_eq, l1_ineq, lp_irls."""
    if method == "l0":
        return solve_l0(problem, **kwargs)
    if method == "l1_eq":
        return solve_l1_eq(problem)
    if method == "l1_ineq":
        return solve_l1_ineq(problem)
    if method == "lp_irls":
        return solve_lp_irls(problem, p, **kwargs)
    raise ModelError(f"unknown method {method!r}")

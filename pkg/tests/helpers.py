"""Problem generators shared by the solver tests and the acceptance suite."""

import numpy as np


def planted_problem(seed, m=9, n=20, k=2, normalize=True):
    """Gaussian A (unit-norm columns when ``normalize``), k-sparse x* with N(0, 1) entries."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    if normalize:
        A /= np.linalg.norm(A, axis=0)
    x = np.zeros(n)
    idx = rng.choice(n, k, replace=False)
    x[idx] = rng.standard_normal(k)
    return A, A @ x, x


def random_theta(rng, n, low=0.5, high=1.0):
    return rng.uniform(low, high, n)



class FDOracle:
    """Central-difference Jacobian columns, d(f_j / f_j(theta)) / d theta_i.

    Eigenvalues of the perturbed models are computed in mpmath at ``dps``
    digits. In double precision the difference quotient with h = 1e-6 has
    ~1e-9 absolute roundoff, which swamps the smallest Jacobian entries.
    The mass-scaled element matrices are formed once in double; their
    rounding is common to both sides of the difference and cancels.
    """

    def __init__(self, model, dps=25):
        import mpmath as mp

        from sparse_damage.fem_truss import assemble_mass, element_contribution

        self.mp = mp
        self.model = model
        self.dps = dps
        r = 1 / np.sqrt(np.diag(assemble_mass(model)))
        with mp.workdps(dps):
            self.S = [mp.matrix((r[:, None] * element_contribution(model, k) * r).tolist())
                      for k in range(model.n_elements)]

    def _freqs(self, theta):
        mp = self.mp
        n = self.S[0].rows
        S = mp.zeros(n, n)
        for k, tk in enumerate(theta):
            S += tk * self.S[k]
        return [mp.sqrt(v) for v in sorted(mp.eigsy(S, eigvals_only=True))]

    def column(self, theta, i, h=1e-6):
        from sparse_damage.modal import model_modes

        mp = self.mp
        f0 = model_modes(self.model, theta).frequencies * 2 * np.pi
        with mp.workdps(self.dps):
            tp = [mp.mpf(float(v)) for v in theta]
            tm = list(tp)
            tp[i] += mp.mpf(h)
            tm[i] -= mp.mpf(h)
            fp, fm = self._freqs(tp), self._freqs(tm)
            return np.array([float((a - b) / (2 * h)) for a, b in zip(fp, fm)]) / f0

"""Multivariate (chiefly bivariate) normal algebra.

Densities, linear-transform laws, conditional laws, upper-rectangle
probabilities, and seeded sampling of correlated normals.  All operations
are pure functions on immutable values and are safe to call concurrently.

Numerical conventions: Gaussian integrals are truncated at +/-10 marginal
standard deviations (truncated mass < 1e-23, the documented error floor);
rectangle probabilities integrate the conditional 1-d tail along the outer
axis with adaptive Gauss-Kronrod panels at relative tolerance 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from ._quad import integrate_batch
from .errors import DegenerateConditioningError, DegenerateLawError

_PIVOT_THRESHOLD = 1e-12
_SYM_TOL = 1e-12
TRUNC_SD = 10.0


@dataclass(frozen=True, eq=False)
class GaussianLaw:
    """An N_d(mean, cov) law with a positive definite covariance."""

    dim: int
    mean: np.ndarray
    cov: np.ndarray
    _chol: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        mean = np.atleast_1d(np.array(self.mean, dtype=float))
        cov = np.atleast_2d(np.array(self.cov, dtype=float))
        if self.dim < 1 or mean.shape != (self.dim,) or cov.shape != (self.dim, self.dim):
            raise DegenerateLawError(
                f"shape mismatch: dim={self.dim}, mean {mean.shape}, cov {cov.shape}")
        if not np.all(np.abs(cov - cov.T) <= _SYM_TOL):
            raise DegenerateLawError("covariance is not symmetric to 1e-12")
        cov = 0.5 * (cov + cov.T)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise DegenerateLawError("covariance is not positive definite") from None
        if np.any(np.diag(chol) ** 2 <= _PIVOT_THRESHOLD):
            raise DegenerateLawError(
                "covariance has a Cholesky pivot at or below 1e-12")
        mean.setflags(write=False)
        cov.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)

    @property
    def marginal_sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


@dataclass(frozen=True, eq=False)
class ConditionalLaw:
    """Affine-map form of X1 | X2 = x2.

    mean_shift holds (m1, coef) with coef = S12 S22^-1, so the conditional
    mean is m1 + coef @ (x2 - m2); cond_cov = S11 - S12 S22^-1 S21 does not
    depend on the conditioning value.
    """

    mean_shift: tuple
    cond_cov: np.ndarray
    _m2: np.ndarray = field(repr=False, default=None)

    def law_at(self, observed_values) -> GaussianLaw:
        m1, coef = self.mean_shift
        x2 = np.asarray(observed_values, dtype=float)
        mean = m1 + coef @ (x2 - self._m2)
        return GaussianLaw(mean.size, mean, self.cond_cov)


def linear_transform(law: GaussianLaw, a) -> GaussianLaw:
    """Law of A X: N_k(A m, A S A^T).

    Raises DegenerateLawError when the output covariance is singular.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[1] != law.dim:
        raise DegenerateLawError(
            f"transform has {a.shape[1]} columns, law has dim {law.dim}")
    return GaussianLaw(a.shape[0], a @ law.mean, a @ law.cov @ a.T)


def conditional(law: GaussianLaw, observed_indices) -> ConditionalLaw:
    """Conditional law of the remaining coordinates given the observed ones."""
    obs = list(observed_indices)
    rest = [i for i in range(law.dim) if i not in obs]
    if not obs or not rest:
        raise DegenerateConditioningError("need a proper subset of coordinates")
    s11 = law.cov[np.ix_(rest, rest)]
    s12 = law.cov[np.ix_(rest, obs)]
    s22 = law.cov[np.ix_(obs, obs)]
    try:
        coef = np.linalg.solve(s22, s12.T).T
    except np.linalg.LinAlgError:
        raise DegenerateConditioningError("conditioning block is singular") from None
    cond_cov = s11 - coef @ s12.T
    return ConditionalLaw((law.mean[rest], coef), cond_cov, _m2=law.mean[obs])


def condition(law: GaussianLaw, observed_indices, observed_values) -> GaussianLaw:
    """Condition on X[observed_indices] = observed_values."""
    return conditional(law, observed_indices).law_at(observed_values)


def pdf(law: GaussianLaw, x):
    """Density of the law at x (a vector, or an array of row vectors)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    z = np.linalg.solve(law._chol, (pts - law.mean).T)
    log_det = np.sum(np.log(np.diag(law._chol)))
    log_pdf = -0.5 * np.sum(z * z, axis=0) - 0.5 * law.dim * np.log(2 * np.pi) - log_det
    out = np.exp(log_pdf)
    return float(out[0]) if single else out


def _rect_upper_with_err(law: GaussianLaw, lower, rel_tol=1e-9,
                         trunc_sd=TRUNC_SD):
    """P(X1 >= l1, X2 >= l2) with the accumulated quadrature error."""
    if law.dim != 2:
        raise DegenerateLawError("rect_upper_prob requires a bivariate law")
    l1, l2 = (float(v) for v in lower)
    m1, m2 = law.mean
    s1, s2 = law.marginal_sd
    if np.isneginf(l1) and np.isneginf(l2):
        return 1.0, 0.0
    if np.isneginf(l1):
        return float(ndtr((m2 - l2) / s2)), 0.0
    if np.isneginf(l2):
        return float(ndtr((m1 - l1) / s1)), 0.0
    coef = law.cov[0, 1] / law.cov[1, 1]
    cond_sd = float(np.sqrt(law.cov[0, 0] - coef * law.cov[0, 1]))
    lo = max(l2, m2 - trunc_sd * s2)
    hi = m2 + trunc_sd * s2
    if hi <= lo:
        return 0.0, 0.0
    inv_s2 = 1.0 / s2
    norm = inv_s2 / np.sqrt(2 * np.pi)

    def integrand(x2, _ids):
        dens = norm * np.exp(-0.5 * ((x2 - m2) * inv_s2) ** 2)
        cm = m1 + coef * (x2 - m2)
        return dens * ndtr((cm - l1) / cond_sd)

    vals, errs = integrate_batch(integrand, [lo], [hi], rel_tol=rel_tol)
    return float(np.clip(vals[0], 0.0, 1.0)), float(errs[0])


def rect_upper_prob(law: GaussianLaw, lower, rel_tol=1e-9,
                    trunc_sd=TRUNC_SD) -> float:
    """P(X1 >= lower[0], X2 >= lower[1]) for a bivariate law.

    Either bound may be -inf.  Computed by outer integration of the
    conditional 1-d tail of X1 given X2.
    """
    return _rect_upper_with_err(law, lower, rel_tol, trunc_sd)[0]


def sample(law: GaussianLaw, n: int, seed: int) -> np.ndarray:
    """n deterministic draws via the Cholesky factor and a Philox stream."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    z = rng.standard_normal((n, law.dim))
    return law.mean + z @ law._chol.T


def tilted_interval_mass(gamma, m, s, lo, hi):
    """E[e^(gamma Y) 1{lo <= Y <= hi}] for Y ~ N(m, s^2), vectorized.

    Closed form: e^(gamma m + gamma^2 s^2 / 2) * (Phi(beta) - Phi(alpha))
    with alpha = (lo - m)/s - gamma s, beta = (hi - m)/s - gamma s.  Bounds
    may be +/-inf; empty intervals give 0.  The Phi difference is taken on
    whichever tail avoids cancellation.
    """
    gamma = np.asarray(gamma, dtype=float)
    m = np.asarray(m, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        alpha = (lo - m) / s - gamma * s
        beta = (hi - m) / s - gamma * s
        # at infinite bounds the shifted argument keeps the same sign
        alpha = np.where(np.isneginf(lo), -np.inf, alpha)
        beta = np.where(np.isposinf(hi), np.inf, beta)
        upper_tail = (np.where(np.isinf(alpha), 0.0, alpha)
                      + np.where(np.isinf(beta), 0.0, beta)) > 0
        diff = np.where(upper_tail,
                        ndtr(-np.minimum(alpha, beta)) - ndtr(-np.maximum(alpha, beta)),
                        ndtr(np.maximum(alpha, beta)) - ndtr(np.minimum(alpha, beta)))
        diff = np.where(beta <= alpha, 0.0, diff)
        factor = np.exp(gamma * m + 0.5 * (gamma * s) ** 2)
        out = np.where(diff <= 0.0, 0.0, factor * diff)
        out = np.where(hi <= lo, 0.0, out)
    return out

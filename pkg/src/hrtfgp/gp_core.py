"""GP posterior inference, marginal-likelihood training with analytic
gradients, kernel PCA, the angular-separation metric, and the OLS / nearest-
neighbor reference regressors.

All M output coordinates share one prior (a single factorization of
K_hat = K(X, X) + sigma^2 I serves every output column). The log-marginal
likelihood and its gradient over Theta = {log ell_k, log alpha, log sigma}:

    L = -(M/2) (log|K_hat| + tr(Y^T K_hat^-1 Y) / M + N log 2 pi)
    dL/dTheta_i = -(M/2) (tr(K_hat^-1 P) - tr(Y^T K_hat^-1 P K_hat^-1 Y) / M)

with P = dK_hat/dTheta_i.
"""

import os
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from .kernels import KernelSpec, gram_matrix, log_length_grad_factor


class GpError(ValueError):
    pass


class FactorizationError(GpError):
    """K_hat could not be factorized even at maximum jitter."""


@dataclass(frozen=True)
class PosteriorSummary:
    mean: np.ndarray  # N* x M
    var: np.ndarray   # N*, shared across outputs (common prior)


class GpModel:
    """Trained GP: kernel spec, noise, inputs/targets, factorized Gram."""

    def __init__(self, spec: KernelSpec, sigma: float, X, Y):
        if sigma < 0:
            raise GpError("noise standard deviation must be >= 0")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] != Y.shape[0]:
            raise GpError("X and Y row counts differ")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(Y)):
            raise GpError("inputs and targets must be finite")
        self.spec = spec
        self.sigma = float(sigma)
        self.X = X
        self.Y = Y
        self.K_nf = gram_matrix(spec, X, X)  # noise-free Gram
        k_hat = self.K_nf + self.sigma ** 2 * np.eye(X.shape[0])
        self.chol, self.jitter = _jittered_cholesky(k_hat, spec.signal_scale)
        self.log_det = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        self._alpha = cho_solve((self.chol, True), self.Y)  # K_hat^-1 Y

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def m(self):
        return self.Y.shape[1]

    def solve(self, B):
        """K_hat^-1 B via the stored Cholesky factor."""
        return cho_solve((self.chol, True), B)

    @property
    def weights(self):
        """K_hat^-1 Y (cached)."""
        return self._alpha


def _jittered_cholesky(k_hat, signal_scale):
    """Lower Cholesky of K_hat, escalating diagonal jitter 1e-10..1e-4 alpha^2."""
    jitter = 0.0
    scale = signal_scale ** 2
    for attempt in range(6):
        try:
            L = cholesky(k_hat + jitter * np.eye(k_hat.shape[0]), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            jitter = scale * 1e-10 * 10 ** attempt
        except ValueError as exc:
            raise FactorizationError(str(exc))
    cond = np.linalg.cond(k_hat)
    raise FactorizationError(
        f"Cholesky failed at maximum jitter {jitter:g}; condition estimate {cond:.3g}"
    )


def fit_posterior(spec: KernelSpec, sigma: float, X, Y) -> GpModel:
    return GpModel(spec, sigma, X, Y)


def predict(model: GpModel, x_star) -> PosteriorSummary:
    """Posterior mean and the diagonal of the posterior covariance."""
    x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
    k_fs = gram_matrix(model.spec, model.X, x_star)  # N x N*
    mean = k_fs.T @ model.weights
    v = solve_triangular(model.chol, k_fs, lower=True)
    var = model.spec.signal_scale ** 2 - np.einsum("ij,ij->j", v, v)
    return PosteriorSummary(mean, var)


def predict_directions(model: GpModel, x_star) -> np.ndarray:
    """Posterior mean rows normalized to unit vectors (reported directions)."""
    mean = predict(model, x_star).mean
    norms = np.linalg.norm(mean, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return mean / norms


def lmh_and_grad(model: GpModel, chunk: int = 16):
    """Log-marginal likelihood and its gradient over log-parameters.

    Gradient order: [log ell_1 .. log ell_D', log alpha, log sigma].
    """
    n, m = model.n, model.m
    a_inv = model.solve(np.eye(n))
    b = model.weights
    lmh = -0.5 * m * (model.log_det + np.einsum("ij,ij->", model.Y, b) / m
                      + n * np.log(2 * np.pi))

    w = a_inv - (b @ b.T) / m
    wk = w * model.K_nf
    grad = np.empty(model.spec.dim + 2)
    # d log ell_k: P = K_nf (.) G_k, computed in dimension chunks
    ell = model.spec.length_scales
    for k0 in range(0, model.spec.dim, chunk):
        k1 = min(model.spec.dim, k0 + chunk)
        diff = np.abs(model.X[:, None, k0:k1] - model.X[None, :, k0:k1])
        g = log_length_grad_factor(model.spec.nu, diff, ell[k0:k1])
        grad[k0:k1] = -0.5 * m * np.einsum("ij,ijk->k", wk, g)
    # d log alpha: P = 2 K_nf
    grad[-2] = -m * np.sum(wk)
    # d log sigma: P = 2 sigma^2 I
    grad[-1] = -m * model.sigma ** 2 * np.trace(w)
    return float(lmh), grad


def _median_heuristic(X):
    """Per-dimension median absolute pairwise difference (fallback 1.0)."""
    n, d = X.shape
    rng = np.random.default_rng(0)
    idx = rng.choice(n, size=min(n, 256), replace=False)
    sub = X[idx]
    ell = np.empty(d)
    for k in range(d):
        diffs = np.abs(sub[:, None, k] - sub[None, :, k])
        med = np.median(diffs[np.triu_indices(sub.shape[0], 1)]) if sub.shape[0] > 1 else 0.0
        ell[k] = med if med > 0 else 1.0
    return ell


def default_init(nu, X, Y):
    """Scale-free starting point: median-heuristic lengths, data-sd signal.

    The per-dimension medians are scaled by sqrt(D') so the product over
    dimensions of near-unity factors stays O(1) instead of underflowing
    (each factor contributes ~1/D' to the total exponent at a typical
    pairwise distance).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    alpha = float(np.std(Y))
    if alpha == 0:
        alpha = 1.0
    ell = _median_heuristic(X) * np.sqrt(X.shape[1])
    return KernelSpec(nu, ell, alpha), 0.1 * alpha


def train_hyperparams(spec0: KernelSpec, sigma0: float, X, Y, iters: int = 50,
                      step: float = 0.1, train_sigma: bool = True,
                      callback=None):
    """Gradient ascent on the LMH over log-parameters.

    Fixed initial step with halving on LMH decrease (up to 20 halvings per
    iteration); returns the best-LMH iterate seen.
    """
    if iters < 1:
        raise GpError("iters must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]

    def unpack(theta):
        ell = np.exp(theta[:-2])
        return KernelSpec(spec0.nu, ell, float(np.exp(theta[-2]))), float(np.exp(theta[-1]))

    sigma0 = max(sigma0, 1e-8 * spec0.signal_scale)  # log-parameterization needs sigma > 0
    theta = np.concatenate([np.log(spec0.length_scales),
                            [np.log(spec0.signal_scale), np.log(sigma0)]])
    model = fit_posterior(*unpack(theta), X, Y)
    lmh, grad = lmh_and_grad(model)
    if not np.isfinite(lmh):
        raise GpError("non-finite LMH at initialization; degenerate starting point")
    if not train_sigma:
        grad[-1] = 0.0
    best_theta, best_lmh = theta.copy(), lmh

    for it in range(iters):
        # normalize so `step` acts as a log-space trust region
        direction = grad / max(np.abs(grad).max(), 1e-12)
        s = step
        improved = False
        for _ in range(21):
            cand = theta + s * direction
            try:
                cand_model = fit_posterior(*unpack(cand), X, Y)
            except FactorizationError:
                s *= 0.5
                continue
            cand_lmh, cand_grad = lmh_and_grad(cand_model)
            if np.isfinite(cand_lmh) and cand_lmh > lmh:
                theta, lmh, grad = cand, cand_lmh, cand_grad
                if not train_sigma:
                    grad[-1] = 0.0
                improved = True
                break
            s *= 0.5
        if improved and lmh > best_lmh:
            best_theta, best_lmh = theta.copy(), lmh
        if callback is not None:
            callback(it, lmh)
        if not improved:
            break
    spec, sigma = unpack(best_theta)
    return spec, sigma, best_lmh


@dataclass(frozen=True)
class KpcaResult:
    eigenvalues: np.ndarray
    scores: np.ndarray
    cumulative_energy: np.ndarray


def kernel_pca(k_gram) -> KpcaResult:
    """Eigendecomposition of a (noise-free) Gram matrix, descending order."""
    k_gram = np.asarray(k_gram, dtype=float)
    if k_gram.ndim != 2 or k_gram.shape[0] != k_gram.shape[1]:
        raise GpError("Gram matrix must be square")
    if not np.allclose(k_gram, k_gram.T, atol=1e-8 * max(1.0, np.abs(k_gram).max())):
        raise GpError("Gram matrix must be symmetric")
    evals, evecs = np.linalg.eigh((k_gram + k_gram.T) / 2.0)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    total = evals.sum()
    cum = np.cumsum(evals) / total if total > 0 else np.zeros_like(evals)
    return KpcaResult(evals, evecs, cum)


def components_for_energy(result: KpcaResult, fraction: float) -> int:
    return int(np.searchsorted(result.cumulative_energy, fraction) + 1)


def angular_separation(u, v) -> float:
    """Angle in radians between two direction vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise GpError("zero vector has no direction")
    return float(np.arccos(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0)))


def mean_angular_error(pred_dirs, ref_dirs) -> float:
    """Mean angular separation (radians) between matched unit-vector rows."""
    pred = np.asarray(pred_dirs, dtype=float)
    ref = np.asarray(ref_dirs, dtype=float)
    pn = np.linalg.norm(pred, axis=1)
    rn = np.linalg.norm(ref, axis=1)
    if np.any(pn == 0) or np.any(rn == 0):
        raise GpError("zero vector has no direction")
    cosv = np.einsum("ij,ij->i", pred, ref) / (pn * rn)
    return float(np.mean(np.arccos(np.clip(cosv, -1.0, 1.0))))


# Reference regressors for the cross-validation comparisons.

def ols_fit(X, Y):
    """Least-squares with intercept; returns the (D+1) x M coefficient matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    A = np.hstack([np.ones((X.shape[0], 1)), X])
    beta, *_ = np.linalg.lstsq(A, np.asarray(Y, dtype=float), rcond=None)
    return beta


def ols_predict(beta, x_star):
    x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
    return np.hstack([np.ones((x_star.shape[0], 1)), x_star]) @ beta


def nn_predict(X, Y, x_star):
    """1-nearest-neighbor under Euclidean feature distance."""
    d = cdist(np.atleast_2d(x_star), np.atleast_2d(X))
    return np.asarray(Y)[np.argmin(d, axis=1)]

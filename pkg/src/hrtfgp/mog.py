"""Mixture-of-Gaussians generative model over HRTF principal components
jointly with direction vectors. Conditioning the fitted mixture on a
direction yields a distribution over plausible magnitude spectra for that
direction: ancestral samples form the candidate pool for active learning and
the weighted conditional mean is the population-average starting filter.

The joint variable is z = [w, u] with w the leading principal components of
log-magnitude pairs and u the raw 3-vector direction (angles would wrap).
Default sizes: 16 retained components, 64 mixture components.
"""

import logging
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .container import read_blob, read_manifest, write_blob, write_manifest

DEFAULT_Q = 16
DEFAULT_M = 64

log = logging.getLogger(__name__)


class MogError(ValueError):
    pass


@dataclass(frozen=True)
class PcaCodec:
    """Linear codec between MP feature rows and principal-component scores.

    Operates on log magnitudes; decode exponentiates back to linear scale.
    """

    mean_vector: np.ndarray  # length 2D
    basis: np.ndarray        # 2D x q, orthonormal columns
    log_floor: float = 1e-12

    def __post_init__(self):
        g = self.basis.T @ self.basis
        if not np.allclose(g, np.eye(self.basis.shape[1]), atol=1e-8):
            raise MogError("basis columns must be orthonormal")

    @property
    def q(self):
        return self.basis.shape[1]


def pca_fit(mp_rows, q: int = DEFAULT_Q, log_floor: float = 1e-12) -> PcaCodec:
    """Principal components of log-magnitude rows via SVD of the centered
    data matrix."""
    mp_rows = np.atleast_2d(np.asarray(mp_rows, dtype=float))
    if np.any(mp_rows < 0):
        raise MogError("MP rows must be nonnegative")
    n, width = mp_rows.shape
    if not 1 <= q <= min(n, width):
        raise MogError(f"component count {q} outside [1, {min(n, width)}]")
    logm = np.log(np.maximum(mp_rows, log_floor))
    mean = logm.mean(axis=0)
    _, _, vt = np.linalg.svd(logm - mean, full_matrices=False)
    return PcaCodec(mean, np.ascontiguousarray(vt[:q].T), log_floor)


def pca_encode(codec: PcaCodec, mp_rows) -> np.ndarray:
    mp_rows = np.atleast_2d(np.asarray(mp_rows, dtype=float))
    logm = np.log(np.maximum(mp_rows, codec.log_floor))
    return (logm - codec.mean_vector) @ codec.basis


def pca_decode(codec: PcaCodec, scores) -> np.ndarray:
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    return np.exp(scores @ codec.basis.T + codec.mean_vector)


@dataclass(frozen=True)
class MogModel:
    weights: np.ndarray  # length M, simplex
    means: np.ndarray    # M x (q+3)
    covs: np.ndarray     # M x (q+3) x (q+3)
    q: int               # leading block size (PC part of each mean)

    def __post_init__(self):
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise MogError("mixture weights must sum to 1")
        if not 1 <= self.q < self.means.shape[1]:
            raise MogError("PC block size must leave room for the direction block")

    @property
    def m(self):
        return self.weights.size


def _log_gauss(z, mean, cov):
    """Log density of N(mean, cov) at the rows of z."""
    d = mean.size
    chol = np.linalg.cholesky(cov)
    diff = z - mean
    sol = np.linalg.solve(chol, diff.T)
    maha = np.einsum("ij,ij->j", sol, sol)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (maha + log_det + d * np.log(2 * np.pi))


def _kmeanspp_centers(z, m, rng):
    n = z.shape[0]
    centers = [z[rng.integers(n)]]
    for _ in range(m - 1):
        d2 = np.min(
            [np.sum((z - c) ** 2, axis=1) for c in centers], axis=0)
        total = d2.sum()
        if total == 0:
            centers.append(z[rng.integers(n)])
            continue
        centers.append(z[rng.choice(n, p=d2 / total)])
    return np.array(centers)


def mog_fit(Z, m: int = DEFAULT_M, seed: int = 0, q: int = None,
            max_iters: int = 500, tol: float = 1e-7):
    """EM fit of an m-component full-covariance Gaussian mixture.

    Seeded center initialization (distance-squared sampling), diagonal
    loading of every covariance each M-step, collapsed components
    reinitialized at a random row. Returns (model, log-likelihood trace);
    the trace is nondecreasing.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n, d = Z.shape
    if m < 1:
        raise MogError("component count must be >= 1")
    if n < m:
        raise MogError(f"{n} rows cannot support {m} components")
    if q is None:
        q = d - 3
    if not 1 <= q < d:
        raise MogError("PC block size must lie in [1, dim)")
    rng = np.random.default_rng(seed)
    floor = 1e-6 * np.trace(np.atleast_2d(np.cov(Z.T))) / d

    weights = np.full(m, 1.0 / m)
    means = _kmeanspp_centers(Z, m, rng) if m > 1 else Z.mean(axis=0)[None, :]
    base_cov = np.cov(Z.T) + floor * np.eye(d)
    covs = np.repeat(base_cov[None], m, axis=0)

    trace = []
    prev_params = None
    for _ in range(max_iters):
        # E-step
        log_p = np.empty((n, m))
        for i in range(m):
            log_p[:, i] = np.log(weights[i]) + _log_gauss(Z, means[i], covs[i])
        row_ll = logsumexp(log_p, axis=1)
        ll = float(row_ll.sum())
        if trace and ll < trace[-1]:
            # the diagonal loading maximizes a penalized objective, so the
            # raw likelihood can dip slightly near convergence; keep the
            # previous (better) parameters
            weights, means, covs = prev_params
            break
        resp = np.exp(log_p - row_ll[:, None])
        converged = bool(trace) and ll - trace[-1] < tol * abs(ll)
        trace.append(ll)
        if converged:
            break
        prev_params = (weights.copy(), means.copy(), covs.copy())

        # M-step
        nk = resp.sum(axis=0)
        for i in range(m):
            if nk[i] < 1e-10:
                log.warning("mixture component %d collapsed; reinitializing", i)
                means[i] = Z[rng.integers(n)]
                covs[i] = base_cov.copy()
                weights[i] = 1.0 / n
                continue
            means[i] = resp[:, i] @ Z / nk[i]
            diff = Z - means[i]
            cov = (resp[:, i][:, None] * diff).T @ diff / nk[i]
            covs[i] = cov + floor * np.eye(d)
            weights[i] = nk[i] / n
        weights /= weights.sum()

    model = MogModel(weights.copy(), means.copy(), covs.copy(), q)
    return model, np.array(trace)


@dataclass(frozen=True)
class ConditionalMog:
    weights: np.ndarray     # length M posterior mixture weights at u
    cond_means: np.ndarray  # M x q
    cond_covs: np.ndarray   # M x q x q


def mog_condition(model: MogModel, u) -> ConditionalMog:
    """Condition the joint mixture on the trailing direction block."""
    u = np.asarray(u, dtype=float).ravel()
    q = model.q
    if u.size != model.means.shape[1] - q:
        raise MogError("conditioning vector does not match the direction block")
    m = model.m
    cond_means = np.empty((m, q))
    cond_covs = np.empty((m, q, q))
    log_w = np.empty(m)
    for i in range(m):
        mu_w, mu_u = model.means[i, :q], model.means[i, q:]
        sig = model.covs[i]
        sig_w, sig_wu, sig_u = sig[:q, :q], sig[:q, q:], sig[q:, q:]
        try:
            gain = np.linalg.solve(sig_u, sig_wu.T).T  # sig_wu sig_u^-1
        except np.linalg.LinAlgError:
            raise MogError(f"direction-block covariance of component {i} is singular")
        cond_means[i] = mu_w + gain @ (u - mu_u)
        cov = sig_w - gain @ sig_wu.T
        cond_covs[i] = (cov + cov.T) / 2.0
        log_w[i] = np.log(model.weights[i]) + _log_gauss(u[None, :], mu_u, sig_u)[0]
    log_w -= logsumexp(log_w)
    return ConditionalMog(np.exp(log_w), cond_means, cond_covs)


def sample_candidates(cond: ConditionalMog, codec: PcaCodec, n: int,
                      seed: int = 0) -> np.ndarray:
    """Ancestral samples decoded to MP rows: pick a component by weight,
    draw from its conditional Gaussian, decode."""
    if n < 1:
        raise MogError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    m, q = cond.cond_means.shape
    comp = rng.choice(m, size=n, p=cond.weights)
    chols = np.linalg.cholesky(cond.cond_covs)
    scores = cond.cond_means[comp] + np.einsum(
        "nij,nj->ni", chols[comp], rng.standard_normal((n, q)))
    return pca_decode(codec, scores)


def conditional_mean_scores(cond: ConditionalMog) -> np.ndarray:
    return cond.weights @ cond.cond_means


def nonindividualized(cond: ConditionalMog, codec: PcaCodec) -> np.ndarray:
    """Population-average MP row: decode of the weighted conditional mean."""
    return pca_decode(codec, conditional_mean_scores(cond))[0]


# Persistence: JSON manifest next to f32 blobs, one file per array.

_MODEL_BLOBS = ("weights", "means", "covs", "pca_mean", "pca_basis")


def save_mog(path: str, model: MogModel, codec: PcaCodec) -> None:
    d = model.means.shape[1]
    width = codec.basis.shape[0]
    base = os.path.dirname(os.path.abspath(path))
    os.makedirs(base, exist_ok=True)
    stem = os.path.splitext(os.path.basename(path))[0]
    arrays = {
        "weights": model.weights,
        "means": model.means,
        "covs": model.covs.reshape(model.m, -1),
        "pca_mean": codec.mean_vector,
        "pca_basis": codec.basis,
    }
    manifest = {
        "m": int(model.m),
        "q": int(model.q),
        "dim": int(d),
        "width": int(width),
        "log_floor": codec.log_floor,
        "blobs": {},
    }
    for name in _MODEL_BLOBS:
        blob_name = f"{stem}.{name}.f32"
        write_blob(os.path.join(base, blob_name), arrays[name])
        manifest["blobs"][name] = blob_name
    write_manifest(path, manifest)


def load_mog(path: str):
    manifest = read_manifest(path)
    base = os.path.dirname(os.path.abspath(path))
    m, q, d, width = (manifest[k] for k in ("m", "q", "dim", "width"))
    shapes = {
        "weights": (m,),
        "means": (m, d),
        "covs": (m, d * d),
        "pca_mean": (width,),
        "pca_basis": (width, q),
    }
    arrays = {}
    for name in _MODEL_BLOBS:
        arr = read_blob(os.path.join(base, manifest["blobs"][name]),
                        int(np.prod(shapes[name])), name)
        arrays[name] = arr.astype(float).reshape(shapes[name])
    # f32 rounding breaks the exact simplex/orthonormality checks; repair
    weights = arrays["weights"] / arrays["weights"].sum()
    basis, _ = np.linalg.qr(arrays["pca_basis"])
    # QR may flip column signs; align with the stored basis
    signs = np.sign(np.einsum("ij,ij->j", basis, arrays["pca_basis"]))
    signs[signs == 0] = 1.0
    basis = basis * signs
    model = MogModel(weights, arrays["means"], arrays["covs"].reshape(m, d, d), q)
    codec = PcaCodec(arrays["pca_mean"], basis, manifest["log_floor"])
    return model, codec

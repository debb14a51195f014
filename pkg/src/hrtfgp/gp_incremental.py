"""Incremental GP updated by point inclusion: two rank-1 updates maintain the
explicit Gram inverse, its log-determinant, and the posterior over a fixed
test set. This is the inner loop of greedy forward selection and of the
online localization-error learner.

Appending a point x_new with self-covariance k_nn = k(x_new, x_new) + sigma^2
and cross-covariances k_vec writes the grown Gram as a diagonal append plus
two symmetric rank-1 corrections built from

    w = [-k_vec, (1 - k_nn)/2],  u = sqrt(|w|/2)(w/|w| + e_t),
    v = sqrt(|w|/2)(w/|w| - e_t),

after which the inverse follows from two Sherman-Morrison steps and the
log-determinant from log|K_new| = log|K_old| - log(d_u d_v). The posterior
variance recurrence is applied with the signs that match a batch refit (the
rank-1 corrections to the inverse enter the posterior covariance with
opposite sign).
"""

from dataclasses import dataclass, replace

import numpy as np

from .kernels import KernelSpec, gram_matrix

REFACTOR_EVERY = 64  # fresh factorization cadence, caps error drift


class IncrementalError(ValueError):
    pass


class DegenerateUpdate(IncrementalError):
    """Rank-1 denominator vanished; the update would be numerically singular."""


@dataclass(frozen=True)
class IncrementalGpState:
    spec: KernelSpec
    sigma: float
    x_star: np.ndarray      # N* x D', fixed
    x_r: np.ndarray         # t x D'
    y_r: np.ndarray         # t x M
    k_inv: np.ndarray       # t x t
    log_det: float
    k_star: np.ndarray      # N* x t cross-covariance cache
    post_mean: np.ndarray   # N* x M
    post_var: np.ndarray    # N*
    ids: tuple = ()         # caller-assigned identifiers of included points
    work: float = 0.0       # cumulative array-element operation count

    @property
    def t(self):
        return self.x_r.shape[0]

    def posterior(self):
        from .gp_core import PosteriorSummary

        return PosteriorSummary(self.post_mean.copy(), self.post_var.copy())

    @property
    def weights(self):
        """K_hat^-1 Y over the included points."""
        return self.k_inv @ self.y_r


def inc_init(spec: KernelSpec, sigma: float, x_star, n_outputs: int = 3) -> IncrementalGpState:
    """Empty state: posterior equals the prior (zero mean, variance alpha^2)."""
    x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
    if x_star.shape[0] == 0:
        raise IncrementalError("test input set must be non-empty")
    if x_star.shape[1] != spec.dim:
        raise IncrementalError("test inputs do not match kernel dimension")
    if sigma < 0:
        raise IncrementalError("sigma must be >= 0")
    n_star = x_star.shape[0]
    d = spec.dim
    return IncrementalGpState(
        spec=spec,
        sigma=float(sigma),
        x_star=x_star,
        x_r=np.empty((0, d)),
        y_r=np.empty((0, n_outputs)),
        k_inv=np.empty((0, 0)),
        log_det=0.0,
        k_star=np.empty((n_star, 0)),
        post_mean=np.zeros((n_star, n_outputs)),
        post_var=np.full(n_star, spec.signal_scale ** 2),
    )


def inc_include(state: IncrementalGpState, x_new, y_new, point_id=None,
                k_vec=None, k_star_col=None,
                allow_refactor: bool = True) -> IncrementalGpState:
    """Return a new state with (x_new, y_new) included.

    `k_vec` (covariances to the included points) and `k_star_col`
    (covariances to the test inputs) may be supplied precomputed; greedy
    selection slices them out of a full Gram matrix instead of re-evaluating
    the kernel per candidate.
    """
    x_new = np.asarray(x_new, dtype=float).reshape(1, -1)
    y_new = np.asarray(y_new, dtype=float).reshape(1, -1)
    if not np.all(np.isfinite(x_new)):
        raise IncrementalError("candidate input must be finite")
    if x_new.shape[1] != state.spec.dim:
        raise IncrementalError("candidate input does not match kernel dimension")
    t = state.t

    if k_vec is None:
        k_vec = gram_matrix(state.spec, state.x_r, x_new)[:, 0] if t else np.empty(0)
    if k_star_col is None:
        k_star_col = gram_matrix(state.spec, state.x_star, x_new)[:, 0]
    k_nn = state.spec.signal_scale ** 2 + state.sigma ** 2

    w = np.concatenate([-np.asarray(k_vec, dtype=float), [(1.0 - k_nn) / 2.0]])
    k_bar_inv = np.zeros((t + 1, t + 1))
    k_bar_inv[:t, :t] = state.k_inv
    k_bar_inv[t, t] = 1.0

    norm_w = np.linalg.norm(w)
    if norm_w == 0.0:
        # appended diagonal already equals the placeholder; pure append
        k_inv_new = k_bar_inv
        log_det_new = state.log_det
        du = dv = 0.0
        su = sv = np.zeros(state.x_star.shape[0])
        uty = vty = np.zeros((1, state.y_r.shape[1]))
    else:
        e_t = np.zeros(t + 1)
        e_t[t] = 1.0
        scale = np.sqrt(norm_w / 2.0)
        u = scale * (w / norm_w + e_t)
        v = scale * (w / norm_w - e_t)
        u_bar = k_bar_inv @ u
        den_u = 1.0 - float(u_bar @ u)
        if abs(den_u) <= 1e-12:
            raise DegenerateUpdate(f"first rank-1 denominator {den_u:g} below threshold")
        du = 1.0 / den_u
        v_bar = k_bar_inv @ v + du * u_bar * float(u_bar @ v)
        den_v = 1.0 + float(v_bar @ v)
        if abs(den_v) <= 1e-12:
            raise DegenerateUpdate(f"second rank-1 denominator {den_v:g} below threshold")
        dv = 1.0 / den_v
        k_inv_new = k_bar_inv + du * np.outer(u_bar, u_bar) - dv * np.outer(v_bar, v_bar)
        # den_u alone may be negative; the grown Gram is PD so the product
        # of the two determinant factors is positive
        det_factor = den_u * den_v
        if det_factor <= 0:
            raise DegenerateUpdate(
                f"determinant factor {det_factor:g} nonpositive; Gram not PD")
        log_det_new = state.log_det + np.log(det_factor)

        k_star_full = np.hstack([state.k_star, k_star_col[:, None]])
        su = k_star_full @ u_bar
        sv = k_star_full @ v_bar
        y_full = np.vstack([state.y_r, y_new])
        uty = (u_bar @ y_full)[None, :]
        vty = (v_bar @ y_full)[None, :]

    k_star_new = np.hstack([state.k_star, k_star_col[:, None]])
    post_mean = (state.post_mean + k_star_col[:, None] * y_new
                 + du * su[:, None] * uty - dv * sv[:, None] * vty)
    post_var = (state.post_var - k_star_col ** 2 - du * su ** 2 + dv * sv ** 2)

    n_star = state.x_star.shape[0]
    work = state.work + 3.0 * (t + 1) ** 2 + 4.0 * n_star * (t + 1)

    new = IncrementalGpState(
        spec=state.spec,
        sigma=state.sigma,
        x_star=state.x_star,
        x_r=np.vstack([state.x_r, x_new]),
        y_r=np.vstack([state.y_r, y_new]),
        k_inv=k_inv_new,
        log_det=float(log_det_new),
        k_star=k_star_new,
        post_mean=post_mean,
        post_var=post_var,
        ids=state.ids + (point_id,),
        work=work,
    )
    if allow_refactor and new.t % REFACTOR_EVERY == 0:
        new = refactorize(new)
    return new


def refactorize(state: IncrementalGpState) -> IncrementalGpState:
    """Rebuild inverse, log-det, and posterior from scratch."""
    t = state.t
    if t == 0:
        return state
    k_hat = gram_matrix(state.spec, state.x_r, state.x_r) + \
        state.sigma ** 2 * np.eye(t)
    chol = np.linalg.cholesky(k_hat)
    inv = np.linalg.inv(k_hat)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    k_star = gram_matrix(state.spec, state.x_star, state.x_r)
    z = inv @ state.y_r
    post_mean = k_star @ z
    post_var = state.spec.signal_scale ** 2 - np.einsum(
        "ij,jk,ik->i", k_star, inv, k_star)
    return replace(state, k_inv=inv, log_det=log_det, k_star=k_star,
                   post_mean=post_mean, post_var=post_var,
                   work=state.work + t ** 3 + state.x_star.shape[0] * t ** 2)


def inc_posterior(state: IncrementalGpState):
    """Cached posterior summary; no recomputation."""
    return state.posterior()

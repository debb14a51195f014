"""Greedy forward selection of training samples under three L2 risk
criteria, with closed-form Matern product integrals for the infinite-domain
(normalized) risk.

The L2 distance between two GP posterior mean functions over a test set
decomposes into quadratic forms

    |f_a - f_b|^2 = z_a^T Q_aa z_a - 2 z_a^T Q_ab z_b + z_b^T Q_bb z_b

with z = K_hat^-1 Y, where Q entries are sums (finite test set) or improper
integrals (whole real line, factorizing per dimension) of products of two
covariance factors.

Closed forms for the one-dimensional integrals
F = int K_nu(|x_a - x|, l_a) K_nu(|x_b - x|, l_b) dx, Delta = |x_a - x_b|:

    F_1/2 = 2 l_a l_b (l_a e^{-Delta/l_a} - l_b e^{-Delta/l_b}) / (l_a^2 - l_b^2)
    F_3/2 = [l_a^2 (l_a - beta l_b - alpha) e^{-sqrt(3) Delta / l_a}
             + l_b^2 (l_b + beta l_a - alpha) e^{-sqrt(3) Delta / l_b}]
            * 4 l_a l_b / (sqrt(3) (l_a^2 - l_b^2)^2),
        alpha = -sqrt(3) Delta,  beta = 4 l_a l_b / (l_a^2 - l_b^2)
    F_inf = sqrt(2 pi) l_a l_b / sqrt(l_a^2 + l_b^2)
            * e^{-Delta^2 / (2 (l_a^2 + l_b^2))}

Each is validated against adaptive quadrature in the test suite. Note the
F_1/2 denominator is the *difference* of squares: the sum-of-squares variant
fails the quadrature oracle (e.g. Delta=0, l_a=2, l_b=1 must give
2 l_a l_b / (l_a + l_b) = 4/3). Near l_a = l_b both closed forms cancel
catastrophically and greedy selection always runs with a single shared
kernel, so the equal-scale limits (with second-order corrections in
t = (l_a - l_b) / (l_a + l_b)) take over below a relative-gap threshold:

    F_1/2 -> e^{-d/l} [(l + d) + t^2 (d^3/(6 l^2) - d^2/(2 l) - d - l)]
    F_3/2 -> e^{-s3 d/l} [(d^3/(2 l^2) + s3 d^2/l + 5 d/2 + 5 s3 l/6)
             + t^2 (3 d^5/(20 l^4) - 3 d^3/(4 l^2) - 5 s3 d^2/(4 l) - 3 d - s3 l)]
"""

from dataclasses import dataclass

import numpy as np

from .gp_core import GpModel
from .gp_incremental import IncrementalGpState, inc_include, inc_init
from .kernels import KernelSpec, gram_matrix

RISK_KINDS = ("prediction_error", "generalized_error", "normalized_error")

_SQRT3 = np.sqrt(3.0)

# relative length-scale gap below which the series limits are used
_EQ_GAP_12 = 1e-4
_EQ_GAP_32 = 5e-3


class SelectionError(ValueError):
    pass


def _f_half(delta, la, lb):
    t = abs(la - lb) / (la + lb)
    if t < _EQ_GAP_12:
        l = 0.5 * (la + lb)
        c0 = l + delta
        c2 = delta ** 3 / (6 * l ** 2) - delta ** 2 / (2 * l) - delta - l
        return np.exp(-delta / l) * (c0 + t * t * c2)
    return 2 * la * lb * (la * np.exp(-delta / la) - lb * np.exp(-delta / lb)) \
        / (la ** 2 - lb ** 2)


def _f_three_half(delta, la, lb):
    t = abs(la - lb) / (la + lb)
    if t < _EQ_GAP_32:
        l = 0.5 * (la + lb)
        e = np.exp(-_SQRT3 * delta / l)
        c0 = delta ** 3 / (2 * l ** 2) + _SQRT3 * delta ** 2 / l + 2.5 * delta \
            + 5 * _SQRT3 * l / 6
        c2 = 3 * delta ** 5 / (20 * l ** 4) - 3 * delta ** 3 / (4 * l ** 2) \
            - 5 * _SQRT3 * delta ** 2 / (4 * l) - 3 * delta - _SQRT3 * l
        return e * (c0 + t * t * c2)
    alpha = -_SQRT3 * delta
    beta = 4 * la * lb / (la ** 2 - lb ** 2)
    return (la ** 2 * (la - beta * lb - alpha) * np.exp(-_SQRT3 * delta / la)
            + lb ** 2 * (lb + beta * la - alpha) * np.exp(-_SQRT3 * delta / lb)) \
        * 4 * la * lb / (_SQRT3 * (la ** 2 - lb ** 2) ** 2)


def _f_inf(delta, la, lb):
    ss = la ** 2 + lb ** 2
    return np.sqrt(2 * np.pi) * la * lb / np.sqrt(ss) * np.exp(-delta ** 2 / (2 * ss))


def matern_product_integral(nu: str, x_a: float, x_b: float,
                            ell_a: float, ell_b: float) -> float:
    """Integral over the real line of two one-dimensional Matern factors."""
    if not (ell_a > 0 and ell_b > 0):
        raise SelectionError("length scales must be positive")
    delta = abs(float(x_a) - float(x_b))
    if nu == "half":
        return float(_f_half(delta, float(ell_a), float(ell_b)))
    if nu == "three_half":
        return float(_f_three_half(delta, float(ell_a), float(ell_b)))
    if nu == "inf":
        return float(_f_inf(delta, float(ell_a), float(ell_b)))
    raise SelectionError(f"unknown smoothness tag {nu!r}")


def q_matrix_infinite(spec: KernelSpec, X) -> np.ndarray:
    """Pairwise infinite-domain Q for one shared kernel: products over
    dimensions of equal-scale F values, times alpha^4."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    log_q = np.zeros((n, n))
    for k in range(d):
        delta = np.abs(X[:, None, k] - X[None, :, k])
        l = spec.length_scales[k]
        if spec.nu == "half":
            f = np.exp(-delta / l) * (l + delta)
        elif spec.nu == "three_half":
            f = np.exp(-_SQRT3 * delta / l) * (
                delta ** 3 / (2 * l ** 2) + _SQRT3 * delta ** 2 / l
                + 2.5 * delta + 5 * _SQRT3 * l / 6)
        else:
            f = np.sqrt(np.pi) * l * np.exp(-delta ** 2 / (4 * l ** 2))
        log_q += np.log(f)
    return spec.signal_scale ** 4 * np.exp(log_q)


@dataclass
class RiskContext:
    """Precomputed quantities shared across candidate scoring."""

    kind: str
    full_model: GpModel
    gram_full: np.ndarray      # noise-free N x N Gram over all inputs
    z_full: np.ndarray         # K_hat^-1 Y for the full model
    q_xx: np.ndarray = None    # Q over all inputs (generalized / normalized)
    const_bb: float = None     # z_b^T Q_bb z_b summed over outputs
    norm_b: np.ndarray = None  # per-output |f_b| (normalized risk)


def make_risk_context(kind: str, spec: KernelSpec, sigma: float, X, Y,
                      eval_inputs=None) -> RiskContext:
    if kind not in RISK_KINDS:
        raise SelectionError(f"unknown risk kind {kind!r}")
    full = GpModel(spec, sigma, X, Y)
    gram_full = full.K_nf
    z_full = full.weights
    ctx = RiskContext(kind, full, gram_full, z_full)
    if kind == "generalized_error":
        if eval_inputs is None:
            g_eval = gram_full  # default finite test set is X itself
        else:
            g_eval = gram_matrix(spec, X, np.atleast_2d(eval_inputs))
        ctx.q_xx = g_eval @ g_eval.T
        ctx.const_bb = float(np.einsum("im,ij,jm->", z_full, ctx.q_xx, z_full))
    elif kind == "normalized_error":
        ctx.q_xx = q_matrix_infinite(spec, X)
        qz = ctx.q_xx @ z_full
        norms_sq = np.einsum("im,im->m", z_full, qz)
        if np.any(norms_sq <= 0):
            raise SelectionError("full-model posterior mean has zero L2 norm")
        ctx.norm_b = np.sqrt(norms_sq)
    return ctx


def risk_eval(kind: str, state: IncrementalGpState, ctx: RiskContext,
              candidate: int) -> float:
    """Risk of the subset grown by `candidate`, via a speculative rank-1
    inclusion (no full refit)."""
    if candidate in state.ids:
        raise SelectionError(f"candidate {candidate} already included")
    x_new = ctx.full_model.X[candidate]
    y_new = ctx.full_model.Y[candidate]
    idx = [i for i in state.ids] + [candidate]
    k_vec = ctx.gram_full[list(state.ids), candidate] if state.t else np.empty(0)
    spec_state = inc_include(
        state, x_new, y_new, point_id=candidate, k_vec=k_vec,
        k_star_col=ctx.gram_full[:, candidate], allow_refactor=False)

    if kind == "prediction_error":
        resid = spec_state.post_mean - ctx.full_model.Y
        return float(np.sum(resid * resid))

    z_a = spec_state.weights  # (t+1) x M
    q_aa = ctx.q_xx[np.ix_(idx, idx)]
    q_ab = ctx.q_xx[idx, :]
    if kind == "generalized_error":
        term_aa = np.einsum("im,ij,jm->", z_a, q_aa, z_a)
        term_ab = np.einsum("im,ij,jm->", z_a, q_ab, ctx.z_full)
        return float(term_aa - 2.0 * term_ab + ctx.const_bb)

    # normalized_error
    qa_z = q_aa @ z_a
    norms_sq_a = np.einsum("im,im->m", z_a, qa_z)
    if np.any(norms_sq_a <= 0):
        raise SelectionError("subset posterior mean has zero L2 norm")
    norm_a = np.sqrt(norms_sq_a)
    term_aa = norms_sq_a / norms_sq_a  # = 1 per output after normalization
    term_ab = np.einsum("im,ij,jm->m", z_a, q_ab, ctx.z_full) / (norm_a * ctx.norm_b)
    return float(np.sum(term_aa - 2.0 * term_ab + 1.0))


def greedy_forward_select(X, Y, subset_size: int, kind: str, spec: KernelSpec,
                          sigma: float, eval_inputs=None, callback=None):
    """Algorithm: at each step score every excluded candidate with the risk
    of its speculative inclusion and append the minimizer (ties break to the
    lowest index). Returns the inclusion order."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n = X.shape[0]
    if not 1 <= subset_size <= n:
        raise SelectionError(f"subset size {subset_size} outside [1, {n}]")
    ctx = make_risk_context(kind, spec, sigma, X, Y, eval_inputs=eval_inputs)
    state = inc_init(spec, sigma, X, n_outputs=Y.shape[1])
    order = []
    remaining = list(range(n))
    for _ in range(subset_size):
        risks = np.array([risk_eval(kind, state, ctx, c) for c in remaining])
        best = remaining[int(np.argmin(risks))]  # argmin takes first minimum
        state = inc_include(
            state, X[best], Y[best], point_id=best,
            k_vec=ctx.gram_full[list(state.ids), best] if state.t else np.empty(0),
            k_star_col=ctx.gram_full[:, best], allow_refactor=False)
        order.append(best)
        remaining.remove(best)
        if callback is not None:
            callback(order, state)
    return order

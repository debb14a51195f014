"""Active-learning loop that recommends magnitude spectra to a listener.

Each round the learner picks a candidate MP row from a pool, the listener
reports where the rendered sound appears to come from, and a GP over the
localization-error surface

    SSLE(u, v) = -u^T v        (-1 iff the report v matches the target u)

is updated with the new (features, error) pair. The next query minimizes the
expected loss

    W = E[min(gamma, eta)],  gamma ~ N(mu, C)
      = eta + (mu - eta) Phi((eta - mu)/s) - s phi((eta - mu)/s),  s = sqrt(C)

against the running per-target error minimum eta. The density term scales
with the standard deviation, not the variance; the Monte Carlo anchor
E[min(N(0,1), 0)] = -1/sqrt(2 pi) pins the form down.

A session walks an ordered target plan, one block of rounds per target. Block
round 0 always queries the population-average (non-individualized) filter,
recorded with candidate id -1. Every round is appended to a JSON-lines log
before the session state advances, so a session can be replayed from its log
and continued with identical subsequent queries.
"""

import hashlib
import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .gp_core import GpModel, predict
from .gp_incremental import inc_include, inc_init
from .kernels import KernelSpec

DEFAULT_SIGMA = 0.05
NONIND_ID = -1

log = logging.getLogger(__name__)


class ActiveError(ValueError):
    pass


class PoolExhausted(ActiveError):
    pass


def ssle(u, v) -> float:
    """Localization error of report v against target u; -1 is perfect."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if abs(np.linalg.norm(u) - 1) > 1e-6 or abs(np.linalg.norm(v) - 1) > 1e-6:
        raise ActiveError("ssle arguments must be unit vectors")
    return float(np.clip(-u @ v, -1.0, 1.0))


def expected_loss(mu: float, c: float, eta: float) -> float:
    """E[min(gamma, eta)] for gamma ~ N(mu, c); c is a variance."""
    if c < 0:
        raise ActiveError("variance must be >= 0")
    if c == 0:
        return min(mu, eta)
    s = np.sqrt(c)
    a = (eta - mu) / s
    return float(eta + (mu - eta) * norm.cdf(a) - s * norm.pdf(a))


def _expected_loss_rows(mean, var, eta, rho):
    """Weighted expected loss per candidate row.

    mean: n x p posterior means, var: length-n shared variances,
    eta: length-p running minima, rho: length-p weights. Returns length n.
    """
    s = np.sqrt(var)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(s > 0, (eta[None, :] - mean) / np.where(s > 0, s, 1.0), 0.0)
    w = np.where(
        s > 0,
        eta[None, :] + (mean - eta[None, :]) * norm.cdf(a) - s * norm.pdf(a),
        np.minimum(mean, eta[None, :]),
    )
    return w @ rho


@dataclass(frozen=True)
class TargetSet:
    """Target directions (rows) with simplex weights."""

    U: np.ndarray        # p x 3
    weights: np.ndarray  # length p

    def __post_init__(self):
        if self.U.ndim != 2 or self.U.shape[1] != 3 or self.U.shape[0] == 0:
            raise ActiveError("targets must form a nonempty p x 3 matrix")
        if np.any(np.abs(np.linalg.norm(self.U, axis=1) - 1) > 1e-6):
            raise ActiveError("target rows must be unit vectors")
        if self.weights.shape != (self.U.shape[0],) or np.any(self.weights < 0) \
                or abs(self.weights.sum() - 1) > 1e-9:
            raise ActiveError("weights must be a simplex vector of length p")

    @property
    def p(self):
        return self.U.shape[0]


def uniform_targets(directions) -> TargetSet:
    U = np.atleast_2d(np.asarray(directions, dtype=float))
    return TargetSet(U, np.full(U.shape[0], 1.0 / U.shape[0]))


def mp_digest(row) -> str:
    return hashlib.sha1(
        np.ascontiguousarray(row, dtype="<f4").tobytes()).hexdigest()


class Session:
    """One active-learning run over an ordered target plan.

    `pools` holds one candidate MP matrix per target (typically conditioned
    on that target); `nonind_rows` the per-target population-average row.
    One shared-prior incremental GP predicts all p error outputs from one
    inclusion per round; its test inputs are the active target's pool, so
    the state is rebuilt from the query history when the block changes.
    """

    def __init__(self, spec: KernelSpec, sigma: float, targets: TargetSet,
                 rounds_per_target: int, pools, nonind_rows,
                 log_path=None, session_id: str = ""):
        if rounds_per_target < 1:
            raise ActiveError("rounds per target must be >= 1")
        if len(pools) != targets.p:
            raise ActiveError("one candidate pool required per target")
        nonind_rows = np.atleast_2d(np.asarray(nonind_rows, dtype=float))
        if nonind_rows.shape[0] != targets.p:
            raise ActiveError("one non-individualized row required per target")
        self.spec = spec
        self.sigma = float(sigma)
        self.targets = targets
        self.rounds_per_target = int(rounds_per_target)
        self.pools = [np.atleast_2d(np.asarray(p, dtype=float)) for p in pools]
        self.nonind_rows = nonind_rows
        self.log_path = log_path
        self.session_id = session_id

        self.t = 0
        self.records = []
        self.eta = np.full(targets.p, np.inf)
        self.spent = [set() for _ in range(targets.p)]
        self.x_hist = []      # queried feature rows
        self.y_hist = []      # p-vector error rows
        self._gp = None
        self._gp_block = None
        self._pending = None  # (candidate_id, mp_row)

    @property
    def total_rounds(self):
        return self.targets.p * self.rounds_per_target

    @property
    def complete(self):
        return self.t >= self.total_rounds

    @property
    def target_index(self):
        return min(self.t // self.rounds_per_target, self.targets.p - 1)

    @property
    def round_in_block(self):
        return self.t % self.rounds_per_target

    def _gp_state(self):
        """Incremental GP with the active pool as test inputs, rebuilt on
        block change by replaying the query history."""
        ti = self.target_index
        if self._gp is None or self._gp_block != ti:
            state = inc_init(self.spec, self.sigma, self.pools[ti],
                             n_outputs=self.targets.p)
            for x, y in zip(self.x_hist, self.y_hist):
                state = inc_include(state, x, y, allow_refactor=False)
            self._gp = state
            self._gp_block = ti
        return self._gp

    def select_query(self):
        """Candidate id and MP row for the current round (cached until the
        matching response arrives)."""
        if self.complete:
            raise ActiveError("session is complete")
        if self._pending is not None:
            return self._pending
        ti = self.target_index
        if self.round_in_block == 0:
            self._pending = (NONIND_ID, self.nonind_rows[ti].copy())
            return self._pending
        pool = self.pools[ti]
        unspent = [i for i in range(pool.shape[0]) if i not in self.spent[ti]]
        if not unspent:
            raise PoolExhausted(f"candidate pool for target {ti} is exhausted")
        state = self._gp_state()
        mean = state.post_mean[unspent]          # len(unspent) x p
        var = np.maximum(state.post_var[unspent], 0.0)
        scores = _expected_loss_rows(mean, var, self.eta, self.targets.weights)
        best = unspent[int(np.argmin(scores))]
        self._pending = (best, pool[best].copy())
        return self._pending

    def apply_response(self, v) -> dict:
        """Record the listener's reported direction for the pending query,
        update the error surface model, and append to the log."""
        v = np.asarray(v, dtype=float).ravel()
        if v.shape != (3,) or abs(np.linalg.norm(v) - 1) > 1e-6:
            raise ActiveError("reported direction must be a 3D unit vector")
        cand_id, mp_row = self.select_query()
        ti = self.target_index
        y_col = np.clip(-(self.targets.U @ v), -1.0, 1.0)
        self.eta = np.minimum(self.eta, y_col)
        record = {
            "t": self.t,
            "target_index": ti,
            "candidate_id": int(cand_id),
            "mp_digest": mp_digest(mp_row),
            "v": [float(c) for c in v],
            "ssle": [float(c) for c in y_col],
            "eta": [float(c) for c in self.eta],
        }
        if self.log_path is not None:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
                fh.flush()
        self.records.append(record)
        self.x_hist.append(mp_row)
        self.y_hist.append(y_col)
        if self._gp is not None and self._gp_block == ti:
            self._gp = inc_include(self._gp, mp_row, y_col)
        if cand_id != NONIND_ID:
            self.spent[ti].add(cand_id)
        self.t += 1
        self._pending = None
        return record

    def best_per_target(self):
        """Per target: round index and reported direction of its best
        (lowest-error) round against that target."""
        out = []
        for u in range(self.targets.p):
            if not self.records:
                out.append(None)
                continue
            errs = [rec["ssle"][u] for rec in self.records]
            k = int(np.argmin(errs))
            out.append({"t": k, "ssle": errs[k], "v": self.records[k]["v"],
                        "candidate_id": self.records[k]["candidate_id"]})
        return out

    def replay(self, records):
        """Re-apply logged rounds; digests guard against a mismatched pool."""
        for rec in records:
            cand_id, mp_row = self.select_query()
            if cand_id != rec["candidate_id"] or mp_digest(mp_row) != rec["mp_digest"]:
                raise ActiveError(
                    f"log round {rec['t']} does not match the reconstructed query"
                )
            self.apply_response(np.asarray(rec["v"], dtype=float))


def read_session_log(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def step(session: Session, listener) -> dict:
    """One round: select the query, ask the listener, record the response."""
    _, mp_row = session.select_query()
    return session.apply_response(listener.respond(mp_row))


def run_session(session: Session, listener) -> Session:
    while not session.complete:
        step(session, listener)
    return session


class SimulatedListener:
    """Stand-in for a human: localizes an MP row with a trained direction GP."""

    def __init__(self, ssl_model: GpModel, mode: str = "posterior_mean",
                 seed: int = 0):
        if mode not in ("posterior_mean", "posterior_sample"):
            raise ActiveError(f"unknown listener mode {mode!r}")
        self.model = ssl_model
        self.mode = mode
        self.rng = np.random.default_rng(seed)
        self._last = np.array([0.0, 1.0, 0.0])

    def respond(self, mp_row) -> np.ndarray:
        post = predict(self.model, np.asarray(mp_row, dtype=float)[None, :])
        mean = post.mean[0]
        if self.mode == "posterior_sample":
            sd = np.sqrt(max(post.var[0], 0.0))
            mean = mean + sd * self.rng.standard_normal(3)
        n = np.linalg.norm(mean)
        if n == 0:
            log.warning("degenerate zero-norm posterior; repeating last report")
            return self._last.copy()
        self._last = mean / n
        return self._last.copy()


def make_simulated_listener(ssl_model: GpModel, mode: str = "posterior_mean",
                            seed: int = 0) -> SimulatedListener:
    return SimulatedListener(ssl_model, mode, seed)


def gp_ssle_prior_from_ssl(ssl_models, sigma: float = DEFAULT_SIGMA):
    """Error-surface prior from direction-model hyperparameters: per-dimension
    geometric means across models, fixed small noise."""
    if not ssl_models:
        raise ActiveError("at least one model required")
    nu = ssl_models[0].spec.nu
    dim = ssl_models[0].spec.dim
    for m in ssl_models:
        if m.spec.dim != dim:
            raise ActiveError("models disagree on feature dimension")
        if m.spec.nu != nu:
            raise ActiveError("models disagree on covariance class")
    log_ell = np.mean([np.log(m.spec.length_scales) for m in ssl_models], axis=0)
    log_alpha = np.mean([np.log(m.spec.signal_scale) for m in ssl_models])
    return KernelSpec(nu, np.exp(log_ell), float(np.exp(log_alpha))), float(sigma)

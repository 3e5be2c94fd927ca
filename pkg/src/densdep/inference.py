"""Particle learning over the model order.

One Rao-Blackwellized particle bank runs per candidate order k. Each
particle carries a five-year lag window, regression sufficient statistics
for the transition given its latent path, and a current draw of
``(b, sigma2)``. Each year a bank

1. scores every particle by the closed-form one-step predictive density of
   the new observation and accumulates the bank's log evidence,
2. resamples systematically when the effective sample size falls below
   half the bank size,
3. proposes the new latent state from its exact Gaussian conditional given
   the observation,
4. folds the realised transition into the sufficient statistics, and
5. refreshes ``(sigma2, b)`` with one Gibbs sweep from those statistics,
   honouring the prior's stability truncation exactly.

The model posterior is the softmax of log prior plus per-bank log evidence.
Banks never interact, so they can run in any order or in parallel; each
draws from its own generator seeded by ``(seed, k)``.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, logsumexp, ndtri_exp

from . import _linalg
from .dynamics import DIVERGENCE_BOUND, MAX_ORDER
from .errors import Diverged, InsufficientWarmup
from .priors import (
    STABLE_HIGH,
    STABLE_LOW,
    WARMUP,
    HyperParams,
    PriorFamily,
    build_prior,
    initial_state_prior,
    sample_b,
)
from .resampling import effective_sample_size, systematic_resample

ORDERS = tuple(range(MAX_ORDER + 1))
DEFAULT_PARTICLES = 5000
# weak proper prior on sigma2: one pseudo-residual of size 0.1
DEFAULT_SIGMA2_PRIOR = (0.5, 0.005)
_LOG2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class EngineOptions:
    """Knobs shared by every bank.

    ``sigma2_fixed`` pins the innovation variance and disables its learning.
    ``store_predictive`` keeps per-particle one-step predictions so a joint
    predictive covariance can be recovered along ancestral lines.
    """

    sigma2_prior: tuple = DEFAULT_SIGMA2_PRIOR
    sigma2_fixed: float = None
    ess_threshold: float = 0.5
    store_predictive: bool = False

    def __post_init__(self):
        a0, r0 = self.sigma2_prior
        if self.sigma2_fixed is None and not (a0 > 0 and r0 > 0):
            raise ValueError(
                "sigma2_prior must be proper (shape > 0, rate > 0) unless sigma2_fixed is set"
            )
        if self.sigma2_fixed is not None and not self.sigma2_fixed > 0:
            raise ValueError("sigma2_fixed must be > 0")


def bank_rng(seed, k):
    return np.random.default_rng([int(seed), int(k)])


def truncated_std_normal(a, b, rng):
    """Inverse-CDF draws from N(0, 1) restricted to (a, b), stable in the tails.

    Intervals in the upper tail are mirrored into the lower tail and the
    CDF is inverted in log space.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    log_lo, log_hi = log_ndtr(lo), log_ndtr(hi)
    with np.errstate(divide="ignore"):
        log_mass = log_hi + np.log1p(-np.exp(log_lo - log_hi))
    u = rng.random(a.shape)
    x = ndtri_exp(np.logaddexp(log_lo, np.log(u) + log_mass))
    x = np.clip(x, lo, hi)
    return np.where(flip, -x, x)


def draw_coefficients(prec, rhs, truncated, rng):
    """Draw b ~ N(prec^-1 rhs, prec^-1) for a batch of precision matrices.

    Arrays are particle-last: ``prec`` is (p, p, n) and ``rhs`` is (p, n).
    With ``truncated`` the draw is conditioned on
    STABLE_LOW < b1 + ... + bk < STABLE_HIGH: the lag sum comes from its
    truncated marginal and the rest of the vector from the exact Gaussian
    conditional, so no rejection loop is needed.
    """
    p, n = rhs.shape
    L = _linalg.cholesky(prec)
    xi = rng.standard_normal((p, n))
    if not truncated:
        u = _linalg.solve_lower(L, rhs)
        return _linalg.solve_upper_t(L, u + xi)

    c = np.ones((p, n))
    c[0] = 0.0
    U = _linalg.solve_lower(L, np.stack([rhs, c], axis=1))
    V = _linalg.solve_upper_t(L, np.stack([U[:, 0], U[:, 0] + xi, U[:, 1]], axis=1))
    mean, z, cov_c = V[:, 0], V[:, 1], V[:, 2]
    var_s = (U[:, 1] ** 2).sum(axis=0)
    mu_s = mean[1:].sum(axis=0)
    sd_s = np.sqrt(var_s)
    s = mu_s + sd_s * truncated_std_normal((STABLE_LOW - mu_s) / sd_s,
                                           (STABLE_HIGH - mu_s) / sd_s, rng)
    s = np.clip(s, np.nextafter(STABLE_LOW, 0), np.nextafter(STABLE_HIGH, -1))
    return z + cov_c * ((s - z[1:].sum(axis=0)) / var_s)


class ParticleBank:
    """Particle learning for a single model order ``k``.

    Per-particle arrays keep the particle index last so that updates are
    contiguous vector operations: ``lag`` is (5, n) most recent first,
    ``b`` is (k+1, n), ``XtX`` is (k+1, k+1, n).
    """

    def __init__(self, k, prior, warmup_prior, n_particles, rng, options):
        self.k = k
        self.prior = prior
        self.rng = rng
        self.options = options
        self.n = n_particles
        p = k + 1
        self._prior_prec = np.linalg.inv(prior.cov)

        warm = warmup_prior.sample(n_particles, rng)  # chronological x_1..x_5
        self.lag = np.ascontiguousarray(warm[:, ::-1].T)
        self.b = np.ascontiguousarray(sample_b(prior, n_particles, rng).T)
        if options.sigma2_fixed is not None:
            self.s2 = np.full(n_particles, float(options.sigma2_fixed))
        else:
            a0, r0 = options.sigma2_prior
            self.s2 = r0 / rng.gamma(a0, size=n_particles)
        self.XtX = np.zeros((p, p, n_particles))
        self.Xty = np.zeros((p, n_particles))
        self.yty = np.zeros(n_particles)
        self.n_obs = 0
        self.logw = np.full(n_particles, -np.log(n_particles))

        self.xs = [warm[:, j].copy() for j in range(WARMUP)]
        self.ancestors = [None] * WARMUP
        self.pred_means = [None] * WARMUP
        self.pred_s2 = [None] * WARMUP

    @property
    def weights(self):
        w = np.exp(self.logw - self.logw.max())
        return w / w.sum()

    @property
    def params(self):
        """Current coefficient draws, shape (n, k+1)."""
        return self.b.T

    def _regressors(self):
        z = np.empty((self.k + 1, self.n))
        z[0] = 1.0
        np.exp(self.lag[:self.k], out=z[1:])
        return z

    def transition_means(self):
        return self.lag[0] + (self._regressors() * self.b).sum(axis=0)

    def predict(self):
        """Weighted one-step predictive mean and variance of the next latent state."""
        w = self.weights
        m = self.transition_means()
        mean = w @ m
        var = w @ (self.s2 + (m - mean) ** 2)
        return float(mean), float(var)

    def filtered(self):
        w = self.weights
        x = self.lag[0]
        mean = w @ x
        return float(mean), float(w @ (x - mean) ** 2)

    def assimilate(self, y, S):
        """Absorb one observation; returns the log predictive density increment."""
        if not S > 0:
            raise ValueError("observation SD must be > 0")
        z = self._regressors()
        m = self.lag[0] + (z * self.b).sum(axis=0)
        total_var = self.s2 + S * S
        loglik = -0.5 * (_LOG2PI + np.log(total_var) + (y - m) ** 2 / total_var)

        logw = self.logw + loglik
        increment = logsumexp(logw)
        if not np.isfinite(increment):
            raise Diverged(f"bank k={self.k}: all particles have zero predictive density")
        self.logw = logw - increment

        store = self.options.store_predictive
        self.pred_means.append(m if store else None)
        self.pred_s2.append(self.s2.copy() if store else None)

        w = self.weights
        if effective_sample_size(w) < self.options.ess_threshold * self.n:
            idx = systematic_resample(w, self.rng)
            self.lag, self.b, self.s2 = self.lag[:, idx], self.b[:, idx], self.s2[idx]
            self.XtX, self.Xty, self.yty = self.XtX[:, :, idx], self.Xty[:, idx], self.yty[idx]
            z, m = z[:, idx], m[idx]
            self.logw = np.full(self.n, -np.log(self.n))
            self.ancestors.append(idx)
        else:
            self.ancestors.append(None)

        # exact conditional of x_t given the lag window, parameters and y_t
        s2 = self.s2
        denom = s2 + S * S
        post_mean = (m * S * S + y * s2) / denom
        post_sd = np.sqrt(s2 * S * S / denom)
        x = post_mean + post_sd * self.rng.standard_normal(self.n)
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > DIVERGENCE_BOUND):
            raise Diverged(
                f"bank k={self.k}: latent state beyond |x| > {DIVERGENCE_BOUND:g}",
                index=len(self.xs),
            )
        self.xs.append(x)

        r = x - self.lag[0]
        self.XtX += z[:, None, :] * z[None, :, :]
        self.Xty += z * r
        self.yty += r * r
        self.n_obs += 1
        self.lag = np.concatenate([x[None], self.lag[:-1]], axis=0)
        self._refresh_parameters()
        return float(increment)

    def _refresh_parameters(self):
        """One Gibbs sweep of (sigma2 | b) then (b | sigma2) given the statistics."""
        rng = self.rng
        if self.options.sigma2_fixed is None:
            b = self.b
            quad = (b[:, None, :] * self.XtX * b[None, :, :]).sum(axis=(0, 1))
            ssr = np.maximum(self.yty - 2 * (b * self.Xty).sum(axis=0) + quad, 0.0)
            a0, r0 = self.options.sigma2_prior
            self.s2 = (r0 + 0.5 * ssr) / rng.gamma(a0 + 0.5 * self.n_obs, size=self.n)

        inv_s2 = 1.0 / self.s2
        prec = self._prior_prec[:, :, None] + self.XtX * inv_s2
        self.b = draw_coefficients(prec, self.Xty * inv_s2, self.prior.truncated, rng)

    def lineages(self):
        """Ancestral paths of the current particles, shape (n, T)."""
        T = len(self.xs)
        paths = np.empty((self.n, T))
        idx = np.arange(self.n)
        for t in range(T - 1, -1, -1):
            paths[:, t] = self.xs[t][idx]
            if self.ancestors[t] is not None:
                idx = self.ancestors[t][idx]
        return paths

    def lineage_predictions(self):
        """Per-lineage one-step predictive means and sigma2, shape (n, T - 5) each."""
        T = len(self.xs)
        means = np.empty((self.n, T - WARMUP))
        s2 = np.empty((self.n, T - WARMUP))
        idx = np.arange(self.n)
        for t in range(T - 1, WARMUP - 1, -1):
            if self.ancestors[t] is not None:
                idx = self.ancestors[t][idx]
            # predictions for x_t were made by the particles alive at t-1
            means[:, t - WARMUP] = self.pred_means[t][idx]
            s2[:, t - WARMUP] = self.pred_s2[t][idx]
        return means, s2

    def parameter_summary(self):
        w = self.weights
        mean = self.b @ w
        sd = np.sqrt(((self.b - mean[:, None]) ** 2) @ w)
        s2_mean = w @ self.s2
        return {"b_mean": mean, "b_sd": sd, "sigma2_mean": float(s2_mean),
                "sigma2_sd": float(np.sqrt(w @ (self.s2 - s2_mean) ** 2))}


@dataclass
class FilterState:
    banks: dict
    log_evidence: dict
    model_prior: np.ndarray
    t: int
    family: PriorFamily = None

    @property
    def orders(self):
        return tuple(self.banks)


def _check_series(observations, n_particles):
    if len(observations.y) < WARMUP + 1:
        raise InsufficientWarmup(
            f"need at least {WARMUP + 1} observations, got {len(observations.y)}"
        )
    if n_particles < 100:
        raise ValueError("n_particles must be >= 100")


def init(observations, family, hyper=None, n_particles=DEFAULT_PARTICLES, seed=0,
         orders=ORDERS, model_prior=None, options=None):
    """Set up one bank per order with particles drawn from the priors at t = 5."""
    _check_series(observations, n_particles)
    family = PriorFamily.parse(family)
    hyper = hyper or HyperParams()
    options = options or EngineOptions()
    warm = initial_state_prior(observations.y, observations.S)
    banks = {
        k: ParticleBank(k, build_prior(family, k, hyper), warm, n_particles,
                        bank_rng(seed, k), options)
        for k in orders
    }
    if model_prior is None:
        model_prior = np.full(len(orders), 1.0 / len(orders))
    model_prior = np.asarray(model_prior, dtype=float)
    if model_prior.shape != (len(orders),) or np.any(model_prior < 0):
        raise ValueError("model_prior must be a nonnegative vector, one entry per order")
    model_prior = model_prior / model_prior.sum()
    return FilterState(banks, {k: 0.0 for k in orders}, model_prior, WARMUP, family)


def assimilate(state, y_t, S_t):
    """Advance every bank by one year, in place. Returns (state, {k: log increment})."""
    increments = {}
    for k, bank in state.banks.items():
        inc = bank.assimilate(float(y_t), float(S_t))
        state.log_evidence[k] += inc
        increments[k] = inc
    state.t += 1
    return state, increments


def posterior_from_evidence(log_evidence, model_prior):
    with np.errstate(divide="ignore"):
        logp = np.log(np.asarray(model_prior, dtype=float)) + np.asarray(log_evidence, dtype=float)
    logp = logp - logp.max()
    p = np.exp(logp)
    return p / p.sum()


def model_posterior(state):
    """Posterior probabilities over the bank orders (in ``state.orders`` order)."""
    return posterior_from_evidence([state.log_evidence[k] for k in state.orders], state.model_prior)


def mixture_moments(weights, means, variances):
    """Mean and variance of a finite Gaussian mixture."""
    weights = np.asarray(weights, dtype=float)
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    mean = weights @ means
    return float(mean), float(weights @ (variances + (means - mean) ** 2))


def predict_one_step(state):
    """Per-bank and model-averaged predictive moments for the next latent state.

    Returns ``(per_bank, (mean, var))`` where ``per_bank`` maps k to
    ``(mean, var)``.
    """
    per_bank = {k: bank.predict() for k, bank in state.banks.items()}
    post = model_posterior(state)
    means = [per_bank[k][0] for k in state.orders]
    variances = [per_bank[k][1] for k in state.orders]
    return per_bank, mixture_moments(post, means, variances)


def smoothed_path(state):
    """Weighted ancestral-path average per bank, mixed by the model posterior."""
    post = model_posterior(state)
    paths = np.array([bank.weights @ bank.lineages() for bank in state.banks.values()])
    return post @ paths


@dataclass
class BankRun:
    """Everything a single bank contributes to a posterior trace."""

    k: int
    increments: np.ndarray
    pred_mean: np.ndarray
    pred_var: np.ndarray
    filt_mean: np.ndarray
    filt_var: np.ndarray
    smoothed: np.ndarray
    params: dict
    lineage_pred: tuple = None
    lineage_weights: np.ndarray = None


@dataclass
class PosteriorTrace:
    """Time-indexed output of a full filtering pass.

    ``times`` runs from 5 (the model prior) to T; ``pred_times`` from 6 to T.
    Columns of the per-bank arrays follow ``orders``.
    """

    orders: tuple
    family: PriorFamily
    times: np.ndarray
    posterior: np.ndarray
    log_evidence: np.ndarray
    pred_times: np.ndarray
    bank_pred_mean: np.ndarray
    bank_pred_var: np.ndarray
    pred_mean: np.ndarray
    pred_var: np.ndarray
    bank_filt_mean: np.ndarray
    bank_filt_var: np.ndarray
    bank_smoothed: np.ndarray
    smoothed: np.ndarray
    params: dict = field(default_factory=dict)
    lineage_pred: dict = None
    lineage_weights: dict = None

    @property
    def final_posterior(self):
        return self.posterior[-1]

    def posterior_at(self, t):
        return self.posterior[int(np.searchsorted(self.times, t))]


def run_bank(observations, k, family, hyper=None, n_particles=DEFAULT_PARTICLES, seed=0,
             options=None):
    """Filter the whole series with a single order-k bank."""
    _check_series(observations, n_particles)
    options = options or EngineOptions()
    family = PriorFamily.parse(family)
    prior = build_prior(family, k, hyper or HyperParams())
    warm = initial_state_prior(observations.y, observations.S)
    bank = ParticleBank(k, prior, warm, n_particles, bank_rng(seed, k), options)
    y, S = observations.y, observations.S
    T = len(y)
    inc = np.empty(T - WARMUP)
    pm, pv, fm, fv = (np.empty(T - WARMUP) for _ in range(4))
    for j, t in enumerate(range(WARMUP, T)):
        pm[j], pv[j] = bank.predict()
        inc[j] = bank.assimilate(y[t], S[t])
        fm[j], fv[j] = bank.filtered()
    lineage = bank.lineage_predictions() if options.store_predictive else None
    return BankRun(k, inc, pm, pv, fm, fv, bank.weights @ bank.lineages(),
                   bank.parameter_summary(), lineage,
                   bank.weights if options.store_predictive else None)


def _run_bank_star(args):
    return run_bank(*args)


def run_filter(observations, family, hyper=None, n_particles=DEFAULT_PARTICLES, seed=0,
               orders=ORDERS, model_prior=None, options=None, n_jobs=1):
    """Run every bank over the series and assemble a :class:`PosteriorTrace`.

    Equivalent to ``init`` followed by repeated ``assimilate``; banks are
    independent so ``n_jobs > 1`` runs them in worker processes with the
    same result.
    """
    _check_series(observations, n_particles)
    family = PriorFamily.parse(family)
    hyper = hyper or HyperParams()
    options = options or EngineOptions()
    orders = tuple(orders)
    if model_prior is None:
        model_prior = np.full(len(orders), 1.0 / len(orders))
    model_prior = np.asarray(model_prior, dtype=float) / np.sum(model_prior)

    jobs = [(observations, k, family, hyper, n_particles, seed, options) for k in orders]
    if n_jobs > 1 and len(orders) > 1:
        with ProcessPoolExecutor(max_workers=min(n_jobs, len(orders))) as pool:
            runs = list(pool.map(_run_bank_star, jobs))
    else:
        runs = [run_bank(*job) for job in jobs]
    return assemble_trace(runs, family, model_prior)


def assemble_trace(runs, family, model_prior):
    orders = tuple(r.k for r in runs)
    increments = np.stack([r.increments for r in runs], axis=1)
    log_ev = np.vstack([np.zeros(len(orders)), np.cumsum(increments, axis=0)])
    posterior = np.array([posterior_from_evidence(row, model_prior) for row in log_ev])
    n_steps = increments.shape[0]
    times = np.arange(WARMUP, WARMUP + n_steps + 1)

    bank_pm = np.stack([r.pred_mean for r in runs], axis=1)
    bank_pv = np.stack([r.pred_var for r in runs], axis=1)
    # predictions for time t mix banks by the posterior at t-1
    prev = posterior[:-1]
    pred_mean = np.einsum("tk,tk->t", prev, bank_pm)
    pred_var = np.einsum("tk,tk->t", prev, bank_pv + (bank_pm - pred_mean[:, None]) ** 2)
    bank_smoothed = np.stack([r.smoothed for r in runs])
    smoothed = posterior[-1] @ bank_smoothed

    lineage_pred = lineage_weights = None
    if runs[0].lineage_pred is not None:
        lineage_pred = {r.k: r.lineage_pred for r in runs}
        lineage_weights = {r.k: r.lineage_weights for r in runs}

    return PosteriorTrace(
        orders=orders, family=family, times=times, posterior=posterior, log_evidence=log_ev,
        pred_times=times[1:], bank_pred_mean=bank_pm, bank_pred_var=bank_pv,
        pred_mean=pred_mean, pred_var=pred_var,
        bank_filt_mean=np.stack([r.filt_mean for r in runs], axis=1),
        bank_filt_var=np.stack([r.filt_var for r in runs], axis=1),
        bank_smoothed=bank_smoothed, smoothed=smoothed,
        params={r.k: r.params for r in runs},
        lineage_pred=lineage_pred, lineage_weights=lineage_weights,
    )

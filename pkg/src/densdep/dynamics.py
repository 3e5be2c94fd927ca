"""Generative model: log-abundance autoregression with Gaussian observation noise.

The latent log abundance evolves as

    x_t = x_{t-1} + b_0 + sum_{i=1..k} b_i exp(x_{t-i}) + eps_t,   eps_t ~ N(0, sigma2)

and is observed as y_t ~ N(x_t, S_t^2) with S_t known. Lag windows are
always ordered most recent first.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import CapacityUndefinedForNull, Diverged

MAX_ORDER = 5
DIVERGENCE_BOUND = 50.0


class Regime(Enum):
    UNSTABLE = "Unstable"
    MONOTONE_RETURN = "MonotoneReturn"
    DAMPED_OSCILLATION = "DampedOscillation"
    SUSTAINED_OR_UNBOUNDED = "SustainedOrUnbounded"
    NULL_MODEL = "NullModel"


@dataclass(frozen=True)
class DynamicsParams:
    """Model order ``k``, coefficients ``b`` (length k+1) and innovation variance.

    ``sigma2 = 0`` is accepted so that deterministic trajectories can be
    produced with the same code path.
    """

    k: int
    b: tuple
    sigma2: float

    def __post_init__(self):
        b = tuple(float(v) for v in np.atleast_1d(self.b))
        object.__setattr__(self, "b", b)
        if not (isinstance(self.k, (int, np.integer)) and 0 <= self.k <= MAX_ORDER):
            raise ValueError(f"k must be an integer in 0..{MAX_ORDER}, got {self.k!r}")
        if len(b) != self.k + 1:
            raise ValueError(f"b must have k+1={self.k + 1} entries, got {len(b)}")
        if not np.isfinite(self.sigma2) or self.sigma2 < 0:
            raise ValueError(f"sigma2 must be finite and >= 0, got {self.sigma2}")


@dataclass(frozen=True)
class Trajectory:
    latent: np.ndarray
    observed: np.ndarray
    obs_sd: np.ndarray
    t0: int = 1

    def __post_init__(self):
        n = len(self.latent)
        if len(self.observed) != n or len(self.obs_sd) != n:
            raise ValueError("latent, observed and obs_sd must have equal length")
        if np.any(np.asarray(self.obs_sd) <= 0):
            raise ValueError("every obs_sd must be > 0")

    @property
    def times(self):
        return np.arange(self.t0, self.t0 + len(self.latent))


def _check_history(history, index=None):
    history = np.asarray(history, dtype=float)
    if not np.all(np.isfinite(history)) or np.any(np.abs(history) > DIVERGENCE_BOUND):
        raise Diverged(f"latent state beyond |x| > {DIVERGENCE_BOUND:g}", index=index)
    return history


def transition_mean(history, b):
    """Deterministic part of the update for a most-recent-first lag window."""
    b = np.asarray(b, dtype=float)
    k = len(b) - 1
    history = np.asarray(history, dtype=float)
    return history[0] + b[0] + float(np.dot(b[1:], np.exp(history[:k])))


def step(history, params, innovation=0.0):
    """Advance the latent state one year.

    ``history`` holds x_{t-1}, ..., x_{t-k} (at least one entry). Raises
    :class:`Diverged` when any lagged state exceeds the divergence bound.
    """
    history = _check_history(history)
    k = params.k
    if len(history) < max(k, 1):
        raise ValueError(f"history needs at least {max(k, 1)} entries for k={k}")
    return transition_mean(history, params.b) + float(innovation)


def simulate(params, init, horizon, obs_sd, seed):
    """Simulate a latent path and its noisy observations.

    Parameters
    ----------
    params : DynamicsParams
    init : sequence of float
        Starting lag window, most recent first; at least ``max(k, 1)`` long.
        These values become the first ``len(init)`` latent states.
    horizon : int
        Total number of years in the returned trajectory.
    obs_sd : float or sequence of float
        Observation standard deviation per year (broadcast if scalar).
    seed : int

    Returns
    -------
    Trajectory
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    init = np.atleast_1d(np.asarray(init, dtype=float))
    if len(init) < max(params.k, 1):
        raise ValueError(f"init needs at least {max(params.k, 1)} entries for k={params.k}")
    if len(init) > horizon:
        raise ValueError("init is longer than the horizon")
    obs_sd = np.broadcast_to(np.asarray(obs_sd, dtype=float), (horizon,)).copy()
    if np.any(obs_sd <= 0):
        raise ValueError("every obs_sd must be > 0")

    rng = np.random.default_rng(seed)
    sigma = np.sqrt(params.sigma2)
    n0 = len(init)
    latent = np.empty(horizon)
    latent[:n0] = init[::-1]
    _check_history(init, index=0)
    innovations = rng.standard_normal(horizon - n0) * sigma
    lags = max(params.k, 1)
    for t in range(n0, horizon):
        window = latent[t - lags:t][::-1]
        latent[t] = transition_mean(window, params.b) + innovations[t - n0]
        if not np.isfinite(latent[t]) or abs(latent[t]) > DIVERGENCE_BOUND:
            raise Diverged(f"simulation diverged at index {t}", index=t)
    observed = latent + rng.standard_normal(horizon) * obs_sd
    return Trajectory(latent=latent, observed=observed, obs_sd=obs_sd)


def carrying_capacity(b, k):
    """Stationary log abundance log(-b0 / sum(b1..bk)), or None if undefined."""
    if k == 0:
        raise CapacityUndefinedForNull("the k=0 random walk has no carrying capacity")
    b = np.asarray(b, dtype=float)
    if len(b) != k + 1:
        raise ValueError(f"b must have k+1={k + 1} entries")
    s = b[1:].sum()
    if b[0] * s < 0:
        return float(np.log(-b[0] / s))
    return None


def classify_stability(b, k):
    """Classify the return dynamics from the sum of the lag coefficients.

    Boundaries go to the more oscillatory regime: s = 0 is Unstable,
    s = -1 DampedOscillation, s = -2 SustainedOrUnbounded.
    """
    b = np.asarray(b, dtype=float)
    if len(b) != k + 1:
        raise ValueError(f"b must have k+1={k + 1} entries")
    if k == 0:
        return Regime.NULL_MODEL
    s = b[1:].sum()
    if s >= 0:
        return Regime.UNSTABLE
    if s > -1:
        return Regime.MONOTONE_RETURN
    if s > -2:
        return Regime.DAMPED_OSCILLATION
    return Regime.SUSTAINED_OR_UNBOUNDED

"""Prior families for the dynamics coefficients and the nuisance priors.

All coefficient priors are zero-mean Gaussians over ``b = (b0, b1, ..., bk)``.
The structured families encode that, with the data centred so that the
carrying capacity sits at log abundance 0, the growth rate ``b0`` must
counterbalance the summed lag effects. Truncated families restrict support
to the stability region ``-2 < b1 + ... + bk < 0``.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .dynamics import MAX_ORDER
from .errors import InsufficientWarmup, RejectionBudgetExceeded

DEFAULT_H = 0.04225
STABLE_LOW, STABLE_HIGH = -2.0, 0.0
WARMUP = 5
MAX_PROPOSALS = 10**7


class PriorFamily(Enum):
    INDEPENDENT5 = "indep5"
    INDEPENDENT1 = "indep1"
    CORRELATED = "corr"
    SHRINKAGE1 = "shrink1"
    SHRINKAGE2 = "shrink2"

    @property
    def label(self):
        return _LABELS[self]

    @property
    def structured(self):
        return self in (PriorFamily.CORRELATED, PriorFamily.SHRINKAGE1, PriorFamily.SHRINKAGE2)

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown prior family {value!r}; choose from {names}") from None


_LABELS = {
    PriorFamily.INDEPENDENT5: "N(0,5)",
    PriorFamily.INDEPENDENT1: "N(0,1)",
    PriorFamily.CORRELATED: "Corr.",
    PriorFamily.SHRINKAGE1: "Shrink. 1",
    PriorFamily.SHRINKAGE2: "Shrink. 2",
}

# canonical column order for comparison tables
FAMILY_ORDER = tuple(PriorFamily)


@dataclass(frozen=True)
class HyperParams:
    sigma_b2: float = 1.0
    h: float = DEFAULT_H

    def __post_init__(self):
        if not self.sigma_b2 > 0:
            raise ValueError("sigma_b2 must be > 0")
        if not self.h >= 0:
            raise ValueError("h must be >= 0")


@dataclass(frozen=True)
class PriorSpec:
    """A (possibly truncated) zero-mean Gaussian prior over b.

    ``trunc_mass`` is the probability of the stability region under the
    untruncated Gaussian; it is 1 for untruncated specs.
    """

    family: PriorFamily
    k: int
    mean: np.ndarray
    cov: np.ndarray
    truncated: bool
    trunc_mass: float

    @property
    def dim(self):
        return self.k + 1

    @property
    def sum_vector(self):
        """Selector c with c @ b = b1 + ... + bk."""
        c = np.ones(self.k + 1)
        c[0] = 0.0
        return c

    def in_support(self, b):
        b = np.asarray(b, dtype=float)
        if not self.truncated:
            return np.ones(b.shape[:-1], dtype=bool) if b.ndim > 1 else True
        s = b[..., 1:].sum(axis=-1)
        return (s > STABLE_LOW) & (s < STABLE_HIGH)


def shrinkage_weight(k):
    """Weight d = 1 / (1 + 1/2 + ... + 1/k) making the lag variances sum to sigma_b2."""
    if k < 1:
        raise ValueError("shrinkage weight is defined for k >= 1")
    return 1.0 / sum(1.0 / j for j in range(1, k + 1))


def _stability_mass(cov):
    c = np.ones(len(cov))
    c[0] = 0.0
    sd = np.sqrt(c @ cov @ c)
    return float(ndtr((STABLE_HIGH) / sd) - ndtr(STABLE_LOW / sd))


def build_prior(family, k, hyper=None):
    """Construct the prior over b for model order ``k``.

    Structured families, with s2 = sigma_b2:

    * Correlated: var(b0) = k*s2 + h, var(bi) = s2, cov(b0, bi) = -s2.
    * Shrinkage1: var(b0) = s2 + h, var(bi) = s2/k, cov(b0, bi) = -s2/k.
    * Shrinkage2: var(b0) = s2 + h, var(bi) = s2*d/i, cov(b0, bi) = -s2*d/i.

    All three are truncated to the stability region. Under k = 0 the
    structured families reduce to N(0, h).
    """
    family = PriorFamily.parse(family)
    hyper = hyper or HyperParams()
    if not (isinstance(k, (int, np.integer)) and 0 <= k <= MAX_ORDER):
        raise ValueError(f"k must be an integer in 0..{MAX_ORDER}, got {k!r}")
    s2, h = hyper.sigma_b2, hyper.h
    p = k + 1

    if family is PriorFamily.INDEPENDENT5:
        cov = 5.0 * np.eye(p)
    elif family is PriorFamily.INDEPENDENT1:
        cov = np.eye(p)
    elif k == 0:
        if h == 0:
            raise ValueError("h must be > 0 for the k=0 structured prior")
        cov = np.array([[h]])
    else:
        if family is PriorFamily.CORRELATED:
            lag_var = np.full(k, s2)
        elif family is PriorFamily.SHRINKAGE1:
            lag_var = np.full(k, s2 / k)
        else:
            lag_var = s2 * shrinkage_weight(k) / np.arange(1, k + 1)
        cov = np.zeros((p, p))
        cov[0, 0] = lag_var.sum() + h
        cov[0, 1:] = cov[1:, 0] = -lag_var
        cov[1:, 1:] = np.diag(lag_var)

    truncated = family.structured and k >= 1
    mass = _stability_mass(cov) if truncated else 1.0
    return PriorSpec(family, k, np.zeros(p), cov, truncated, mass)


def sample_b(spec, n, seed):
    """Draw ``n`` coefficient vectors, rejecting proposals outside the support.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(spec.cov)
    if not spec.truncated:
        return spec.mean + rng.standard_normal((n, spec.dim)) @ chol.T

    out = np.empty((n, spec.dim))
    filled = proposed = 0
    while filled < n:
        need = n - filled
        batch = int(min(MAX_PROPOSALS - proposed, need / max(spec.trunc_mass, 1e-3) * 1.2 + 64))
        if batch <= 0:
            raise RejectionBudgetExceeded(
                f"rejection sampling needed more than {MAX_PROPOSALS} proposals "
                f"(acceptance {spec.trunc_mass:.3g})"
            )
        draws = spec.mean + rng.standard_normal((batch, spec.dim)) @ chol.T
        proposed += batch
        ok = draws[spec.in_support(draws)][:need]
        out[filled:filled + len(ok)] = ok
        filled += len(ok)
    return out


def log_prior_density(spec, b):
    b = np.asarray(b, dtype=float)
    if b.shape[-1] != spec.dim:
        raise ValueError(f"b has {b.shape[-1]} entries, prior expects {spec.dim}")
    logpdf = stats.multivariate_normal(spec.mean, spec.cov).logpdf(b)
    if not spec.truncated:
        return logpdf
    return np.where(spec.in_support(b), logpdf - np.log(spec.trunc_mass), -np.inf)


@dataclass(frozen=True)
class Sigma2Stats:
    """Inverse-gamma shape/rate accumulated for the innovation variance."""

    shape: float
    rate: float

    @property
    def degenerate(self):
        return self.shape <= 0 or self.rate <= 0

    def update(self, residuals):
        r = np.atleast_1d(np.asarray(residuals, dtype=float))
        return Sigma2Stats(self.shape + 0.5 * r.size, self.rate + 0.5 * float(r @ r))


def sigma2_prior_suffstats():
    """Starting (shape, rate) of the improper inverse-gamma(0, 0) prior."""
    return Sigma2Stats(0.0, 0.0)


@dataclass(frozen=True)
class InitialStatePrior:
    """Independent Gaussians x_t ~ N(y_t, S_t^2) over the warm-up years."""

    mean: np.ndarray
    sd: np.ndarray

    def sample(self, n, rng):
        """Draws of shape (n, 5) in chronological order."""
        return self.mean + rng.standard_normal((n, len(self.mean))) * self.sd

    def logpdf(self, x):
        return stats.norm.logpdf(x, self.mean, self.sd).sum(axis=-1)


def initial_state_prior(y, S):
    y = np.asarray(y, dtype=float)
    S = np.asarray(S, dtype=float)
    if len(y) < WARMUP or len(S) < WARMUP:
        raise InsufficientWarmup(f"need at least {WARMUP} observations, got {min(len(y), len(S))}")
    y, S = y[:WARMUP], S[:WARMUP]
    if not np.all(np.isfinite(S)) or np.any(S < 0):
        raise ValueError("warm-up observation SDs must be finite and non-negative")
    return InitialStatePrior(y.copy(), S.copy())

"""One-step predictive accuracy: MSE curves, Mahalanobis distance, prior comparison."""

from dataclasses import dataclass

import numpy as np

from .errors import SingularCovariance
from .inference import EngineOptions, run_filter
from .priors import FAMILY_ORDER, HyperParams, PriorFamily

COV_MODES = ("diag", "full")


@dataclass(frozen=True)
class PredictionRecord:
    t: int
    xhat: float
    pvar: float
    xtilde: float

    def __post_init__(self):
        if not self.pvar > 0:
            raise ValueError(f"predictive variance must be > 0 at t={self.t}")


def records_from_trace(trace):
    """Model-averaged predictions paired with the end-of-series smoothed states."""
    return [
        PredictionRecord(int(t), float(m), float(v), float(trace.smoothed[t - 1]))
        for t, m, v in zip(trace.pred_times, trace.pred_mean, trace.pred_var)
    ]


def _errors(records):
    return np.array([r.xhat - r.xtilde for r in records])


def squared_errors(records):
    return _errors(records) ** 2


def mse_curve(records):
    """Running mean of squared one-step errors: list of (t, MSE(t))."""
    if not records:
        raise ValueError("need at least one prediction record")
    sq = squared_errors(records)
    running = np.cumsum(sq) / np.arange(1, len(sq) + 1)
    return [(r.t, float(m)) for r, m in zip(records, running)]


def mahalanobis(records, cov="diag"):
    """Quadratic form e^T S^-1 e of the prediction errors.

    ``cov`` is ``"diag"`` (predictive variances on the diagonal),
    ``"identity"``, or an explicit (n, n) matrix aligned with ``records``.
    """
    e = _errors(records)
    if isinstance(cov, str):
        if cov == "identity":
            return float(e @ e)
        if cov == "diag":
            return float(np.sum(e * e / np.array([r.pvar for r in records])))
        raise ValueError(f"unknown covariance mode {cov!r}")
    S = np.asarray(cov, dtype=float)
    if S.shape != (len(e), len(e)):
        raise ValueError(f"covariance shape {S.shape} does not match {len(e)} records")
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularCovariance(f"predictive covariance is singular (condition number {cond:.3g})",
                                 condition_number=cond)
    chol = np.linalg.cholesky(S)
    z = np.linalg.solve(chol, e)
    return float(z @ z)


def lineage_covariance(trace):
    """Joint predictive covariance of the one-step predictions.

    Built from per-lineage prediction sequences pooled across banks with
    weights (model posterior x particle weight): covariance of the
    predictive means plus the mean innovation variance on the diagonal.
    Requires a trace produced with ``store_predictive=True``.
    """
    if trace.lineage_pred is None:
        raise ValueError("trace has no lineage predictions; rerun with store_predictive=True")
    post = trace.final_posterior
    means, s2, weights = [], [], []
    for j, k in enumerate(trace.orders):
        m, v = trace.lineage_pred[k]
        means.append(m)
        s2.append(v)
        weights.append(post[j] * trace.lineage_weights[k])
    means, s2, w = np.vstack(means), np.vstack(s2), np.concatenate(weights)
    w = w / w.sum()
    centred = means - w @ means
    return (centred * w[:, None]).T @ centred + np.diag(w @ s2)


@dataclass
class PriorComparison:
    """Per-family accuracy summary; rows follow the canonical family order."""

    families: tuple
    baseline: PriorFamily
    dm: dict
    dm_median: dict
    times: np.ndarray
    mse: dict
    sq_err: dict
    mse_normalized: dict
    final_posterior: dict
    cov_mode: str = "diag"


def compare_priors(series, families, hyper=None, n_particles=5000, seeds=(0,), cov="diag",
                   options=None, n_jobs=1):
    """Run the full filter for every (family, seed) on shared data.

    MSE curves are averaged over seeds and reported both absolutely and as a
    percentage of the baseline family (N(0,5) when present, else the first
    family in canonical order).
    """
    families = [PriorFamily.parse(f) for f in families]
    if not families:
        raise ValueError("need at least one prior family")
    families = tuple(f for f in FAMILY_ORDER if f in set(families))
    if cov not in COV_MODES:
        raise ValueError(f"cov must be one of {COV_MODES}")
    hyper = hyper or HyperParams()
    options = options or EngineOptions()
    if cov == "full" and not options.store_predictive:
        options = EngineOptions(options.sigma2_prior, options.sigma2_fixed,
                                options.ess_threshold, store_predictive=True)

    dm, sq, post = {}, {}, {}
    times = None
    for fam in families:
        dm[fam], sq[fam], post[fam] = [], [], []
        for seed in seeds:
            try:
                trace = run_filter(series, fam, hyper, n_particles, seed, options=options,
                                   n_jobs=n_jobs)
            except Exception as exc:
                exc.family, exc.seed = fam, seed
                raise
            recs = records_from_trace(trace)
            S = lineage_covariance(trace) if cov == "full" else "diag"
            dm[fam].append(mahalanobis(recs, S))
            sq[fam].append(squared_errors(recs))
            post[fam].append(trace.final_posterior)
            times = trace.pred_times

    sq_mean = {f: np.mean(sq[f], axis=0) for f in families}
    steps = np.arange(1, len(times) + 1)
    mse = {f: np.cumsum(sq_mean[f]) / steps for f in families}
    baseline = PriorFamily.INDEPENDENT5 if PriorFamily.INDEPENDENT5 in families else families[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        normalized = {f: 100.0 * mse[f] / mse[baseline] for f in families}
    return PriorComparison(
        families=families, baseline=baseline,
        dm={f: np.array(dm[f]) for f in families},
        dm_median={f: float(np.median(dm[f])) for f in families},
        times=times, mse=mse, sq_err=sq_mean, mse_normalized=normalized,
        final_posterior={f: np.mean(post[f], axis=0) for f in families},
        cov_mode=cov,
    )

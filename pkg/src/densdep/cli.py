"""Command-line front end: ``densdep simulate | fit | compare-priors``.

Every output file carries the full run configuration and package version
(JSON in a leading ``#`` comment for CSVs, a ``manifest.json`` per run), so
a run can be reproduced from its outputs. All randomness derives from
``--seed``: simulation uses it directly, filter bank k uses ``(seed, k)``,
and compare-priors replicate r uses ``seed + r``.
"""

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import DynamicsParams, simulate
from .errors import DensDepError, Diverged, IngestError
from .inference import DEFAULT_PARTICLES, EngineOptions, run_filter
from .ingest import load_observed
from .metrics import compare_priors, lineage_covariance, mahalanobis, records_from_trace
from .priors import DEFAULT_H, FAMILY_ORDER, HyperParams, PriorFamily

PRESETS = {
    "sim1": {"k": 1, "b": [0.5, -0.5]},
    "sim2": {"k": 2, "b": [0.5, -0.1, -0.4]},
}
PRESET_SIGMA = 0.05
PRESET_HORIZON = 501

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_DIVERGED, EXIT_INGEST = 0, 1, 2, 3, 4


@dataclass
class RunConfig:
    subcommand: str
    out: str
    seed: int = 0
    input: str = None
    priors: list = field(default_factory=list)
    k_max: int = 5
    sigma_b2: float = 1.0
    h: float = DEFAULT_H
    particles: int = DEFAULT_PARTICLES
    replicates: int = 1
    center_window: list = None
    dm_cov: str = "diag"
    sigma2_prior: list = None
    preset: str = None
    k: int = None
    b: list = None
    sigma: float = None
    obs_sd: float = None
    horizon: int = None
    init: list = None
    svg: bool = False

    def to_json(self):
        return json.dumps({"version": __version__, "config": asdict(self)}, sort_keys=True)


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _window(text):
    start, sep, end = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError("window must look like START:END (either side may be empty)")
    try:
        return [int(start) if start else 0, int(end) if end else None]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad window {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="densdep", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"densdep {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--out", required=True, help="output directory")
    shared.add_argument("--particles", type=int, default=DEFAULT_PARTICLES)
    shared.add_argument("--sigma-b2", type=float, default=1.0)
    shared.add_argument("--h", type=float, default=DEFAULT_H)
    shared.add_argument("--k-max", type=int, default=5, choices=range(0, 6))
    shared.add_argument("--center-window", type=_window, default=None, metavar="START:END")
    shared.add_argument("--dm-cov", choices=("diag", "full"), default="diag")
    shared.add_argument("--sigma2-prior", type=_floats, default=None, metavar="SHAPE,RATE",
                        help="inverse-gamma prior on the innovation variance")
    shared.add_argument("--jobs", type=int, default=1, help="worker processes for the banks")
    families = [f.value for f in PriorFamily]

    p = sub.add_parser("simulate", parents=[shared], help="simulate a trajectory")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--k", type=int)
    p.add_argument("--b", type=_floats)
    p.add_argument("--sigma", type=float)
    p.add_argument("--obs-sd", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--init", type=_floats, help="starting lag window, most recent first")

    p = sub.add_parser("fit", parents=[shared], help="posterior over k for one series")
    p.add_argument("--input", required=True)
    p.add_argument("--prior", choices=families, default="shrink1")
    p.add_argument("--svg", action="store_true", help="also plot the evolving posterior")

    p = sub.add_parser("compare-priors", parents=[shared], help="predictive accuracy per prior")
    p.add_argument("--input", required=True)
    p.add_argument("--prior", choices=families, action="append",
                   help="repeat to select families (default: all five)")
    p.add_argument("--replicates", type=int, default=1, help="filter seeds per family")
    return parser


def config_from_args(args):
    priors = getattr(args, "prior", None)
    if args.subcommand == "compare-priors" and priors is None:
        priors = [f.value for f in FAMILY_ORDER]
    elif isinstance(priors, str):
        priors = [priors]
    priors = priors or []
    cfg = RunConfig(
        subcommand=args.subcommand, out=args.out, seed=args.seed,
        input=getattr(args, "input", None), priors=priors, k_max=args.k_max,
        sigma_b2=args.sigma_b2, h=args.h, particles=args.particles,
        replicates=getattr(args, "replicates", 1), center_window=args.center_window,
        dm_cov=args.dm_cov, sigma2_prior=args.sigma2_prior, svg=getattr(args, "svg", False),
    )
    if args.subcommand == "simulate":
        _simulate_config(cfg, args)
    validate(cfg)
    return cfg


def _simulate_config(cfg, args):
    preset = PRESETS.get(args.preset, {})
    cfg.preset = args.preset
    cfg.k = args.k if args.k is not None else preset.get("k")
    cfg.b = args.b if args.b is not None else preset.get("b")
    if cfg.k is None and cfg.b is not None:
        cfg.k = len(cfg.b) - 1
    cfg.sigma = args.sigma if args.sigma is not None else PRESET_SIGMA
    cfg.obs_sd = args.obs_sd if args.obs_sd is not None else PRESET_SIGMA
    cfg.horizon = args.horizon if args.horizon is not None else PRESET_HORIZON
    cfg.init = args.init if args.init is not None else [0.0] * max(cfg.k or 1, 1)


def validate(cfg):
    if cfg.particles < 100:
        raise ValueError("--particles must be >= 100")
    HyperParams(cfg.sigma_b2, cfg.h)
    if cfg.sigma2_prior is not None and len(cfg.sigma2_prior) != 2:
        raise ValueError("--sigma2-prior takes SHAPE,RATE")
    if cfg.subcommand == "simulate":
        if cfg.b is None:
            raise ValueError("simulate needs --preset or --b")
        if cfg.sigma < 0 or cfg.obs_sd <= 0:
            raise ValueError("--sigma must be >= 0 and --obs-sd > 0")
        DynamicsParams(cfg.k, tuple(cfg.b), cfg.sigma ** 2)
    if cfg.subcommand == "compare-priors":
        if len(set(cfg.priors)) < 2:
            raise ValueError("compare-priors needs at least two --prior families")
        if cfg.replicates < 1:
            raise ValueError("--replicates must be >= 1")


def _engine_options(cfg, store_predictive=False):
    if cfg.sigma2_prior is None:
        return EngineOptions(store_predictive=store_predictive)
    return EngineOptions(sigma2_prior=tuple(cfg.sigma2_prior), store_predictive=store_predictive)


def _write_csv(path, cfg, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# densdep {cfg.to_json()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row])


def _write_manifest(out, cfg, outputs, extra=None):
    manifest = {"version": __version__, "config": asdict(cfg), "outputs": sorted(outputs)}
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _svg_lines(path, cfg, x, series, ylabel, title):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "densdep"
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, values in series:
        ax.plot(x, values, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Description": cfg.to_json()})
    plt.close(fig)


def cmd_simulate(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    params = DynamicsParams(cfg.k, tuple(cfg.b), cfg.sigma ** 2)
    traj = simulate(params, cfg.init, cfg.horizon, cfg.obs_sd, cfg.seed)
    rows = zip(traj.times, traj.latent, traj.observed, traj.obs_sd)
    _write_csv(out / "trajectory.csv", cfg, ["t", "x_latent", "y_observed", "obs_sd"], rows)
    _write_manifest(out, cfg, ["trajectory.csv"], {"b": list(params.b), "k": params.k})
    return [out / "trajectory.csv", out / "manifest.json"]


def _hyper(cfg):
    return HyperParams(cfg.sigma_b2, cfg.h)


def cmd_fit(cfg, n_jobs=1):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    series = load_observed(cfg.input, window=cfg.center_window)
    full = cfg.dm_cov == "full"
    trace = run_filter(series, cfg.priors[0], _hyper(cfg), cfg.particles, cfg.seed,
                       orders=range(cfg.k_max + 1), options=_engine_options(cfg, full),
                       n_jobs=n_jobs)
    cols = [f"p_k{k}" for k in trace.orders]
    _write_csv(out / "posterior.csv", cfg, ["t"] + cols,
               ([int(t)] + list(row) for t, row in zip(trace.times, trace.posterior)))
    _write_csv(out / "posterior_final.csv", cfg, cols, [list(trace.final_posterior)])
    years = series.years
    _write_csv(out / "smoothed.csv", cfg, ["t", "year", "y", "obs_sd", "x_smoothed"],
               ([t + 1, years[t], series.y[t], series.S[t], trace.smoothed[t]]
                for t in range(len(series))))
    records = records_from_trace(trace)
    _write_csv(out / "predictions.csv", cfg, ["t", "xhat", "pvar", "xtilde", "sq_err"],
               ([r.t, r.xhat, r.pvar, r.xtilde, (r.xhat - r.xtilde) ** 2] for r in records))
    S = lineage_covariance(trace) if full else "diag"
    outputs = ["posterior.csv", "posterior_final.csv", "smoothed.csv", "predictions.csv"]
    if cfg.svg:
        _svg_lines(out / "posterior.svg", cfg, trace.times,
                   [(f"k={k}", trace.posterior[:, j]) for j, k in enumerate(trace.orders)],
                   "posterior probability", f"Evolving model posterior ({cfg.priors[0]})")
        outputs.append("posterior.svg")
    _write_manifest(out, cfg, outputs, {
        "mahalanobis": mahalanobis(records, S),
        "dm_cov_note": "approximation: " + ("diagonal predictive variances" if not full
                                            else "lineage-sampled joint covariance"),
        "parameters": {str(k): {n: np.asarray(v).tolist() for n, v in p.items()}
                       for k, p in trace.params.items()},
    })
    return trace


def cmd_compare_priors(cfg, n_jobs=1):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    series = load_observed(cfg.input, window=cfg.center_window)
    seeds = tuple(cfg.seed + r for r in range(cfg.replicates))
    cmp = compare_priors(series, cfg.priors, _hyper(cfg), cfg.particles, seeds, cfg.dm_cov,
                         options=_engine_options(cfg), n_jobs=n_jobs)
    ks = range(len(next(iter(cmp.final_posterior.values()))))
    header = ["family", "label", "dm_median", "dm_mean", "mse_final", "mse_final_pct"]
    header += [f"p_k{k}" for k in ks]
    rows = []
    for f in cmp.families:
        rows.append([f.value, f.label, cmp.dm_median[f], float(np.mean(cmp.dm[f])),
                     float(cmp.mse[f][-1]), float(cmp.mse_normalized[f][-1])]
                    + list(cmp.final_posterior[f]))
    _write_csv(out / "compare.csv", cfg, header, rows)

    mse_header = ["t"] + [f"mse_{f.value}" for f in cmp.families] \
        + [f"pct_{f.value}" for f in cmp.families] + [f"sqerr_{f.value}" for f in cmp.families]
    mse_rows = ([int(t)] + [cmp.mse[f][i] for f in cmp.families]
                + [cmp.mse_normalized[f][i] for f in cmp.families]
                + [cmp.sq_err[f][i] for f in cmp.families] for i, t in enumerate(cmp.times))
    _write_csv(out / "mse.csv", cfg, mse_header, mse_rows)
    _svg_lines(out / "mse.svg", cfg, cmp.times,
               [(f.label, cmp.mse_normalized[f]) for f in cmp.families],
               f"MSE (% of {cmp.baseline.label})", "One-step predictive MSE")
    outputs = ["compare.csv", "mse.csv", "mse.svg"]
    _write_manifest(out, cfg, outputs, {"baseline": cmp.baseline.value, "seeds": list(seeds)})
    return cmp


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ValueError as exc:
        parser.error(str(exc))
    try:
        if cfg.subcommand == "simulate":
            cmd_simulate(cfg)
        elif cfg.subcommand == "fit":
            cmd_fit(cfg, args.jobs)
        else:
            cmd_compare_priors(cfg, args.jobs)
    except Diverged as exc:
        print(f"densdep: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (IngestError, OSError) as exc:
        print(f"densdep: input error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except DensDepError as exc:
        family = getattr(exc, "family", None)
        tag = f" [{family.value}]" if family is not None else ""
        print(f"densdep: error{tag}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

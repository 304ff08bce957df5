"""Command-line entry point: ``batsdro <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .calibration import tv_radius, wasserstein_radius
from .channel import capacity, exact_hop_distribution, sample_empirical
from .core import RankDistribution
from .experiments import (
    ConfigError,
    ExperimentConfig,
    QuantileRow,
    records_to_csv,
    run_mismatch_experiment,
    run_stability_experiment,
)
from .lp import SolverError
from .optimizers import METHODS, direct_lp, mu_universal, safety_margin, tv_dro, wasserstein_dro
from .oracles import run_oracle_suite

log = logging.getLogger("batsdro")

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3

COMMANDS = ("optimize", "calibrate", "simulate", "mismatch", "stability", "validate")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment/code configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--method", choices=METHODS, help="optimizer (optimize) or restrict experiments to one")
    common.add_argument("--full-scale", action="store_true", help="100 runs, full D, grid step 0.01")
    common.add_argument("--jobs", type=int, help="worker processes for experiment runs")
    common.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="batsdro", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    opt = sub.add_parser("optimize", parents=[common], help="optimize a degree distribution")
    opt.add_argument("--rank-dist", type=Path, required=True,
                     help='JSON with "mass" (or "counts") and optionally "N"')
    opt.add_argument("--rho", type=float, help="ambiguity radius (default: calibrated)")
    opt.add_argument("--N", type=int, help="sample count behind the rank distribution")
    cal = sub.add_parser("calibrate", parents=[common], help="ambiguity radii for an empirical distribution")
    cal.add_argument("--rank-dist", type=Path, required=True)
    cal.add_argument("--N", type=int)
    sim = sub.add_parser("simulate", parents=[common], help="exact and sampled hop rank distributions")
    sim.add_argument("--N", type=int, help="batches per empirical histogram (default: config N)")
    sub.add_parser("mismatch", parents=[common], help="design/true loss-rate mismatch sweep")
    sub.add_parser("stability", parents=[common], help="rate quantiles over repeated empirical runs")
    sub.add_parser("validate", parents=[common], help="brute-force oracle suite")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.full_scale:
        cfg = cfg.full_scale()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    if args.no_plots:
        changes["plots"] = False
    if args.method and args.command in ("stability",):
        changes["methods"] = (args.method,)
    return cfg.replace(**changes) if changes else cfg


def _read_rank_dist(path: Path, N: int | None):
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read rank distribution {path}: {exc}") from exc
    if isinstance(data, list):
        data = {"mass": data}
    if "counts" in data:
        counts = np.asarray(data["counts"], dtype=float)
        h = RankDistribution.from_counts(counts)
        N = N or int(counts.sum())
    elif "mass" in data:
        try:
            h = RankDistribution(data["mass"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        raise ConfigError('rank distribution JSON needs "mass" or "counts"')
    return h, N or data.get("N")


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _manifest(args, cfg: ExperimentConfig, files: list[Path], seconds: float) -> dict:
    return {
        "command": args.command,
        "argv": sys.argv[1:],
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "outputs": sorted(p.name for p in files),
        "seconds": round(seconds, 3),
        "versions": {
            "batsdro": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def cmd_optimize(args, cfg):
    params = cfg.code_params()
    h, N = _read_rank_dist(args.rank_dist, args.N)
    method = args.method or "direct"
    if method == "direct":
        res = direct_lp(h, params)
    elif method == "wasserstein":
        if args.rho is None and N is None:
            raise ConfigError("wasserstein needs --rho or a sample count N")
        rho = args.rho if args.rho is not None else wasserstein_radius(h, N, cfg.confidence, cfg.L, seed=cfg.seed)
        res = wasserstein_dro(h, rho, params)
    elif method == "tv":
        if args.rho is None and N is None:
            raise ConfigError("tv needs --rho or a sample count N")
        rho = args.rho if args.rho is not None else tv_radius(N, cfg.confidence, cfg.M)
        res = tv_dro(h, rho, params)
    elif method == "mu_universal":
        res = mu_universal(cfg.mu_factor * h.mean(), params)
    else:
        res = safety_margin(h, cfg.scale, params, n_samples=N if N and N > 1 else None)
    text = _dump(res.to_dict())
    print(json.dumps({"method": res.method, "theta": res.theta, "theta_over_M": res.normalized}))
    return [_write(args.out, "optimize.json", text)]


def cmd_calibrate(args, cfg):
    h, N = _read_rank_dist(args.rank_dist, args.N)
    if N is None:
        raise ConfigError("calibration needs the sample count N (--N or in the JSON)")
    out = {
        "N": N,
        "confidence": cfg.confidence,
        "L": cfg.L,
        "seed": cfg.seed,
        "wasserstein_rho": wasserstein_radius(h, N, cfg.confidence, cfg.L, seed=cfg.seed,
                                              method=cfg.radius_solver),
        "tv_rho": tv_radius(N, cfg.confidence, h.M),
    }
    print(json.dumps(out))
    return [_write(args.out, "calibrate.json", _dump(out))]


def cmd_simulate(args, cfg):
    N = args.N or cfg.N[0]
    net = cfg.network(cfg.loss_p)
    rows = ["hop,kind,rank,probability"]
    summary = []
    for hop in cfg.hops:
        exact = exact_hop_distribution(net, hop)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(N, hop)))
        emp = sample_empirical(net, hop, N, rng=rng)
        for kind, dist in (("exact", exact), ("empirical", emp)):
            rows.extend(f"{hop},{kind},{r},{p:.12g}" for r, p in enumerate(dist.mass))
        summary.append({"hop": hop, "capacity": capacity(net, hop), "exact": exact.mass.tolist(),
                        "empirical": emp.mass.tolist(), "N": N})
    return [_write(args.out, "simulate.csv", "\n".join(rows) + "\n"),
            _write(args.out, "simulate.json", _dump({"loss_p": cfg.loss_p, "hops": summary}))]


def cmd_mismatch(args, cfg):
    res = run_mismatch_experiment(cfg)
    files = [
        _write(args.out, "mismatch_records.csv", records_to_csv(res.records)),
        _write(args.out, "mismatch.json", _dump({
            "design_p": cfg.design_p,
            "hop": cfg.mismatch_hop,
            "design_theta": res.design_theta,
            "hop1_optimal_theta_over_M": res.hop1_optimal.theta_over_M,
            "achieved": {f"{p:g}": t for p, t in sorted(res.achieved().items())},
        })),
    ]
    if cfg.plots:
        from .figures import plot_mismatch

        plot_mismatch(res, args.out / "mismatch.png")
        files.append(args.out / "mismatch.png")
    return files


def cmd_stability(args, cfg):
    res = run_stability_experiment(cfg)
    files = [
        _write(args.out, "stability_records.csv", records_to_csv(res.records)),
        _write(args.out, "stability_summary.csv", records_to_csv(res.summary, QuantileRow.CSV_FIELDS)),
    ]
    timing: dict[str, float] = {}
    for rec in res.records:
        timing[rec.method] = timing.get(rec.method, 0.0) + rec.seconds
    files.append(_write(args.out, "stability.json", _dump({
        "quantile_rule": "nearest-rank",
        "summary": [r.__dict__ for r in res.summary],
        "solver_seconds": {k: round(v, 3) for k, v in sorted(timing.items())},
    })))
    if cfg.plots:
        from .figures import plot_stability

        plot_stability(res, args.out / "stability.png")
        files.append(args.out / "stability.png")
    return files


def cmd_validate(args, cfg):
    checks = run_oracle_suite()
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<30} {c.detail} ({c.seconds:.2f}s)")
    args._failed = not all(c.passed for c in checks)
    return [_write(args.out, "validate.json", _dump([c.__dict__ for c in checks]))]


HANDLERS = {
    "optimize": cmd_optimize,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "mismatch": cmd_mismatch,
    "stability": cmd_stability,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        cfg = _config(args)
        files = HANDLERS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"batsdro: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"batsdro: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    manifest = _manifest(args, cfg, files, time.perf_counter() - start)
    _write(args.out, f"manifest_{args.command}.json", _dump(manifest))
    if getattr(args, "_failed", False):
        return EXIT_CHECKS_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Experiment orchestration: design mismatch and rate stability.

Random streams: the stability run for ``(N, hop, run)`` draws from
``SeedSequence(seed, spawn_key=(N, hop, run))``; the sampled histogram is
drawn first, then the Wasserstein radius samples. Each run is therefore
reproducible on its own, whatever the execution order.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .calibration import TOTAL_VARIATION, WASSERSTEIN, AmbiguitySpec, tv_radius, wasserstein_radius
from .channel import NetworkSpec, capacity, exact_hop_distribution, sample_empirical
from .core import CodeParams, RankDistribution, evaluate_rate
from .optimizers import (
    METHODS,
    OptimizationResult,
    direct_lp,
    mu_universal,
    safety_margin,
    tv_dro,
    wasserstein_dro,
)

log = logging.getLogger(__name__)

CAPACITY_TOL = 1e-6


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything an experiment needs; loaded from YAML with these keys."""

    # code
    M: int = 8
    q: int = 256
    eta: float = 0.98
    D: int | None = 199
    grid_step: float = 0.02
    # network
    loss_p: float = 0.2
    hops: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    per_hop_tx: int | None = None
    rank_model: str = "large-field"
    # methods
    methods: tuple[str, ...] = METHODS
    confidence: float = 0.9
    L: int = 100
    scale: float = 0.9
    mu_factor: float = 0.9
    radius_solver: str = "lp"
    # stability
    runs: int = 30
    N: tuple[int, ...] = (100,)
    # mismatch
    design_p: float = 0.2
    eval_p: tuple[float, ...] = tuple(round(0.10 + 0.01 * k, 2) for k in range(21))
    mismatch_hop: int = 5
    mismatch_D: int | None = None
    mismatch_grid_step: float = 0.01
    # run control
    seed: int = 2024
    jobs: int = 1
    plots: bool = True

    def __post_init__(self):
        for name in ("hops", "methods", "N", "eval_p"):
            value = getattr(self, name)
            if not isinstance(value, (list, tuple)):
                value = (value,)
            object.__setattr__(self, name, tuple(value))
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if not self.hops or min(self.hops) < 1:
            raise ConfigError("hops must be positive integers")
        if any(n < 1 for n in self.N):
            raise ConfigError("N must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        try:
            self.code_params()
            self.network(self.loss_p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        flat = {}
        for key, value in (data or {}).items():
            # sections (code:, network:, ...) are accepted and flattened
            if isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        bad = set(flat) - known
        if bad:
            raise ConfigError(f"unknown config keys {sorted(bad)}")
        try:
            return cls(**flat)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(data or {})

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def full_scale(self) -> ExperimentConfig:
        return self.replace(D=None, grid_step=0.01, runs=100, N=(100, 1000))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def code_params(self, D="config", grid_step=None) -> CodeParams:
        return CodeParams(
            M=self.M, q=self.q, eta=self.eta,
            D=self.D if D == "config" else D,
            grid_step=self.grid_step if grid_step is None else grid_step,
        )

    def network(self, loss_p: float) -> NetworkSpec:
        return NetworkSpec(hops=max(self.hops), loss_p=loss_p, M=self.M,
                           per_hop_tx=self.per_hop_tx, rank_model=self.rank_model, q=self.q)


@dataclass(frozen=True)
class ExperimentRecord:
    method: str
    hop: int
    run: int
    theta: float
    theta_over_M: float
    capacity: float
    rho: float | None = None
    N: int | None = None
    loss_p: float | None = None
    seconds: float = field(default=0.0, compare=False)

    CSV_FIELDS = ("N", "loss_p", "hop", "run", "method", "theta", "theta_over_M", "capacity", "rho")

    def check(self, eta: float) -> None:
        if self.theta_over_M > 1 + 1e-12:
            raise AssertionError(f"{self}: normalized rate above 1")
        if eta * self.theta > self.capacity + CAPACITY_TOL:
            raise AssertionError(f"{self}: eta*theta exceeds capacity")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def records_to_csv(records, fields=ExperimentRecord.CSV_FIELDS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for rec in records:
        writer.writerow([_fmt(getattr(rec, f)) for f in fields])
    return buf.getvalue()


def nearest_rank_quantile(values, p: float) -> float:
    """Smallest value with at least a fraction ``p`` of the sample at or below it."""
    if not 0 < p <= 1:
        raise ValueError("quantile level must lie in (0, 1]")
    ordered = sorted(values)
    if not ordered:
        raise ValueError("empty sample")
    k = max(1, math.ceil(p * len(ordered) - 1e-9))
    return ordered[k - 1]


@dataclass(frozen=True)
class QuantileRow:
    N: int
    method: str
    hop: int
    q1: float
    median: float
    q3: float

    CSV_FIELDS = ("N", "method", "hop", "q1", "median", "q3")

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def summarize(records) -> list[QuantileRow]:
    groups: dict[tuple, list[float]] = {}
    for rec in records:
        groups.setdefault((rec.N, rec.method, rec.hop), []).append(rec.theta_over_M)
    rows = []
    for (N, method, hop), vals in groups.items():
        rows.append(QuantileRow(N, method, hop, nearest_rank_quantile(vals, 0.25),
                                nearest_rank_quantile(vals, 0.5), nearest_rank_quantile(vals, 0.75)))
    order = {m: i for i, m in enumerate(("optimal",) + METHODS)}
    rows.sort(key=lambda r: (r.N, r.hop, order.get(r.method, 99), r.method))
    return rows


def run_methods(h_hat: RankDistribution, N: int, cfg: ExperimentConfig, params: CodeParams,
                rng: np.random.Generator) -> dict[str, tuple[OptimizationResult, float | None, float]]:
    """Run every configured method on one empirical histogram."""
    out = {}
    for method in cfg.methods:
        start = time.perf_counter()
        rho = None
        if method == "direct":
            res = direct_lp(h_hat, params)
        elif method == "wasserstein":
            rho = wasserstein_radius(h_hat, N, cfg.confidence, cfg.L, rng=rng, method=cfg.radius_solver)
            spec = AmbiguitySpec(WASSERSTEIN, rho, cfg.confidence, N, cfg.L)
            res = wasserstein_dro(h_hat, rho, params, spec)
        elif method == "tv":
            rho = tv_radius(N, cfg.confidence, cfg.M)
            spec = AmbiguitySpec(TOTAL_VARIATION, rho, cfg.confidence, N)
            res = tv_dro(h_hat, rho, params, spec)
        elif method == "mu_universal":
            res = mu_universal(cfg.mu_factor * h_hat.mean(), params)
        else:
            res = safety_margin(h_hat, cfg.scale, params, n_samples=N if N > 1 else None)
        out[method] = (res, rho, time.perf_counter() - start)
    return out


def _stability_task(args):
    cfg, N, hop, run = args
    params = cfg.code_params()
    net = cfg.network(cfg.loss_p)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(N, hop, run)))
    h_true = exact_hop_distribution(net, hop)
    cap = h_true.mean()
    h_hat = sample_empirical(net, hop, N, rng=rng)
    records = []
    for method, (res, rho, secs) in run_methods(h_hat, N, cfg, params, rng).items():
        rate = evaluate_rate(res.psi, h_true, params)
        records.append(ExperimentRecord(method, hop, run, rate.theta, rate.normalized, cap,
                                        rho, N, cfg.loss_p, secs))
    return records


def _map(fn, tasks, jobs: int):
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


@dataclass
class StabilityResult:
    config: ExperimentConfig
    records: list[ExperimentRecord]
    summary: list[QuantileRow]

    def row(self, N: int, method: str, hop: int) -> QuantileRow:
        for r in self.summary:
            if (r.N, r.method, r.hop) == (N, method, hop):
                return r
        raise KeyError((N, method, hop))


def run_stability_experiment(cfg: ExperimentConfig) -> StabilityResult:
    """Sample, calibrate and optimize per (N, hop, run); score on the exact distribution."""
    params = cfg.code_params()
    net = cfg.network(cfg.loss_p)
    records = []
    for N in cfg.N:
        for hop in cfg.hops:
            h_true = exact_hop_distribution(net, hop)
            start = time.perf_counter()
            best = direct_lp(h_true, params)
            records.append(ExperimentRecord("optimal", hop, -1, best.theta, best.normalized,
                                            h_true.mean(), None, N, cfg.loss_p,
                                            time.perf_counter() - start))
    tasks = [(cfg, N, hop, run) for N in cfg.N for hop in cfg.hops for run in range(cfg.runs)]
    for batch in _map(_stability_task, tasks, cfg.jobs):
        records.extend(batch)
    order = {m: i for i, m in enumerate(("optimal",) + METHODS)}
    records.sort(key=lambda r: (r.N, r.hop, r.run, order[r.method]))
    for rec in records:
        rec.check(cfg.eta)
    return StabilityResult(cfg, records, summarize(records))


@dataclass
class MismatchResult:
    config: ExperimentConfig
    records: list[ExperimentRecord]
    design_theta: float
    hop1_optimal: ExperimentRecord

    def achieved(self) -> dict[float, float]:
        return {r.loss_p: r.theta for r in self.records if r.method == "direct"}


def run_mismatch_experiment(cfg: ExperimentConfig) -> MismatchResult:
    """Design once on the exact design-point distribution, evaluate across loss rates."""
    params = cfg.code_params(D=cfg.mismatch_D, grid_step=cfg.mismatch_grid_step)
    hop = cfg.mismatch_hop
    design_net = NetworkSpec(hops=hop, loss_p=cfg.design_p, M=cfg.M, per_hop_tx=cfg.per_hop_tx,
                             rank_model=cfg.rank_model, q=cfg.q)
    design = direct_lp(exact_hop_distribution(design_net, hop), params)
    records = []
    for p in cfg.eval_p:
        net = NetworkSpec(hops=hop, loss_p=p, M=cfg.M, per_hop_tx=cfg.per_hop_tx,
                          rank_model=cfg.rank_model, q=cfg.q)
        h_true = exact_hop_distribution(net, hop)
        cap = h_true.mean()
        start = time.perf_counter()
        rate = evaluate_rate(design.psi, h_true, params)
        records.append(ExperimentRecord("direct", hop, 0, rate.theta, rate.normalized, cap,
                                        None, None, p, time.perf_counter() - start))
        start = time.perf_counter()
        best = direct_lp(h_true, params)
        records.append(ExperimentRecord("optimal", hop, 0, best.theta, best.normalized, cap,
                                        None, None, p, time.perf_counter() - start))
    h1 = exact_hop_distribution(design_net, 1)
    best1 = direct_lp(h1, params)
    hop1 = ExperimentRecord("optimal", 1, 0, best1.theta, best1.normalized, h1.mean(),
                            None, None, cfg.design_p)
    for rec in records + [hop1]:
        rec.check(cfg.eta)
    return MismatchResult(cfg, records, design.theta, hop1)

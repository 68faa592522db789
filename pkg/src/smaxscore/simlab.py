"""Monte Carlo laboratory: data generation, estimator runs, coverage metrics.

Designs draw z from a standard normal vector and the true coefficient vector
is 1_p / sqrt(p); three noise families are provided, each normalized so the
noise standard deviation equals sigma.  The unit-coefficient covariate x is
an independent centered normal whose scale x_sigma is a free design choice:
the model design pins down only z and the noise.  The default x_sigma = 0.35
concentrates decision margins enough that the one-shot averaging estimators
visibly break down once the per-machine sample cannot support the pooled
bandwidth (m h^3 < 1), reproducing the qualitative coverage-collapse pattern;
with x_sigma = 1 the breakdown all but disappears under these otherwise fully
symmetric designs.  Replications are keyed by a splittable counter RNG so any
subset of reps can be regenerated independently.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .distributed import (
    ScheduleConfig,
    Shard,
    avg_smse,
    bandwidth_schedule,
    local_mse_estimates,
    local_moments,
    aggregate,
    partition,
    _newton_delta,
)
from .inference import (
    avg_mse_interval,
    confidence_interval,
    estimate_nuisances,
)
from .local_solver import SolveOptions, default_grid_bounds, initial_estimator, solve_local_smse

NOISE_KINDS = ("homo_normal", "homo_uniform", "hetero_normal")

KNOWN_METHODS = ("avg_mse", "avg_smse", "pooled_smse")  # plus msmse_t<k>


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "homo_normal"
    sigma: float = 0.25

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; "
                             f"choose from {NOISE_KINDS}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class DesignConfig:
    p: int = 1
    m: int = 5000
    exponent: float = 1.55
    noise: NoiseSpec = NoiseSpec()
    seed: int = 0
    reps: int = 200
    x_sigma: float = 0.35

    def __post_init__(self):
        if self.exponent < 1.0:
            raise ValueError("exponent must be >= 1")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.p < 1 or self.m < 2:
            raise ValueError("need p >= 1 and m >= 2")
        if self.x_sigma <= 0:
            raise ValueError("x_sigma must be positive")


@dataclass(frozen=True)
class MetricsRow:
    """Summary for one method: bias and variance of the normalized projection
    1'beta / sqrt(p), coverage of the interval for 1'beta*, mean seconds."""

    method: str
    t: Optional[int]
    bias: float
    variance: float
    coverage: float
    mean_runtime: float


def true_beta(p: int) -> np.ndarray:
    return np.full(p, 1.0 / math.sqrt(p))


def _rep_rng(seed: int, rep: int) -> np.random.Generator:
    key = np.array([seed, rep], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def generate(design: DesignConfig, rep: int,
             beta_star: Optional[np.ndarray] = None) -> Dataset:
    """One replication's dataset: n = floor(m^exponent) observations.

    ``beta_star`` overrides the dense 1_p/sqrt(p) truth (e.g. sparse vectors
    for high-dimensional runs).
    """
    n = int(design.m**design.exponent)
    rng = _rep_rng(design.seed, rep)
    p = design.p
    beta = true_beta(p) if beta_star is None else np.asarray(beta_star, float)
    z = rng.standard_normal((n, p))
    x = design.x_sigma * rng.standard_normal(n)
    sigma = design.noise.sigma
    kind = design.noise.kind
    if kind == "homo_normal":
        eps = sigma * rng.standard_normal(n)
    elif kind == "homo_uniform":
        half = math.sqrt(3.0) * sigma
        eps = rng.uniform(-half, half, n)
    else:  # hetero_normal
        if p == 1:
            sd = sigma * (1.0 + 0.1 * z[:, 0] ** 2) / math.sqrt(1.23)
        else:
            sd = sigma * (1.0 + 0.1 * (z[:, 0] - z[:, 1]) ** 2) / math.sqrt(1.52)
        eps = sd * rng.standard_normal(n)
    signal = x + z @ beta + eps
    y = np.where(signal >= 0.0, 1.0, -1.0)
    return Dataset(y=y, x=x, z=z)


def coverage_rate(hits: Sequence[bool]) -> float:
    """Fraction of true entries."""
    hits = list(hits)
    if not hits:
        raise ValueError("no coverage indicators")
    return sum(bool(h) for h in hits) / len(hits)


def _parse_methods(methods: Sequence[str]) -> tuple[list[str], list[int]]:
    names = []
    msmse_ts = []
    for name in methods:
        if name.startswith("msmse_t"):
            k = int(name[len("msmse_t"):])
            if k < 1:
                raise ValueError(f"bad method {name!r}")
            msmse_ts.append(k)
        elif name in KNOWN_METHODS:
            names.append(name)
        else:
            raise ValueError(f"unknown method {name!r}")
    return names, sorted(set(msmse_ts))


_MC_OPTS = SolveOptions(max_iters=2000, grad_tol=1e-5, stage_tol=1e-3)


def _msmse_rounds(shards, init, cfg, n, m, rounds):
    """Multi-round iterates with per-round cumulative wall times."""
    beta = init.copy()
    betas = [beta.copy()]
    times = [0.0]
    start = time.perf_counter()
    for t in range(1, rounds + 1):
        h = bandwidth_schedule(t, n, m, cfg)
        messages = [local_moments(s, beta, h) for s in shards]
        mom = aggregate(messages)
        delta, _, _ = _newton_delta(mom, cfg.ridge_eps)
        beta = beta - delta
        betas.append(beta.copy())
        times.append(time.perf_counter() - start)
    return betas, times


def _run_rep(design: DesignConfig, rep: int, plain: list[str],
             msmse_ts: list[int], xi: float, lambda_h: float,
             alpha: int, kappa: float):
    """All requested methods on one replication.

    Returns {method: (projection, covered, seconds)}.
    """
    full = generate(design, rep)
    L = full.n // design.m
    if L < 1:
        raise ValueError("exponent too small for one shard")
    data = full.subset(0, L * design.m)
    n = data.n
    shards = partition(data, L)
    p = design.p
    ones = np.ones(p)
    target = float(ones @ true_beta(p))
    h_star = (lambda_h / n) ** (1.0 / (2 * alpha + 1))
    cfg = ScheduleConfig(alpha=alpha, lambda_h=lambda_h)
    out = {}

    def plugin_ci(beta, h):
        nu = estimate_nuisances(shards, beta, h, alpha, kappa)
        return confidence_interval(beta, nu, ones, xi, n, lambda_h, alpha)

    if msmse_ts:
        t0 = time.perf_counter()
        init = initial_estimator(shards[0].data,
                                 design.m ** (-1.0 / (2 * alpha + 1)),
                                 _MC_OPTS)
        init_time = time.perf_counter() - t0
        betas, times = _msmse_rounds(shards, init, cfg, n, design.m,
                                     max(msmse_ts))
        for k in msmse_ts:
            t0 = time.perf_counter()
            rep_k = plugin_ci(betas[k], bandwidth_schedule(k, n, design.m, cfg))
            ci_time = time.perf_counter() - t0
            proj = float(ones @ betas[k])
            covered = rep_k.ci_lo <= target <= rep_k.ci_hi
            out[f"msmse_t{k}"] = (proj, covered, init_time + times[k] + ci_time)

    grid_locals = None

    def get_grid_locals():
        # Per-machine grid pilots; shared between the raw-score average and
        # the warm starts of the one-dimensional smoothed local solves.
        nonlocal grid_locals
        if grid_locals is None:
            lo, hi = default_grid_bounds(shards[0].data)
            grid_locals = local_mse_estimates(shards, lo, hi, 2001)
        return grid_locals

    for name in plain:
        t0 = time.perf_counter()
        if name == "avg_smse":
            init_rows = np.asarray(get_grid_locals())[:, None] if p == 1 else None
            beta = avg_smse(shards, h_star, _MC_OPTS, init_rows=init_rows)
            r = plugin_ci(beta, h_star)
            proj = float(ones @ beta)
            covered = r.ci_lo <= target <= r.ci_hi
        elif name == "pooled_smse":
            beta = solve_local_smse(data, h_star, _MC_OPTS)
            r = plugin_ci(beta, h_star)
            proj = float(ones @ beta)
            covered = r.ci_lo <= target <= r.ci_hi
        elif name == "avg_mse":
            if p != 1:
                raise ValueError("avg_mse requires p = 1")
            r = avg_mse_interval(get_grid_locals(), xi)
            proj = r.point
            covered = r.ci_lo <= target <= r.ci_hi
        out[name] = (proj, covered, time.perf_counter() - t0)
    return out


def run_monte_carlo(design: DesignConfig, methods: Sequence[str],
                    level: float = 0.95, lambda_h: float = 1.0,
                    kappa: float = 0.5, alpha: int = 2) -> list[MetricsRow]:
    """Replicated runs of the requested methods with coverage metrics.

    Metrics per method: bias and sample variance of the normalized
    projection 1'beta/sqrt(p), coverage of the level-``level`` interval for
    1'beta*, and mean wall seconds.  Reps are independent and reduced in rep
    order, so results are reproducible for a fixed design.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    xi = 1.0 - level
    plain, msmse_ts = _parse_methods(methods)
    root_p = math.sqrt(design.p)
    target = float(np.ones(design.p) @ true_beta(design.p))
    acc: dict[str, list[tuple[float, bool, float]]] = {}
    for rep in range(design.reps):
        try:
            res = _run_rep(design, rep, plain, msmse_ts, xi, lambda_h,
                           alpha, kappa)
        except Exception as err:
            raise RuntimeError(f"replication {rep} failed: {err}") from err
        for name, triple in res.items():
            acc.setdefault(name, []).append(triple)
    rows = []
    order = [f"msmse_t{k}" for k in msmse_ts] + list(plain)
    for name in order:
        triples = acc[name]
        projs = np.array([v[0] for v in triples])
        hits = [v[1] for v in triples]
        times = np.array([v[2] for v in triples])
        t = int(name[len("msmse_t"):]) if name.startswith("msmse_t") else None
        scaled = projs / root_p
        rows.append(MetricsRow(
            method=name, t=t,
            bias=float(np.mean(scaled) - target / root_p),
            variance=float(np.var(scaled, ddof=1)) if len(triples) > 1 else 0.0,
            coverage=coverage_rate(hits),
            mean_runtime=float(np.mean(times)),
        ))
    return rows


def design_label(design: DesignConfig) -> str:
    return f"p{design.p}_{design.noise.kind}"


def write_metrics_csv(rows: Sequence[MetricsRow], design: DesignConfig,
                      path, timing: bool = False) -> None:
    """Metrics CSV: design,exponent,method,t,bias_e2,variance_e4,coverage,runtime_s.

    Wall times vary run to run, so the runtime column is written as 0.0
    unless ``timing`` is requested; identical configs then produce
    byte-identical files.
    """
    label = design_label(design)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["design", "exponent", "method", "t", "bias_e2",
                         "variance_e4", "coverage", "runtime_s"])
        for r in rows:
            writer.writerow([
                label, repr(design.exponent), r.method,
                "" if r.t is None else r.t,
                repr(r.bias * 1e2), repr(r.variance * 1e4),
                repr(r.coverage),
                repr(r.mean_runtime) if timing else "0.0",
            ])


def format_metrics_table(rows: Sequence[MetricsRow], design: DesignConfig) -> str:
    """Human-readable metrics table (always includes measured runtimes)."""
    lines = [
        f"design {design_label(design)}  m={design.m}  "
        f"exponent={design.exponent}  reps={design.reps}",
        f"{'method':<12} {'t':>3} {'bias(e-2)':>10} {'var(e-4)':>10} "
        f"{'coverage':>9} {'time(s)':>9}",
    ]
    for r in rows:
        lines.append(
            f"{r.method:<12} {('' if r.t is None else r.t)!s:>3} "
            f"{r.bias * 1e2:>10.2f} {r.variance * 1e4:>10.2f} "
            f"{r.coverage:>9.3f} {r.mean_runtime:>9.3f}"
        )
    return "\n".join(lines)

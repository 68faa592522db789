"""Command-line front end.

Subcommands:
  estimate       run an estimator on a CSV dataset, writing trace.csv and
                 inference.csv
  simulate       run a Monte Carlo study from a JSON config, writing
                 metrics.csv and a readable table
  verify-kernel  check the built-in smoother's moment conditions

Every run is driven by a single JSON config document; --seed/--out/--threads
flags override the corresponding config entries.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataFormatError, read_csv
from .distributed import (
    ScheduleConfig,
    avg_mse,
    avg_smse,
    local_mse_estimates,
    msmse,
    partition,
    write_trace_csv,
    EstimatorTrace,
    TraceRow,
)
from .highdim import HdConfig, default_h_star, hd_msmse
from .inference import (
    avg_mse_interval,
    confidence_interval,
    estimate_nuisances,
    msmse_plugin_lambda,
    write_inference_csv,
)
from .kernel import biweight_integral_kernel, kernel_constants, verify_order
from .local_solver import SolveOptions, default_grid_bounds, solve_local_smse
from .simlab import (
    DesignConfig,
    NoiseSpec,
    format_metrics_table,
    run_monte_carlo,
    write_metrics_csv,
)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _single_trace(beta, h) -> EstimatorTrace:
    trace = EstimatorTrace()
    trace.iterates.append(TraceRow(
        t=0, beta=np.asarray(beta, dtype=np.float64), h=h,
        grad_inf_norm=math.nan, cond_est=math.nan, ridge_used=False,
    ))
    return trace


def cmd_estimate(cfg: dict, out_dir: Path) -> int:
    data_path = cfg.get("data")
    if not data_path:
        print("estimate: config needs a 'data' entry", file=sys.stderr)
        return 2
    data = read_csv(data_path)
    method = cfg.get("method", "msmse")
    L = int(cfg.get("L", 1))
    alpha = int(cfg.get("alpha", 2))
    lambda_h = float(cfg.get("lambda_h", 1.0))
    kappa = float(cfg.get("kappa", 0.5))
    xi = float(cfg.get("xi", 0.05))
    opts = SolveOptions(
        max_iters=int(cfg.get("max_iters", 500)),
        grad_tol=float(cfg.get("grad_tol", 1e-6)),
    )
    shards = partition(data, L)
    n = data.n
    h_star = (lambda_h / n) ** (1.0 / (2 * alpha + 1))

    reports = []
    if method == "msmse" or method == "msmse_plugin":
        sched = ScheduleConfig(
            alpha=alpha, lambda_h=lambda_h,
            T_override=cfg.get("T_override"),
            ridge_eps=cfg.get("ridge_eps"),
        )
        if method == "msmse_plugin":
            trace, nu, lambda_h = msmse_plugin_lambda(shards, sched, kappa=kappa)
        else:
            trace = msmse(shards, sched)
            nu = estimate_nuisances(shards, trace.final,
                                    trace.iterates[-1].h, alpha, kappa)
        beta = trace.final
    elif method == "avg_smse":
        beta = avg_smse(shards, h_star, opts)
        trace = _single_trace(beta, h_star)
        nu = estimate_nuisances(shards, beta, h_star, alpha, kappa)
    elif method == "pooled_smse":
        beta = solve_local_smse(data, h_star, opts)
        trace = _single_trace(beta, h_star)
        nu = estimate_nuisances(shards, beta, h_star, alpha, kappa)
    elif method == "avg_mse":
        lo, hi = default_grid_bounds(shards[0].data)
        lo = float(cfg.get("grid_lo", lo))
        hi = float(cfg.get("grid_hi", hi))
        steps = int(cfg.get("grid_steps", 2001))
        locals_ = local_mse_estimates(shards, lo, hi, steps)
        beta = np.array([avg_mse(shards, lo, hi, steps)])
        trace = _single_trace(beta, math.nan)
        write_trace_csv(trace, out_dir / "trace.csv")
        write_inference_csv(
            [("z1", avg_mse_interval(locals_, xi))], out_dir / "inference.csv")
        return 0
    elif method == "hd_msmse":
        h = float(cfg.get("h_star") or default_h_star(n, data.p, alpha))
        hd = HdConfig(
            alpha=alpha, C_lambda=float(cfg.get("C_lambda", 1.0)),
            sparsity_hint=cfg.get("sparsity"), h_star=h,
            decay=float(cfg.get("decay", 0.5)),
        )
        init = cfg.get("init")
        if init is None:
            print("estimate: hd_msmse needs an 'init' vector", file=sys.stderr)
            return 2
        trace = hd_msmse(shards, hd, np.asarray(init, dtype=np.float64),
                         rounds=int(cfg.get("rounds", 8)))
        write_trace_csv(trace, out_dir / "trace.csv")
        return 0
    else:
        print(f"estimate: unknown method {method!r}", file=sys.stderr)
        return 2

    write_trace_csv(trace, out_dir / "trace.csv")
    named = [(f"z{j + 1}", confidence_interval(
        beta, nu, np.eye(data.p)[j], xi, n, lambda_h, alpha))
        for j in range(data.p)]
    ones = np.ones(data.p)
    named.append(("sum", confidence_interval(
        beta, nu, ones, xi, n, lambda_h, alpha)))
    write_inference_csv(named, out_dir / "inference.csv")
    return 0


def cmd_simulate(cfg: dict, out_dir: Path) -> int:
    noise = cfg.get("noise", {})
    design = DesignConfig(
        p=int(cfg.get("p", 1)),
        m=int(cfg.get("m", 5000)),
        exponent=float(cfg.get("exponent", 1.55)),
        noise=NoiseSpec(kind=noise.get("kind", "homo_normal"),
                        sigma=float(noise.get("sigma", 0.25))),
        seed=int(cfg.get("seed", 0)),
        reps=int(cfg.get("reps", 200)),
        x_sigma=float(cfg.get("x_sigma", 0.35)),
    )
    methods = cfg.get("methods", ["msmse_t3", "avg_smse"])
    rows = run_monte_carlo(
        design, methods,
        level=float(cfg.get("level", 0.95)),
        lambda_h=float(cfg.get("lambda_h", 1.0)),
        kappa=float(cfg.get("kappa", 0.5)),
        alpha=int(cfg.get("alpha", 2)),
    )
    write_metrics_csv(rows, design, out_dir / "metrics.csv",
                      timing=bool(cfg.get("timing", False)))
    table = format_metrics_table(rows, design)
    (out_dir / "metrics.txt").write_text(table + "\n")
    print(table)
    return 0


def cmd_verify_kernel(tol: float) -> int:
    k = biweight_integral_kernel()
    table = verify_order(k, tol)
    piU, piV = kernel_constants(k)
    ok = all(row[2] for row in table)
    print(f"built-in smoother: order {k.alpha}, piU={piU:.9f}, piV={piV:.9f}")
    for j, val, passed in table:
        print(f"  moment {j}: {val: .3e}  {'pass' if passed else 'FAIL'}")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="smaxscore",
        description="Distributed smoothed maximum score estimation",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="estimate from a CSV dataset")
    p_est.add_argument("--config", help="JSON config file")
    p_est.add_argument("--data", help="dataset CSV (overrides config)")
    p_est.add_argument("--out", default=".", help="output directory")
    p_est.add_argument("--seed", type=int, help="override config seed")
    p_est.add_argument("--threads", type=int, default=1,
                       help="reserved; shard evaluation is sequential in-process")

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo study")
    p_sim.add_argument("--config", help="JSON config file")
    p_sim.add_argument("--out", default=".", help="output directory")
    p_sim.add_argument("--seed", type=int, help="override config seed")
    p_sim.add_argument("--threads", type=int, default=1,
                       help="reserved; replications run sequentially")

    p_ver = sub.add_parser("verify-kernel", help="check kernel moment conditions")
    p_ver.add_argument("--tol", type=float, default=1e-8)

    args = parser.parse_args(argv)
    try:
        if args.command == "verify-kernel":
            return cmd_verify_kernel(args.tol)
        cfg = _load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "estimate":
            if args.data:
                cfg["data"] = args.data
            return cmd_estimate(cfg, out_dir)
        return cmd_simulate(cfg, out_dir)
    except DataFormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

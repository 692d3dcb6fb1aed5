"""Command-line interface.

Subcommands: fit, path, tune, oracle, simulate, bench.  All results are
written as JSON/CSV.  Every output embeds its run manifest (command,
flags, seed, versions, input digests) and a sidecar
``<out>.manifest.json`` adds the wall-clock timestamp, so the data files
themselves are byte-identical across re-runs with the same flags and
seed.

Exit codes: 0 success, 1 usage/input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time

import numpy as np
import scipy

from . import __version__
from ._backend import backend_name
from .bench import run_bench
from .errors import ConfigError, DataError, GraphError, SolverError
from .graph import build_grid_adjacency, load_adjacency
from .model import Dataset, Partition, SolverConfig, load_dataset
from .oracle import gap_rule, min_group_gap, oracle_fit
from .simgen import MethodSpec, SimScenario, run_replicates
from .solver import SasaFit, fit as solver_fit, initialize, make_workspace
from .tuning import (TuneGrid, bic, cross_validate, default_lambda_grid,
                     select, solve_path)
from .weights import WeightSpec, compute_weights
from .graph import neighbor_orders

USAGE_EXIT = 1
NUMERIC_EXIT = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _manifest(command: str, args: argparse.Namespace, seed=None,
              inputs: dict | None = None) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    return {
        "command": command,
        "flags": flags,
        "seed": seed,
        "versions": {
            "sasa": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
            "kernel_backend": backend_name(),
        },
        "input_digests": {name: _digest(p) for name, p in (inputs or {}).items()},
    }


def _emit_json(payload: dict, out: str | None, manifest: dict) -> None:
    payload = {"manifest": manifest, **payload}
    text = json.dumps(payload, indent=2, sort_keys=False, allow_nan=True)
    if out is None:
        print(text)
        return
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    _write_sidecar(out, manifest)


def _write_sidecar(out: str, manifest: dict) -> None:
    sidecar = dict(manifest)
    sidecar["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    with open(out + ".manifest.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(sidecar, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Shared flag groups
# ---------------------------------------------------------------------------

def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="long-format CSV")
    p.add_argument("--adj", help="edge-list CSV of location_id pairs")
    p.add_argument("--grid", help="RxC lattice instead of --adj (row-major "
                                  "cells in dataset location order)")
    p.add_argument("--contiguity", choices=["rook", "queen"], default="rook")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma", type=float, default=3.0)
    p.add_argument("--vartheta", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--group-tol", type=float, default=1e-6)


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        r, c = text.lower().split("x")
        return int(r), int(c)
    except ValueError:
        raise DataError(f"--grid expects RxC (e.g. 7x7), got {text!r}") from None


def _graph_for(args, dataset: Dataset):
    if args.grid:
        rows, cols = _parse_grid(args.grid)
        if rows * cols != dataset.n:
            raise DataError(f"--grid {args.grid} has {rows * cols} cells but the "
                            f"dataset has {dataset.n} locations")
        return build_grid_adjacency(rows, cols, args.contiguity)
    if args.adj:
        return load_adjacency(args.adj, dataset.location_ids)
    return None


def _config_from(args) -> SolverConfig:
    return SolverConfig(gamma=args.gamma, vartheta=args.vartheta, tol=args.tol,
                        max_iter=args.max_iter, group_tol=args.group_tol)


def _weights_from(args, dataset: Dataset, psi: float):
    spec = WeightSpec(kind=args.weights, psi=psi)
    orders = None
    beta_init = None
    if spec.requires_orders:
        graph = _graph_for(args, dataset)
        if graph is None:
            raise DataError(f"weight kind {spec.kind!r} needs --adj or --grid")
        orders = neighbor_orders(graph)
    if spec.requires_init:
        beta_init = initialize(dataset).beta
    return compute_weights(spec, orders=orders, beta_init=beta_init, n=dataset.n)


def _fit_payload(dataset: Dataset, result: SasaFit) -> dict:
    payload = {
        "eta": result.eta.tolist(),
        "beta": result.beta.tolist(),
        "alpha": result.alpha.tolist(),
        "assignment": result.partition.assignment.tolist(),
        "K": int(result.k),
        "converged": bool(result.converged),
        "iters": int(result.state.iterations),
        "objective": result.objective,
        "primal_residuals": result.state.primal_residuals.tolist(),
        "location_ids": dataset.location_ids,
    }
    if result.k >= 2:
        payload["gap_rule"] = gap_rule(result.alpha, result.lam)
    return payload


def _seed_from(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("SASA_SEED")
    return int(env) if env else 0


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    dataset = load_dataset(args.data)
    config = _config_from(args)
    weights = _weights_from(args, dataset, args.psi)
    result = solver_fit(dataset, weights, getattr(args, "lambda"), config=config)
    inputs = {"data": args.data}
    if args.adj:
        inputs["adj"] = args.adj
    _emit_json(_fit_payload(dataset, result), args.out,
               _manifest("fit", args, inputs=inputs))
    return 0


def cmd_path(args) -> int:
    dataset = load_dataset(args.data)
    config = _config_from(args)
    weights = _weights_from(args, dataset, args.psi)
    ws = make_workspace(dataset, config.vartheta)
    init = initialize(dataset)
    if args.lambdas:
        lams = np.array([float(x) for x in args.lambdas.split(",")])
    else:
        lams = default_lambda_grid(dataset, weights, config,
                                   n_lambda=args.nlambda,
                                   lambda_min_ratio=args.lambda_min_ratio,
                                   init=init, workspace=ws)
    fits = solve_path(dataset, weights, lams, config=config, init=init,
                      workspace=ws)
    cells = []
    for lam, f in zip(lams, fits):
        if f is None:
            cells.append({"lambda": float(lam), "failed": True})
        else:
            cells.append({"lambda": float(lam), "K": int(f.k),
                          "converged": bool(f.converged),
                          "iters": int(f.state.iterations),
                          "objective": f.objective,
                          "bic": bic(dataset, f)})
    inputs = {"data": args.data}
    if args.adj:
        inputs["adj"] = args.adj
    _emit_json({"path": cells}, args.out, _manifest("path", args, inputs=inputs))
    return 0


def cmd_tune(args) -> int:
    dataset = load_dataset(args.data)
    config = _config_from(args)
    graph = _graph_for(args, dataset)
    psis = tuple(float(x) for x in args.psis.split(","))
    grid = TuneGrid(psis=psis, n_lambda=args.nlambda, c0=args.c0,
                    lambda_min_ratio=args.lambda_min_ratio)
    if args.criterion == "bic":
        result = select(dataset, graph, args.weights, grid=grid, config=config)
    else:
        result = cross_validate(dataset, graph, args.weights, grid=grid,
                                folds=args.folds, config=config)
    payload = result.to_dict()
    payload["fit"] = _fit_payload(dataset, result.best_fit)
    inputs = {"data": args.data}
    if args.adj:
        inputs["adj"] = args.adj
    _emit_json(payload, args.out, _manifest("tune", args, inputs=inputs))
    return 0


def _load_partition(path, dataset: Dataset) -> Partition:
    labels: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(csv.reader(fh), start=1):
            if not raw or raw[0].lstrip().startswith("#"):
                continue
            if [c.strip() for c in raw[:2]] == ["location_id", "group"]:
                continue
            if len(raw) != 2:
                raise DataError(f"{path}: line {line_no}: expected 'location_id,group'")
            labels[raw[0].strip()] = raw[1].strip()
    missing = [loc for loc in dataset.location_ids if loc not in labels]
    if missing:
        raise DataError(f"{path}: no group for locations {missing[:5]}")
    return Partition.from_labels([labels[loc] for loc in dataset.location_ids])


def cmd_oracle(args) -> int:
    dataset = load_dataset(args.data)
    partition = _load_partition(args.partition, dataset)
    result = oracle_fit(dataset, partition)
    payload = {
        "eta": result.eta.tolist(),
        "alpha": result.alpha.tolist(),
        "sigma2": result.sigma2,
        "se": result.se.tolist(),
        "b_n": min_group_gap(result.alpha) if partition.k >= 2 else None,
        "K": int(partition.k),
    }
    _emit_json(payload, args.out,
               _manifest("oracle", args,
                         inputs={"data": args.data, "partition": args.partition}))
    return 0


def cmd_simulate(args) -> int:
    seed = _seed_from(args)
    scenario = SimScenario(setting=args.setting, grid=_parse_grid(args.grid),
                           n_i=args.ni, seed=seed, sigma=args.sigma,
                           rho=args.rho)
    psis = tuple(float(x) for x in args.psis.split(","))
    method = MethodSpec(kind=args.weights, criterion=args.criterion, psis=psis,
                        n_lambda=args.nlambda, folds=args.folds,
                        contiguity=args.contiguity)
    config = _config_from(args)
    report = run_replicates(scenario, method, args.reps, config=config,
                            jobs=args.jobs)
    manifest = _manifest("simulate", args, seed=seed)

    if args.out is None:
        _emit_json(report.to_dict(), None, manifest)
        return 0
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("# manifest: <this file>.manifest.json\n")
        w = csv.writer(fh)
        w.writerow(["rep", "K_hat", "ari", "rmse", "rmse_refit", "lambda",
                    "psi", "converged", "ok", "error"])
        for r in report.replicates:
            w.writerow([r.rep, r.khat, f"{r.ari:.10g}", f"{r.rmse:.10g}",
                        f"{r.rmse_refit:.10g}", f"{r.lam:.10g}",
                        f"{r.psi:.10g}", int(r.converged), int(r.ok), r.error])
    _write_sidecar(args.out, manifest)
    base, _ = os.path.splitext(args.out)
    _emit_json(report.to_dict(), base + ".summary.json", manifest)
    return 0


def cmd_bench(args) -> int:
    seed = _seed_from(args)
    config = _config_from(args)
    result = run_bench(args.table, scale=args.scale, seed=seed, config=config,
                       jobs=args.jobs)
    _emit_json(result, args.out, _manifest("bench", args, seed=seed))
    return 0


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sasa",
                     description="Spatially weighted subgroup regression")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[], help="single fit at fixed (lambda, psi)")
    _add_data_flags(p)
    p.add_argument("--weights", choices=["equal", "reg_sp", "reg", "sp"],
                   default="equal")
    p.add_argument("--psi", type=float, default=1.0)
    p.add_argument("--lambda", type=float, required=True)
    _add_solver_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("path", help="warm-started fits over a lambda grid")
    _add_data_flags(p)
    p.add_argument("--weights", choices=["equal", "reg_sp", "reg", "sp"],
                   default="equal")
    p.add_argument("--psi", type=float, default=1.0)
    p.add_argument("--lambdas", help="comma-separated explicit grid")
    p.add_argument("--nlambda", type=int, default=50)
    p.add_argument("--lambda-min-ratio", type=float, default=1e-3)
    _add_solver_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("tune", help="select (lambda, psi) by BIC or CV")
    _add_data_flags(p)
    p.add_argument("--weights", choices=["equal", "reg_sp", "reg", "sp"],
                   default="sp")
    p.add_argument("--psis", default="0.1,0.5,1,3")
    p.add_argument("--nlambda", type=int, default=50)
    p.add_argument("--lambda-min-ratio", type=float, default=1e-3)
    p.add_argument("--criterion", choices=["bic", "cv"], default="bic")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--c0", type=float, default=0.2)
    _add_solver_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("oracle", help="WLS fit at a known partition")
    p.add_argument("--data", required=True)
    p.add_argument("--partition", required=True,
                   help="CSV of location_id,group")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("simulate", help="replicate a simulation scenario")
    p.add_argument("--setting", choices=["s1", "s2", "unbalanced", "random"],
                   default="s1")
    p.add_argument("--grid", default="7x7")
    p.add_argument("--contiguity", choices=["rook", "queen"], default="rook")
    p.add_argument("--ni", type=int, default=10)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--weights", choices=["equal", "reg_sp", "reg", "sp"],
                   default="sp")
    p.add_argument("--criterion", choices=["bic", "cv"], default="bic")
    p.add_argument("--psis", default="0.1,0.5,1,3")
    p.add_argument("--nlambda", type=int, default=50)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--rho", type=float, default=0.3)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    _add_solver_flags(p)
    p.add_argument("--out", help="per-replicate CSV (a .summary.json and "
                                 "manifest sidecar are written next to it)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="published table vs reproduction report")
    p.add_argument("--table", type=int, required=True)
    p.add_argument("--scale", type=float, default=0.2,
                   help="fraction of the published 100 replicates")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    _add_solver_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (DataError, GraphError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (SolverError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command-line interface.

Subcommands: simulate, select-rank, estimate, infer, metrics,
montecarlo.  Structured settings come from a JSON config file (the
PipelineConfig schema); --seed, --reps and --out override it.  Exit
codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .community import SplitPlan
from .core import BlockMatrix, standardize_covariates
from .dgp import DgpConfig, simulate
from .errors import BlocknetError, ConfigError, NumericalError
from .inference import fit_block_logistic, fit_tetrad
from .io import (
    read_covariates,
    read_edge_list,
    read_membership,
    write_covariate_layer,
    write_edge_list,
    write_ground_truth,
    write_membership,
)
from .metrics import nmi, prop_correct, rand_index
from .nucnorm import AlmConfig, two_stage_fit
from .pipeline import InputFiles, PipelineConfig, run_montecarlo, run_pipeline
from .rank import RankConfig, mean_degree_stat, select_rank


def _dgp_from_dict(d: dict) -> DgpConfig:
    return DgpConfig(
        n=int(d["n"]),
        theta0_model=d["theta0_model"],
        K1=int(d["K1"]),
        B1=BlockMatrix.from_matrix(np.asarray(d["B1"], dtype=float)),
        B0=None if d.get("B0") is None else BlockMatrix.from_matrix(np.asarray(d["B0"], dtype=float)),
        membership_probs=tuple(d["membership_probs"]),
        zeta_coeff=float(d["zeta_coeff"]),
        seed=int(d.get("seed", 0)),
    )


def _pipeline_config(args) -> PipelineConfig:
    raw = {}
    if getattr(args, "config", None):
        raw = json.loads(Path(args.config).read_text())
    dgp = _dgp_from_dict(raw["dgp"]) if raw.get("dgp") else None
    files = None
    if raw.get("files"):
        files = InputFiles(**raw["files"])
    if getattr(args, "edges", None):
        files = InputFiles(
            edges=args.edges,
            n=args.n,
            covariates=tuple(args.cov or ()),
            node_covariates=args.node_cov,
            transform=args.transform,
        )
    kwargs = dict(
        dgp=dgp,
        files=files,
        K0=raw.get("K0"),
        K1=raw.get("K1"),
        rank=RankConfig(**raw.get("rank", {})),
        alm=AlmConfig(**raw.get("alm", {})),
        split=SplitPlan(**raw.get("split", {})),
        inference_method=raw.get("inference_method", "block_logistic"),
        joint_embedding=raw.get("joint_embedding"),
        standardize=raw.get("standardize", True),
        tetrad_cap=raw.get("tetrad_cap", 200),
        seed=raw.get("seed", 0),
        out_dir=raw.get("out_dir"),
    )
    if getattr(args, "seed", None) is not None:
        kwargs["seed"] = args.seed
        if kwargs["dgp"] is not None:
            kwargs["dgp"] = kwargs["dgp"].with_seed(args.seed)
    if getattr(args, "out", None):
        kwargs["out_dir"] = args.out
    return PipelineConfig(**kwargs)


def _cmd_simulate(args) -> int:
    if args.config:
        raw = json.loads(Path(args.config).read_text())
        dgp = _dgp_from_dict(raw["dgp"] if "dgp" in raw else raw)
    else:
        if not args.b1:
            raise ConfigError("simulate needs --config or --b1")
        K1 = len(json.loads(args.b1))
        probs = tuple(json.loads(args.probs)) if args.probs else tuple([1.0 / K1] * K1)
        dgp = DgpConfig(
            n=args.n or 500,
            theta0_model=args.theta0,
            K1=K1,
            B1=BlockMatrix.from_matrix(np.asarray(json.loads(args.b1), dtype=float)),
            B0=None if not args.b0 else BlockMatrix.from_matrix(np.asarray(json.loads(args.b0), dtype=float)),
            membership_probs=probs,
            zeta_coeff=args.zeta_coeff,
            seed=args.seed or 0,
        )
    if args.seed is not None:
        dgp = dgp.with_seed(args.seed)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    Y, covs, params, membership = simulate(dgp)
    write_edge_list(out / "edges.txt", Y)
    for l, layer in enumerate(covs.layers):
        write_covariate_layer(out / f"covariate{l + 1}.csv", layer)
    write_membership(out / "membership.csv", membership)
    extra = {
        "zeta_coeff": dgp.zeta_coeff,
        "theta0_model": dgp.theta0_model,
        "B1": dgp.B1.to_matrix().tolist(),
        "B0": None if dgp.B0 is None else dgp.B0.to_matrix().tolist(),
        "seed": dgp.seed,
    }
    write_ground_truth(out / "truth.json", params, membership, extra)
    print(f"simulated n={Y.n} network with {int(Y.adjacency.sum() / 2)} edges -> {out}")
    return 0


def _load_network_covs(args):
    Y = read_edge_list(args.edges, n=args.n)
    covs = None
    if args.cov or args.node_cov:
        covs = read_covariates(args.cov or (), Y.n, node_file=args.node_cov, transform=args.transform)
    return Y, covs


def _cmd_select_rank(args) -> int:
    Y, covs = _load_network_covs(args)
    if covs is not None:
        covs = standardize_covariates(covs)
    fit = two_stage_fit(Y, covs, AlmConfig())
    rank_cfg = RankConfig(K_max=args.k_max, c=args.threshold_c)
    Ybar = mean_degree_stat(Y)
    for l, sigma in enumerate(fit.sigma):
        sel = select_rank(sigma, Y.n, Ybar, rank_cfg)
        print(f"layer {l}:")
        print(f"  sigma      {np.array2string(sigma[: args.k_max], precision=4)}")
        print(f"  ratios     {np.array2string(sel.ratios, precision=3)}")
        print(f"  threshold  {sel.threshold:.6f}")
        flag = "  (no singular value cleared the threshold)" if sel.no_pass else ""
        print(f"  K_hat      {sel.K_hat}{flag}")
    return 0


def _cmd_estimate(args) -> int:
    cfg = _pipeline_config(args)
    if args.stage == "lowrank":
        from .pipeline import _load_data  # reuse the loader

        Y, covs, _ = _load_data(cfg)
        if covs is not None and cfg.standardize:
            covs = standardize_covariates(covs)
        fit = two_stage_fit(Y, covs, cfg.alm)
        dump = {
            "tau_hat": fit.tau_hat,
            "tau_tilde": fit.tau_tilde,
            "lambda": fit.lambda_used,
            "sigma": [s[:10].tolist() for s in fit.sigma],
            "objective": fit.objective,
            "objective_trace": fit.objective_trace.tolist(),
            "converged": fit.converged,
            "diagnostics": fit.diagnostics,
        }
        text = json.dumps(dump, indent=2, sort_keys=True)
        if cfg.out_dir:
            outdir = Path(cfg.out_dir)
            outdir.mkdir(parents=True, exist_ok=True)
            (outdir / "lowrank.json").write_text(text)
            if args.dump_theta:
                for l, th in enumerate(fit.theta_hat):
                    np.save(outdir / f"theta{l}.npy", th)
        else:
            print(text)
        return 0
    result = run_pipeline(cfg)
    print(f"tau_hat={result.tau_hat:.6f}  K0={result.K0}  K1={result.K1}")
    if result.community is not None:
        print(f"selected split r*={result.community.r_star}")
    if result.inference is not None:
        for row in result.inference.table():
            print(f"  {row[0]:>10s}  est={row[1]: .5f}  se={row[2]:.5f}")
    if cfg.out_dir:
        print(f"artifacts -> {cfg.out_dir}")
    return 0


def _cmd_infer(args) -> int:
    Y, covs = _load_network_covs(args)
    if covs is None:
        raise ConfigError("inference needs covariates")
    covs = standardize_covariates(covs)
    g1 = read_membership(args.membership)
    if args.method == "block":
        g0 = read_membership(args.membership0) if args.membership0 else g1
        res = fit_block_logistic(Y, covs, g0, g1)
    else:
        res = fit_tetrad(Y, covs, g1, n_cap=args.tetrad_cap)
    rows = res.table()
    if args.out:
        import csv as _csv

        with open(args.out, "w", newline="") as fh:
            wr = _csv.writer(fh)
            wr.writerow(["coordinate", "estimate", "se", "z", "lo95", "hi95"])
            for row in rows:
                wr.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        print(f"wrote {args.out}")
    else:
        for row in rows:
            print(f"{row[0]:>10s}  est={row[1]: .6f}  se={row[2]:.6f}  z={row[3]: .3f}")
    return 0


def _cmd_metrics(args) -> int:
    a = read_membership(args.a)
    b = read_membership(args.b)
    print(f"nmi={nmi(a, b):.6f}")
    print(f"rand_index={rand_index(a, b):.6f}")
    print(f"prop={prop_correct(a, b):.6f}")
    return 0


def _cmd_montecarlo(args) -> int:
    cfg = _pipeline_config(args)
    if cfg.dgp is None:
        raise ConfigError("montecarlo needs a dgp block in the config")

    def progress(rep, row, err):
        if err:
            print(f"rep {rep}: FAILED {err}", flush=True)
        elif args.verbose:
            print(f"rep {rep}: done", flush=True)

    out = run_montecarlo(cfg, reps=args.reps, workers=args.workers, progress=progress)
    agg = out["aggregate"]
    for key in sorted(agg):
        print(f"{key}: {agg[key]}")
    if cfg.out_dir:
        print(f"tables -> {cfg.out_dir}")
    return 0


def _add_io_args(sp, need_edges=True):
    sp.add_argument("--edges", required=need_edges, help="edge list file (i j per line, 0-based)")
    sp.add_argument("--n", type=int, default=None, help="node count (default: max index + 1)")
    sp.add_argument("--cov", action="append", help="dense n x n covariate CSV (repeatable)")
    sp.add_argument("--node-cov", dest="node_cov", help="per-node covariate CSV")
    sp.add_argument(
        "--transform", default="absdiff", help="node -> edge transform (absdiff, product, scaled_absdiff)"
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blocknet", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="draw one synthetic network")
    sp.add_argument("--config", help="JSON config (dgp block or bare DgpConfig)")
    sp.add_argument("--n", type=int)
    sp.add_argument("--theta0", choices=("additive", "block"), default="additive")
    sp.add_argument("--b1", help="JSON K x K matrix")
    sp.add_argument("--b0", help="JSON K x K matrix (block theta0 only)")
    sp.add_argument("--probs", default=None, help="JSON membership probabilities")
    sp.add_argument("--zeta-coeff", dest="zeta_coeff", type=float, default=0.7)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=_cmd_simulate)

    sp = sub.add_parser("select-rank", help="singular-value-ratio rank selection")
    _add_io_args(sp)
    sp.add_argument("--k-max", dest="k_max", type=int, default=10)
    sp.add_argument("--threshold-c", dest="threshold_c", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(fn=_cmd_select_rank)

    sp = sub.add_parser("estimate", help="run the estimation pipeline")
    sp.add_argument("--config", help="JSON PipelineConfig")
    _add_io_args(sp, need_edges=False)
    sp.add_argument("--stage", choices=("full", "lowrank"), default="full")
    sp.add_argument("--dump-theta", dest="dump_theta", action="store_true")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=_cmd_estimate)

    sp = sub.add_parser("infer", help="block inference given memberships")
    _add_io_args(sp)
    sp.add_argument("--membership", required=True, help="membership CSV for the slope layer")
    sp.add_argument("--membership0", help="membership CSV for the intercept layer")
    sp.add_argument("--method", choices=("block", "tetrad"), default="block")
    sp.add_argument("--tetrad-cap", dest="tetrad_cap", type=int, default=200)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=_cmd_infer)

    sp = sub.add_parser("metrics", help="compare two membership CSVs")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.set_defaults(fn=_cmd_metrics)

    sp = sub.add_parser("montecarlo", help="replicated synthetic experiments")
    sp.add_argument("--config", required=True, help="JSON PipelineConfig with a dgp block")
    sp.add_argument("--reps", type=int, default=10)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--verbose", action="store_true")
    sp.set_defaults(fn=_cmd_montecarlo)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except BlocknetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

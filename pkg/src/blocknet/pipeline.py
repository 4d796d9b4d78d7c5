"""End-to-end estimation pipeline and the Monte Carlo harness.

One run executes, in order: (1) a full-sample two-stage penalized fit
giving the intercept and singular values; (2) rank selection when the
community counts are unknown; (3) for each of R independent sample
splits, a split-sample fit, independence-preserving initial regressions
and full-sample refinement sweeps, in both split directions; (4) a
K-means classification of the stacked normalized embeddings per split;
(5) selection of the highest-likelihood split; (6) inference on the
block matrices treating the recovered labels as known.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__ as _pkg_version
from ._rng import replication_seed, stream_rng
from .community import (
    CommunityFit,
    SplitPlan,
    assign_with_zero_rows,
    build_embedding,
    kmeans,
    select_split,
    split_loglik,
    align_labels,
)
from .core import CovariateSet, Membership, Network, standardize_covariates, vech_position
from .dgp import DgpConfig, simulate, zeta_n
from .errors import ConfigError
from .inference import InferenceResult, fit_block_logistic, fit_tetrad
from .io import read_covariates, read_edge_list, write_membership
from .metrics import mse_theta, nmi, prop_correct, rand_index
from .nucnorm import AlmConfig, LowRankEstimate, two_stage_fit
from .rank import RankConfig, RankSelection, mean_degree_stat, select_rank
from .refine import EmbeddingSet, full_sample_iterate, initial_split_embedding

__all__ = ["PipelineConfig", "PipelineResult", "run_pipeline", "run_montecarlo"]


@dataclass(frozen=True)
class InputFiles:
    edges: str
    n: int | None = None
    covariates: tuple = ()
    node_covariates: str | None = None
    transform: str = "absdiff"


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one pipeline run needs.

    Exactly one of ``dgp`` and ``files`` must be given.  ``K0``/``K1``
    left as None triggers rank selection.  ``joint_embedding`` stacks
    the intercept-layer embedding next to the slope-layer one (set it
    when both layers share one membership); None picks it automatically
    for synthetic configurations.
    """

    dgp: DgpConfig | None = None
    files: InputFiles | None = None
    K0: int | None = None
    K1: int | None = None
    rank: RankConfig = field(default_factory=RankConfig)
    alm: AlmConfig = field(default_factory=AlmConfig)
    split: SplitPlan = field(default_factory=SplitPlan)
    inference_method: str = "block_logistic"  # block_logistic | tetrad | none
    joint_embedding: bool | None = None
    standardize: bool = True
    tetrad_cap: int = 200
    seed: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if (self.dgp is None) == (self.files is None):
            raise ConfigError("exactly one of dgp and files must be configured")
        if self.inference_method not in ("block_logistic", "tetrad", "none"):
            raise ConfigError(f"unknown inference method {self.inference_method!r}")

    def resolve_joint(self) -> bool:
        if self.joint_embedding is not None:
            return self.joint_embedding
        return self.dgp is not None and self.dgp.theta0_model == "block"


@dataclass
class PipelineResult:
    tau_hat: float
    lowrank: LowRankEstimate
    K0: int
    K1: int
    rank_selection: dict
    community: CommunityFit | None
    inference: InferenceResult | None
    embeddings: dict
    covariate_scales: tuple
    timings: dict
    seed: int


def _load_data(cfg: PipelineConfig):
    if cfg.dgp is not None:
        Y, covs, params, membership = simulate(cfg.dgp)
        return Y, covs, {"params": params, "membership": membership}
    f = cfg.files
    Y = read_edge_list(f.edges, n=f.n)
    covs = None
    if f.covariates or f.node_covariates:
        covs = read_covariates(f.covariates, Y.n, node_file=f.node_covariates, transform=f.transform)
    return Y, covs, {}


def _split_indices(n: int, seed: int, r: int):
    """Independent random halves; the first gets ceil(n/2) nodes."""
    perm = stream_rng(seed, "split", r).permutation(n)
    n1 = (n + 1) // 2
    return np.sort(perm[:n1]), np.sort(perm[n1:])


def _direction(Y, covs, cfg, fit_rows, regress_rows, K_list, tau_hat, direction):
    """Split fit on ``fit_rows`` + initial regressions + full-sample sweeps."""
    split_fit = two_stage_fit(Y, covs, cfg.alm, rows=fit_rows)
    V_hat = [split_fit.factors[l].truncate(K_list[l]).V for l in range(len(K_list))]
    init = initial_split_embedding(Y, covs, V_hat, tau_hat, regress_rows, direction)
    final = full_sample_iterate(Y, covs, init.V_dot, tau_hat, cfg.split.H, direction=direction)
    return split_fit, final


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Execute the full multi-step procedure for one dataset."""
    timings = {}
    t0 = time.perf_counter()
    Y, covs_raw, truth = _load_data(cfg)
    n = Y.n
    covs = covs_raw
    scales = ()
    if covs_raw is not None and cfg.standardize:
        covs = standardize_covariates(covs_raw)
        scales = covs.scales
    p = 0 if covs is None else covs.p
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    full = two_stage_fit(Y, covs, cfg.alm)
    tau_hat = full.tau_hat
    timings["full_fit"] = time.perf_counter() - t0

    # rank selection consumes the full-sample singular values
    rank_info = {}
    Ybar = mean_degree_stat(Y)
    K_list = []
    for l in range(p + 1):
        configured = cfg.K0 if l == 0 else cfg.K1
        if configured is None:
            sel = select_rank(full.sigma[l], n, Ybar, cfg.rank)
            rank_info[f"layer{l}"] = sel
            K_list.append(sel.K_hat)
        else:
            K_list.append(int(configured))
    K0 = K_list[0]
    K1 = K_list[1] if p >= 1 else K0

    community = None
    embeddings = {}
    if p >= 1:
        t0 = time.perf_counter()
        joint = cfg.resolve_joint()
        logliks = []
        memberships = []
        B1s = []
        flags = []
        for r in range(1, cfg.split.R + 1):
            I1, I2 = _split_indices(n, cfg.seed, r)
            fit1, emb1 = _direction(Y, covs, cfg, I1, I2, K_list, tau_hat, 1)
            fit2, emb2 = _direction(Y, covs, cfg, I2, I1, K_list, tau_hat, 2)
            del fit1, fit2

            emb_1, zero1 = build_embedding(emb1.V_dot[1], emb2.V_dot[1])
            half_dims = (K1, K1)
            points = emb_1
            zero_mask = zero1
            if joint:
                emb_0, zero0 = build_embedding(emb1.V_dot[0], emb2.V_dot[0])
                points = np.concatenate([emb_0, emb_1], axis=1)
                zero_mask = zero0 | zero1
                half_dims = (K0, K0, K1, K1)
            km = kmeans(
                points,
                K1,
                restarts=cfg.split.kmeans_restarts,
                seed=stream_rng(cfg.seed, "kmeans", r),
            )
            g_r = assign_with_zero_rows(points, km.centers, zero_mask, half_dims)

            theta0_hat = 0.5 * (
                emb1.U_dot[0] @ emb1.V_dot[0].T + emb2.U_dot[0] @ emb2.V_dot[0].T
            )
            ll, B1_r, fl = split_loglik(Y, covs, g_r, theta0_hat, tau_hat)
            logliks.append(ll)
            memberships.append(g_r)
            B1s.append(B1_r)
            flags.append(fl)
            embeddings[r] = {
                "points": points,
                "centers": km.centers,
                "zero_mask": zero_mask,
                "emb1": emb1,
                "emb2": emb2,
            }
        r_star, g_hat = select_split(np.asarray(logliks), memberships)
        community = CommunityFit(
            g_hat=g_hat,
            centers=embeddings[r_star]["centers"],
            r_star=r_star,
            loglik_per_split=np.asarray(logliks),
            B1_per_split=B1s,
            memberships=memberships,
        )
        timings["community"] = time.perf_counter() - t0

    inference = None
    if cfg.inference_method != "none" and community is not None:
        t0 = time.perf_counter()
        if cfg.inference_method == "block_logistic":
            inference = fit_block_logistic(Y, covs, community.g_hat, community.g_hat)
        else:
            inference = fit_tetrad(Y, covs, community.g_hat, n_cap=cfg.tetrad_cap)
        timings["inference"] = time.perf_counter() - t0

    result = PipelineResult(
        tau_hat=tau_hat,
        lowrank=full,
        K0=K0,
        K1=K1,
        rank_selection=rank_info,
        community=community,
        inference=inference,
        embeddings=embeddings,
        covariate_scales=scales,
        timings=timings,
        seed=cfg.seed,
    )
    if cfg.out_dir:
        _persist(cfg, result, truth)
    return result


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, RankSelection):
        return {
            "K_hat": o.K_hat,
            "ratios": o.ratios.tolist(),
            "threshold": o.threshold,
            "no_pass": o.no_pass,
        }
    raise TypeError(f"not JSON serializable: {type(o)}")


def _persist(cfg: PipelineConfig, result: PipelineResult, truth: dict) -> None:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if result.community is not None:
        write_membership(out / "membership.csv", result.community.g_hat)
    diag = {
        "tau_hat": result.tau_hat,
        "tau_tilde": result.lowrank.tau_tilde,
        "lambda": result.lowrank.lambda_used,
        "K0": result.K0,
        "K1": result.K1,
        "rank_selection": result.rank_selection,
        "sigma": [s[:10] for s in result.lowrank.sigma],
        "objective": result.lowrank.objective,
        "loglik_per_split": None
        if result.community is None
        else result.community.loglik_per_split,
        "r_star": None if result.community is None else result.community.r_star,
        "solver": result.lowrank.diagnostics,
    }
    (out / "diagnostics.json").write_text(json.dumps(diag, indent=2, sort_keys=True, default=_json_default))
    if result.inference is not None:
        with open(out / "inference.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["coordinate", "estimate", "se", "z", "lo95", "hi95"])
            for row in result.inference.table():
                wr.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    manifest = {
        "package_version": _pkg_version,
        "numpy_version": np.__version__,
        "seed": cfg.seed,
        "timings": result.timings,
        "config": _config_dict(cfg),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default))


def _config_dict(cfg: PipelineConfig) -> dict:
    d = asdict(cfg)
    if cfg.dgp is not None:
        d["dgp"]["B1"] = cfg.dgp.B1.to_matrix().tolist()
        if cfg.dgp.B0 is not None:
            d["dgp"]["B0"] = cfg.dgp.B0.to_matrix().tolist()
    return d


# --- Monte Carlo harness ---------------------------------------------------


def _vech_truth(B: np.ndarray, K: int) -> np.ndarray:
    out = np.empty(K * (K + 1) // 2)
    for a in range(1, K + 1):
        for b in range(a, K + 1):
            out[vech_position(K, a, b) - 1] = B[a - 1, b - 1]
    return out


def _label_permutation(g_aligned: Membership, g_raw: Membership, K: int) -> np.ndarray:
    """perm with aligned_label = perm[raw_label - 1] (1-based labels)."""
    perm = np.zeros(K, dtype=np.int64)
    for raw, ali in zip(g_raw.g, g_aligned.g):
        perm[raw - 1] = ali
    # untouched labels (empty clusters) map to themselves
    for k in range(K):
        if perm[k] == 0:
            perm[k] = k + 1
    return perm


def _permute_coords(K: int, perm: np.ndarray) -> np.ndarray:
    """Coordinate map sending cell (a,b) to cell (perm[a], perm[b])."""
    d = K * (K + 1) // 2
    out = np.zeros(d, dtype=np.int64)
    for a in range(1, K + 1):
        for b in range(a, K + 1):
            src = vech_position(K, a, b) - 1
            dst = vech_position(K, int(perm[a - 1]), int(perm[b - 1])) - 1
            out[src] = dst
    return out


def replication_row(cfg: PipelineConfig, rep: int) -> dict:
    """Run one replication and compute its metrics against the truth."""
    if cfg.dgp is None:
        raise ConfigError("Monte Carlo mode needs a synthetic data configuration")
    seed = replication_seed(cfg.seed, rep)
    rep_cfg = replace(cfg, dgp=cfg.dgp.with_seed(seed), seed=seed, out_dir=None)
    Y, covs, params, membership = simulate(rep_cfg.dgp)
    result = run_pipeline(rep_cfg)
    row = {
        "rep": rep,
        "seed": seed,
        "tau_hat": result.tau_hat,
        "tau_true": params.tau,
        "K1_hat": result.K1,
        "K1_true": cfg.dgp.K1,
        "K1_correct": int(result.K1 == cfg.dgp.K1),
        "r_star": None if result.community is None else result.community.r_star,
    }
    # coefficient accuracy on the original covariate scale
    theta1_hat = result.lowrank.theta_hat[1]
    if result.covariate_scales:
        theta1_hat = theta1_hat / result.covariate_scales[0]
    row["mse_theta0"] = mse_theta(result.lowrank.theta_hat[0], params.theta[0])
    row["mse_theta1"] = mse_theta(theta1_hat, params.theta[1])

    if result.community is not None:
        g_hat = result.community.g_hat
        if g_hat.K == membership.K:
            aligned = align_labels(g_hat, membership)
            row["prop"] = float(np.mean(aligned.g == membership.g))
            perm = _label_permutation(aligned, g_hat, membership.K)
        else:
            aligned = None
            perm = None
            row["prop"] = prop_correct(membership, g_hat)
        row["nmi"] = nmi(membership, g_hat)
        row["rand_index"] = rand_index(membership, g_hat)
        row["exact_recovery"] = int(row["prop"] == 1.0)

        if result.inference is not None and perm is not None:
            _add_inference_columns(row, cfg, result.inference, perm, estimated=True)
    return row


def _truth_vectors(cfg: PipelineConfig):
    dgp = cfg.dgp
    tau_raw = float(np.log(zeta_n(dgp.n, dgp.zeta_coeff)))
    truth = {}
    if dgp.theta0_model == "block":
        truth["B0"] = _vech_truth(dgp.B0.to_matrix() + tau_raw, dgp.K1)
    truth["B1"] = _vech_truth(dgp.B1.to_matrix(), dgp.K1)
    return truth


def _add_inference_columns(row, cfg, inf: InferenceResult, perm, estimated: bool, prefix=""):
    """Per-coordinate estimate, se and CI coverage against the truth."""
    truth = _truth_vectors(cfg)
    K = cfg.dgp.K1
    d1 = K * (K + 1) // 2
    if inf.method == "block_logistic":
        d0 = d1
        est = np.asarray(inf.estimate)
        se = np.asarray(inf.se)
        cmap = _permute_coords(K, perm)
        blocks = {"B0": (est[:d0], se[:d0]), "B1": (est[d0:], se[d0:])}
    else:
        cmap = _permute_coords(K, perm)
        blocks = {"B1": (np.asarray(inf.estimate), np.asarray(inf.se))}
    for name, (e_raw, s_raw) in blocks.items():
        if name not in truth:
            continue
        e = np.empty_like(e_raw)
        s = np.empty_like(s_raw)
        e[cmap] = e_raw  # relabeled coordinates
        s[cmap] = s_raw
        for k in range(e.shape[0]):
            t = truth[name][k]
            covered = int(abs(e[k] - t) <= 1.959963984540054 * s[k]) if np.isfinite(s[k]) else None
            tag = f"{prefix}{name}_{k + 1}"
            row[f"{tag}_est"] = float(e[k])
            row[f"{tag}_se"] = float(s[k])
            row[f"{tag}_true"] = float(t)
            row[f"{tag}_cover"] = covered


def _mc_worker(args):
    cfg, rep = args
    try:
        return rep, replication_row(cfg, rep), None
    except Exception as exc:  # aggregation proceeds over the successes
        return rep, None, f"{type(exc).__name__}: {exc}"


def run_montecarlo(
    cfg: PipelineConfig,
    reps: int,
    workers: int = 1,
    progress=None,
) -> dict:
    """Run ``reps`` replications and aggregate their metrics.

    Returns {"rows": per-rep dicts, "aggregate": summary dict,
    "errors": {rep: message}}.  Writes per-rep and aggregate CSVs when
    the config names an output directory.  Deterministic for a given
    (config, seed) regardless of ``workers``.
    """
    tasks = [(replace(cfg, out_dir=None), rep) for rep in range(reps)]
    results = {}
    errors = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rep, row, err in pool.map(_mc_worker, tasks):
                results[rep] = row
                if err:
                    errors[rep] = err
                if progress:
                    progress(rep, row, err)
    else:
        for t in tasks:
            rep, row, err = _mc_worker(t)
            results[rep] = row
            if err:
                errors[rep] = err
            if progress:
                progress(rep, row, err)

    rows = [results[r] for r in range(reps) if results[r] is not None]
    aggregate = _aggregate(rows, n_requested=reps, n_failed=len(errors))
    out = {"rows": rows, "aggregate": aggregate, "errors": errors}
    if cfg.out_dir:
        _write_mc_tables(cfg, out)
    return out


def _aggregate(rows: list, n_requested: int, n_failed: int) -> dict:
    agg = {"replications": n_requested, "succeeded": len(rows), "failed": n_failed}
    if not rows:
        return agg
    numeric = {}
    for row in rows:
        for k, v in row.items():
            if isinstance(v, (int, float)) and v is not None and k not in ("rep", "seed"):
                numeric.setdefault(k, []).append(float(v))
    for k, vals in numeric.items():
        arr = np.asarray(vals)
        agg[f"mean_{k}"] = float(arr.mean())
    # empirical spread of the estimates, for calibration tables
    for k in list(numeric):
        if k.endswith("_est"):
            arr = np.asarray(numeric[k])
            agg[f"emp_sd_{k[:-4]}"] = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return agg


def _write_mc_tables(cfg: PipelineConfig, out: dict) -> None:
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = out["rows"]
    cols = []
    for row in rows:
        for k in row:
            if k not in cols:
                cols.append(k)
    with open(outdir / "replications.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for row in rows:
            wr.writerow([_fmt(row.get(c)) for c in cols])
    agg = out["aggregate"]
    with open(outdir / "aggregate.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["metric", "value"])
        for k in agg:
            wr.writerow([k, _fmt(agg[k])])
    if out["errors"]:
        (outdir / "errors.json").write_text(
            json.dumps({str(k): v for k, v in out["errors"].items()}, indent=2, sort_keys=True)
        )


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v

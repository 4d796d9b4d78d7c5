"""File formats: edge lists, covariates, memberships, ground truth, results."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import BlockMatrix, CovariateSet, Membership, ModelParams, Network
from .errors import ConfigError

__all__ = [
    "read_edge_list",
    "write_edge_list",
    "read_covariates",
    "write_covariate_layer",
    "read_membership",
    "write_membership",
    "write_ground_truth",
    "read_ground_truth",
]

# per-node column -> edge layer transforms
TRANSFORMS = {
    "absdiff": lambda x: np.abs(x[:, None] - x[None, :]),
    "product": lambda x: x[:, None] * x[None, :],
    "scaled_absdiff": lambda x: np.abs(x[:, None] - x[None, :])
    / np.sqrt(np.maximum(x[:, None] ** 2 + x[None, :] ** 2, 1e-300)),
}


def read_edge_list(path, n: int | None = None) -> Network:
    """Whitespace-separated "i j" pairs, 0-based, one undirected edge per line."""
    pairs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            i, j = line.split()[:2]
            pairs.append((int(i), int(j)))
    if n is None:
        n = 1 + max((max(i, j) for i, j in pairs), default=-1)
    adj = np.zeros((n, n))
    for i, j in pairs:
        if i == j:
            raise ConfigError(f"self-loop {i} in edge list")
        adj[i, j] = adj[j, i] = 1.0
    return Network(adj)


def write_edge_list(path, Y: Network) -> None:
    i, j = np.nonzero(np.triu(Y.adjacency, k=1))
    with open(path, "w") as fh:
        for a, b in zip(i, j):
            fh.write(f"{a} {b}\n")


def read_covariates(paths, n: int, node_file=None, transform: str = "absdiff") -> CovariateSet:
    """Dense n x n CSV layers, or per-node columns expanded by a transform."""
    layers = []
    for p in paths or ():
        w = np.loadtxt(p, delimiter=",")
        if w.shape != (n, n):
            raise ConfigError(f"covariate file {p} has shape {w.shape}, expected ({n}, {n})")
        layers.append(w)
    if node_file is not None:
        if transform not in TRANSFORMS:
            raise ConfigError(f"unknown covariate transform {transform!r}")
        cols = np.loadtxt(node_file, delimiter=",", ndmin=2)
        if cols.shape[0] != n:
            raise ConfigError(f"node covariate file has {cols.shape[0]} rows, expected {n}")
        fn = TRANSFORMS[transform]
        for c in cols.T:
            layers.append(fn(c))
    if not layers:
        raise ConfigError("no covariate layers given")
    return CovariateSet(tuple(layers))


def write_covariate_layer(path, layer: np.ndarray) -> None:
    np.savetxt(path, layer, delimiter=",", fmt="%.17g")


def read_membership(path) -> Membership:
    """CSV with rows "node,label" (header optional); labels 1-based."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            a, b = line.split(",")[:2]
            try:
                rows.append((int(a), int(b)))
            except ValueError:
                continue  # header
    rows.sort()
    labels = np.asarray([b for _, b in rows], dtype=np.int64)
    return Membership(labels, int(labels.max()))


def write_membership(path, g: Membership) -> None:
    with open(path, "w") as fh:
        fh.write("node,label\n")
        for i, lab in enumerate(g.g):
            fh.write(f"{i},{int(lab)}\n")


def write_ground_truth(path, params: ModelParams, membership: Membership, extra: dict | None = None) -> None:
    blocks = {}
    if extra:
        blocks.update(extra)
    payload = {
        "tau": params.tau,
        "membership": membership.g.tolist(),
        "K": membership.K,
        **blocks,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def read_ground_truth(path) -> dict:
    data = json.loads(Path(path).read_text())
    if "membership" in data:
        g = np.asarray(data["membership"], dtype=np.int64)
        data["membership"] = Membership(g, int(data.get("K", g.max())))
    for key in ("B0", "B1"):
        if data.get(key) is not None:
            data[key] = BlockMatrix.from_matrix(np.asarray(data[key]))
    return data

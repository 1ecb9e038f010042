"""File formats: CSV for matrices and signals (rows = matrix rows, '.'
decimal, no header), JSON wrappers for dictionaries, support sequences and
dependency graphs."""

from __future__ import annotations

import json

import numpy as np

from .core import Dictionary, SupportSequence
from .graphmodel import DependencyGraph


def save_matrix_csv(path: str, A) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] == 1 and A.shape[1] > 1:
        A = A.T                       # vectors are written as a column
    with open(path, "w") as fh:
        for row in A:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_matrix_csv(path: str) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    return np.asarray(rows)


def load_signal_csv(path: str) -> np.ndarray:
    return load_matrix_csv(path).ravel()


def dictionary_to_dict(D: Dictionary) -> dict:
    return {"n": D.n, "m": D.m, "kind": D.kind,
            "data": [[float(v) for v in row] for row in D.atoms]}


def save_dictionary(path: str, D: Dictionary) -> None:
    with open(path, "w") as fh:
        json.dump(dictionary_to_dict(D), fh, indent=1)
        fh.write("\n")


def load_dictionary(path: str) -> Dictionary:
    with open(path) as fh:
        d = json.load(fh)
    atoms = np.asarray(d["data"], dtype=float)
    if atoms.shape != (d["n"], d["m"]):
        raise ValueError(f"data shape {atoms.shape} does not match "
                         f"(n, m) = ({d['n']}, {d['m']})")
    norms = np.linalg.norm(atoms, axis=0)
    normalized = bool(np.max(np.abs(norms - 1.0)) <= 1e-12)
    return Dictionary(atoms, kind=d.get("kind", "custom"), normalized=normalized)


def save_supports(path: str, S: SupportSequence) -> None:
    with open(path, "w") as fh:
        json.dump([list(s) for s in S.supports], fh)
        fh.write("\n")


def load_supports(path: str, m: int) -> SupportSequence:
    with open(path) as fh:
        lists = json.load(fh)
    return SupportSequence.from_lists(lists, m)


def graph_to_dict(G: DependencyGraph) -> dict:
    nodes = list(G.nodes)
    index = {v: i for i, v in enumerate(nodes)}
    out = {"nodes": [list(v) for v in nodes],
           "edges": sorted([index[a], index[b]] for a, b in G.edges)}
    if G.transfer is not None:
        out["transfer"] = {
            f"{index[a]}-{index[b]}": [[float(v) for v in row] for row in C]
            for (a, b), C in sorted(G.transfer.items())}
    return out


def save_graph(path: str, G: DependencyGraph) -> None:
    with open(path, "w") as fh:
        json.dump(graph_to_dict(G), fh, indent=1)
        fh.write("\n")


def load_graph(path: str, source=None) -> DependencyGraph:
    with open(path) as fh:
        d = json.load(fh)
    nodes = tuple(tuple(int(j) for j in v) for v in d["nodes"])
    edges = frozenset((nodes[a], nodes[b]) for a, b in d["edges"])
    transfer = None
    if "transfer" in d:
        transfer = {}
        for key, C in d["transfer"].items():
            a, b = (int(t) for t in key.split("-"))
            transfer[(nodes[a], nodes[b])] = np.asarray(C, dtype=float)
    if source is None:
        m = 1 + max((j for v in nodes for j in v), default=-1)
        sizes = [len(v) for v in nodes if v]
        source = (None, m, max(sizes) if sizes else 0)
    return DependencyGraph(nodes=tuple(sorted(nodes)), edges=edges,
                           source=source, transfer=transfer)

"""Command-line interface.

Subcommands: gen-dict, gen-signal, graph (build|enumerate|realize), pursue,
measure, experiment (recovery|denoise), theory (R|lpa-mse).

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bench, dictionaries, graphmodel, io as psio, measures, pursuit
from .core import NonMinimalSupportError, PatchModel, SupportSequence


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="patchsparse")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dict", help="construct a dictionary")
    g.add_argument("--kind", required=True,
                   choices=["heaviside", "signature", "multi", "graph"])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, default=None)
    g.add_argument("--s", type=int, default=1, help="tuple size (multi)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--graph", help="graph JSON (kind=graph)")
    g.add_argument("--optimize", action="store_true",
                   help="coherence-optimize the signature base")
    g.add_argument("--iters", type=int, default=10_000)
    g.add_argument("--step", type=float, default=0.15)
    g.add_argument("--restarts", type=int, default=1)

    g = sub.add_parser("gen-signal", help="sample a model signal from a path")
    g.add_argument("--dict", dest="dict_path", required=True)
    g.add_argument("--path", dest="path_path", required=True)
    g.add_argument("--N", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    g = sub.add_parser("graph", help="dependency graph operations")
    gsub = g.add_subparsers(dest="graph_command", required=True)
    gb = gsub.add_parser("build")
    gb.add_argument("--dict", dest="dict_path", required=True)
    gb.add_argument("--s", type=int, required=True)
    gb.add_argument("--edge-tol", type=float, default=None)
    gb.add_argument("--transfers", action="store_true",
                    help="attach transfer matrices (fails if not transferable)")
    gb.add_argument("--out", required=True)
    ge = gsub.add_parser("enumerate")
    ge.add_argument("--graph", required=True)
    ge.add_argument("--P", type=int, required=True)
    ge.add_argument("--cap", type=int, default=graphmodel.WALK_CAP)
    ge.add_argument("--open-paths", action="store_true",
                    help="drop the wrap-around edge requirement")
    ge.add_argument("--out", required=True)
    gr = gsub.add_parser("realize")
    gr.add_argument("--graph", required=True)
    gr.add_argument("--n", type=int, required=True)
    gr.add_argument("--seed", type=int, default=0)
    gr.add_argument("--out", required=True)

    g = sub.add_parser("pursue", help="run a pursuit on a signal")
    g.add_argument("--algo", required=True,
                   choices=["lpa", "qomp", "admm", "oracle"])
    g.add_argument("--dict", dest="dict_path", required=True)
    g.add_argument("--in", dest="in_path", required=True)
    g.add_argument("--s", type=int, required=True)
    g.add_argument("--beta", type=float, default=1.0)
    g.add_argument("--rho", type=float, default=1.0)
    g.add_argument("--iters", type=int, default=300)
    g.add_argument("--project", action="store_true")
    g.add_argument("--path", dest="path_path",
                   help="support sequence JSON (oracle)")
    g.add_argument("--out", required=True)

    g = sub.add_parser("measure", help="dictionary/model measures")
    g.add_argument("--dict", dest="dict_path", required=True)
    g.add_argument("--what", required=True,
                   choices=["spark", "gspark", "mu1", "mu1star", "eta1star", "rip"])
    g.add_argument("--s", type=int, default=1,
                   help="coherence order / model sparsity")
    g.add_argument("--k", type=int, default=1, help="isometry order")
    g.add_argument("--variant", default="classical",
                   choices=["classical", "globalized", "generalized"])
    g.add_argument("--N", type=int, default=None,
                   help="signal length for model-based measures")
    g.add_argument("--cap", type=int, default=measures.SUBSET_GUARD)

    g = sub.add_parser("experiment", help="run a §-protocol experiment")
    esub = g.add_subparsers(dest="experiment_command", required=True)
    for name in ("recovery", "denoise"):
        ge = esub.add_parser(name)
        ge.add_argument("--config", required=True)

    g = sub.add_parser("theory", help="analytic PWC performance theory")
    tsub = g.add_subparsers(dest="theory_command", required=True)
    tr = tsub.add_parser("R")
    tr.add_argument("--n", type=int, required=True)
    tr.add_argument("--alpha", type=int, required=True)
    tl = tsub.add_parser("lpa-mse")
    tl.add_argument("--n", type=int, required=True)
    tl.add_argument("--segments", required=True,
                    help="comma-separated segment lengths, e.g. 5,12,8")
    tl.add_argument("--sigma", type=float, required=True)
    return p


def _cmd_gen_dict(args) -> None:
    rng = np.random.default_rng(args.seed)
    if args.kind == "heaviside":
        D = dictionaries.heaviside(args.n)
    elif args.kind == "signature":
        if args.m is None:
            raise ValueError("--m is required for signature dictionaries")
        if args.optimize:
            _, D, mu = dictionaries.optimize_signature_coherence(
                args.n, args.m, iterations=args.iters, step=args.step,
                seed=args.seed, restarts=args.restarts)
            print(f"coherence after optimization: {mu:.4f}", file=sys.stderr)
        else:
            D = dictionaries.signature(rng.standard_normal(args.m), args.n)
    elif args.kind == "multi":
        if args.m is None:
            raise ValueError("--m is required for multi-signature dictionaries")
        spec = dictionaries.random_signature_spec(args.n, args.m, args.s, rng)
        D = dictionaries.multi_signature(spec)
    else:
        if not args.graph:
            raise ValueError("--graph is required for kind=graph")
        G = psio.load_graph(args.graph)
        D = graphmodel.realize_graph(G, args.n, rng=rng)
    psio.save_dictionary(args.out, D)


def _cmd_gen_signal(args) -> None:
    D = psio.load_dictionary(args.dict_path)
    S = psio.load_supports(args.path_path, D.m)
    rng = np.random.default_rng(args.seed)
    x, _ = graphmodel.sample_signal(S, D, args.N, rng)
    psio.save_matrix_csv(args.out, x)


def _cmd_graph(args) -> None:
    if args.graph_command == "build":
        D = psio.load_dictionary(args.dict_path)
        G = graphmodel.build_graph(D, args.s, edge_tol=args.edge_tol)
        if args.transfers:
            G = graphmodel.compute_transfers(G, D)
        psio.save_graph(args.out, G)
    elif args.graph_command == "enumerate":
        G = psio.load_graph(args.graph)
        enum = graphmodel.enumerate_paths(G, args.P, cap=args.cap,
                                          closed=not args.open_paths)
        payload = {"paths": [[list(s) for s in p.supports] for p in enum.paths],
                   "truncated": enum.truncated}
        with open(args.out, "w") as fh:
            json.dump(payload, fh)
            fh.write("\n")
    else:
        G = psio.load_graph(args.graph)
        rng = np.random.default_rng(args.seed)
        D = graphmodel.realize_graph(G, args.n, rng=rng)
        psio.save_dictionary(args.out, D)


def _cmd_pursue(args) -> None:
    D = psio.load_dictionary(args.dict_path)
    y = psio.load_signal_csv(args.in_path)
    model = PatchModel(D, args.s, y.size)
    if args.algo == "lpa":
        res = pursuit.lpa(model, y)
        if args.project:
            xp = pursuit.project_to_model(y, res.support, D)
            res = pursuit.PursuitResult(
                xhat=xp,
                gamma=graphmodel.representation_on_supports(xp, res.support, D),
                support=res.support, iterations=res.iterations,
                residual_norm=float(np.linalg.norm(y - xp)),
                overlap_violation=res.overlap_violation, projected=True)
    elif args.algo == "qomp":
        res = pursuit.qomp(model, y, beta=args.beta, project=args.project)
    elif args.algo == "admm":
        res = pursuit.admm_pursuit(model, y, rho=args.rho,
                                   outer_iters=args.iters)
    else:
        if not args.path_path:
            raise ValueError("--path is required for the oracle")
        S = psio.load_supports(args.path_path, D.m)
        xhat = pursuit.oracle_project(y, S, D, mode="direct")
        gamma = graphmodel.representation_on_supports(xhat, S, D)
        res = pursuit.PursuitResult(
            xhat=xhat, gamma=gamma, support=S, iterations=1,
            residual_norm=float(np.linalg.norm(y - xhat)),
            overlap_violation=0.0, projected=True)
    triplets = [[int(i), int(j), float(res.gamma.blocks[i, j])]
                for i, j in zip(*np.nonzero(res.gamma.blocks))]
    payload = {
        "xhat": [float(v) for v in res.xhat],
        "gamma": triplets,
        "support": [list(s) for s in res.support.supports],
        "residual_norm": res.residual_norm,
        "overlap_violation": res.overlap_violation,
        "iterations": res.iterations,
        "projected": res.projected,
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def _cmd_measure(args) -> None:
    D = psio.load_dictionary(args.dict_path)

    def model_supports():
        if args.N is None:
            raise ValueError("--N is required for model-based measures")
        return measures.allowed_supports(PatchModel(D, args.s, args.N))

    witness = None
    exact = True
    if args.what == "spark":
        r = measures.spark(D, cap=args.cap)
        value, exact, witness = r.value, r.exact, r.witness
    elif args.what == "gspark":
        r = measures.globalized_spark(D, model_supports(), cap=args.cap)
        value, exact, witness = r.value, r.exact, r.witness
    elif args.what == "mu1":
        value = measures.babel_mu1(D, args.s)
    elif args.what == "mu1star":
        value = measures.globalized_mu1star(D, model_supports(), args.s)
    elif args.what == "eta1star":
        value = measures.eta1star(D, model_supports(), args.s)
    else:
        model = None
        T = None
        if args.variant in ("globalized", "generalized"):
            if args.N is None:
                raise ValueError("--N is required for model-based measures")
            model = PatchModel(D, args.s, args.N)
            if args.variant == "globalized":
                T = measures.allowed_supports(model)
        value = measures.rip_constants(D, args.k, variant=args.variant,
                                       model=model, T=T, cap=args.cap)
    out = {"value": value, "exact": exact}
    if witness is not None:
        out["witness"] = list(witness)
    json.dump(out, sys.stdout)
    sys.stdout.write("\n")


def _cmd_experiment(args) -> None:
    with open(args.config) as fh:
        config = bench.ExperimentConfig.from_json(fh.read())
    if args.experiment_command == "recovery":
        sys.stdout.write(bench.run_recovery(config))
    else:
        sys.stdout.write(bench.run_denoising(config))


def _cmd_theory(args) -> None:
    if args.theory_command == "R":
        print(f"{bench.lpa_risk_factor(args.n, args.alpha):.12g}")
    else:
        lengths = [int(t) for t in args.segments.split(",") if t]
        print(f"{bench.lpa_pwc_mse(args.n, lengths, args.sigma):.12g}")


_CONFIG_ERRORS = (bench.ConfigError, ValueError, KeyError, OSError,
                  json.JSONDecodeError)
_NUMERICAL_ERRORS = (np.linalg.LinAlgError, ArithmeticError,
                     pursuit.ConvergenceError, graphmodel.RealizationError,
                     graphmodel.UnrealizableError,
                     graphmodel.CombinatorialLimitError,
                     NonMinimalSupportError)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handlers = {
        "gen-dict": _cmd_gen_dict,
        "gen-signal": _cmd_gen_signal,
        "graph": _cmd_graph,
        "pursue": _cmd_pursue,
        "measure": _cmd_measure,
        "experiment": _cmd_experiment,
        "theory": _cmd_theory,
    }
    try:
        handlers[args.command](args)
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

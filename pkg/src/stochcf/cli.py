"""Command-line front end: ``stochcf generate | run | summarize | datasets``."""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import SummaryAccumulator, compare_to_truth, occupancy_of
from .datasets import DATASETS, dataset_text
from .heatmap import adjacency_heatmap, encode_ppm
from .model import Hyperparameters
from .network import (ParseError, generate_from_model, generate_two_star_network,
                      parse_clustering, read_edge_list, write_clustering, write_network)
from .sampler import ChainConfig, CsvTraceSink, SinkError, read_trace, run_chain

log = logging.getLogger("stochcf")


class UsageError(Exception):
    pass


def _hyper(args) -> Hyperparameters:
    return Hyperparameters(alpha=args.alpha, beta1=args.beta1, beta2=args.beta2,
                           gamma_shape=args.gamma_shape, gamma_rate=args.gamma_rate,
                           k_rate=args.k_rate)


def _add_hyper_flags(p):
    g = p.add_argument_group("priors")
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--beta1", type=float, default=1.0)
    g.add_argument("--beta2", type=float, default=1.0)
    g.add_argument("--gamma-shape", type=float, default=1.0)
    g.add_argument("--gamma-rate", type=float, default=1.0)
    g.add_argument("--k-rate", type=float, default=1.0)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _prepare_out(path: Path, force: bool, names):
    path.mkdir(parents=True, exist_ok=True)
    clash = [n for n in names if (path / n).exists()]
    if clash and not force:
        raise UsageError(f"{path} already contains {', '.join(clash)}; use --force to overwrite")


# -- generate --------------------------------------------------------------------

def cmd_generate(args) -> int:
    out = Path(args.out)
    _prepare_out(out, args.force, ["network.txt", "truth.txt"])
    if args.kind == "two-star":
        net, truth = generate_two_star_network()
    else:
        if args.n is None or args.k is None:
            raise UsageError("--kind model needs --n and --k")
        if args.n < 1 or args.k < 1:
            raise UsageError("--n and --k must be positive")
        rng = np.random.default_rng(args.seed)
        net, truth, _, _ = generate_from_model(args.n, args.k, _hyper(args), args.model,
                                               args.edge_model, args.directed, rng)
    (out / "network.txt").write_text(write_network(net), encoding="utf-8")
    (out / "truth.txt").write_text(write_clustering(net.labels, truth), encoding="utf-8")
    print(f"wrote {out / 'network.txt'} ({net.N} nodes, {net.num_edges} edges) "
          f"and {out / 'truth.txt'}")
    return 0


def cmd_datasets(args) -> int:
    out = Path(args.out)
    names = [n for name in DATASETS for n in (f"{name}.txt", f"{name}_factions.txt")]
    _prepare_out(out, args.force, names)
    for name in DATASETS:
        edges, factions = dataset_text(name)
        (out / f"{name}.txt").write_text(edges, encoding="utf-8")
        (out / f"{name}_factions.txt").write_text(factions, encoding="utf-8")
    print(f"wrote {len(names)} files to {out}")
    return 0


# -- run -------------------------------------------------------------------------

def _run_one(net_path, parse_opts, config_dict, hyper_dict, trace_path):
    net = read_edge_list(net_path, **parse_opts)
    config = ChainConfig(**config_dict)
    with open(trace_path, "w", encoding="utf-8", newline="") as fh:
        sink = CsvTraceSink(fh)
        result = run_chain(net, config, Hyperparameters(**hyper_dict), [sink])
    return result.move_stats(), result.emitted


def _run_settings(args) -> dict:
    if args.replay:
        manifest = json.loads(Path(args.replay).read_text(encoding="utf-8"))
        settings = manifest["settings"]
        if args.input:
            settings["input"] = args.input
        return settings
    if not args.input:
        raise UsageError("run needs --input (or --replay MANIFEST)")
    if args.iterations is None:
        raise UsageError("run needs --iterations")
    weights = {"gibbs": args.w_gibbs, "m3": args.w_m3,
               "absorb_eject": args.w_absorb_eject, "empty_cluster": args.w_empty}
    burnin = args.burnin if args.burnin is not None else args.iterations // 10
    config = {"iterations": args.iterations, "burnin": burnin, "thin": args.thin,
              "fixed_K": args.fixed_k, "move_weights": weights, "seed": args.seed,
              "model": args.model, "edge_model": args.edge_model, "max_K": args.max_k,
              "init": args.init}
    return {
        "input": args.input,
        "parse": {"directed": args.directed, "weighted": args.edge_model == "poisson",
                  "binarize": args.binarize},
        "config": config,
        "burnin_defaulted": args.burnin is None,
        "hyper": vars(_hyper(args)),
        "chains": args.chains,
    }


def cmd_run(args) -> int:
    settings = _run_settings(args)
    out = Path(args.out)
    chains = settings["chains"]
    traces = ["trace.csv"] if chains == 1 else [f"trace-{r}.csv" for r in range(chains)]
    _prepare_out(out, args.force, traces + ["move_stats.json", "manifest.json"])

    net_path = settings["input"]
    if not os.access(net_path, os.R_OK):
        raise UsageError(f"cannot read input file {net_path}")
    parse_opts = settings["parse"]
    try:
        net = read_edge_list(net_path, **parse_opts)
    except ParseError as exc:
        if "weight column" in str(exc):
            raise UsageError(f"{net_path}: weighted file under the bernoulli edge model; "
                             "pass --binarize to drop the weights") from exc
        raise UsageError(f"{net_path}: {exc}") from exc
    base = ChainConfig(**settings["config"])
    hyper = Hyperparameters(**settings["hyper"])
    log.info("network %s: %s", net_path, net)

    started = _now()
    jobs = []
    for r, name in enumerate(traces):
        cfg = dict(base.to_dict(), seed=base.seed + r)
        jobs.append((net_path, parse_opts, cfg, vars(hyper), str(out / name)))
    results = []
    try:
        if chains > 1 and (os.cpu_count() or 1) > 1:
            with ProcessPoolExecutor(max_workers=min(chains, os.cpu_count() or 1)) as pool:
                results = list(pool.map(_run_one, *zip(*jobs)))
        else:
            results = [_run_one(*job) for job in jobs]
    except SinkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    finished = _now()

    stats = {name: ms for name, (ms, _) in zip(traces, results)}
    move_stats = stats[traces[0]] if chains == 1 else stats
    (out / "move_stats.json").write_text(json.dumps(move_stats, indent=2) + "\n", encoding="utf-8")
    manifest = {
        "tool": "stochcf",
        "version": __version__,
        "settings": settings,
        "resolved_max_K": base.resolved_max_K(net.N),
        "dataset_sha256": _sha256(net_path),
        "network": {"N": net.N, "edges": net.num_edges, "self_loops_dropped": net.self_loops_dropped},
        "started": started,
        "finished": finished,
        "outputs": {"traces": [str(out / t) for t in traces],
                    "move_stats": str(out / "move_stats.json")},
        "samples_per_chain": [e for _, e in results],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(traces)} trace file(s), move_stats.json and manifest.json to {out}")
    return 0


# -- summarize ---------------------------------------------------------------------

def cmd_summarize(args) -> int:
    net = read_edge_list(args.network, directed=args.directed, weighted=True)
    acc = SummaryAccumulator(net.N)
    modal_trace = []
    for path in args.trace:
        with open(path, encoding="utf-8", newline="") as fh:
            trace = read_trace(fh)
        if len(trace) and trace.z.shape[1] != net.N:
            raise UsageError(f"{path} has {trace.z.shape[1]} nodes but the network has {net.N}")
        skip = int(len(trace) * args.burnin_frac)
        kept = type(trace)(trace.iteration[skip:], trace.K[skip:], trace.occupied[skip:],
                           trace.log_mass[skip:], trace.z[skip:])
        acc.write(kept)
        modal_trace.append(kept)
    if acc.count == 0:
        raise UsageError("trace is empty; nothing to summarise")
    summary = acc.summary()
    modal = np.array(summary.modal_state, dtype=np.int64)
    report = summary.to_dict(top=args.top)
    report["burnin_frac"] = args.burnin_frac
    report["modal_state"] = {lab: int(c) + 1 for lab, c in zip(net.labels, modal)}
    if args.truth:
        truth = parse_clustering(Path(args.truth).read_text(encoding="utf-8"), net)
        occ = sum(occupancy_of(t, truth) * len(t) for t in modal_trace) / acc.count
        report["truth"] = {"occupancy": occ, **compare_to_truth(modal, truth)}
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.coclustering:
        np.savetxt(args.coclustering, summary.coclustering, delimiter=",", fmt="%.6f")
    if args.heatmap:
        img, _ = adjacency_heatmap(net, modal, scale=args.scale)
        Path(args.heatmap).write_bytes(encode_ppm(img))
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochcf", description="Collapsed MCMC clustering with the SBM and SCF models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic network and its true clustering")
    g.add_argument("--kind", choices=["two-star", "model"], required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--model", choices=["sbm", "scf"], default="sbm")
    g.add_argument("--edge-model", choices=["bernoulli", "poisson"], default="bernoulli")
    g.add_argument("--directed", action="store_true")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=".")
    g.add_argument("--force", action="store_true")
    _add_hyper_flags(g)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run the sampler on an edge-list file")
    r.add_argument("--input")
    r.add_argument("--replay", metavar="MANIFEST", help="rerun with the settings of a manifest")
    r.add_argument("--model", choices=["sbm", "scf"], default="scf")
    r.add_argument("--edge-model", choices=["bernoulli", "poisson"], default="bernoulli")
    d = r.add_mutually_exclusive_group()
    d.add_argument("--directed", dest="directed", action="store_true")
    d.add_argument("--undirected", dest="directed", action="store_false")
    r.set_defaults(directed=False)
    r.add_argument("--binarize", action="store_true",
                   help="treat a weighted file as unweighted (bernoulli model)")
    r.add_argument("--iterations", type=int)
    r.add_argument("--burnin", type=int, help="default: 10%% of iterations")
    r.add_argument("--thin", type=int, default=1)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--fixed-k", type=int)
    r.add_argument("--max-k", type=int, help="default: number of nodes")
    r.add_argument("--init", choices=["single", "random"], default="single",
                   help="start with all nodes in one cluster, or a random clustering")
    r.add_argument("--chains", type=int, default=1)
    r.add_argument("--w-gibbs", type=float, default=70.0)
    r.add_argument("--w-m3", type=float, default=10.0)
    r.add_argument("--w-absorb-eject", type=float, default=10.0)
    r.add_argument("--w-empty", type=float, default=10.0)
    r.add_argument("--out", required=True)
    r.add_argument("--force", action="store_true")
    _add_hyper_flags(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("summarize", help="summarise trace file(s)")
    s.add_argument("--trace", action="append", required=True,
                   help="trace CSV; repeat to pool several chains")
    s.add_argument("--network", required=True)
    s.add_argument("--directed", action="store_true")
    s.add_argument("--truth")
    s.add_argument("--heatmap", metavar="OUT.ppm")
    s.add_argument("--scale", type=int, default=8)
    s.add_argument("--coclustering", metavar="OUT.csv")
    s.add_argument("--burnin-frac", type=float, default=0.0,
                   help="extra fraction of each trace to discard")
    s.add_argument("--top", type=int, default=10)
    s.add_argument("--out", help="JSON output file (default: stdout)")
    s.set_defaults(func=cmd_summarize)

    ds = sub.add_parser("datasets", help="export the bundled karate and monks networks")
    ds.add_argument("--out", default=".")
    ds.add_argument("--force", action="store_true")
    ds.set_defaults(func=cmd_datasets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "burnin_frac", 0.0) and not 0.0 <= args.burnin_frac < 1.0:
        parser.error("--burnin-frac must be in [0, 1)")
    if getattr(args, "chains", 1) < 1:
        parser.error("--chains must be positive")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

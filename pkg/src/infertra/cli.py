"""``infertra`` command line: gen, learn, infer, query, eval and fixtures.

Exit codes: 0 success, 1 input or validation error, 2 usage error,
3 inference infeasible.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import config, datagen, fixtures
from .evaluation import BASELINES, kfold_eval
from .inference import RwrConfig, UnreachableError, infer
from .network import read_network, write_network
from .nmm import NetworkMobilityModel, load_model
from .trajectory import format_time, parse_time, read_observations, read_trajectories, write_trajectories
from .uncertain import UncertainTrajectory

log = logging.getLogger("infertra")

OK, INPUT_ERROR, USAGE_ERROR, INFEASIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _dump(doc, out=None):
    text = json.dumps(doc, indent=1, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    else:
        print(text)


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required {', '.join(missing)}")


def _threads(n):
    return (os.cpu_count() or 1) if n == 0 else n


def _rwr_config(args) -> RwrConfig:
    return RwrConfig(tau_mode=args.tau_mode, tolerance=args.tolerance, min_samples=args.min_samples,
                     max_samples=args.max_samples, batch_size=args.batch_size, window=args.window,
                     max_attempts=args.max_attempts, max_steps_factor=args.max_steps_factor,
                     max_traces=args.max_traces, seed=args.seed, n_jobs=_threads(args.threads))


def _model_params(args) -> dict:
    params = {"order": args.order, "delta": args.delta, "epsilon": args.epsilon}
    if args.n_bins is not None:
        params["n_bins"] = args.n_bins
    return params


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args):
    _require(args, "out")
    if args.kind == "grid":
        net = datagen.grid_network(args.rows, args.cols, args.spacing, one_way=args.one_way)
    elif args.kind == "random":
        net = datagen.random_network(args.rows, args.cols, seed=args.seed)
    else:
        pm, _ = datagen.bimodal_fork_model(seed=args.seed)
        net = pm.network
    if args.kind != "fork":
        durations = datagen.edge_durations(net, args.speed)
        if args.planted == "straight":
            pm = datagen.straight_preference_model(net, args.favor, seed=args.seed, durations=durations,
                                                   trip_edges=tuple(args.trip_edges))
        else:
            pm = datagen.favorite_edge_model(net, args.favor, seed=args.seed, durations=durations,
                                             trip_edges=tuple(args.trip_edges))
    db = datagen.simulate_corpus(pm, args.n)
    write_network(net, args.out)
    write_trajectories(os.path.join(args.out, "trajectories.jsonl"), db, net)
    _dump({"nodes": net.n_nodes, "edges": net.n_edges, "trajectories": len(db), "out": args.out})
    return OK


def cmd_learn(args):
    _require(args, "network", "trajectories", "out")
    net = read_network(args.network)
    db = read_trajectories(args.trajectories, net)
    model = NetworkMobilityModel(net, **_model_params(args)).fit(db)
    model.save(args.out)
    summary = model.summary()
    summary["bytes"] = os.path.getsize(args.out)
    _dump(summary)
    return OK


def cmd_infer(args):
    _require(args, "network", "model", "obs", "out")
    net = read_network(args.network)
    model = load_model(args.model, net)
    observations = read_observations(args.obs, net)
    if not observations:
        raise ValueError(f"{args.obs}: no observation found")
    if not 0 <= args.index < len(observations):
        raise UsageError(f"--index {args.index} out of range for {len(observations)} observations")
    obs = observations[args.index]
    u = infer(model, obs, _rwr_config(args))
    u.save(args.out)
    if args.geojson:
        with open(args.geojson, "w", encoding="utf-8") as f:
            json.dump(u.to_geojson(), f, sort_keys=True)
            f.write("\n")
    log.info("%d samples, %d edges", u.n_samples, len(u.edges))
    return OK


def _node(net, text):
    for cand in (text, _int_or_none(text)):
        if cand is not None and cand in net.index:
            return net.index[cand]
    raise KeyError(f"unknown node {text!r}")


def _int_or_none(text):
    try:
        return int(text)
    except ValueError:
        return None


def cmd_query(args):
    _require(args, "network")
    net = read_network(args.network)
    ids = net.node_ids
    if args.query == "affinity":
        _require(args, "model")
        model = load_model(args.model, net)
        e = net.edge_between(_node(net, args.src), _node(net, args.dst))
        hist = tuple(_node(net, h) for h in args.history)
        t = parse_time(args.t)
        _dump({"edge": [ids[int(net.src[e])], ids[int(net.dst[e])]], "history": [ids[v] for v in hist],
               "t": format_time(t), "affinity": model.affinity(e, hist, t)})
        return OK
    _require(args, "u")
    u = UncertainTrajectory.load(args.u, net)
    if args.query == "mlt":
        path, p = u.most_likely_trajectory()
        _dump({"path": [ids[v] for v in path], "p": p})
    elif args.query == "top-edges":
        _dump([{"id": net.edge_ids[e], "src": ids[int(net.src[e])], "dst": ids[int(net.dst[e])], "weight": w}
               for e, w in u.top_k_edges(args.k)])
    elif args.query == "loc-at":
        dist = u.location_at_time(parse_time(args.t))
        _dump([{"node": ids[v], "p": p} for v, p in sorted(dist.items(), key=lambda kv: (-kv[1], kv[0]))])
    else:
        td = u.time_at_node(_node(net, args.node))
        _dump({"node": ids[td.node], "fallback": td.fallback, "n": len(td.samples),
               "mean_t": format_time(td.mean) if td.samples else None,
               "histogram": [[format_time(t), p] for t, p in td.histogram().items()]})
    return OK


def _si_list(text):
    try:
        return [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--si expects comma-separated seconds, got {text!r}") from None


def cmd_eval(args):
    _require(args, "network", "trajectories", "out")
    net = read_network(args.network)
    db = read_trajectories(args.trajectories, net)
    baselines = tuple(b for b in args.baselines.split(",") if b) if args.baselines else ()
    report = kfold_eval(net, db, folds=args.folds, si=_si_list(args.si), cfg=_rwr_config(args), seed=args.seed,
                        baselines=baselines, queries=not args.no_queries, **_model_params(args))
    report.save(args.out)
    _dump(report.summary)
    return OK


def cmd_fixtures(args):
    drifted = fixtures.regenerate(check=args.check)
    if args.check and drifted:
        print(f"fixtures drifted: {', '.join(drifted)}", file=sys.stderr)
        return INPUT_ERROR
    _dump({"checked" if args.check else "written": list(fixtures.NAMES), "changed": drifted})
    return OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    learning = config.LEARNING
    rwr = RwrConfig()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--network", help="network .json file or directory with nodes.csv and edges.csv")
    common.add_argument("--seed", type=int, default=rwr.seed)
    common.add_argument("--out")

    learn_opts = argparse.ArgumentParser(add_help=False)
    learn_opts.add_argument("--order", type=int, default=learning["order"])
    learn_opts.add_argument("--delta", type=float, default=learning["delta"])
    learn_opts.add_argument("--epsilon", type=float, default=learning["epsilon"])
    learn_opts.add_argument("--n-bins", type=int, default=None, help="force this many time-of-day bins")

    rwr_opts = argparse.ArgumentParser(add_help=False)
    rwr_opts.add_argument("--tau-mode", choices=("zero", "temporal"), default=rwr.tau_mode)
    rwr_opts.add_argument("--tolerance", type=float, default=rwr.tolerance)
    rwr_opts.add_argument("--min-samples", type=int, default=rwr.min_samples)
    rwr_opts.add_argument("--max-samples", type=int, default=rwr.max_samples)
    rwr_opts.add_argument("--batch-size", type=int, default=rwr.batch_size)
    rwr_opts.add_argument("--window", type=int, default=rwr.window, help="batches in the convergence window")
    rwr_opts.add_argument("--max-attempts", type=int, default=rwr.max_attempts)
    rwr_opts.add_argument("--max-steps-factor", type=float, default=rwr.max_steps_factor)
    rwr_opts.add_argument("--max-traces", type=int, default=rwr.max_traces)
    rwr_opts.add_argument("--threads", type=int, default=rwr.n_jobs, help="worker processes, 0 = auto")

    p = argparse.ArgumentParser(prog="infertra", description=__doc__.splitlines()[0])
    p.add_argument("--show-config", action="store_true", help="print every default and exit")
    sub = p.add_subparsers(dest="command")

    g = sub.add_parser("gen", parents=[common], help="synthetic network and planted corpus")
    g.add_argument("kind", choices=("grid", "random", "fork"))
    g.add_argument("rows", type=int, nargs="?", default=5, help="grid rows, or node count for random")
    g.add_argument("cols", type=int, nargs="?", default=5, help="grid columns, or edge count for random")
    g.add_argument("--spacing", type=float, default=500.0)
    g.add_argument("--one-way", action="store_true", help="grid with east and north edges only")
    g.add_argument("--planted", choices=("favorite", "straight"), default="favorite")
    g.add_argument("--favor", type=float, default=6.0)
    g.add_argument("--speed", type=float, default=10.0, help="planted speed in m/s")
    g.add_argument("--trip-edges", type=int, nargs=2, default=(5, 20), metavar=("MIN", "MAX"))
    g.add_argument("--n", type=int, default=1000, help="number of trajectories")
    g.set_defaults(func=cmd_gen)

    le = sub.add_parser("learn", parents=[common, learn_opts], help="fit a mobility model")
    le.add_argument("--trajectories")
    le.set_defaults(func=cmd_learn)

    inf = sub.add_parser("infer", parents=[common, rwr_opts], help="infer an uncertain trajectory")
    inf.add_argument("--model")
    inf.add_argument("--obs", help="observation JSON Lines file")
    inf.add_argument("--index", type=int, default=0, help="which observation of the file")
    inf.add_argument("--geojson", help="also write a GeoJSON rendering here")
    inf.set_defaults(func=cmd_infer)

    q = sub.add_parser("query", help="query an uncertain trajectory or a model")
    qs = q.add_subparsers(dest="query", required=True)
    for name in ("mlt", "top-edges", "loc-at", "time-at", "affinity"):
        qp = qs.add_parser(name, parents=[common])
        qp.add_argument("--u", help="uncertain trajectory JSON")
        qp.set_defaults(func=cmd_query, command="query")
        if name == "top-edges":
            qp.add_argument("--k", type=int, default=10)
        elif name == "loc-at":
            qp.add_argument("--t", required=True, help="HH:MM[:SS] or seconds")
        elif name == "time-at":
            qp.add_argument("--node", required=True)
        elif name == "affinity":
            qp.add_argument("--model")
            qp.add_argument("--src", required=True)
            qp.add_argument("--dst", required=True)
            qp.add_argument("--history", nargs="+", required=True)
            qp.add_argument("--t", required=True)

    ev = sub.add_parser("eval", parents=[common, learn_opts, rwr_opts], help="cross-validated accuracy")
    ev.add_argument("--trajectories")
    ev.add_argument("--folds", type=int, default=config.EVALUATION["folds"])
    ev.add_argument("--si", default=",".join(str(s) for s in config.EVALUATION["si"]))
    ev.add_argument("--baselines", default=",".join(BASELINES))
    ev.add_argument("--no-queries", action="store_true", help="skip location and time query errors")
    ev.set_defaults(func=cmd_eval)

    fx = sub.add_parser("fixtures", help="regenerate the bundled fixtures")
    fx.add_argument("--check", action="store_true", help="only report drift, exit 1 on any")
    fx.set_defaults(func=cmd_fixtures)
    return p


def main(argv=None) -> int:
    config.setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.show_config:
        _dump(config.defaults())
        return OK
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    try:
        if getattr(args, "threads", 0) < 0:
            raise UsageError("--threads must be >= 0")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"infertra: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except UnreachableError as exc:
        print(f"infertra: infeasible: {exc}", file=sys.stderr)
        return INFEASIBLE
    except (OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"infertra: error: {msg}", file=sys.stderr)
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())

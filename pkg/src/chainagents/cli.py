"""Command-line entry point.

Every subcommand that writes files also writes ``<first output>.manifest.json``
recording argv, the resolved configuration, the seed, input and output
digests and the tool version. ``replay`` re-runs a manifest and checks that
the outputs are byte-identical.

Exit status: 0 success, 1 data error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import centipede, decentralize, evodyn, mapviz, pareto, synth, txgraph
from .ingest import ChainFormatError, parse_chain, parse_tags, sha256_file, write_chain, write_tags
from .linker import AddressLinker, validate
from .linker.io import catalog_from_labels, read_catalog, write_catalog, write_summary

log = logging.getLogger("chainagents")

DATA_ERRORS = (ChainFormatError, ValueError, KeyError, OSError)


class UsageError(Exception):
    pass


# -- config --------------------------------------------------------------------

def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(sub: argparse.ArgumentParser, config: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in config.items():
        act = actions.get(key)
        if act is None:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            val = raw.lower() in ("1", "true", "yes", "on")
            defaults[key] = val if isinstance(act, argparse._StoreTrueAction) else not val
        elif act.nargs in ("+", "*"):
            conv = act.type or str
            defaults[key] = [conv(v) for v in raw.replace(",", " ").split()]
        else:
            defaults[key] = (act.type or str)(raw)
        if act.choices is not None:
            vals = defaults[key] if isinstance(defaults[key], list) else [defaults[key]]
            for v in vals:
                if v not in act.choices:
                    raise UsageError(f"config key {key!r}: {v!r} not in {list(act.choices)}")
    sub.set_defaults(**defaults)


# -- manifest ------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Path):
        return str(v)
    return v


def write_manifest(args, argv, inputs, outputs) -> Path | None:
    outputs = [Path(p) for p in outputs if p]
    if not outputs:
        return None
    path = outputs[0].with_name(outputs[0].name + ".manifest.json")
    config = {k: _jsonable(v) for k, v in sorted(vars(args).items())
              if k not in ("func", "config", "verbose")}
    doc = {
        "tool": "chainagents",
        "version": __version__,
        "subcommand": args.command,
        "argv": list(argv),
        "seed": getattr(args, "seed", None),
        "config": config,
        "inputs": {str(p): sha256_file(p) for p in inputs if p},
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _out(path) -> Path:
    p = Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _sibling(path, suffix) -> Path:
    p = Path(path)
    return p.with_name(p.stem + suffix)


# -- subcommands -----------------------------------------------------------------

def cmd_synth(args):
    if args.miners:
        specs = synth.load_miner_specs(args.miners)
    else:
        specs = synth.mixed_population(args.population, args.blocks, args.seed)
    chain, truth = synth.generate(specs, args.blocks, seed=args.seed, settle=args.settle)
    if args.change_rate > 0:
        chain = synth.inject_change_txs(chain, truth, args.change_rate, seed=args.seed)
    out = _out(args.out)
    write_chain(chain, out)
    truth_path = _out(args.truth or _sibling(out, ".truth.csv"))
    write_tags(truth.owner, truth_path)
    outputs = [out, truth_path]
    if not args.miners:
        spec_path = _sibling(out, ".miners.ini")
        synth.dump_miner_specs(specs, spec_path)
        outputs.append(spec_path)
    print(f"{len(chain.blocks)} blocks, {len(truth.agents())} agents, {len(truth)} addresses -> {out}")
    return [args.miners], outputs


def cmd_ingest_check(args):
    chain = parse_chain(args.chain)
    n_tx = sum(len(b.txs) for b in chain.blocks)
    report = {"blocks": len(chain.blocks), "transactions": n_tx, "addresses": len(chain.addresses),
              "first_height": chain.blocks[0].height, "last_height": chain.blocks[-1].height}
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if args.out:
        _out(args.out).write_text(text, encoding="utf-8")
    return [args.chain], [args.out]


def cmd_link(args):
    chain = parse_chain(args.chain)
    est = AddressLinker(tolerance=args.tolerance, overlap_tol=args.overlap_tol, share_min=args.share_min,
                        round_counts=tuple(args.round_counts), use_change=args.use_change,
                        multi_machine=args.multi_machine, pipeline=args.pipeline)
    est.fit(chain)
    out = _out(args.out)
    write_catalog(est.catalog_, out)
    summary = _out(args.summary or _sibling(out, ".summary.csv"))
    write_summary(est.catalog_, summary)
    print(f"{est.n_agents_} agents over {len(est.labels_)} addresses -> {out}")
    return [args.chain], [out, summary]


def cmd_validate(args):
    labels = read_catalog(args.catalog)
    rep = validate(labels, parse_tags(args.tags))
    sens, spec = rep.percent(2)
    out = _out(args.out)
    row = rep.as_dict()
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(",".join(row) + "\n")
        fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row.values()) + "\n")
    print(f"sensitivity {sens:.2f}%  specificity {spec:.2f}%")
    return [args.catalog, args.tags], [out]


def _chain_and_labels(args):
    chain = parse_chain(args.chain)
    return chain, read_catalog(args.catalog)


def cmd_streaks(args):
    chain, labels = _chain_and_labels(args)
    ks = range(args.k_min, args.k_max + 1)
    q = decentralize.StreakQuery(len(chain.blocks), args.k_min, args.m, args.kind, args.counting,
                                 frozenset(args.exclude))
    rep = decentralize.find_streaks(chain, labels, q, ks)
    out = _out(args.out)
    decentralize.write_streaks_csv(rep, out)
    outputs = [out]
    if args.ticks:
        ticks = decentralize.tick_marks(chain, labels, args.tick_len, args.exclude)
        decentralize.write_ticks_csv(ticks, _out(args.ticks))
        outputs.append(args.ticks)
    return [args.chain, args.catalog], outputs


def cmd_windows(args):
    chain, labels = _chain_and_labels(args)
    wins = decentralize.hashrate_windows(chain, labels, args.window)
    out = _out(args.out)
    decentralize.write_windows_csv(wins, out)
    outputs = [out]
    if args.ticks:
        decentralize.write_ticks_csv(decentralize.tick_marks(chain, labels, args.tick_len), _out(args.ticks))
        outputs.append(args.ticks)
    n_att = sum(w.attackable for w in wins)
    print(f"{len(wins)} windows, {n_att} with a majority agent")
    return [args.chain, args.catalog], outputs


def cmd_effective_pop(args):
    chain, labels = _chain_and_labels(args)
    fit = decentralize.fit_effective_population(chain, labels, args.kinds, range(args.k_min, args.k_max + 1),
                                                args.exclude, args.formula)
    out = _out(args.out)
    decentralize.write_fit_csv(fit, out)
    print(f"effective population {fit.mean:.4f} over {len(fit.per_k)} fits")
    return [args.chain, args.catalog], [out]


def cmd_pareto(args):
    chain, labels = _chain_and_labels(args)
    table = pareto.interval_incomes(chain, labels, args.intervals)
    fits = pareto.fit_intervals(table, min_tail=args.min_tail, suppress=tuple(args.suppress),
                                threads=args.threads)
    out = _out(args.out)
    pareto.write_fits_csv(fits, out)
    outputs = [out]
    if args.ccdf:
        pareto.write_ccdf_csv(table, _out(args.ccdf))
        outputs.append(args.ccdf)
    if args.concentration:
        rows = pareto.concentration_curve(table, tuple(args.targets))
        with open(_out(args.concentration), "w", encoding="utf-8") as fh:
            fh.write("interval," + ",".join(f"target_{t}" for t in args.targets) + "\n")
            for i, r in enumerate(rows):
                fh.write(f"{i}," + ",".join(str(r[t]) for t in args.targets) + "\n")
        outputs.append(args.concentration)
    for f in fits:
        if f is not None and f.warning:
            log.warning("interval %d: pareto exponent %.3f is below one", f.interval, f.pareto_exponent)
    return [args.chain, args.catalog], outputs


def cmd_distances(args):
    chain, labels = _chain_and_labels(args)
    catalog = catalog_from_labels(chain, labels)
    top_n = args.top_n or txgraph.agents_for_share(catalog, 0.5)
    labeled = txgraph.labeled_from_catalog(catalog, top_n)
    graph = txgraph.build_graph(chain)
    res = txgraph.distances_from(graph, labeled, args.direction)
    out = _out(args.out)
    txgraph.write_histogram_csv(res, out)
    outputs = [out]
    if args.path_from:
        path = txgraph.shortest_path(graph, args.path_from, labeled, args.direction, res)
        txgraph.write_path(path, _out(args.path_out or _sibling(out, ".path.txt")))
        outputs.append(args.path_out or _sibling(out, ".path.txt"))
    cum = res.cumulative()
    print(f"{top_n} labeled agents, {graph.n_nodes} addresses, {graph.n_edges} edges; "
          f"within 4 hops {cum.get(min(4, max(cum)), 0.0):.3f}")
    return [args.chain, args.catalog], outputs


def _game(args):
    return centipede.GameParams.preset(args.variant, n_rounds=args.n_rounds, d=args.d, b=args.b)


def cmd_centipede_sim(args):
    params = _game(args)
    if args.population:
        pop = [int(s) for s in args.population]
    else:
        pop = list(range(params.n_rounds + 1)) * 10
    seeds = np.random.SeedSequence(args.seed).spawn(args.repetitions)
    freqs = {f"repetition_{r + 1}": centipede.simulate_sessions(params, pop, args.games, seed=s)
             for r, s in enumerate(seeds)}
    out = _out(args.out)
    centipede.write_stop_histogram_csv(freqs, out)
    return [], [out]


def cmd_centipede_stats(args):
    rows = centipede.results_table()
    out = _out(args.out)
    centipede.write_results_csv(rows, out)
    for r in rows:
        print(f"{r['row']}: p={r['p_value']:.3g} CI=[{r['ci_low']:.3f}, {r['ci_high']:.3f}]")
    return [], [out]


def cmd_evo_heatmap(args):
    w = tuple(float(v) for v in np.logspace(np.log10(args.w_min), np.log10(args.w_max), args.w_points))
    d = tuple(float(v) for v in np.linspace(args.d_min, args.d_max, args.d_points + 1)[:-1])
    cells = evodyn.heatmap(args.b, args.M, tuple(args.N), w, d, args.exclude_self, args.threads)
    out = _out(args.out)
    evodyn.write_heatmap_csv(cells, out, args.b, args.M)
    return [], [out]


def cmd_render_map(args):
    chain, labels = _chain_and_labels(args)
    catalog = catalog_from_labels(chain, labels)
    layout, svg = mapviz.render_map(catalog, chain, args.order, args.palette_seed, args.size)
    out = _out(args.out)
    out.write_text(svg, encoding="utf-8")
    outputs = [out]
    if args.cells_csv:
        mapviz.write_cells_csv(layout, _out(args.cells_csv))
        outputs.append(args.cells_csv)
    return [args.chain, args.catalog], outputs


def cmd_replay(args):
    doc = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    if doc.get("tool") != "chainagents":
        raise ValueError(f"{args.manifest} is not a chainagents manifest")
    code = main(doc["argv"])
    if code:
        return code
    bad = [p for p, digest in doc["outputs"].items() if sha256_file(p) != digest]
    for p in bad:
        print(f"differs: {p}", file=sys.stderr)
    if bad:
        raise ValueError(f"{len(bad)} output(s) differ from the manifest")
    print(f"replayed {doc['subcommand']}: {len(doc['outputs'])} output(s) identical")
    return None


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; explicit flags take precedence")
    common.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="chainagents", description="Agent reconstruction and analysis for "
                                "early proof-of-work chains.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_)
        sp.set_defaults(func=func)
        return sp

    s = add("synth", cmd_synth, "Generate a synthetic chain with ground-truth ownership.")
    s.add_argument("--miners", help="INI file of [miner <id>] sections; default is a mixed population")
    s.add_argument("--population", type=int, default=40, help="miners in the mixed population (default 40)")
    s.add_argument("--blocks", type=int, default=50_000, help="chain length (default 50000)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--settle", action="store_true", help="spend all outstanding rewards in the last block")
    s.add_argument("--change-rate", type=float, default=0.0, help="rate of injected change payments")
    s.add_argument("--out", required=False, help="chain JSONL path")
    s.add_argument("--truth", help="ground-truth tags path (default <out>.truth.csv)")

    s = add("ingest-check", cmd_ingest_check, "Parse and validate a chain file.")
    s.add_argument("--chain")
    s.add_argument("--out", help="optional JSON summary path")

    s = add("link", cmd_link, "Cluster addresses into agents.")
    s.add_argument("--chain")
    s.add_argument("--out", help="catalog CSV (address,agent_id)")
    s.add_argument("--summary", help="agent summary CSV (default <out>.summary.csv)")
    s.add_argument("--pipeline", choices=("full", "same-input"), default="full")
    s.add_argument("--tolerance", type=float, default=8, help="extranonce tolerance (default 8)")
    s.add_argument("--overlap-tol", type=int, default=2,
                   help="shared heights tolerated between one agent's trajectories (default 2)")
    s.add_argument("--share-min", type=int, default=3, help="blocks per side on a shared trajectory (default 3)")
    s.add_argument("--round-counts", type=int, nargs="+", default=[20, 40],
                   help="block counts of round-batch consolidators (default 20 40)")
    s.add_argument("--use-change", action="store_true", help="also apply the change-output heuristic")
    s.add_argument("--multi-machine", action="store_true",
                   help="only same-slope trajectories count as overlapping")

    s = add("validate", cmd_validate, "Pairwise sensitivity and specificity against tags.")
    s.add_argument("--catalog")
    s.add_argument("--tags")
    s.add_argument("--out", help="report CSV")

    def chain_catalog(sp):
        sp.add_argument("--chain")
        sp.add_argument("--catalog", help="catalog CSV from link")

    s = add("streaks", cmd_streaks, "Observed and expected streak counts.")
    chain_catalog(s)
    s.add_argument("--kind", choices=decentralize.KINDS, default="unilateral")
    s.add_argument("--counting", choices=decentralize.COUNTINGS, default="window")
    s.add_argument("--k-min", type=int, default=3, help="shortest streak (default 3)")
    s.add_argument("--k-max", type=int, default=12, help="longest streak (default 12)")
    s.add_argument("--m", type=float, default=5.0, help="population for the expectations (default 5)")
    s.add_argument("--exclude", type=int, nargs="*", default=[], help="agent ids whose blocks are skipped")
    s.add_argument("--out", help="streaks CSV")
    s.add_argument("--ticks", help="optional majority-stretch CSV")
    s.add_argument("--tick-len", type=int, default=6, help="minimum majority stretch (default 6)")

    s = add("windows", cmd_windows, "Top-5 block shares in non-overlapping windows.")
    chain_catalog(s)
    s.add_argument("--window", type=int, default=432, help="window length in blocks (default 432, about 3 days)")
    s.add_argument("--out", help="windows CSV")
    s.add_argument("--ticks", help="optional majority-stretch CSV")
    s.add_argument("--tick-len", type=int, default=6, help="minimum majority stretch (default 6)")

    s = add("effective-pop", cmd_effective_pop, "Fit the effective population size to streak counts.")
    chain_catalog(s)
    s.add_argument("--kinds", choices=decentralize.KINDS, nargs="+", default=["bilateral"],
                   help="streak kinds to fit (default bilateral)")
    s.add_argument("--k-min", type=int, default=3, help="shortest streak (default 3)")
    s.add_argument("--k-max", type=int, default=12, help="longest streak (default 12)")
    s.add_argument("--formula", choices=decentralize.FORMULAS, default="paper",
                   help="'paper' uses the published closed forms, 'exact' the combinatorial ones")
    s.add_argument("--exclude", type=int, nargs="*", default=[], help="agent ids whose blocks are skipped")
    s.add_argument("--out", help="per-k fit CSV")

    s = add("pareto", cmd_pareto, "Per-interval power-law tail fits of mining income.")
    chain_catalog(s)
    s.add_argument("--intervals", type=int, default=6, help="equal-duration intervals (default 6)")
    s.add_argument("--min-tail", type=int, default=pareto.MIN_TAIL, help="refuse fits with fewer tail points")
    s.add_argument("--suppress", type=int, nargs="*", default=list(pareto.SUPPRESS_BLOCKS),
                   help="block counts excluded from the fits (default 2000 4000)")
    s.add_argument("--targets", type=float, nargs="+", default=[0.5, 0.7],
                   help="income shares for the concentration counts (default 0.5 0.7)")
    s.add_argument("--out", help="fits CSV")
    s.add_argument("--ccdf", help="optional CCDF point dump")
    s.add_argument("--concentration", help="optional concentration CSV")

    s = add("distances", cmd_distances, "Hop distances from the top agents' addresses.")
    chain_catalog(s)
    s.add_argument("--top-n", type=int, default=0,
                   help="labeled agents; 0 picks the fewest that mined over half the coin")
    s.add_argument("--direction", choices=txgraph.DIRECTIONS, default="undirected")
    s.add_argument("--out", help="histogram CSV")
    s.add_argument("--path-from", help="address whose path to the labeled set is dumped")
    s.add_argument("--path-out", help="path dump (default <out>.path.txt)")

    def game(sp):
        sp.add_argument("--n-rounds", type=int, default=8, help="players and rounds (default 8)")
        sp.add_argument("--d", type=float, default=2.0, help="appreciation per pass (default 2)")
        sp.add_argument("--b", type=float, default=4.0, help="defector multiplier (default 4)")
        sp.add_argument("--variant", choices=centipede.VARIANTS, default="standard")

    s = add("centipede-sim", cmd_centipede_sim, "Simulate randomly seated games.")
    game(s)
    s.add_argument("--population", type=int, nargs="*", help="strategies s of the population")
    s.add_argument("--games", type=int, default=10_000)
    s.add_argument("--repetitions", type=int, default=5, help="independent sessions (default 5)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="stop-round histogram CSV")

    s = add("centipede-stats", cmd_centipede_stats, "Proportion tests on the recorded session counts.")
    s.add_argument("--out", help="results CSV")

    s = add("evo-heatmap", cmd_evo_heatmap, "Most frequent strategy over a (w, d) grid.")
    s.add_argument("--b", type=float, default=4.0, help="defector multiplier (default 4)")
    s.add_argument("--M", type=int, default=25, help="population size (default 25)")
    s.add_argument("--N", type=int, nargs="+", default=[8], help="group sizes (default 8)")
    s.add_argument("--w-min", type=float, default=1e-3)
    s.add_argument("--w-max", type=float, default=1.0)
    s.add_argument("--w-points", type=int, default=40)
    s.add_argument("--d-min", type=float, default=1.1)
    s.add_argument("--d-max", type=float, default=4.0, help="excluded upper end of d (default 4)")
    s.add_argument("--d-points", type=int, default=40)
    s.add_argument("--exclude-self", action="store_true",
                   help="other seats drawn from the population without the focal")
    s.add_argument("--out", help="heatmap CSV")

    s = add("render-map", cmd_render_map, "Disc map of blocks by agent as SVG.")
    chain_catalog(s)
    s.add_argument("--order", type=int, help="curve order (default: smallest that fits)")
    s.add_argument("--palette-seed", type=int, default=0)
    s.add_argument("--size", type=int, default=800)
    s.add_argument("--out", help="SVG path")
    s.add_argument("--cells-csv", help="optional per-block polygon CSV")

    s = sub.add_parser("replay", help="Re-run a manifest and compare outputs.")
    s.add_argument("manifest")
    s.set_defaults(func=cmd_replay)
    return p


REQUIRED = {
    "synth": ("out",), "ingest-check": ("chain",), "link": ("chain", "out"),
    "validate": ("catalog", "tags", "out"), "streaks": ("chain", "catalog", "out"),
    "windows": ("chain", "catalog", "out"), "effective-pop": ("chain", "catalog", "out"),
    "pareto": ("chain", "catalog", "out"), "distances": ("chain", "catalog", "out"),
    "centipede-sim": ("out",), "centipede-stats": ("out",), "evo-heatmap": ("out",),
    "render-map": ("chain", "catalog", "out"),
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return 2
    level = logging.WARNING - 10 * max(args.verbose if hasattr(args, "verbose") else 0,
                                       int(os.environ.get("CHAINAGENTS_VERBOSE", "0") or 0))
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")

    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        if getattr(args, "config", None):
            _apply_config(sub, read_config(args.config))
            args = parser.parse_args(argv)
        missing = [k for k in REQUIRED.get(args.command, ()) if not getattr(args, k, None)]
        if missing:
            raise UsageError(f"{args.command}: missing " + ", ".join("--" + k.replace("_", "-") for k in missing))
    except UsageError as exc:
        print(f"chainagents: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    except OSError as exc:
        print(f"chainagents: error: {exc}", file=sys.stderr)
        return 2

    try:
        result = args.func(args)
    except DATA_ERRORS as exc:
        print(f"chainagents: error: {exc}", file=sys.stderr)
        return 1
    if isinstance(result, int):
        return result
    if result is not None:
        inputs, outputs = result
        write_manifest(args, argv, list(inputs) + [getattr(args, "config", None)], outputs)
    return 0


if __name__ == "__main__":
    sys.exit(main())

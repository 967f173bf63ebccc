"""Command line entry point: ``rgg build | run | quality | dump-layout``."""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time

import numpy as np

from . import bench
from .batch import serialize
from .persist import RoadmapFileError, load_roadmap, save_roadmap

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FAILURE = 3  # soundness or equivalence failure


def _scenario(args) -> bench.Scenario:
    s = bench.load_scenario(args.scenario)
    return bench.with_overrides(
        s,
        engine=getattr(args, "engine", None),
        mode=getattr(args, "mode", None),
        roadmap_seed=getattr(args, "seed", None),
        move_seed=getattr(args, "move_seed", None),
        iterations=getattr(args, "iterations", None),
        n_nodes=getattr(args, "nodes", None),
    )


def _prepared(s: bench.Scenario, roadmap_path) -> bench.Prepared:
    if roadmap_path is None:
        return bench.prepare(s)
    t0 = time.perf_counter()
    roadmap, geoms = load_roadmap(roadmap_path)
    p = bench.prepare(s, roadmap, geoms)
    p.preprocess_s = time.perf_counter() - t0
    return p


def cmd_build(args) -> int:
    s = _scenario(args)
    p = bench.prepare(s)
    layout = serialize(p.geoms, {}) if args.layout else None
    save_roadmap(p.roadmap, p.geoms, args.output, layout)
    print(f"{args.output}: {p.roadmap.n_nodes} nodes, {p.roadmap.n_edges} edges, "
          f"built in {p.preprocess_s:.2f} s")
    return EXIT_OK


def cmd_run(args) -> int:
    s = _scenario(args)
    p = _prepared(s, args.roadmap)
    try:
        report = bench.run_scenario(s, p, verify=args.verify)
    except bench.EquivalenceError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAILURE
    bench.emit_report(report, args.format, args.output)
    if report.violations:
        print(f"soundness violations: {report.violations}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_quality(args) -> int:
    s = _scenario(args)
    p = _prepared(s, args.roadmap)
    q = bench.classification_quality(s, args.sample, p)
    out = json.dumps(q.as_dict(), indent=2)
    if args.output in (None, "-"):
        print(out)
    else:
        with open(args.output, "w") as fh:
            fh.write(out + "\n")
    if not q.sound:
        print(f"unsound labels: green rate {q.green_rate}, red rate {q.red_rate}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _digest(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()[:16]


def cmd_dump_layout(args) -> int:
    roadmap, geoms, stored = load_roadmap(args.roadmap, with_layout=True)
    if stored is None:
        arrays = serialize(geoms, {}).robot_arrays()
        source = "rebuilt"
    else:
        arrays = stored
        source = "stored"
    info = {
        "nodes": roadmap.n_nodes,
        "edges": roadmap.n_edges,
        "layout": source,
        "arrays": {k: {"dtype": str(v.dtype), "shape": list(v.shape), "sha256": _digest(v)}
                   for k, v in arrays.items()},
    }
    if args.json:
        print(json.dumps(info, indent=2))
        return EXIT_OK
    print(f"{args.roadmap}: {info['nodes']} nodes, {info['edges']} edges, layout {source}")
    for k, v in info["arrays"].items():
        print(f"  {k:14s} {v['dtype']:6s} {str(tuple(v['shape'])):28s} {v['sha256']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rgg", description="Roadmap relabeling under moving obstacles.")
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario_args(p, engine=True):
        p.add_argument("scenario", help="scenario INI file")
        p.add_argument("--seed", type=int, help="override the roadmap seed")
        p.add_argument("--nodes", type=int, help="override the roadmap size")
        if engine:
            p.add_argument("--move-seed", type=int, help="override the move seed")
            p.add_argument("--iterations", type=int, help="override the number of moves")
            p.add_argument("--engine", choices=bench.ENGINES)
            p.add_argument("--mode", choices=bench.MODES)
            p.add_argument("--roadmap", help="use a roadmap file written by `rgg build`")

    p = sub.add_parser("build", help="build a roadmap and its approximations and save them")
    scenario_args(p, engine=False)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--layout", action="store_true", help="embed the batch layout arrays")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("run", help="replay a scenario and write a report")
    scenario_args(p)
    p.add_argument("--format", choices=("csv", "pretty"), default="csv")
    p.add_argument("-o", "--output", help="report path (default stdout)")
    p.add_argument("--verify", action="store_true", help="check every label against the exact oracle")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("quality", help="score sampled labels against the exact oracle")
    scenario_args(p)
    p.add_argument("--sample", type=int, help="components sampled per move")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_quality)

    p = sub.add_parser("dump-layout", help="print batch layout shapes and checksums")
    p.add_argument("roadmap")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_dump_layout)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (bench.ScenarioError, RoadmapFileError, OSError) as exc:
        print(f"rgg: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

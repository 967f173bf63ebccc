"""Run one scenario at several roadmap sizes and print per-engine means as CSV.

    python3 scripts/sweep.py scenarios/density_beam.ini --nodes 100 1000 10000
"""
import argparse
import csv
import sys

from rgg.bench import load_scenario, prepare, run_scenario, with_overrides

FIELDS = ("nodes", "edges", "engine", "preprocess_s", "heuristic_us", "over_us", "under_us",
          "pending_unknown_edges", "resolve_us")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario")
    ap.add_argument("--nodes", type=int, nargs="+", required=True)
    ap.add_argument("--iterations", type=int)
    ap.add_argument("--engine", choices=("sequential", "batch", "both"))
    args = ap.parse_args(argv)

    base = with_overrides(load_scenario(args.scenario), iterations=args.iterations, engine=args.engine)
    w = csv.DictWriter(sys.stdout, fieldnames=FIELDS, lineterminator="\n")
    w.writeheader()
    for n in args.nodes:
        s = with_overrides(base, n_nodes=n)
        p = prepare(s)
        rep = run_scenario(s, p)
        for eng in s.engines():
            m = rep.means(eng)
            w.writerow({"nodes": n, "edges": rep.edges, "engine": eng, "preprocess_s": f"{rep.preprocess_s:.2f}",
                        **{k: f"{m.get(k, 0.0):.2f}" for k in FIELDS[4:]}})
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``hybrid-servo {run,sweep,plot,selftest}``."""

import argparse
import sys

from .commands import EXIT_ERROR, cmd_plot, cmd_run, cmd_sweep
from .selftest import selftest


def build_parser():
    p = argparse.ArgumentParser(prog="hybrid-servo", description="Adaptive hybrid visual-servoing simulator.")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, metavar="PATH", help="configuration file")
        sp.add_argument("--seed", type=int, help="master seed (overrides sim.seed)")
        sp.add_argument("--scenario", choices=("circle", "rectangle", "static"), help="target motion")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="sets",
                        help="override a configuration key (repeatable)")

    common(sub.add_parser("run", help="run one closed-loop simulation"))
    sw = sub.add_parser("sweep", help="run several seeds and aggregate")
    common(sw)
    sw.add_argument("--seeds", type=int, default=10, metavar="N", help="number of runs")
    sw.add_argument("--workers", type=int, metavar="N", help="parallel processes (overrides sim.workers)")
    pl = sub.add_parser("plot", help="render SVG plots of a trace")
    pl.add_argument("trace", metavar="TRACE", help="trace CSV written by run")
    pl.add_argument("--out", metavar="DIR", help="output directory (default: next to the trace)")
    st = sub.add_parser("selftest", help="run the bundled property checks")
    st.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.verb == "run":
        return cmd_run(args.config, args.out, args.seed, args.scenario, args.sets)
    if args.verb == "sweep":
        return cmd_sweep(args.config, args.seeds, args.out, args.seed, args.scenario, args.sets, args.workers)
    if args.verb == "plot":
        return cmd_plot(args.trace, args.out)
    if args.verb == "selftest":
        return 1 if selftest(args.seed) else 0
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

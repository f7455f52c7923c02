"""Command-line interface.

Subcommands: identities, inequality2d, inequality-heis, robin, replay,
fiber-check.  Each takes --config <path> (JSON matching ExperimentConfig
fields) plus overrides; exit code 0 iff every check in the produced report
passed.  HEISENGAP_THREADS caps the parallel job pool.
"""

import argparse
import sys

from .harness import (ExperimentConfig, emit_report, replay_proof,
                      run_fiber_check, run_identity_suite, run_inequality_2d,
                      run_inequality_heisenberg, run_robin)

_DEFAULTS = {
    "identities": dict(kind="identities", h_ladder=(0.1,), j_max=1, m=4),
    "inequality2d": dict(kind="landau2d", shape="disk",
                         h_ladder=(0.16, 0.08, 0.04), j_max=8),
    "inequality-heis": dict(kind="heisenberg", shape="square", T=1.0,
                            h_ladder=(1.0 / 6, 1.0 / 12, 1.0 / 24), j_max=5),
    "robin": dict(kind="landau2d-robin", shape="square", sigma=-1.0,
                  h_ladder=(0.125, 0.0625, 0.03125), j_max=8),
    "replay": dict(kind="replay", shape="square", T=1.0,
                   h_ladder=(1.0 / 6, 1.0 / 12, 1.0 / 24), j_max=3, j_target=1),
    "fiber-check": dict(kind="fiber-check", shape="square", T=1.0,
                        h_ladder=(0.125,), nt=8, j_max=1, m=4),
}

_RUNNERS = {
    "identities": run_identity_suite,
    "inequality2d": run_inequality_2d,
    "inequality-heis": run_inequality_heisenberg,
    "robin": run_robin,
    "replay": replay_proof,
    "fiber-check": run_fiber_check,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="heisengap",
        description="Eigenvalue inequality verification suite for the "
                    "Heisenberg sub-Laplacian and planar Landau operators")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--B", type=float, help="field strength override")
        p.add_argument("--k", type=int, help="Landau index override")
        p.add_argument("--shape", help="shape override")
        p.add_argument("--h", type=float,
                       help="coarsest ladder spacing; ladder depth is kept")
        p.add_argument("--jmax", type=int, help="largest index checked")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="solver seed override")
        p.add_argument("--emit", help="comma-separated formats: json,csv,svg")
    return parser


def config_from_args(args):
    base = dict(_DEFAULTS[args.command])
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
        for key, val in base.items():
            # config file wins over subcommand defaults only where it differs
            # from the dataclass default
            if getattr(cfg, key) == getattr(ExperimentConfig(), key):
                setattr(cfg, key, val)
    else:
        cfg = ExperimentConfig.from_dict(base)
    if args.B is not None:
        cfg.B = args.B
        cfg.B_sweep = (args.B,)
    if args.k is not None:
        cfg.k = args.k
        cfg.k_values = (args.k,)
        cfg.k_sweep = (args.k,)
    if args.shape:
        cfg.shape = args.shape
    if args.h is not None:
        depth = len(cfg.h_ladder)
        cfg.h_ladder = tuple(args.h / 2 ** i for i in range(depth))
    if args.jmax is not None:
        cfg.j_max = args.jmax
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.emit:
        cfg.emit = tuple(s.strip() for s in args.emit.split(",") if s.strip())
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    cfg = config_from_args(args)
    report = _RUNNERS[args.command](cfg)
    paths = emit_report(report)
    for c in report.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}: {c['name']}")
    print(f"report: {'ok' if report.ok else 'FAILED'}; wrote {', '.join(paths)}")
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())

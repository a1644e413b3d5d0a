# coding=utf-8
""" Command-line driver: unadjusted HMC chains, particlewise couplings, contraction constants and the studies.

    python run_hmc.py <command> --config <file.cfg> [--seed 42] [--out output] [--threads 1] [--quiet]

Exit codes: 0 success, 1 internal error, 2 configuration error, 3 failed or
refused verdict (or failing parameter conditions for ``check``).
"""

import argparse
import logging
import os
import sys

from src.config import (ConfigurationError, build_experiment, build_integrator, build_model, build_regularity,
                        load_config, theory_h1)
from src.experiments import STUDIES
from src.outputs import output_header, write_report
from src.theory import check_conditions, derive_constants, exact_hmc_reference_rate, step_bound

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_VERDICT = 3

COMMANDS = ("sample", "couple", "constants", "check", "order-study", "bias-study", "contraction-check",
            "marginal-check", "contraction", "dimension-sweep", "interaction-sweep")


def u64(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer, got %s" % text)
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        default=None,
        type=str,
        required=True,
        help="Path to the run configuration (INI file with [model], [integrator], ... sections).",
    )
    common.add_argument("--seed", default=42, type=u64, help="Master seed of every noise stream.")
    common.add_argument("--out", default="output", type=str, help="Directory receiving the CSV series and summary.")
    common.add_argument("--threads", default=1, type=int, help="Replica parallelism; 1 is the reproducibility mode.")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and hide progress bars.")

    parser = argparse.ArgumentParser(description="Unadjusted HMC for mean-field particle systems")
    sub = parser.add_subparsers(dest="command")
    sub.required = True
    for command in COMMANDS:
        sub.add_parser(command, parents=[common])
    return parser


def _print_lines(lines):
    for line in lines:
        print(line)


def cmd_constants(rc, args):
    params = build_regularity(rc)
    if params is None:
        raise ConfigurationError("constants need regularity parameters", key="theory.K")
    T = rc["integrator.duration"]
    consts = derive_constants(params, T)
    values = consts.to_dict()
    kappa_positive = values.pop("kappa_positive")
    rate, exact_cond = exact_hmc_reference_rate(params, T, rc["model.n"])
    values["exact_hmc_rate_n"] = rate
    if rc.has("theory.delta0") and rc.has("theory.eps_tilde"):
        values["step_bound"] = step_bound(consts.c, consts.R_tilde, T, rc["theory.delta0"], rc["theory.eps_tilde"])
    width = max(len(k) for k in values)
    lines = ["***** derived constants (T = %g) *****" % T]
    lines += ["  %s = %.6g" % (k.ljust(width), v) for k, v in values.items()]
    if not kappa_positive:
        lines.append("  warning: kappa <= 0, contraction theory does not apply")
    lines += ["%s=%.6g" % (k, v) for k, v in values.items()]
    _print_lines(lines)
    return EXIT_OK


def cmd_check(rc, args):
    params = build_regularity(rc)
    if params is None:
        raise ConfigurationError("check needs regularity parameters", key="theory.K")
    T, h1 = rc["integrator.duration"], theory_h1(rc)
    report = check_conditions(params, T, h1)
    lines = ["***** parameter conditions (T = %g, h1 = %g) *****" % (T, h1)]
    lines += [entry.describe() for entry in report.entries]
    lines.append("overall: %s" % ("pass" if report.passed else "FAIL"))
    _print_lines(lines)
    return EXIT_OK if report.passed else EXIT_VERDICT


def cmd_study(rc, args):
    cfg = build_experiment(rc, args.seed, threads=args.threads, progress=not args.quiet)
    logger.info("  model = %s", cfg.model.to_json_string().strip().replace("\n", " "))
    report = STUDIES[args.command](cfg)
    header = output_header(rc.digest(), args.seed, args.command)
    paths = write_report(report, args.out, header)
    logger.info("  Num files written = %d", len(paths))
    _print_lines(report.summary_lines())
    if report.refused or not report.passed:
        return EXIT_VERDICT
    return EXIT_OK


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        format="%(asctime)s - %(levelname)s - %(name)s -   %(message)s",
        datefmt="%m/%d/%Y %H:%M:%S",
        level=logging.WARN if args.quiet else logging.INFO,
    )
    logger.info("Command %s with parameters %s", args.command, vars(args))

    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1, got %d" % args.threads)
        rc = load_config(args.config)
        # model construction errors surface before any study work
        build_model(rc, args.seed)
        build_integrator(rc)
        if args.command == "constants":
            return cmd_constants(rc, args)
        if args.command == "check":
            return cmd_check(rc, args)
        os.makedirs(args.out, exist_ok=True)
        return cmd_study(rc, args)
    except ConfigurationError as e:
        logger.error("configuration error: %s", e)
        print("configuration error: %s" % e, file=sys.stderr)
        return EXIT_CONFIG
    except Exception:
        logger.exception("internal error while running %s", args.command)
        return EXIT_INTERNAL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

""" CSV and summary emission. Every file starts with a comment header carrying the config digest and seed. """

import logging
import os

import pandas as pd

from src.py_utils import ensure_dir_exists

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

SCHEMAS = {
    "coupling_trace": ["step", "mean_distance", "ell1", "rho", "n_sync", "n_shift", "n_reflect"],
    "chain_trace": ["step", "particle", "coord", "value"],
    "order_study": ["h", "mean_error", "stderr"],
    "bias_study": ["h", "abs_bias", "stderr", "n"],
    "bias_intensive": ["h", "abs_bias", "stderr", "n"],
    "contraction": ["step", "mean_distance", "stderr", "n_active"],
    "interaction_sweep": ["epsilon", "sign", "converged_fraction", "final_mean_distance"],
    "dimension_sweep": ["n", "rate", "rate_stderr", "replicas"],
    "marginal_check": ["coord", "mean", "var", "skew", "mean_z", "var_z", "skew_z"],
    "positions": ["step", "particle", "coord", "x", "y"],
}


def output_header(digest, seed, command):
    return "# config_sha256=%s seed=%d command=%s\n" % (digest, seed, command)


def write_series(path, frame, header):
    """Write one series as CSV, columns in their published order, floats with 17 significant digits."""
    name = os.path.splitext(os.path.basename(path))[0]
    if name in SCHEMAS:
        missing = [c for c in SCHEMAS[name] if c not in frame.columns]
        if missing:
            raise ValueError("series %s lacks columns %s" % (name, missing))
        frame = frame[SCHEMAS[name]]
    ensure_dir_exists(path)
    with open(path, "w", newline="") as f:
        f.write(header)
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT)
    logger.info("  wrote %s (%d rows)", path, len(frame))
    return path


def write_report(report, out_dir, header):
    """All series of a report as <name>.csv plus summary.txt; returns the written paths."""
    paths = []
    for name in sorted(report.series):
        paths.append(write_series(os.path.join(out_dir, name + ".csv"), report.series[name], header))
    summary = os.path.join(out_dir, "summary.txt")
    ensure_dir_exists(summary)
    with open(summary, "w") as f:
        f.write(header)
        f.write("\n".join(report.summary_lines()) + "\n")
    paths.append(summary)
    return paths


def read_series(path):
    """Read a series written by write_series (header comment skipped)."""
    return pd.read_csv(path, comment="#")

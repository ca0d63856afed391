"""Command line interface.

Exit codes: 0 success, 1 failed validation, 2 configuration or input
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .elliptical import read_data_csv
from .errors import (
    ConditioningError,
    ConfigError,
    DivergenceError,
    EigshrinkError,
    RootBracketError,
)
from .harness.config import load_config
from .harness.experiments import check_rows, run_experiment, validation_suite
from .shrinkage import estimate

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

# suite name -> (checks, forced field)
SUITES = {
    "lemma1": (("lemma",), "real"),
    "lemma2": (("lemma",), "complex"),
    "theta": (("theta",), None),
    "beta_oracle": (("beta_oracle",), None),
    "all": (("lemma", "theta", "beta_oracle"), None),
}
VALIDATE_Z_MAX = 4.0


def _matrix_json(M: np.ndarray):
    if np.iscomplexobj(M):
        return {"re": M.real.tolist(), "im": M.imag.tolist()}
    return M.tolist()


def _cmd_estimate(args) -> int:
    data = read_data_csv(args.input)
    est, rep = estimate(data, args.method, sphericity_method=args.sphericity, q=args.q)
    out = {
        "method": rep.method,
        "field": data.field,
        "n": data.n,
        "p": data.p,
        "beta": rep.beta,
        "gamma_hat": rep.gamma.gamma_hat,
        "gamma_raw": rep.gamma.raw,
        "kappa_hat": rep.kappa_hat,
        "psi1": rep.psi1.psi1_hat,
        "psi1_source": rep.psi1.source,
        "eta_o_hat": rep.eta_o_hat,
        "nu_hat": rep.nu.nu_hat if rep.nu is not None else None,
        "iterations": est.iterations,
        "converged": est.converged,
        "notes": list(rep.notes),
        "matrix": _matrix_json(est.matrix),
    }
    # repr() of a float round-trips exactly (17 significant digits at most)
    text = json.dumps(out, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config).with_overrides(seed=args.seed, threads=args.threads)
    result = run_experiment(cfg)
    result.to_csv(args.out)
    print(f"wrote {len(result.rows)} rows to {args.out} in {result.metadata['wall_time_s']:.1f} s")
    return EXIT_OK


def _cmd_validate(args) -> int:
    checks, field = SUITES[args.suite]
    cfg = load_config(args.config)
    if field is not None and cfg.field != field:
        cfg = cfg.with_overrides(field=field)
    cfg = cfg.with_overrides(seed=args.seed, threads=args.threads)
    result = validation_suite(cfg, checks)
    failed = 0
    for row, ok in check_rows(result, z_max=VALIDATE_Z_MAX):
        failed += not ok
        print(
            f"{'PASS' if ok else 'FAIL'} {row.method:>8} n={row.n:<5} rho={row.rho:<5g} "
            f"{row.statistic:<15} mc={row.mean:.6g} se={row.se:.3g} expected={row.expected:.6g} z={row.z:+.2f}"
        )
    if args.out:
        result.to_csv(args.out)
    return EXIT_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eigshrink", description="Robust shrinkage estimation of scatter matrices.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="fit a shrinkage estimator to a data CSV")
    p_est.add_argument("--input", required=True, help="n x p data CSV (one observation per line)")
    p_est.add_argument("--method", default="rscm", help="rscm, rhub, rtyl or rmvt, optionally with -ell1/-ell2")
    p_est.add_argument("--q", type=float, default=0.7, help="Huber quantile level (default 0.7)")
    p_est.add_argument("--sphericity", choices=("ell1", "ell2"), default=None)
    p_est.add_argument("--output", help="JSON output path (default: stdout)")
    p_est.set_defaults(func=_cmd_estimate)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo study from a JSON config")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True, help="output CSV")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--threads", type=int, default=None)
    p_sim.set_defaults(func=_cmd_simulate)

    p_val = sub.add_parser("validate", help="check closed-form moments against Monte Carlo")
    p_val.add_argument("--suite", required=True, choices=sorted(SUITES))
    p_val.add_argument("--config", required=True)
    p_val.add_argument("--out", help="optional CSV of the validation rows")
    p_val.add_argument("--seed", type=int, default=None)
    p_val.add_argument("--threads", type=int, default=None)
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConditioningError, DivergenceError, RootBracketError, ArithmeticError) as exc:
        print(f"eigshrink: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, EigshrinkError, ValueError, OSError) as exc:
        print(f"eigshrink: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

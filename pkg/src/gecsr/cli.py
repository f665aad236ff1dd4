"""Command-line entry point: ``gecsr {matrix,recover,se,experiment}``.

Exit codes: 0 success, 2 invalid configuration, 3 divergence (more than 10% of
trials, or the state evolution broke down).
"""
import argparse
import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiment as ex
from .model import load_matrix, save_matrix
from .se import SeDivergedError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

log = logging.getLogger("gecsr")


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _groups(text):
    """'1.0x1250,3.0x184' -> [[1.0, 1250], [3.0, 184]]"""
    out = []
    try:
        for part in text.split(","):
            value, count = part.lower().split("x")
            out.append([float(value), int(count)])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected groups like 1.0x1250,3.0x184, got {text!r}") from None
    return out


def _add_matrix_flags(p):
    p.add_argument("--kind", choices=["partial-dft", "svd-spectrum"])
    p.add_argument("--n", type=int, help="signal length N")
    p.add_argument("--m", type=int, help="number of measurements M")
    p.add_argument("--groups", type=_groups, help="singular-value groups, e.g. 1.0x1250,3.0x184")


def _add_run_flags(p):
    p.add_argument("--config", type=Path, help="JSON config file; flags override its values")
    p.add_argument("--preset", choices=sorted(ex.PRESETS), help="desk-scale setups: fig2 (SVD spectrum, B=1,2,3) or fig3 (partial DFT, B=3)")
    _add_matrix_flags(p)
    p.add_argument("--bits", type=_int_list, help="quantizer resolutions, e.g. 1,2,3")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--tmax", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--step", type=float, help="quantizer step (default 2^(1-B))")
    p.add_argument("--damping", type=float)
    p.add_argument("--tol", type=float, help="relative x-change stopping tolerance")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", type=Path, help="CSV output path (stdout if omitted)")
    p.add_argument("--full-scale", action="store_true", help="N=8192, M=5734 and 2000 trials")
    p.add_argument("--fixed-matrix", action="store_true", help="one sensing matrix shared by all trials")
    p.add_argument("--dump-trials", action="store_true", help="also write per-trial MSE to <out>.trials.csv")


def build_parser():
    parser = argparse.ArgumentParser(prog="gecsr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("matrix", help="generate and save a sensing matrix")
    p.add_argument("--config", type=Path)
    _add_matrix_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True)

    for name, text in (("recover", "Monte-Carlo GEC-SR recovery trials"),
                       ("se", "state-evolution prediction"),
                       ("experiment", "recovery and state evolution side by side")):
        _add_run_flags(sub.add_parser(name, help=text))
    return parser


def load_config(args):
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ex.ConfigError(f"cannot read config {args.config}: {exc}") from None
    cfg = ex.ExperimentConfig.from_dict(data)
    if getattr(args, "preset", None):
        cfg = ex.apply_preset(cfg, args.preset)

    matrix = dict(cfg.matrix)
    for key in ("kind", "n", "m", "groups"):
        value = getattr(args, key, None)
        if value is not None:
            matrix[key] = value
    if matrix.get("kind") == "partial-dft":
        matrix.pop("groups", None)
    cfg = replace(cfg, matrix=matrix)

    for key in ("bits", "trials", "seed", "tmax", "rho", "sigma2", "step", "damping", "tol", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "out", None) is not None:
        cfg.out = str(args.out)
    if getattr(args, "fixed_matrix", False):
        cfg.fixed_matrix = True
    if getattr(args, "dump_trials", False):
        cfg.dump_trials = True
    if getattr(args, "full_scale", False):
        cfg = ex.to_full_scale(cfg)
    return cfg.validate()


@contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _write(cfg, rows, columns):
    with _output(cfg.out) as fh:
        ex.write_csv(rows, columns, fh)
    if cfg.out is not None:
        Path(str(cfg.out) + ".meta.json").write_text(ex.config_json(cfg) + "\n")


def cmd_matrix(args):
    cfg = load_config(args)
    rng = np.random.default_rng((cfg.seed, ex.MATRIX_STREAM))
    matrix = ex.build_matrix(cfg.matrix, rng)
    save_matrix(matrix, args.out)
    lam = load_matrix(args.out).spectrum
    vals, counts = np.unique(np.round(lam, 8), return_counts=True)
    summary = ", ".join(f"{v:g} x{c}" for v, c in zip(vals, counts))
    print(f"wrote {matrix.m}x{matrix.n} {cfg.matrix['kind']} matrix to {args.out}")
    print(f"spectrum of A A^H: {summary}; P_z/P_x = {lam.mean():.6g}")
    return EXIT_OK


def _simulate(cfg):
    if cfg.damping > 0:
        log.warning("damping %.3g is enabled; results are not the undamped algorithm", cfg.damping)
    trials = ex.run_trials(cfg)
    if cfg.dump_trials and cfg.out is not None:
        with open(str(cfg.out) + ".trials.csv", "w", newline="") as fh:
            ex.write_csv(ex.trial_rows(cfg, trials), ["bits", "trial", "seed", "iter", "mse_db", "diverged"], fh)
    frac = ex.divergence_fraction(cfg, trials)
    if frac > 0:
        log.warning("%.1f%% of trials diverged", 100 * frac)
    return ex.aggregate(cfg, trials), frac


def cmd_recover(args):
    cfg = load_config(args)
    rows, frac = _simulate(cfg)
    _write(cfg, rows, ex.RECOVER_COLUMNS)
    return EXIT_DIVERGED if frac > ex.DIVERGENCE_LIMIT else EXIT_OK


def cmd_se(args):
    cfg = load_config(args)
    try:
        rows = ex.se_rows(cfg)
    except SeDivergedError as exc:
        log.error("state evolution diverged: %s", exc)
        _write(cfg, exc.rows, ex.SE_COLUMNS)
        return EXIT_DIVERGED
    _write(cfg, rows, ex.SE_COLUMNS)
    return EXIT_OK


def cmd_experiment(args):
    cfg = load_config(args)
    code = EXIT_OK
    try:
        se = ex.se_rows(cfg)
    except SeDivergedError as exc:
        log.error("state evolution diverged: %s", exc)
        se, code = exc.rows, EXIT_DIVERGED
    sim, frac = _simulate(cfg)
    _write(cfg, ex.merge_rows(sim, se), ex.EXPERIMENT_COLUMNS)
    if frac > ex.DIVERGENCE_LIMIT:
        code = EXIT_DIVERGED
    return code


COMMANDS = {"matrix": cmd_matrix, "recover": cmd_recover, "se": cmd_se, "experiment": cmd_experiment}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ex.ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

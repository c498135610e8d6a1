"""Command-line interface: ``sparcrd {theory,encode,decode,census,experiment,curves}``.

Exit status is 0 on success, 2 on domain or configuration errors and 3
when a codebook exceeds the search budget. The resolved configuration
and seed are printed to stderr before any computation.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, theory
from ._search import sqnorm
from ._validation import DEFAULT_BUDGET, BudgetError, DomainError
from .codebook import BetaIndex, SparcParams, derive_dimensions, sample_design_matrix
from .counting import expected_solutions_bounds, is_eps_good, solution_census
from .encoder import EncodeOutcome, _encode, decode, min_distance_search, payload_bits
from .experiments import ConfigError, emit_rate_curves, load_config, rows_to_csv, run_experiment, write_outputs
from .io import gaussian_source, read_json, read_source, write_json, write_source

HELP_WIDTH = 88
LOG2 = math.log(2.0)

# theory ops whose value is a rate or exponent in nats
_RATE_OPS = {"f", "f_oracle", "rstar", "r0", "h_alpha", "delta_alpha", "error_exponent", "ld_rate"}


_OPERANDS = {
    "x": "source power (rate function), or rho2/D (b_min, eta_xi)",
    "y": "codeword variance",
    "z": "distortion level",
    "alpha": "overlap fraction",
    "kappa": "free constant of the overlap bound (default 1)",
    "t": "power level of the large-deviation event",
    "lam": "Suen lambda",
    "delta": "Suen delta",
    "Delta": "Suen Delta",
    "xi": "failure fraction in [0, 1)",
    "n": "size of the stylized structure",
    "p": "type-2 exponent of the stylized structure",
}


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=HELP_WIDTH, max_help_position=32)


def _common_parser():
    p = argparse.ArgumentParser(add_help=False, formatter_class=_formatter)
    g = p.add_argument_group("common flags")
    g.add_argument("--seed", type=int, default=0, help="64-bit seed (default 0)")
    g.add_argument("--config", type=Path, help="JSON or TOML configuration file")
    g.add_argument("--out", type=Path, help="output path")
    g.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                   help=f"largest codebook the exhaustive search may scan (default {DEFAULT_BUDGET})")
    g.add_argument("--bits", action="store_true", help="report rates in bits instead of nats")
    return p


def _add_point_flags(p):
    g = p.add_argument_group("problem point")
    g.add_argument("--sigma2", type=float, help="source variance")
    g.add_argument("--D", type=float, help="target distortion")
    g.add_argument("--R", type=float, help="rate in nats")
    g.add_argument("--rho2", type=float, help="squared norm of the quantized source")
    g.add_argument("--gamma2", type=float, help="norm overflow threshold")


def _add_geometry_flags(p):
    g = p.add_argument_group("code geometry")
    g.add_argument("--L", type=int, help="number of sections")
    g.add_argument("--M", type=int, help="columns per section")
    g.add_argument("--rate", type=float, help="nominal rate in nats (with --b, instead of --L/--M)")
    g.add_argument("--b", type=float, default=2.0, help="exponent in M = L^b (default 2)")


def _add_source_flags(p):
    g = p.add_argument_group("source block")
    g.add_argument("--source", type=Path, help="source file (.csv one sample per line, else float64 LE)")
    g.add_argument("--generate", nargs=3, metavar=("N", "SIGMA2", "SEED"),
                   help="draw N i.i.d. N(0, SIGMA2) samples from SEED")


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="sparcrd",
        description="Sparse superposition codes for Gaussian lossy compression.",
        formatter_class=_formatter,
    )
    parser.add_argument("--version", action="version", version=f"sparcrd {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("theory", parents=[common], formatter_class=_formatter,
                       help="evaluate closed-form quantities")
    p.add_argument("--op", choices=sorted(THEORY_OPS), metavar="OP",
                   help="quantity to evaluate: " + ", ".join(sorted(THEORY_OPS)))
    p.add_argument("--all", action="store_true", help="emit the full panel for a problem point")
    g = p.add_argument_group("operands")
    for name, text in _OPERANDS.items():
        g.add_argument(f"--{name}", type=float, help=text)
    g.add_argument("--mode", choices=("eta", "xi"), default="eta", help="for --op eta_xi")
    _add_point_flags(p)
    _add_geometry_flags(p)

    p = sub.add_parser("encode", parents=[common], formatter_class=_formatter,
                       help="encode one source block")
    _add_source_flags(p)
    _add_point_flags(p)
    _add_geometry_flags(p)

    p = sub.add_parser("decode", parents=[common], formatter_class=_formatter,
                       help="reconstruct a block from an encoding")
    p.add_argument("encoding", type=Path, help="JSON written by the encode command")
    p.add_argument("--source", type=Path, help="original block, to report the distortion")

    p = sub.add_parser("census", parents=[common], formatter_class=_formatter,
                       help="count solutions by overlap with a reference codeword")
    _add_source_flags(p)
    _add_point_flags(p)
    _add_geometry_flags(p)
    p.add_argument("--ref", help="reference codeword as comma-separated section indices "
                                 "(default: the nearest codeword)")
    p.add_argument("--ex-ref", type=float, help="reference value of E X (default: upper bound)")
    p.add_argument("--eps", type=float, help="also report eps-goodness of the reference")

    p = sub.add_parser("experiment", parents=[common], formatter_class=_formatter,
                       help="run a Monte Carlo campaign from --config")

    p = sub.add_parser("curves", parents=[common], formatter_class=_formatter,
                       help="tabulate the two achievable-rate curves")
    p.add_argument("--sigma2", type=float, default=1.0, help="source variance (default 1)")
    p.add_argument("--points", type=int, default=99,
                   help="grid size for D/sigma2 in (0, 1) (default 99)")
    return parser


# ---------------------------------------------------------------------------
# theory
# ---------------------------------------------------------------------------


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise DomainError("missing operand(s): " + ", ".join("--" + n for n in missing))
    return [getattr(args, n) for n in names]


def _point(args, config=None):
    d = dict(config or {})
    for k in ("sigma2", "D", "R", "rho2", "gamma2"):
        if getattr(args, k, None) is not None:
            d[k] = getattr(args, k)
    missing = [k for k in ("sigma2", "D", "R", "rho2", "gamma2") if k not in d]
    if missing:
        raise DomainError("missing problem point field(s): " + ", ".join(missing))
    return theory.TheoryPoint(**{k: float(d[k]) for k in ("sigma2", "D", "R", "rho2", "gamma2")})


def _stylized(a):
    return theory.StylizedParams(*_need(a, "n", "p"))


THEORY_OPS = {
    "f": lambda a, c: theory.rate_fn_f(*_need(a, "x", "y", "z")),
    "f_oracle": lambda a, c: theory.rate_fn_f_oracle(*_need(a, "x", "y", "z")),
    "rstar": lambda a, c: theory.shannon_rates(*_need(a, "sigma2", "D"))[0],
    "r0": lambda a, c: theory.shannon_rates(*_need(a, "sigma2", "D"))[1],
    "xstar": lambda a, c: theory.critical_ratio(),
    "h_alpha": lambda a, c: theory.h_alpha(_need(a, "alpha")[0], _point(a, c)),
    "delta_alpha": lambda a, c: theory.delta_alpha_bound(
        _need(a, "alpha")[0], _point(a, c), int(_need(a, "L")[0]), a.b,
        a.kappa if a.kappa is not None else 1.0),
    "d_alpha": lambda a, c: theory.solve_D_alpha(_need(a, "alpha")[0], _point(a, c)),
    "lambda": lambda a, c: theory.lambda_alpha(_need(a, "alpha")[0], _point(a, c)),
    "b_min": lambda a, c: theory.b_min(*_need(a, "x", "R")),
    "c1": lambda a, c: theory.c1_const(_point(a, c)),
    "eta_xi": lambda a, c: theory.eta_xi(*_need(a, "L", "b", "x", "R"), mode=a.mode),
    "error_exponent": lambda a, c: theory.opt_error_exponent(*_need(a, "sigma2", "D", "R")),
    "ld_rate": lambda a, c: theory.gaussian_ld_rate(*_need(a, "sigma2", "t")),
    "suen": lambda a, c: theory.suen_bound(*_need(a, "lam", "delta", "Delta")),
    "suen_sparc": lambda a, c: list(theory.suen_sparc_terms(
        int(_need(a, "L")[0]), a.b, _need(a, "xi")[0], M=a.M)),
    "stylized_ratio": lambda a, c: theory.stylized_ratio(_stylized(a)),
    "stylized_cond": lambda a, c: list(theory.stylized_cond_dist(_stylized(a))),
}


def _guarded(fn):
    try:
        return fn()
    except DomainError as exc:
        return {"error": str(exc)}


def theory_panel(point, L=64, b=2.0):
    """Every closed-form quantity at one problem point; entries that are undefined there hold an error."""
    grid = [float(a) for a in theory.alpha_grid(L)]
    x = point.rho2 / point.D
    return {
        "Rstar": _guarded(lambda: theory.shannon_rates(point.sigma2, point.D)[0]),
        "R0": _guarded(lambda: theory.shannon_rates(point.sigma2, point.D)[1]),
        "xstar": theory.critical_ratio(),
        "alpha": grid,
        "D_alpha": [_guarded(lambda a=a: theory.solve_D_alpha(a, point)) for a in grid if a > 0],
        "Lambda": [_guarded(lambda a=a: theory.lambda_alpha(a, point)) for a in grid],
        "b_min": _guarded(lambda: theory.b_min(x, point.R)),
        "c1": _guarded(lambda: theory.c1_const(point)),
        "eta": _guarded(lambda: theory.eta_xi(L, b, x, point.R, "eta")),
        "xi": _guarded(lambda: theory.eta_xi(L, b, x, point.R, "xi")),
        "r_star": _guarded(lambda: theory.opt_error_exponent(point.sigma2, point.D, point.R)),
    }


def cmd_theory(args, config):
    if args.all:
        point = _point(args, config)
        L = args.L or int(config.get("L", 64))
        b = float(config.get("b", args.b))
        _announce(args, {"op": "all", "point": _asdict(point), "L": L, "b": b})
        panel = theory_panel(point, L, b)
        if args.bits:
            for k in ("Rstar", "R0", "r_star"):
                if isinstance(panel[k], float):
                    panel[k] /= LOG2
        return {"op": "all", "inputs": {"point": _asdict(point), "L": L, "b": b},
                "units": _units(args), "value": panel}
    if args.op is None:
        raise DomainError("give --op or --all")
    for k, v in config.items():
        if hasattr(args, k) and getattr(args, k) is None:
            setattr(args, k, v)
    inputs = {k: getattr(args, k) for k in ("x", "y", "z", "alpha", "kappa", "t", "lam", "delta",
                                           "Delta", "xi", "n", "p", "sigma2", "D", "R", "rho2",
                                           "gamma2", "L", "M") if getattr(args, k) is not None}
    _announce(args, {"op": args.op, "inputs": inputs})
    value = THEORY_OPS[args.op](args, config)
    if args.bits and args.op in _RATE_OPS:
        value /= LOG2
    return {"op": args.op, "inputs": inputs, "units": _units(args), "value": value}


# ---------------------------------------------------------------------------
# encode / decode / census
# ---------------------------------------------------------------------------


def _load_block(args):
    if args.source is not None and args.generate is not None:
        raise DomainError("give either --source or --generate, not both")
    if args.source is not None:
        return read_source(args.source), {"source": str(args.source)}
    if args.generate is not None:
        n_s, sigma2_s, seed_s = args.generate
        try:
            n, sigma2, seed = int(n_s), float(sigma2_s), int(seed_s)
        except ValueError as exc:
            raise DomainError(f"--generate expects N SIGMA2 SEED: {exc}") from exc
        if n < 1 or not sigma2 > 0 or not 0 <= seed < 2**64:
            raise DomainError(f"--generate values out of range: {args.generate}")
        if args.sigma2 is None:
            args.sigma2 = sigma2
        return gaussian_source(n, sigma2, seed), {"generate": [n, sigma2, seed]}
    raise DomainError("give --source PATH or --generate N SIGMA2 SEED")


def _geometry(args, n):
    if args.L is not None and args.M is not None:
        return SparcParams.from_geometry(n, args.L, args.M)
    if args.rate is not None:
        return derive_dimensions(n, args.rate, args.b)
    raise DomainError("give --L and --M, or --rate (with --b)")


def _apply_config(args, config):
    for k, v in config.items():
        if hasattr(args, k) and getattr(args, k) in (None, False):
            setattr(args, k, v)
    if args.generate is not None:
        args.generate = [str(v) for v in args.generate]
    if args.source is not None:
        args.source = Path(args.source)


def _distortion_defaults(args):
    if args.D is None:
        raise DomainError("missing --D")
    sigma2 = args.sigma2 if args.sigma2 is not None else 1.0
    gamma2 = args.gamma2 if args.gamma2 is not None else 2.0 * (sigma2 + args.D)
    return float(args.D), float(gamma2)


def cmd_encode(args, config):
    _apply_config(args, config)
    S, origin = _load_block(args)
    params = _geometry(args, S.shape[0])
    D, gamma2 = _distortion_defaults(args)
    resolved = {"block": origin, "n": params.n, "L": params.L, "M": params.M,
                "D": D, "gamma2": gamma2, "budget": args.budget}
    _announce(args, resolved)
    A = sample_design_matrix(params, args.seed)
    outcome = _encode(S, A, params, D, gamma2, budget=args.budget)[0]
    document = {
        "outcome": outcome.to_dict(),
        "params": {"n": params.n, "L": params.L, "M": params.M},
        "D": D,
        "gamma2": gamma2,
        "seed": args.seed,
    }
    if args.out is not None:
        write_json(args.out, document)
    bits = payload_bits(outcome, params)
    return {
        "status": outcome.status,
        "distortion_total": outcome.distortion_total,
        "distortion_tilde": outcome.distortion_tilde,
        "payload_bits": bits,
        "R_actual": _rate(args, params.R_actual),
        "units": _units(args),
        "encoding": document,
    }


def _read_encoding(path):
    doc = read_json(path)
    try:
        p = doc["params"]
        params = SparcParams.from_geometry(p["n"], p["L"], p["M"])
        return EncodeOutcome.from_dict(doc["outcome"]), params, doc["D"], doc["gamma2"], doc["seed"]
    except (KeyError, TypeError) as exc:
        raise DomainError(f"{path}: malformed encoding ({exc})") from exc


def cmd_decode(args, config):
    if args.source is None and "source" in config:
        args.source = Path(config["source"])
    outcome, params, D, gamma2, seed = _read_encoding(args.encoding)
    _announce(args, {"encoding": str(args.encoding), "n": params.n, "L": params.L,
                     "M": params.M, "D": D, "gamma2": gamma2, "design_seed": seed},
              seed=seed)
    S_hat = decode(outcome, sample_design_matrix(params, seed), params, D, gamma2)
    if args.out is not None:
        write_source(args.out, S_hat)
    summary = {
        "status": outcome.status,
        "payload_bits": payload_bits(outcome, params),
        "R_actual": _rate(args, params.R_actual),
        "units": _units(args),
    }
    if args.out is None:
        summary["reconstruction"] = S_hat.tolist()
    if args.source is not None:
        S = read_source(args.source, params.n)
        summary["distortion_total"] = sqnorm(S - S_hat)
    return summary


def cmd_census(args, config):
    """Solution census of the block itself (taken as the quantized source)."""
    _apply_config(args, config)
    S, origin = _load_block(args)
    params = _geometry(args, S.shape[0])
    if args.D is None:
        raise DomainError("missing --D")
    rho2 = sqnorm(S)
    if not rho2 > args.D:
        raise DomainError(f"block power {rho2} must exceed D={args.D}")
    coeff = math.sqrt((rho2 - args.D) / params.L)
    _announce(args, {"block": origin, "n": params.n, "L": params.L, "M": params.M,
                     "D": args.D, "rho2": rho2, "ref": args.ref, "ex_ref": args.ex_ref,
                     "eps": args.eps, "budget": args.budget})
    A = sample_design_matrix(params, args.seed)
    if args.ref is not None:
        try:
            ref = BetaIndex(tuple(int(v) for v in args.ref.split(",")))
        except ValueError as exc:
            raise DomainError(f"--ref: {exc}") from exc
    else:
        ref = min_distance_search(S, A, coeff, budget=args.budget)[0]
    if args.ex_ref is not None:
        ex_ref, source = float(args.ex_ref), "user"
    else:
        point = theory.TheoryPoint(sigma2=rho2 * 2, D=args.D, R=params.R_actual, rho2=rho2,
                                   gamma2=rho2 * 4)
        ex_ref = math.exp(expected_solutions_bounds(point, params.n)[0])
        source = "theory"
    census = solution_census(S, A, args.D, coeff, ref, ex_ref, EX_source=source,
                             budget=args.budget)
    if args.out is not None:
        Path(args.out).write_text(census.bucket_csv(params.M))
    report = census.to_dict()
    report["reference_is_solution"] = census.reference_is_solution
    if args.eps is not None:
        report["eps"] = args.eps
        report["eps_good"] = is_eps_good(census, args.eps) if census.reference_is_solution else None
    return report


# ---------------------------------------------------------------------------
# experiment / curves
# ---------------------------------------------------------------------------


def cmd_experiment(args, config):
    if args.config is None:
        raise DomainError("experiment needs --config")
    cfg = load_config(args.config)
    out = args.out or Path("experiment_out")
    _announce(args, {"config": cfg.to_dict(), "config_hash": cfg.config_hash(), "out": str(out)},
              seed=cfg.base_seed)
    result = run_experiment(cfg, budget=args.budget)
    csv_path, manifest_path = write_outputs(result, out)
    sys.stdout.write(rows_to_csv(result.rows))
    return None


def cmd_curves(args, config):
    sigma2 = float(config.get("sigma2", args.sigma2))
    points = int(config.get("points", args.points))
    if points < 1:
        raise DomainError(f"--points must be >= 1, got {points}")
    grid = config.get("D_grid") or [sigma2 * (k + 1) / (points + 1) for k in range(points)]
    _announce(args, {"sigma2": sigma2, "D_grid_size": len(grid)})
    rows = emit_rate_curves(sigma2, grid)
    if args.bits:
        for r in rows:
            for k in ("Rstar", "R0", "gap"):
                r[k] /= LOG2
    text = rows_to_csv(rows)
    if args.out is not None:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return None


COMMANDS = {
    "theory": cmd_theory,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "census": cmd_census,
    "experiment": cmd_experiment,
    "curves": cmd_curves,
}


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------


def _units(args):
    return "bits" if args.bits else "nats"


def _rate(args, r):
    return r / LOG2 if args.bits else r


def _asdict(point):
    return {k: getattr(point, k) for k in ("sigma2", "D", "R", "rho2", "gamma2")}


def _announce(args, resolved, seed=None):
    seed = args.seed if seed is None else seed
    print(json.dumps({"command": args.command, "seed": seed, "resolved": _plain(resolved)},
                     sort_keys=True), file=sys.stderr)


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _read_flag_config(path):
    if path is None:
        return {}
    if Path(path).suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            return tomllib.loads(Path(path).read_text())
        except tomllib.TOMLDecodeError as exc:
            raise DomainError(f"{path}: {exc}") from exc
    d = read_json(path)
    if not isinstance(d, dict):
        raise DomainError(f"{path}: top level must be an object")
    return d


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if not 0 <= args.seed < 2**64:
            raise DomainError(f"--seed must be a 64-bit unsigned integer, got {args.seed}")
        if args.budget < 1:
            raise DomainError(f"--budget must be positive, got {args.budget}")
        config = {} if args.command == "experiment" else _read_flag_config(args.config)
        result = COMMANDS[args.command](args, config)
    except BudgetError as exc:
        print(f"sparcrd: budget error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, DomainError, ValueError, OSError) as exc:
        print(f"sparcrd: error: {exc}", file=sys.stderr)
        return 2
    if result is not None:
        sys.stdout.write(json.dumps(_plain(result), indent=2) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())

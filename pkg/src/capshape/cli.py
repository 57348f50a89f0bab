"""Command-line front end: ``capshape <command> [options]``.

Exit codes: 0 success, 1 computational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from capshape import experiments
from capshape.analysis import identity_check, random_support_pmfs, relative_error, slope_consistency
from capshape.baselines import huffman_shaping_pmf, sampled_gaussian_pmf, sg_lambda_for_energy
from capshape.block import block_identity_check, design_block
from capshape.constellation import load_constellation, make_square_qam
from capshape.dyadic import DyadicPMF, build_prefix_code, decode, encode, ghc, kl_pmf
from capshape.errors import CapshapeError, ConvergenceError
from capshape.mi import NoiseModel, QuadratureSpec, mutual_information
from capshape.solver import capacity_curve, solve_capacity

log = logging.getLogger("capshape")

LN2 = math.log(2.0)
# keys and CSV columns holding nats (or nats per energy unit)
NATS_KEYS = {"mi", "nu", "lambda", "mu", "capacity", "C", "I_SG", "I_huffman_dyadic", "I_ghc_dyadic",
             "kl", "output_kl", "kl_per_symbol", "per_symbol_mi", "per_symbol_mi_stderr", "per_symbol_kl",
             "target_mi", "predicted", "residual", "tolerance", "stderr", "dyadic_mi", "mi_stderr"}
BLOCK_LENGTHS_INLINE = 4096


class UsageError(CapshapeError):
    pass


def _add_common(p: argparse.ArgumentParser, constellation=True):
    if constellation:
        g = p.add_argument_group("constellation")
        g.add_argument("--qam", type=int, help="square QAM order (default 64 unless --constellation)")
        g.add_argument("--max-energy", type=float, help="energy of the QAM corner points (default 20)")
        g.add_argument("--constellation", type=Path, help="JSON file with points [[re, im], ...]")
        p.add_argument("--noise-variance", type=float, default=1.0)
    q = p.add_argument_group("numerics")
    q.add_argument("--gh-nodes", type=int, default=48)
    q.add_argument("--mc-samples", type=int, default=10**6)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--tol", type=float, default=1e-7)
    q.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, help="output directory (default: stdout)")
    p.add_argument("--units", choices=("nats", "bits"), default="nats")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capshape", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="capacity-achieving PMF for one power constraint")
    _add_common(p)
    p.add_argument("--e-bar", type=float, required=True)

    p = sub.add_parser("curve", help="capacity curve C(E) over an energy grid")
    _add_common(p)
    p.add_argument("--e-grid", required=True, metavar="LO:STEP:HI")

    p = sub.add_parser("ghc", help="optimal dyadic approximation and prefix code of a PMF")
    _add_common(p, constellation=False)
    p.add_argument("pmf", type=Path, help="JSON array of probabilities ('-' for stdin)")

    p = sub.add_parser("block", help="GHC design on n-symbol blocks")
    _add_common(p)
    p.add_argument("--e-bar", type=float, required=True)
    p.add_argument("--n", type=int, default=1)

    p = sub.add_parser("verify", help="KKT, slope and tangent-identity checks for a design")
    _add_common(p)
    p.add_argument("--e-bar", type=float, required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--random", type=int, default=50, help="random support-respecting PMFs to check")
    p.add_argument("--delta", type=float, default=0.05)

    p = sub.add_parser("baseline", help="C(E), sampled-Gaussian and dyadic curves as CSV")
    _add_common(p)
    p.add_argument("--e-grid", required=True, metavar="LO:STEP:HI")

    for name, helptext in (("encode", "parse a bit file into symbol indices"),
                           ("decode", "map symbol indices back to bits")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--code", type=Path, required=True, help="JSON with 'lengths' (output of `ghc`)")
        p.add_argument("--input", type=Path, required=True)
        p.add_argument("--output", type=Path, help="default: stdout")
        p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("run", help="reproduce one of the 64-QAM experiments")
    _add_common(p)
    p.add_argument("--preset", required=True, help="one of: " + ", ".join(experiments.PRESETS))
    return parser


def _constellation(args):
    if args.constellation is not None:
        if args.qam is not None or args.max_energy is not None:
            raise UsageError("--constellation and --qam/--max-energy are mutually exclusive")
        return load_constellation(args.constellation)
    return make_square_qam(args.qam or 64, 20.0 if args.max_energy is None else args.max_energy)


def _quad(args):
    return QuadratureSpec(args.gh_nodes, "gauss-hermite", args.mc_samples, args.seed)


def _grid(spec: str):
    try:
        lo, step, hi = (float(x) for x in spec.split(":"))
        return experiments.energy_grid(lo, step, hi)
    except ValueError as exc:
        raise UsageError(f"--e-grid expects LO:STEP:HI, got {spec!r}") from exc


def _convert(obj, factor, key=None):
    if factor == 1.0:
        return obj
    if isinstance(obj, dict):
        return {k: _convert(v, factor, k) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_convert(v, factor, key) for v in obj]
    if key in NATS_KEYS and isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return obj * factor
    return obj


def _convert_rows(rows, factor):
    if factor == 1.0:
        return rows
    cols = [h in NATS_KEYS for h in rows[0]]
    return [rows[0]] + [[v * factor if c else v for v, c in zip(r, cols)] for r in rows[1:]]


def _emit(args, payload, name, tables=None):
    factor = 1.0 / LN2 if getattr(args, "units", "nats") == "bits" else 1.0
    payload = _convert(payload, factor)
    tables = {k: _convert_rows(v, factor) for k, v in (tables or {}).items()}
    if args.out is None:
        if tables and not payload:
            for rows in tables.values():
                experiments.write_csv(sys.stdout, rows)
        else:
            sys.stdout.write(experiments.dump_json(payload))
        return
    experiments.write_outputs(args.out, payload, tables, summary_name=name)


def cmd_solve(args):
    c, noise, quad = _constellation(args), NoiseModel(args.noise_variance), _quad(args)
    sol = solve_capacity(c, noise, args.e_bar, quad, args.tol)
    _emit(args, sol.to_json(), "solve.json")


def cmd_curve(args):
    c, noise, quad = _constellation(args), NoiseModel(args.noise_variance), _quad(args)
    pts = capacity_curve(c, noise, _grid(args.e_grid), quad, args.tol, threads=args.threads)
    rows = [["E", "capacity", "nu", "constraint_active"]]
    rows += [[p.energy, p.capacity, p.nu, int(p.constraint_active)] for p in pts]
    _emit(args, {}, "curve.json", {"capacity_curve.csv": rows})


def _read_pmf(path: Path):
    import json

    text = sys.stdin.read() if str(path) == "-" else path.read_text()
    try:
        return np.asarray(json.loads(text), dtype=float)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{path}: expected a JSON array of probabilities") from exc


def cmd_ghc(args):
    p = _read_pmf(args.pmf)
    d = ghc(p)
    code = build_prefix_code(d)
    payload = {
        "lengths": d.to_json(),
        "codewords": {str(k): v for k, v in sorted(code.codewords.items())},
        "kl": kl_pmf(d, p),
    }
    _emit(args, payload, "ghc.json")


def cmd_block(args):
    c, noise, quad = _constellation(args), NoiseModel(args.noise_variance), _quad(args)
    sol = solve_capacity(c, noise, args.e_bar, quad, args.tol)
    design = design_block(sol, c, noise, args.n, quad)
    inline = len(design.joint_dyadic.lengths) <= BLOCK_LENGTHS_INLINE
    payload = design.to_json(include_lengths=inline or args.out is None)
    payload["energy_rel_err"] = relative_error(design.per_symbol_energy, sol.energy)
    payload["mi_rel_err"] = relative_error(design.per_symbol_mi, sol.mi)
    if not inline and args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        lengths_file = args.out / f"block_n{args.n}_lengths.json"
        lengths_file.write_text(experiments.dump_json({"lengths": design.joint_dyadic.to_json()}))
        payload["lengths_file"] = lengths_file.name
    _emit(args, payload, f"block_n{args.n}.json")


def cmd_verify(args):
    c, noise, quad = _constellation(args), NoiseModel(args.noise_variance), _quad(args)
    sol = solve_capacity(c, noise, args.e_bar, quad, args.tol)
    report = {"e_bar": args.e_bar, "kkt_residual": sol.kkt_residual, "nu": sol.nu, "energy": sol.energy,
              "mi": sol.mi}
    report["slope_mismatch"] = slope_consistency(sol, c, noise, quad, args.delta, args.tol)
    design = design_block(sol, c, noise, args.n, quad)
    if args.n == 1:
        chk = identity_check(design.joint_dyadic.probs, sol, c, noise, quad)
        report["ghc_design"] = {"residual": chk.residual, "tolerance": chk.tolerance, "holds": chk.holds}
    else:
        chk = block_identity_check(sol, design, c, noise, quad)
        report["ghc_design"] = {"residual": chk.residual, "stderr": chk.stderr,
                                "holds": abs(chk.residual) <= 3 * chk.stderr}
    rng = np.random.default_rng(args.seed)
    rand = [identity_check(p, sol, c, noise, quad) for p in random_support_pmfs(sol.pmf, args.random, rng)]
    report["random"] = {
        "count": len(rand),
        "max_abs_residual": max((abs(r.residual) for r in rand), default=0.0),
        "all_hold": all(r.holds for r in rand),
    }
    _emit(args, report, "verify.json")


def cmd_baseline(args):
    c, noise, quad = _constellation(args), NoiseModel(args.noise_variance), _quad(args)
    grid = _grid(args.e_grid)
    pts, sols = capacity_curve(c, noise, grid, quad, args.tol, return_solutions=True, threads=args.threads)
    rows = [["E", "C", "I_SG", "I_huffman_dyadic", "I_ghc_dyadic"]]
    for pt, sol in zip(pts, sols):
        lam = sg_lambda_for_energy(c, pt.energy)
        rows.append([
            pt.energy,
            pt.capacity,
            mutual_information(sampled_gaussian_pmf(c, lam), c, noise, quad),
            mutual_information(huffman_shaping_pmf(c, lam), c, noise, quad),
            mutual_information(ghc(sol.pmf).probs, c, noise, quad),
        ])
    _emit(args, {}, "baseline.json", {"baseline.csv": rows})


def _load_code(path: Path):
    import json

    data = json.loads(path.read_text())
    lengths = data["lengths"] if isinstance(data, dict) else data
    return build_prefix_code(DyadicPMF(tuple(lengths)))


def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_encode(args):
    code = _load_code(args.code)
    symbols = encode(args.input.read_text(), code)
    _write_text(args.output, " ".join(map(str, symbols.tolist())) + "\n")


def cmd_decode(args):
    code = _load_code(args.code)
    text = args.input.read_text().split()
    try:
        symbols = [int(t) for t in text]
    except ValueError as exc:
        raise UsageError("symbol file must contain whitespace-separated integers") from exc
    bits = decode(symbols, code)
    _write_text(args.output, "".join(map(str, bits.tolist())) + "\n")


def cmd_run(args):
    if args.preset not in experiments.PRESETS:
        raise UsageError(f"unknown preset {args.preset!r}; choose from {', '.join(experiments.PRESETS)}")
    if args.qam is not None or args.max_energy is not None or args.constellation is not None:
        raise UsageError("presets fix the constellation; drop --qam/--max-energy/--constellation")
    if args.units != "nats":
        raise UsageError("presets report in nats")
    noise, quad = NoiseModel(args.noise_variance), _quad(args)
    summary, tables = experiments.run_preset(args.preset, noise, quad, args.tol, threads=args.threads)
    if args.out is None:
        sys.stdout.write(experiments.dump_json(summary))
    else:
        experiments.write_outputs(args.out, summary, tables)


COMMANDS = {
    "solve": cmd_solve,
    "curve": cmd_curve,
    "ghc": cmd_ghc,
    "block": cmd_block,
    "verify": cmd_verify,
    "baseline": cmd_baseline,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "run": cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except ConvergenceError as exc:
        print(f"capshape: {exc} (residual {exc.residual})", file=sys.stderr)
        return 1
    except (UsageError, ValueError, OSError) as exc:
        print(f"capshape: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"capshape: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

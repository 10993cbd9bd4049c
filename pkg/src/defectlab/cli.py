"""Command-line interface.

Exit codes: 0 success, 1 input or I/O error (including malformed
certificates), 2 non-subunital map, 3 a certificate or property check failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from typing import Any

from . import channel as ch
from . import classical as cl
from .certificates import _jsonable, certificate_from_json, check_certificate, find_flag
from .errors import DefectLabError, MalformedCertificate, NotSubunital, UnknownSuite
from .faithfulness import unitality_verdict
from .matcore import DEFAULT_TOL, Tolerances, frob
from .stabilization import analyze, asymptotic_defect
from .suites import SCALES, run_suite

EXIT_OK, EXIT_INPUT, EXIT_NOT_SUBUNITAL, EXIT_FAILED = 0, 1, 2, 3


class InputError(Exception):
    pass


def _seed(args: argparse.Namespace) -> int | None:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("DEFECTLAB_SEED")
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError as exc:
        raise InputError(f"DEFECTLAB_SEED must be an integer, got {env!r}") from exc


def _tolerances(args: argparse.Namespace) -> Tolerances:
    return DEFAULT_TOL.with_overrides(zero_tol=args.zero_tol, rank_tol=args.rank_tol, psd_tol=args.psd_tol)


def _read_json(path: str) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _load_map(args: argparse.Namespace) -> ch.KrausMap:
    if (args.input is None) == (args.generate is None):
        raise InputError("give exactly one of a map file or --generate DESCRIPTOR")
    if args.generate is not None:
        return ch.generate(args.generate, _seed(args))
    try:
        return ch.from_json(_read_json(args.input))
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _emit(obj: Any, args: argparse.Namespace) -> None:
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2 if getattr(args, "pretty", False) else None)
    out = getattr(args, "output", None)
    if out:
        try:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        except OSError as exc:
            raise InputError(f"cannot write {out}: {exc}") from exc
    else:
        sys.stdout.write(text + "\n")


def _human(lines: list[str]) -> None:
    for line in lines:
        sys.stderr.write(line + "\n")


# -------------------------------------------------------------- commands


def analysis_report(T: ch.KrausMap, max_iter: int | None, tol: Tolerances) -> dict[str, Any]:
    rep = analyze(T, max_iter, tol)
    status = f"Stabilized({rep.index})" if rep.stabilized else f"NotStabilizedWithin({rep.max_iter})"
    orbit = {
        "status": status,
        "stabilized": rep.stabilized,
        "index": rep.index,
        "max_iter": rep.max_iter,
        "trivial_defect": rep.trivial_defect,
        "orbit_norms": [frob(D) for D in rep.orbit],
        "reach_dims": rep.reach_dims,
        "corner_rank": rep.corner_rank,
        "rank_sequence": rep.rank_sequence,
        "nilpotent_type": rep.nilpotent_type,
        "is_maximal": rep.is_maximal,
        "kernel_flag_dims": rep.kernel_flag_dims,
        "defect": rep.defect,
    }
    b = rep.bounds
    bounds = {
        "rank_defect": b.rank_defect,
        "rank_TI": b.rank_TI,
        "kraus_bound": b.kraus_bound,
        "intrinsic_bound": b.intrinsic_bound,
        "rank_Q": b.actual_rank_Q,
        "holds": b.holds(T.dim),
    }
    ad = asymptotic_defect(T, tol)
    asym = {
        "converged": ad.converged,
        "spectral_radius": ad.spectral_radius,
        "leakage_dim": ad.leakage_dim,
        "d_inf": ad.d_inf,
        "residual": ad.residual,
    }
    return {
        "map": {"label": T.label, "dim": T.dim, "n_kraus": T.n_kraus},
        "defect_orbit": orbit,
        "bounds": bounds,
        "unitality": unitality_verdict(T, tol, max_iter).to_json(),
        "asymptotic": asym,
        "tolerances": {"zero_tol": tol.zero_tol, "rank_tol": tol.rank_tol, "psd_tol": tol.psd_tol},
    }


def cmd_analyze(args: argparse.Namespace) -> int:
    T = _load_map(args)
    report = analysis_report(T, args.max_iter, _tolerances(args))
    _emit(report, args)
    o = report["defect_orbit"]
    _human([f"{T.label or 'map'} (dim {T.dim}): {o['status']}, rank Q = {report['bounds']['rank_Q']}"])
    return EXIT_OK


def cmd_certify(args: argparse.Namespace) -> int:
    T = _load_map(args)
    cert = certificate_from_json(_read_json(args.certificate))
    verdict = check_certificate(T, cert, _tolerances(args))
    _emit(verdict.to_json(), args)
    _human([f"certificate {'holds' if verdict.holds else 'fails'}"])
    return EXIT_OK if verdict.holds else EXIT_FAILED


def _rational_list(text: str) -> list[Fraction]:
    try:
        return [Fraction(x.strip()) for x in text.split(",") if x.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError(f"bad rational list {text!r}") from exc


def cmd_classical(args: argparse.Namespace) -> int:
    try:
        sys_ = cl.SubMarkovSystem.from_json(_read_json(args.system))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    d = tuple(_rational_list(args.defect)) if args.defect else sys_.natural_defect()
    if len(d) != sys_.n:
        raise InputError("defect length does not match the atom count")
    orb = cl.classical_orbit(sys_, d, args.max_iter)
    out: dict[str, Any] = {
        "system": sys_.to_json(),
        "defect": [cl.fraction_str(x) for x in d],
        "orbit": [[cl.fraction_str(x) for x in v] for v in orb.orbit],
        "status": f"Stabilized({orb.index})" if orb.stabilized else "NoStabilization",
        "index": orb.index,
        "cycle_witness": orb.cycle,
        "decisive": orb.decisive,
    }
    supp = cl.support(d)
    if supp:
        h = cl.digraph_height(sys_, supp)
        out["digraph"] = {"finite": h.finite, "height": h.height, "cycle": h.cycle, "predicted_index": h.predicted_index}
    ok = True
    if args.rank:
        r = [int(x) for x in args.rank.split(",")]
        v = cl.rank_function_verify(sys_, r, d)
        out["rank_function"] = v.to_json()
        ok &= v.holds
    if args.denominator:
        v = cl.bounded_denominator_propagation(sys_, d, args.denominator, args.max_iter or sys_.n + 1)
        out["bounded_denominator"] = v.to_json()
        if args.delta0 is not None:
            g = cl.gap_bound(sys_, d, args.denominator, Fraction(args.delta0))
            out["gap"] = {
                "gap": cl.fraction_str(g.gap),
                "trace_values": [cl.fraction_str(t) for t in g.trace_values],
                "gap_holds": g.gap_holds,
                "contraction": None if g.contraction is None else cl.fraction_str(g.contraction),
                "first_zero": g.first_zero,
                "contraction_bound": g.contraction_bound,
                "bound_respected": g.bound_respected,
            }
            ok &= g.gap_holds
    _emit(out, args)
    _human([f"classical system with {sys_.n} atoms: {out['status']}"])
    return EXIT_OK if ok else EXIT_FAILED


def cmd_generate(args: argparse.Namespace) -> int:
    T = ch.generate(args.descriptor, _seed(args))
    if args.flag_certificate:
        cert = find_flag(T, _tolerances(args))
        if cert is None:
            raise InputError("the generated map does not stabilize, so no flag certificate exists")
        try:
            with open(args.flag_certificate, "w", encoding="utf-8") as fh:
                fh.write(json.dumps(cert.to_json(), sort_keys=True) + "\n")
        except OSError as exc:
            raise InputError(f"cannot write {args.flag_certificate}: {exc}") from exc
    _emit(ch.to_json(T), args)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    seed = _seed(args)
    if seed is None:
        raise InputError("verify needs --seed or DEFECTLAB_SEED")
    result = run_suite(args.suite, seed, args.scale)
    _emit(result, args)
    lines = []
    for suite, props in result["suites"].items():
        for name, p in props.items():
            lines.append(f"{suite:13s} {name:38s} {p['checked']:6d} checked  {p['failures']:4d} failed")
    _human(lines)
    return EXIT_OK if result["passed"] else EXIT_FAILED


# ----------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser, map_input: bool = True) -> None:
    if map_input:
        p.add_argument("input", nargs="?", help="Kraus map JSON file")
        p.add_argument("--generate", metavar="DESCRIPTOR", help="generator such as shift:4 or randflag:5,seed=9")
    p.add_argument("--seed", type=int, default=None, help="seed (falls back to DEFECTLAB_SEED)")
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--zero-tol", type=float, default=None)
    p.add_argument("--rank-tol", type=float, default=None)
    p.add_argument("--psd-tol", type=float, default=None)
    p.add_argument("--output", "-o", default=None, help="write JSON here instead of stdout")
    p.add_argument("--pretty", action="store_true", help="indent the JSON output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="defectlab", description="Defect-orbit analysis of subunital maps.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="stabilization, corner, bounds, unitality and asymptotic data")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("certify", help="check a certificate file against a map")
    _add_common(p)
    p.add_argument("--certificate", "-c", required=True, help="certificate JSON file")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("classical", help="exact analysis of a sub-Markov system")
    p.add_argument("system", help="system JSON file")
    p.add_argument("--defect", help="comma-separated rationals (default: natural defect)")
    p.add_argument("--rank", help="comma-separated rank function to verify")
    p.add_argument("--denominator", type=int, help="lattice denominator N for propagation checks")
    p.add_argument("--delta0", help="weight threshold for the gap check (needs --denominator)")
    _add_common(p, map_input=False)
    p.set_defaults(func=cmd_classical)

    p = sub.add_parser("generate", help="emit the Kraus JSON of a generator descriptor")
    p.add_argument("descriptor")
    p.add_argument("--flag-certificate", help="also write a flag certificate for the map here")
    _add_common(p, map_input=False)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("verify", help="run a seeded property suite")
    p.add_argument("suite", help="cocycle, cp-bound, parallel, digraph, faithfulness, abstract or all")
    p.add_argument("--scale", choices=SCALES, default="desk")
    _add_common(p, map_input=False)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NotSubunital as exc:
        _human([f"error: map is not subunital: {exc}"])
        return EXIT_NOT_SUBUNITAL
    except (InputError, MalformedCertificate, UnknownSuite, DefectLabError, ValueError) as exc:
        _human([f"error: {exc}"])
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

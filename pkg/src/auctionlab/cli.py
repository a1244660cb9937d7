"""Command-line entry point: ``auctionlab <command> [options]``.

Exit codes: 0 when every check passes, 1 when a report contains a failure,
2 for usage or budget errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import random
import sys
from dataclasses import dataclass
from fractions import Fraction

from . import core
from .core import LabError, UsageError, Value, ValuationProfile, bundle, items_of
from .families import (
    GenerationFailed,
    SelectorPair,
    family_from_json,
    family_to_json,
    generate_independent_family,
    instantiate_collection,
    is_l_sparse,
    load_example_family,
    asymptotic_scale_parameters,
)
from .lowerbound import (
    BadTupleSpec,
    TranscriptMap,
    bad_tuple_welfare_dichotomy,
    both_reveal_map,
    constant_map,
    counting_bound,
    default_bad_tuple,
    diagonal_cover_check,
    four_tuple_bound,
    full_revelation_map,
    rectangle_check,
    sqrt3_dichotomy_formula,
    threebidder_attempt_ratio,
    xos_collision_formula,
)
from .mechanisms import (
    VCG,
    FiniteDomain,
    FirstPriceGrandBundle,
    GrandBundleSecondPrice,
    check_truthful,
    extract_menu,
    monotonize_menu,
    payment_bound_valuations,
    payment_sandwich_check,
    taxation_complexity,
)
from .suite import MODULES, run_suite
from .valuations import SingleMindedValuation, valuation_from_json, valuation_to_json
from .welfare import optimal_welfare

MECHANISMS = {"vcg": VCG, "gb2p": GrandBundleSecondPrice, "gb1p": FirstPriceGrandBundle}
TABLE_BITS = 64


@dataclass(frozen=True)
class RunConfig:
    seed: int | None
    precision: int
    budget_m: int
    budget: int
    out: str | None
    fmt: str

    def require_seed(self) -> int:
        if self.seed is None:
            raise UsageError("this command is randomized; pass --seed")
        return self.seed


class Report:
    """Command output plus a pass/fail verdict."""

    def __init__(self, data, ok: bool = True, rows: list | None = None):
        self.data = data
        self.ok = ok
        self.rows = rows


# ---------------------------------------------------------------------------
# Formatting helpers
# ---------------------------------------------------------------------------


def exact_decimal(x: Fraction, bits: int = TABLE_BITS) -> str:
    """Decimal expansion of x floored to a dyadic with ``bits`` fractional bits (exact, no rounding)."""
    v = Value.rounded(x, bits, "floor")
    sign = "-" if v.numerator < 0 else ""
    n = abs(v.numerator)
    whole, frac = divmod(n, 1 << bits)
    digits = str(frac * 5 ** bits).rjust(bits, "0").rstrip("0")
    return f"{sign}{whole}.{digits or '0'}"


def _write(cfg: RunConfig, report: Report) -> None:
    if cfg.fmt == "csv" and report.rows is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerows(report.rows)
        text = buf.getvalue()
    else:
        text = json.dumps(report.data, indent=2) + "\n"
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None


def _check_m(cfg: RunConfig, m: int) -> None:
    if m > cfg.budget_m:
        raise UsageError(f"m={m} exceeds --budget-m {cfg.budget_m}")


def _load_profile(cfg: RunConfig, path: str) -> ValuationProfile:
    d = _load_json(path)
    m = int(d["m"])
    _check_m(cfg, m)
    return ValuationProfile(tuple(valuation_from_json(v) for v in d["valuations"]), m)


def _load_domain(cfg: RunConfig, path: str) -> FiniteDomain:
    d = _load_json(path)
    m = int(d["m"])
    _check_m(cfg, m)
    return FiniteDomain([[valuation_from_json(v) for v in dom] for dom in d["domains"]], m)


def _default_probes(m: int, weights: list[int]) -> list:
    return [SingleMindedValuation(w, T) for T in range(1, 1 << m) for w in weights]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate_family(args, cfg: RunConfig) -> Report:
    if args.fixture == "appendix-c":
        F, sel = load_example_family()
        coll = instantiate_collection(F, sel)
        return Report({"family": family_to_json(F), "selector": sel.to_json(),
                       "instantiated": coll.to_json()["sets"],
                       "twoSparse": is_l_sparse(coll.flat(), 2, F.m).sparse})
    if args.ell < 2:
        raise UsageError("ell must be at least 2 (ell = 1 makes every collection degenerate)")
    _check_m(cfg, args.m)
    rng = random.Random(cfg.require_seed())
    data = {"m": args.m, "k": args.k, "ell": args.ell, "seed": cfg.seed,
            "asymptoticScale": asymptotic_scale_parameters(args.m)}
    try:
        F, check, attempts = generate_independent_family(
            args.m, args.k, args.ell, rng, retries=args.retries, mode=args.mode, budget=cfg.budget)
    except GenerationFailed as exc:
        data.update(independent=False, error=str(exc))
        return Report(data, ok=False)
    data.update(family=family_to_json(F), independent=True, mode=check.mode,
                selectorsChecked=check.checked, attempts=attempts,
                verification=f"independent: true ({check.mode})")
    return Report(data)


def _ratio_rows():
    rows = [["table", "parameter", "value", "value_display", "bound", "bound_display",
             "margin", "margin_display"]]

    def row(table, param, value, bound):
        margin = None if bound is None else bound - value
        cells = [table, param, exact_decimal(value), f"{float(value):.6f}"]
        for x in (bound, margin):
            cells += ["", ""] if x is None else [exact_decimal(x), f"{float(x):.6f}"]
        rows.append(cells)

    for ell in (3, 4, 5, 10, 100, 1000, 10000):
        low, high, bound = sqrt3_dichotomy_formula(ell, TABLE_BITS)
        row("sqrt3", f"ell={ell}", max(low, high), bound)
    row("sqrt3", "limit", core.sqrt3_minus_1(TABLE_BITS).as_fraction() / 2, None)
    for m in (10 ** 3, 10 ** 6, 10 ** 9):
        low, high, bound = xos_collision_formula(m, bits=TABLE_BITS)
        row("sqrt5", f"m={m}", max(low, high), bound)
    phi = core.golden_ratio_conjugate(TABLE_BITS).as_fraction()
    row("sqrt5", "limit", phi, None)
    for b in ("1/2", "1/10", "1/100", "1/1000"):
        rep = threebidder_attempt_ratio(Fraction(b), bits=TABLE_BITS)
        row("three-bidder", f"b={b}", rep.min_ratio, None)
    row("three-bidder", "limit", phi, None)
    return rows


def cmd_ratio_tables(args, cfg: RunConfig) -> Report:
    rows = _ratio_rows()
    # every bounded row needs a strictly positive margin
    ok = all(r[6] == "" or (r[6] != "0.0" and not r[6].startswith("-")) for r in rows[1:])
    header = rows[0]
    return Report([dict(zip(header, r)) for r in rows[1:]], ok=ok, rows=rows)


def cmd_run_suite(args, cfg: RunConfig) -> Report:
    results = run_suite(seed=cfg.require_seed(), only=args.only, inject_broken=args.inject_broken)
    ok = all(r.passed for r in results)
    return Report({"passed": ok, "checks": [r._asdict() for r in results]}, ok=ok)


def cmd_run_auction(args, cfg: RunConfig) -> Report:
    prof = _load_profile(cfg, args.profile)
    alloc, pay = MECHANISMS[args.mech]().run(prof)
    opt, _ = optimal_welfare(prof)
    got = core.welfare(prof, alloc)
    return Report({"mechanism": args.mech, "allocation": [items_of(b) for b in alloc],
                   "payments": [str(p) for p in pay], "welfare": str(got), "optimal": str(opt)})


def cmd_extract_menu(args, cfg: RunConfig) -> Report:
    prof = _load_profile(cfg, args.profile)
    i = args.bidder
    if not 0 <= i < prof.n:
        raise UsageError(f"bidder {i} outside 0..{prof.n - 1}")
    if args.probes:
        probes = [valuation_from_json(v) for v in _load_json(args.probes)]
    else:
        probes = _default_probes(prof.m, args.weights)
    others = prof.valuations[:i] + prof.valuations[i + 1:]
    menu = extract_menu(MECHANISMS[args.mech](), i, others, probes, prof.m)
    if args.canonical:
        menu = monotonize_menu(menu)
    return Report(menu.to_json())


def cmd_taxation_count(args, cfg: RunConfig) -> Report:
    dom = _load_domain(cfg, args.domain)
    rep = taxation_complexity(MECHANISMS[args.mech](), dom, budget=cfg.budget)
    return Report({"menusPerBidder": list(rep.counts), "tax": rep.tax})


def cmd_check_truthful(args, cfg: RunConfig) -> Report:
    dom = _load_domain(cfg, args.domain)
    bad = check_truthful(MECHANISMS[args.mech](), dom, budget=cfg.budget)
    return Report({"truthful": not bad,
                   "violations": [{"bidder": v.bidder, "truth": v.truth, "lie": v.lie,
                                   "others": list(v.others), "gain": str(v.gain)} for v in bad]},
                  ok=not bad)


def cmd_payment_bounds(args, cfg: RunConfig) -> Report:
    v2 = valuation_from_json(_load_json(args.valuation))
    m = args.m
    _check_m(cfg, m)
    S = bundle(args.S)
    alpha, eps = Fraction(args.alpha), Fraction(args.eps)
    pb = payment_bound_valuations(v2, alpha, eps, S, m, cfg.precision)
    data = {"upper": valuation_to_json(pb.upper), "lower": valuation_to_json(pb.lower),
            "upperExact": str(pb.upper_exact), "lowerExact": str(pb.lower_exact)}
    ok = True
    if args.mech:
        rep = payment_sandwich_check(MECHANISMS[args.mech](), v2, S, eps, m, alpha, cfg.precision)
        data["sandwich"] = {"status": rep.status, "delta": None if rep.delta is None else str(rep.delta),
                            "upper": str(rep.upper), "lower": str(rep.lower)}
        ok = rep.status != "fail"
    return Report(data, ok=ok)


def _load_bad_tuple(path: str) -> BadTupleSpec:
    d = _load_json(path)
    return BadTupleSpec(family_from_json(d["family"]), int(d["ell"]),
                        tuple(SelectorPair(s["b"], s["C"]) for s in d["selectors"]),
                        int(d["i"]), int(d["j1"]), int(d["j2"]))


def cmd_verify_dichotomy(args, cfg: RunConfig) -> Report:
    spec = _load_bad_tuple(args.spec) if args.spec else default_bad_tuple(args.ell)
    rep = bad_tuple_welfare_dichotomy(spec)
    return Report(rep.to_json(), ok=rep.holds)


def _transcript_map(args) -> TranscriptMap:
    if args.map:
        return TranscriptMap.from_json(_load_json(args.map))
    builders = {"full": full_revelation_map, "both": both_reveal_map, "constant": constant_map}
    return builders[args.builtin](args.K)


def cmd_check_rectangle(args, cfg: RunConfig) -> Report:
    bad = rectangle_check(_transcript_map(args))
    return Report({"rectangle": not bad,
                   "violations": [{"transcript": repr(v.transcript), "pair": repr(v.pair),
                                   "found": repr(v.found)} for v in bad]}, ok=not bad)


def cmd_cover_check(args, cfg: RunConfig) -> Report:
    rep = diagonal_cover_check(_transcript_map(args), args.K)
    return Report({"passed": rep.passed, "maxI": rep.max_I, "bound": rep.bound,
                   "transcriptCount": rep.transcript_count, "lowerBound": str(rep.lower_bound),
                   "fullCells": [[repr(t), i] for t, i in rep.full_cells]}, ok=rep.passed)


def cmd_bound_calc(args, cfg: RunConfig) -> Report:
    data = {}
    if args.K is not None:
        v = four_tuple_bound(args.K)
        data["fourTupleBound"] = {"K": args.K, "bits": str(v), "approx": float(v)}
    if args.k is not None:
        data["countingBound"] = {"k": args.k, "ccSW": args.cc_sw,
                                 "bits": counting_bound(args.k, args.cc_sw)}
    if not data:
        raise UsageError("pass --K and/or --k with --cc-sw")
    return Report(data)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="RNG seed (required by randomized commands)")
    common.add_argument("--precision", type=int, default=core.DEFAULT_PRECISION,
                        help="fractional bits for fixed-point values")
    common.add_argument("--budget-m", type=int, default=core.MAX_ITEMS, help="largest item count accepted")
    common.add_argument("--budget", type=int, default=core.DEFAULT_BUDGET,
                        help="cap on exhaustive enumeration counts")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--format", dest="fmt", choices=("json", "csv"), default="json")

    p = argparse.ArgumentParser(prog="auctionlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    sp = add("generate-family", cmd_generate_family, "random width family plus independence check")
    sp.add_argument("--m", type=int, default=30)
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--ell", type=int, default=2)
    sp.add_argument("--retries", type=int, default=50)
    sp.add_argument("--mode", choices=("exhaustive", "sampled"), default="exhaustive")
    sp.add_argument("--fixture", choices=("appendix-c",), help="emit the bundled 6-item example")

    add("ratio-tables", cmd_ratio_tables, "ratio formulas against their bounds")

    sp = add("run-suite", cmd_run_suite, "run the invariant suite")
    sp.add_argument("--only", choices=MODULES)
    sp.add_argument("--inject-broken", action="store_true", help="use a non-monotone fixture")

    sp = add("run-auction", cmd_run_auction, "run a mechanism on a profile file")
    sp.add_argument("--mech", choices=sorted(MECHANISMS), default="vcg")
    sp.add_argument("--profile", required=True)

    sp = add("extract-menu", cmd_extract_menu, "menu presented to one bidder")
    sp.add_argument("--mech", choices=sorted(MECHANISMS), default="vcg")
    sp.add_argument("--profile", required=True, help="profile whose other bidders are fixed")
    sp.add_argument("--bidder", type=int, default=0)
    sp.add_argument("--probes", help="JSON list of probe valuations")
    sp.add_argument("--weights", type=int, nargs="+", default=[1, 4, 16, 64])
    sp.add_argument("--canonical", action="store_true", help="monotonize before printing")

    for name, fn, help_ in (("taxation-count", cmd_taxation_count, "distinct menus per bidder"),
                            ("check-truthful", cmd_check_truthful, "exhaustive deviation sweep")):
        sp = add(name, fn, help_)
        sp.add_argument("--mech", choices=sorted(MECHANISMS), default="vcg")
        sp.add_argument("--domain", required=True)

    sp = add("payment-bounds", cmd_payment_bounds, "upper/lower probe valuations and sandwich check")
    sp.add_argument("--valuation", required=True, help="JSON valuation of bidder 2")
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--S", type=int, nargs="+", required=True)
    sp.add_argument("--alpha", default="1")
    sp.add_argument("--eps", default="1/1024")
    sp.add_argument("--mech", choices=sorted(MECHANISMS))

    sp = add("verify-dichotomy", cmd_verify_dichotomy, "welfare dichotomy for a bad 4-tuple")
    sp.add_argument("--ell", type=int, default=10)
    sp.add_argument("--spec", help="JSON bad-tuple spec (default: built-in width-1 family)")

    for name, fn, help_ in (("check-rectangle", cmd_check_rectangle, "rectangle property"),
                            ("cover-check", cmd_cover_check, "diagonal cover bound")):
        sp = add(name, fn, help_)
        sp.add_argument("--map", help="transcript map JSON")
        sp.add_argument("--builtin", choices=("full", "both", "constant"), default="full")
        sp.add_argument("--K", type=int, default=2)

    sp = add("bound-calc", cmd_bound_calc, "counting bounds in bits")
    sp.add_argument("--K", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--cc-sw", type=int, default=0)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = RunConfig(args.seed, args.precision, args.budget_m, args.budget, args.out, args.fmt)
    try:
        if cfg.budget_m < 1 or cfg.budget < 1 or cfg.precision < 0:
            raise UsageError("budgets must be positive and precision non-negative")
        with core.precision(cfg.precision):
            old = core.get_budget()
            core.set_budget(cfg.budget)
            try:
                report = args.func(args, cfg)
            finally:
                core.set_budget(old)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LabError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1
    _write(cfg, report)
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())

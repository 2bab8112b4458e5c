"""Command line front end.

Exit codes: 0 success, 2 usage (argparse), 124 deadline expired, and one
code per failure class so scripts can branch without scraping stderr:

    3  malformed model/evidence/record file        (UaiSyntaxError)
    4  variable cardinality other than 2           (UnsupportedArity)
    5  negative table entry                        (NegativeValue)
    6  evidence names an unknown/inactive variable (UnknownVariable)
    7  bad option value or mismatched inputs       (BadParameter)
    8  model too large for exact enumeration       (TooLarge)
    9  division by zero during belief update       (DivisionByZero)
   10  node pool exceeded QUANTAL_MEM_LIMIT_MB     (OutOfBudget)
   11  reference log Z too close to 0 for a gap    (DegenerateReference)
   12  diagram asked about a variable not in its order (UnorderedVariable)
   13  unachievable quantization target            (BadTarget)

QUANTAL_MEM_LIMIT_MB caps the shared node pool, figuring roughly 160 bytes
per pooled node across the tuple and both interning tables.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

from .add import AddStore, from_potential, to_dot
from .elimination import AbqRecord, abq, abq_anytime, minfill_order
from .errors import (
    BadParameter,
    BadTarget,
    DeadlineExceeded,
    DegenerateReference,
    DivisionByZero,
    NegativeValue,
    OutOfBudget,
    QuantalError,
    TooLarge,
    UaiSyntaxError,
    UnknownVariable,
    UnorderedVariable,
    UnsupportedArity,
)
from .jtree import IabqConfig, VARIANTS, iabq
from .metrics import EvalReport, avg_kl, brute_force, log_relative_diff
from .model import (
    MarkovNet,
    apply_evidence,
    gen_ising,
    parse_evidence,
    parse_uai,
    primal_graph,
    serialize_uai,
)
from .quantize import HEURISTICS, MEASURES, MODES, QuantizeConfig

EXIT_CODES = {
    UaiSyntaxError: 3,
    UnsupportedArity: 4,
    NegativeValue: 5,
    UnknownVariable: 6,
    BadParameter: 7,
    TooLarge: 8,
    DivisionByZero: 9,
    OutOfBudget: 10,
    DegenerateReference: 11,
    UnorderedVariable: 12,
    BadTarget: 13,
}
TIMEOUT_CODE = 124

_LN10 = math.log(10.0)


def _k_value(s: str) -> float:
    if s == "inf":
        return math.inf
    return int(s)


def _mem_limit_nodes() -> int | None:
    raw = os.environ.get("QUANTAL_MEM_LIMIT_MB")
    if raw is None or raw == "":
        return None
    try:
        mb = float(raw)
    except ValueError:
        raise BadParameter(f"QUANTAL_MEM_LIMIT_MB={raw!r} is not a number")
    if mb <= 0:
        raise BadParameter("QUANTAL_MEM_LIMIT_MB must be positive")
    return max(1000, int(mb * 1024 * 1024 / 160))


def _load_net(input_path: str, evidence_path: str | None) -> MarkovNet:
    with open(input_path) as fh:
        net = parse_uai(fh.read())
    if evidence_path:
        with open(evidence_path) as fh:
            ev = parse_evidence(fh.read())
        net = apply_evidence(net, ev)
    return net


def _open_out(path: str | None, append: bool = False):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "a" if append else "w"), True


def _marginal_lines(net: MarkovNet, marg: dict[int, tuple[float, float]]) -> list[str]:
    lines = []
    for v in range(net.num_vars):
        if v in net.evidence:
            p1 = float(net.evidence[v])
            p0 = 1.0 - p1
        else:
            p0, p1 = marg[v]
        lines.append(f"{v} {p0:.12f} {p1:.12f}")
    return lines


def _parse_marginal_table(path: str) -> dict[int, tuple[float, float]]:
    out: dict[int, tuple[float, float]] = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                v, p0, p1 = int(parts[0]), float(parts[1]), float(parts[2])
            except (ValueError, IndexError) as e:
                raise UaiSyntaxError(f"{path}:{ln}: bad marginal row") from e
            out[v] = (p0, p1)
    return out


def _sniff_records(path: str) -> bool:
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                return line.startswith("{")
    return False


def cmd_partition(args: argparse.Namespace) -> int:
    net = _load_net(args.input, args.evidence)
    cfg = QuantizeConfig(heuristic=args.heuristic, mode=args.mode,
                         error_measure=args.measure)
    max_nodes = _mem_limit_nodes()
    sink, close = _open_out(args.output, append=True)
    try:
        if args.k is not None:
            t0 = time.monotonic()
            deadline = t0 + args.timeout_s if args.timeout_s else None
            status, rec = 0, None
            try:
                r = abq(net, args.k, cfg, deadline=deadline, max_nodes=max_nodes)
                rec = AbqRecord(
                    args.k,
                    None if r.log_z == -math.inf else r.log_z / _LN10,
                    cfg.mode, cfg.heuristic, (time.monotonic() - t0) * 1e3,
                    r.max_intermediate_nodes, exact=not r.quantized)
            except DeadlineExceeded:
                rec = AbqRecord(args.k, None, cfg.mode, cfg.heuristic,
                                (time.monotonic() - t0) * 1e3, 0, status="timeout")
                status = TIMEOUT_CODE
            except OutOfBudget:
                rec = AbqRecord(args.k, None, cfg.mode, cfg.heuristic,
                                (time.monotonic() - t0) * 1e3, 0,
                                status="out_of_budget")
                status = EXIT_CODES[OutOfBudget]
            print(rec.to_json(), file=sink, flush=True)
            return status

        timeout = args.timeout_s
        if timeout is None and args.k_max is None:
            timeout = 60.0   # open-ended doubling needs some stop condition
        last = None
        for rec in abq_anytime(net, cfg, k_start=args.k_start,
                               k_max=args.k_max, timeout_s=timeout,
                               max_nodes=max_nodes):
            print(rec.to_json(), file=sink, flush=True)
            last = rec
        if last is not None and last.status == "timeout":
            return TIMEOUT_CODE
        if last is not None and last.status == "out_of_budget":
            return EXIT_CODES[OutOfBudget]
        return 0
    finally:
        if close:
            sink.close()


def cmd_marginals(args: argparse.Namespace) -> int:
    net = _load_net(args.input, args.evidence)
    qcfg = QuantizeConfig(heuristic=args.heuristic, mode=args.mode,
                          error_measure=args.measure)
    cfg = IabqConfig(variant=args.variant, k=args.k, quantize=qcfg,
                     max_iterations=args.max_iterations, epsilon=args.epsilon)
    t0 = time.monotonic()
    deadline = t0 + args.timeout_s if args.timeout_s else None
    res = iabq(net, cfg=cfg, max_nodes=_mem_limit_nodes(), deadline=deadline)
    sink, close = _open_out(args.output)
    try:
        for line in _marginal_lines(net, res.marginals):
            print(line, file=sink)
    finally:
        if close:
            sink.close()
    record = {
        "variant": cfg.variant,
        "k": "inf" if cfg.k == math.inf else int(cfg.k),
        "iterations": res.iterations,
        "converged": res.converged,
        "elapsed_ms": round((time.monotonic() - t0) * 1e3, 3),
    }
    print(json.dumps(record))
    return 0


def cmd_exact(args: argparse.Namespace) -> int:
    net = _load_net(args.input, args.evidence)
    if args.marginals_output and args.method != "brute-force":
        raise BadParameter("marginal tables need --method brute-force")
    t0 = time.monotonic()
    if args.method == "brute-force":
        r = brute_force(net)
        log_z = r.log_z
        if args.marginals_output:
            with open(args.marginals_output, "w") as fh:
                for line in _marginal_lines(net, r.marginals):
                    print(line, file=fh)
    else:
        log_z = abq(net, max_nodes=_mem_limit_nodes()).log_z
    rec: dict = {"method": args.method,
                 "log10_Z": None if log_z == -math.inf else log_z / _LN10,
                 "elapsed_ms": round((time.monotonic() - t0) * 1e3, 3)}
    if rec["log10_Z"] is None:
        rec["zero_partition"] = True
    print(json.dumps(rec))
    return 0


def cmd_gen_ising(args: argparse.Namespace) -> int:
    net = gen_ising(args.n, args.beta, args.seed)
    text = (f"# grid ising n={args.n} beta={args.beta} seed={args.seed}\n"
            + serialize_uai(net))
    sink, close = _open_out(args.output)
    try:
        sink.write(text)
    finally:
        if close:
            sink.close()
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    cand_rec = _sniff_records(args.candidate)
    ref_rec = _sniff_records(args.reference)
    if cand_rec != ref_rec:
        raise BadParameter("candidate and reference are different kinds of file")
    if cand_rec:
        from .report import load_records

        def best(path: str) -> float:
            vals = [r["log10_Z"] for r in load_records(path)
                    if r.get("log10_Z") is not None]
            if not vals:
                raise BadParameter(f"{path}: no usable log10_Z record")
            return vals[-1]

        cand, ref = best(args.candidate), best(args.reference)
        report = EvalReport(kind="partition", log10_z_estimate=cand,
                            log10_z_reference=ref,
                            delta=log_relative_diff(cand, ref))
    else:
        cand_t = _parse_marginal_table(args.candidate)
        ref_t = _parse_marginal_table(args.reference)
        try:
            kl = avg_kl(ref_t, cand_t)
        except ValueError as e:
            raise BadParameter(str(e)) from e
        report = EvalReport(kind="marginals", avg_kl=kl, variables=len(ref_t))
    sink, close = _open_out(args.output)
    try:
        print(report.to_json(), file=sink)
    finally:
        if close:
            sink.close()
    return 0


def cmd_dump_add(args: argparse.Namespace) -> int:
    net = _load_net(args.input, args.evidence)
    if not 0 <= args.potential < len(net.potentials):
        raise BadParameter(
            f"potential index {args.potential} out of range "
            f"[0, {len(net.potentials)})")
    order = minfill_order(primal_graph(net))
    store = AddStore(order.order)
    sa = from_potential(store, net.potentials[args.potential])
    dot = to_dot(store, sa, name=f"potential_{args.potential}")
    sink, close = _open_out(args.output)
    try:
        sink.write(dot)
    finally:
        if close:
            sink.close()
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    from .report import load_records, write_report

    records = load_records(args.input)
    info = write_report(records, args.output_dir, args.reference_log10)
    print(json.dumps(info))
    return 0


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="model file, text format")
    p.add_argument("--evidence", help="evidence sidecar file")


def _add_quantize_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=MODES, default="upper")
    p.add_argument("--heuristic", choices=HEURISTICS, default="min-error-merge")
    p.add_argument("--measure", choices=MEASURES, default="squared")
    p.add_argument("--order", choices=("minfill",), default="minfill",
                   help="elimination ordering strategy")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="quantal",
        description="Bounded decision-diagram inference for binary Markov networks")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition",
                       help="anytime bounds on log10 Z, one JSON line per run")
    _add_model_args(p)
    _add_quantize_args(p)
    p.add_argument("--k", type=_k_value,
                   help="single run at this node budget (int >= 2 or 'inf')")
    p.add_argument("--k-start", type=_k_value, default=2,
                   help="anytime schedule start (default 2)")
    p.add_argument("--k-max", type=_k_value,
                   help="anytime schedule cap; omit for open-ended doubling")
    p.add_argument("--timeout-s", type=float,
                   help="wall-clock limit; default 60 for open-ended schedules")
    p.add_argument("--output", help="append records here instead of stdout")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("marginals",
                       help="iterative propagation posterior marginals")
    _add_model_args(p)
    _add_quantize_args(p)
    p.add_argument("--variant", choices=VARIANTS, default="sum-product")
    p.add_argument("--k", type=_k_value, default=math.inf,
                   help="per-message node budget (int >= 2 or 'inf')")
    p.add_argument("--max-iterations", type=int, default=50)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--timeout-s", type=float)
    p.add_argument("--output", help="write the marginal table here")
    p.set_defaults(func=cmd_marginals)

    p = sub.add_parser("exact", help="exact log10 Z by enumeration or elimination")
    _add_model_args(p)
    p.add_argument("--method", choices=("brute-force", "add-be"),
                   default="brute-force")
    p.add_argument("--marginals-output",
                   help="also write exact marginals (brute-force only)")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("gen-ising", help="sample a random grid model")
    p.add_argument("--n", type=int, required=True, help="grid side length")
    p.add_argument("--beta", type=float, required=True,
                   help="pairwise strength upper bound, > 1")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_gen_ising)

    p = sub.add_parser("compare",
                       help="score candidate records or marginals against a reference")
    p.add_argument("--candidate", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dump-add", help="render one potential's diagram as DOT")
    _add_model_args(p)
    p.add_argument("--potential", type=int, required=True,
                   help="potential index in declaration order")
    p.add_argument("--output")
    p.set_defaults(func=cmd_dump_add)

    p = sub.add_parser("report",
                       help="tabulate anytime records and plot the bound curve")
    p.add_argument("--input", required=True, help="JSON-lines record file")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--reference-log10", type=float,
                   help="draw this exact value as a horizontal rule")
    p.set_defaults(func=cmd_report)

    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DeadlineExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return TIMEOUT_CODE
    except QuantalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CODES.get(type(e), 1)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

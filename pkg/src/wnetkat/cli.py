"""Command-line front end.

Exit codes: 0 not drop (or success), 1 drop, 2 unknown (fuel ran out),
3 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .algebra import Weight, format_weight, make_structure, parse_weight
from .ast import fields_of
from .core import FieldId, WNetKATError, make_world
from .evaluator import (
    EvalConfig,
    Mode,
    Outcome,
    Verdict,
    check,
    evaluate_many,
    render_world,
    switch_path,
)
from .netmodel import (
    BANDWIDTH,
    CAPACITY,
    COST,
    LATENCY,
    RATE,
    CapMode,
    ChainFunction,
    Effect,
    cap_reach_query,
    chain_query,
    cost_reach_query,
    default_world,
    fairness_check,
    load_flows,
    load_topology,
    qos_policy,
    qos_queue_policy,
    qos_seeds,
    read_asset,
    run_query,
    simulate_qos,
)
from .parser import parse_expr, parse_state, render_expr
from .wfa import (
    NotWeightRegular,
    classify_weight_regular,
    emptiness,
    expr_to_wfa,
    optimal_weight,
)

EXIT = {Outcome.NOT_DROP: 0, Outcome.IS_DROP: 1, Outcome.UNKNOWN: 2}
USAGE_ERROR = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunReport:
    command: str
    verdict: Optional[str] = None
    witness: Optional[dict] = None
    optimal_weight: Optional[str] = None
    saturated: Optional[bool] = None
    elapsed_ms: float = 0.0
    details: dict = field(default_factory=dict)
    lines: list = field(default_factory=list)

    def as_json(self) -> dict:
        out = {
            "command": self.command,
            "verdict": self.verdict,
            "witness": self.witness,
            "optimal_weight": self.optimal_weight,
            "saturated": self.saturated,
            "elapsed_ms": round(self.elapsed_ms, 3),
        }
        out.update(self.details)
        return out

    def as_text(self) -> str:
        out = list(self.lines)
        if self.verdict is not None:
            out.append(f"verdict: {self.verdict}")
        if self.witness is not None:
            out.append("witness: " + " -> ".join(self.witness["path"]))
            if self.witness.get("bound") is not None:
                out.append(f"witness value: {self.witness['bound']}")
        if self.optimal_weight is not None:
            out.append(f"optimal weight: {self.optimal_weight}")
        if self.saturated is not None:
            out.append(f"saturated: {'yes' if self.saturated else 'no'}")
        out.append(f"elapsed: {self.elapsed_ms:.1f} ms")
        return "\n".join(out)


def _witness(v: Verdict) -> Optional[dict]:
    if v.witness is None:
        return None
    hops = [[pk.get("sw"), pk.get("pt")] for pk in reversed(v.witness.history)]
    return {
        "path": switch_path(v.witness),
        "hops": hops,
        "world": render_world(v.witness),
        "bound": None if v.bound_value is None else format_weight(v.bound_value),
    }


def _fill(report: RunReport, v: Verdict) -> int:
    report.verdict = v.outcome.value
    report.witness = _witness(v)
    report.saturated = v.saturated
    return EXIT[v.outcome]


def _weight(text: Optional[str], name: str) -> Optional[Weight]:
    if text is None:
        return None
    try:
        return parse_weight(text)
    except ValueError:
        raise UsageError(f"--{name}: malformed weight {text!r}") from None


def _read_expr(path: str):
    return parse_expr(read_asset(path))


def _packet(text: str, e) -> dict:
    kinds = {f.name: f for f in fields_of(e) if not f.is_switch}
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise UsageError(f"packet entry {part!r} is not key=value")
        k, v = part.split("=", 1)
        f = kinds.get(k) or FieldId(k)
        out[f] = parse_weight(v) if f.quantitative else v
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_parse(args, report: RunReport) -> int:
    e = _read_expr(args.expr)
    report.lines.append(render_expr(e))
    report.details["expression"] = render_expr(e)
    return 0


def _inputs(args, e) -> list:
    rho = parse_state(read_asset(args.state), fields_of(e)) if getattr(args, "state", None) else None
    if getattr(args, "inputs", None):
        lines = [ln.strip() for ln in read_asset(args.inputs).splitlines()]
        ws = [default_world(e, rho, values=_packet(ln, e)) for ln in lines if ln and not ln.startswith("#")]
        if not ws:
            raise UsageError("the inputs file lists no packets")
        return ws
    if getattr(args, "packet", None):
        return [default_world(e, rho, values=_packet(args.packet, e))]
    return [default_world(e, rho)]


def cmd_eval(args, report: RunReport) -> int:
    e = _read_expr(args.expr)
    ws = _inputs(args, e)
    mode = Mode(args.mode)
    res = evaluate_many(e, ws, EvalConfig(fuel=args.fuel, mode=mode))
    worlds = res.sorted_worlds()
    report.lines.extend(render_world(w) for w in worlds)
    report.details["worlds"] = [render_world(w) for w in worlds]
    report.saturated = res.saturated
    if worlds:
        report.verdict = Outcome.NOT_DROP.value
    elif res.saturated:
        report.verdict = Outcome.IS_DROP.value
    else:
        report.verdict = Outcome.UNKNOWN.value
    return EXIT[Outcome(report.verdict)]


def _try_wfa(e, structure: Optional[str]):
    kinds = [structure] if structure else ["min-plus", "max-min", "max-plus"]
    last = None
    for k in kinds:
        try:
            return classify_weight_regular(e, make_structure(k))
        except NotWeightRegular as exc:
            last = exc
    raise last


def cmd_check(args, report: RunReport) -> int:
    e = _read_expr(args.expr)
    backend = args.backend
    if backend == "wfa" and (args.inputs or args.packet or args.state):
        raise UsageError("the wfa backend decides over all inputs; drop --inputs/--packet/--state")
    if backend in ("auto", "wfa") and not (args.inputs or args.packet or args.state):
        try:
            wr = _try_wfa(e, args.structure)
        except NotWeightRegular as exc:
            if backend == "wfa":
                raise
            report.details["wfa_refusal"] = str(exc)
        else:
            a = expr_to_wfa(wr)
            empty = emptiness(a)
            report.details["backend"] = "wfa"
            report.details["structure"] = wr.structure.kind.value
            report.verdict = (Outcome.IS_DROP if empty else Outcome.NOT_DROP).value
            report.saturated = True
            if wr.tracked is not None:
                try:
                    report.optimal_weight = format_weight(optimal_weight(a))
                except WNetKATError:
                    pass
            return EXIT[Outcome(report.verdict)]
    report.details["backend"] = "eval"
    v = check(e, _inputs(args, e), EvalConfig(fuel=args.fuel, mode=Mode(args.mode)))
    return _fill(report, v)


def cmd_compile(args, report: RunReport) -> int:
    e = _read_expr(args.expr)
    s = make_structure(args.structure)
    wr = classify_weight_regular(e, s)
    a = expr_to_wfa(wr)
    text = a.to_text()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        report.lines.append(f"wrote {len(a.states)} states, {len(a.trans)} transitions to {args.out}")
    else:
        report.lines.append(text.rstrip("\n"))
    report.details["states"] = len(a.states)
    report.details["transitions"] = len(a.trans)
    report.details["empty"] = emptiness(a)
    if s.idempotent:
        report.optimal_weight = format_weight(optimal_weight(a))
    return 0


def _topology_and_policy(args, state_needed: bool = False):
    t = load_topology(args.topology)
    policy = _read_expr(args.policy) if args.policy else None
    rho = None
    if args.state:
        rho = parse_state(read_asset(args.state), fields_of(policy) if policy is not None else ())
    elif state_needed:
        raise UsageError("--state is required for this query")
    return t, policy, rho


def cmd_cost_reach(args, report: RunReport) -> int:
    t, policy, rho = _topology_and_policy(args)
    e = cost_reach_query(t, policy, args.src, args.dst, _weight(args.bound, "bound"))
    v = run_query(e, t, fuel=args.fuel, rho=rho, bound_var=LATENCY)
    return _fill(report, v)


def cmd_cap_reach(args, report: RunReport) -> int:
    mode = {"unsplit": CapMode.UNSPLIT_MIN, "unsplit-guard": CapMode.UNSPLIT_GUARD, "split": CapMode.SPLIT}[args.mode]
    t, policy, rho = _topology_and_policy(args, state_needed=mode is CapMode.SPLIT)
    if mode is CapMode.SPLIT and policy is None:
        raise UsageError("--mode split needs --policy with split/merge rules")
    rate = _weight(args.rate, "rate")
    e, eval_mode = cap_reach_query(t, policy, args.src, args.dst, rate, mode)
    v = run_query(e, t, mode=eval_mode, fuel=args.fuel, rho=rho, bound_var=RATE)
    return _fill(report, v)


def _effects(text: Optional[str]) -> dict:
    out = {}
    for part in filter(None, (p.strip() for p in (text or "").split(","))):
        try:
            name, effect = part.split("=", 1)
            kind, _, amount = effect.partition(":")
            if kind == "conserve":
                out[name] = Effect.conserve()
            elif kind == "add":
                out[name] = Effect.add(parse_weight(amount))
            elif kind == "mul":
                out[name] = Effect.mul(parse_weight(amount))
            else:
                raise ValueError(kind)
        except ValueError:
            raise UsageError(f"--effects entry {part!r} is not NAME=conserve|add:K|mul:K") from None
    return out


def cmd_chain(args, report: RunReport) -> int:
    t, policy, rho = _topology_and_policy(args)
    effects = _effects(args.effects)
    names = [w for w in args.waypoints.split(",") if w]
    chain = [ChainFunction(n, effect=effects.get(n, Effect.conserve())) for n in names]
    bound = _weight(args.bound, "bound")
    rate = _weight(args.rate, "rate")
    if bound is None and rate is None:
        raise UsageError("query chain needs --bound and/or --rate")
    e = chain_query(t, chain, args.src, args.dst, bound, rate, policy)
    v = run_query(e, t, fuel=args.fuel, rho=rho, bound_var=COST if bound is not None else CAPACITY)
    return _fill(report, v)


def cmd_fairness(args, report: RunReport) -> int:
    t = load_topology(args.topology)
    flows = load_flows(args.flows, t)
    results = fairness_check(t, flows, fuel=args.fuel)
    rows = []
    worst = Outcome.NOT_DROP
    for flow, v in results:
        idx = flows.flows.index(flow) + 1
        rows.append({"flow": f"x{idx}", "src": flow.src, "dst": flow.dst, "rate": format_weight(flow.rate),
                     "verdict": v.outcome.value})
        status = "fair" if v.not_drop else ("unfair" if v.is_drop else "unknown")
        report.lines.append(f"x{idx} {flow.src}->{flow.dst} rate {format_weight(flow.rate)}: {v.outcome.value} ({status})")
        if v.outcome is Outcome.UNKNOWN:
            worst = Outcome.UNKNOWN
        elif v.outcome is Outcome.IS_DROP and worst is Outcome.NOT_DROP:
            worst = Outcome.IS_DROP
    report.details["flows"] = rows
    report.verdict = worst.value
    report.saturated = all(v.saturated for _, v in results)
    report.lines.append("max-min fair" if worst is Outcome.NOT_DROP else "not max-min fair")
    return EXIT[worst]


def _shares(text: str) -> list[tuple[str, int]]:
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        name, _, q = part.partition("=")
        if not q.isdigit():
            raise UsageError(f"--shares entry {part!r} is not NAME=QUOTA")
        out.append((name, int(q)))
    return out


def cmd_qos(args, report: RunReport) -> int:
    shares = _shares(args.shares)
    arrivals = [a for a in args.arrivals.split(",") if a]
    in_ports = [p for p in (args.in_ports or "").split(",") if p]
    if args.queued:
        t = load_topology(args.topology or "qos.top")
        policy = qos_queue_policy(args.switch, shares, t, args.out_port, in_ports)
    else:
        t = None
        policy = qos_policy(args.switch, in_ports, args.out_port, shares)
    in_port = in_ports[0] if in_ports else "1"
    seeds = qos_seeds(args.switch, arrivals, shares, in_port, t)
    rep = simulate_qos(policy, seeds, args.out_port)
    counts = {p: rep.count(p) for p, _ in shares}
    report.details["forwarded"] = counts
    report.details["arrived"] = len(arrivals)
    report.lines.append("forwarded " + ", ".join(f"{p}={n}" for p, n in counts.items()) + f" of {len(arrivals)}")
    report.saturated = rep.result.saturated
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wnetkat", description="Weighted network programs: evaluate, compile, verify.")
    p.add_argument("--format", choices=["text", "json"], default="text")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sp = sub.add_parser("parse", help="parse and pretty-print an expression")
    sp.add_argument("--expr", required=True)
    sp.set_defaults(run=cmd_parse)

    sp = sub.add_parser("eval", help="evaluate an expression on one packet")
    sp.add_argument("--expr", required=True)
    sp.add_argument("--packet", default="")
    sp.add_argument("--state")
    sp.add_argument("--fuel", type=int, default=64)
    sp.add_argument("--mode", choices=["per-world", "shared"], default="per-world")
    sp.set_defaults(run=cmd_eval)

    sp = sub.add_parser("check", help="decide whether an expression equals drop")
    sp.add_argument("--expr", required=True)
    sp.add_argument("--inputs")
    sp.add_argument("--packet")
    sp.add_argument("--state")
    sp.add_argument("--fuel", type=int, default=64)
    sp.add_argument("--mode", choices=["per-world", "shared"], default="per-world")
    sp.add_argument("--backend", choices=["auto", "eval", "wfa"], default="auto")
    sp.add_argument("--structure", choices=["min-plus", "max-plus", "max-min", "add-min"])
    sp.set_defaults(run=cmd_check)

    sp = sub.add_parser("compile-wfa", help="compile a weight-regular expression to an automaton")
    sp.add_argument("--expr", required=True)
    sp.add_argument("--structure", choices=["min-plus", "max-plus", "max-min", "add-min"], required=True)
    sp.add_argument("--out")
    sp.set_defaults(run=cmd_compile)

    q = sub.add_parser("query", help="topology-level verification queries")
    qs = q.add_subparsers(dest="query", parser_class=_Parser)
    qs.required = True

    def topo_args(x, policy=True):
        x.add_argument("--topology", required=True)
        if policy:
            x.add_argument("--policy")
            x.add_argument("--state")
        x.add_argument("--fuel", type=int)

    x = qs.add_parser("cost-reach", help="reach dst from src within a cost bound")
    topo_args(x)
    x.add_argument("--src", required=True)
    x.add_argument("--dst", required=True)
    x.add_argument("--bound", required=True)
    x.set_defaults(run=cmd_cost_reach)

    x = qs.add_parser("cap-reach", help="carry a rate from src to dst")
    topo_args(x)
    x.add_argument("--src", required=True)
    x.add_argument("--dst", required=True)
    x.add_argument("--rate", required=True)
    x.add_argument("--mode", choices=["unsplit", "unsplit-guard", "split"], default="unsplit")
    x.set_defaults(run=cmd_cap_reach)

    x = qs.add_parser("chain", help="reach dst through service-chain waypoints")
    topo_args(x)
    x.add_argument("--src", required=True)
    x.add_argument("--dst", required=True)
    x.add_argument("--waypoints", required=True)
    x.add_argument("--bound")
    x.add_argument("--rate")
    x.add_argument("--effects", help="e.g. F2=add:3,F1=mul:2")
    x.set_defaults(run=cmd_chain)

    x = qs.add_parser("fairness", help="check a rate allocation for max-min fairness")
    topo_args(x, policy=False)
    x.add_argument("--flows", required=True)
    x.set_defaults(run=cmd_fairness)

    x = qs.add_parser("qos", help="simulate counter-based bandwidth shares")
    x.add_argument("--switch", default="r")
    x.add_argument("--shares", default="high=8,low=2")
    x.add_argument("--arrivals", required=True, help="comma-separated priorities in arrival order")
    x.add_argument("--out-port", default="3")
    x.add_argument("--in-ports", default="")
    x.add_argument("--queued", action="store_true")
    x.add_argument("--topology")
    x.set_defaults(run=cmd_qos)
    return p


EQUIV_REFUSAL = (
    "equivalence of two arbitrary expressions is undecidable and is not offered; "
    "decide emptiness instead: `wnetkat check --expr FILE` tells whether an expression equals drop"
)


def _subcommand(argv: Sequence[str]) -> Optional[str]:
    skip = False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--format":
            skip = True
            continue
        if not tok.startswith("-"):
            return tok
    return None


def run(argv: Sequence[str], out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    argv = list(argv)
    if _subcommand(argv) in ("equiv", "equivalence"):
        print(f"usage error: {EQUIV_REFUSAL}", file=err)
        return USAGE_ERROR
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=err)
        print(f"usage error: {exc}", file=err)
        return USAGE_ERROR
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    fmt = args.format
    command = " ".join(argv)
    report = RunReport(command=command)
    t0 = time.perf_counter()
    try:
        code = args.run(args, report)
    except UsageError as exc:
        print(f"usage error: {exc}", file=err)
        return USAGE_ERROR
    except (WNetKATError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=err)
        return USAGE_ERROR
    report.elapsed_ms = (time.perf_counter() - t0) * 1000
    if fmt == "json":
        print(json.dumps(report.as_json(), indent=2, sort_keys=True), file=out)
    else:
        print(report.as_text(), file=out)
    return code


def main() -> None:
    sys.exit(run(sys.argv[1:]))

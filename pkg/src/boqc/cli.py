"""Command-line entry points.

Subcommands: ``run`` (execute a scenario), ``blindness`` (view-equality
report), ``lazy-stats`` (live-qubit accounting), ``verify-flow`` and
``join`` (pre-protocol).  Reports are deterministic JSON given the same
seeds; wall-clock timing goes to stderr only.

Exit codes: 0 pass, 2 validation error, 3 property violation, 4 size cap.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .angles import DyadicAngle
from .builtin import grover2_scenario, lazy7_scenario
from .calculus import SizeError, build_lazy_pattern, live_qubit_profile
from .graphstate import (
    ClientGraphSpec,
    GraphError,
    InvalidConnectionError,
    Slot,
    find_flow,
    graph_from_json,
    graph_to_json,
    join_graphs,
    linearize,
    random_flow_graph,
    verify_flow,
)
from .protocol import (
    AliceInputs,
    IOMode,
    OscarInputs,
    ProtocolError,
    PublicInfo,
    Seeds,
    public_info_for,
    run_boqc,
    run_boqco,
)
from .security import blindness_report

EXIT_PASS = 0
EXIT_VALIDATION = 2
EXIT_PROPERTY = 3
EXIT_SIZE = 4

BUILTINS = {"grover2": grover2_scenario, "lazy7": lazy7_scenario}


def _load_scenario(path: str) -> dict:
    if path in BUILTINS:
        return BUILTINS[path]()
    with open(path) as fh:
        return json.load(fh)


def _public_from_scenario(sc: dict) -> tuple[PublicInfo, dict]:
    graph_obj = sc["graph"]
    if isinstance(graph_obj, str):
        with open(graph_obj) as fh:
            graph_obj = json.load(fh)
    g, order, b = graph_from_json(graph_obj)
    if b is None:
        b = int(sc.get("b", 4))
    pub = public_info_for(g, b, order)
    return pub, graph_obj


def _angle_map(raw: dict, b: int) -> dict:
    return {int(k): DyadicAngle(int(v), b) for k, v in raw.items()}


def _scenario_inputs(sc: dict, pub: PublicInfo):
    b = pub.b
    phi = _angle_map(sc.get("phi", {}), b)
    psi = _angle_map(sc.get("psi", {}), b)
    mode = IOMode(sc.get("io_mode", "cc"))
    input_bits = {int(k): int(v) for k, v in sc.get("input_bits", {}).items()}
    input_state = None
    if sc.get("input_state") is not None:
        input_state = np.array(
            [complex(re, im) for re, im in sc["input_state"]], dtype=np.complex128
        )
    alice_in = AliceInputs(phi=phi, input_state=input_state, input_bits=input_bits)
    oscar_in = OscarInputs(psi=psi)
    seeds_raw = sc.get("seeds", {})
    seeds = Seeds(
        keys=int(seeds_raw.get("keys", 0)),
        alice=int(seeds_raw.get("alice", 1)),
        oscar=int(seeds_raw.get("oscar", 2)),
        outcomes=int(seeds_raw.get("outcomes", 3)),
    )
    return alice_in, oscar_in, mode, seeds


def _write_report(report: dict, path) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def cmd_run(args) -> int:
    try:
        sc = _load_scenario(args.scenario)
        pub, graph_obj = _public_from_scenario(sc)
        alice_in, oscar_in, mode, seeds = _scenario_inputs(sc, pub)
    except (GraphError, ProtocolError, InvalidConnectionError, KeyError,
            ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    protocol = args.protocol or sc.get("protocol", "boqc")
    runner = {"boqc": run_boqc, "boqco": run_boqco}.get(protocol)
    if runner is None:
        print(f"validation error: unknown protocol {protocol!r}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.io:
        mode = IOMode(args.io)
    if args.seed is not None:
        seeds = Seeds(args.seed, args.seed + 1, args.seed + 2, args.seed + 3)
    t0 = time.perf_counter()
    try:
        res = runner(pub, alice_in, oscar_in, mode, seeds=seeds)
    except (ProtocolError, GraphError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    elapsed = time.perf_counter() - t0
    report = {
        "scenario": sc.get("name", args.scenario),
        "protocol": protocol,
        "io_mode": mode.value,
        "graph": graph_obj,
        "transcript": res.transcript.to_json(),
        "signals": {str(k): v for k, v in sorted(res.signals.items())},
        "peak_live_qubits": res.peak_live_qubits,
    }
    if res.output_bits is not None:
        report["output_bits"] = {str(k): v for k, v in sorted(res.output_bits.items())}
    if res.output_state is not None:
        report["output_state"] = [[float(z.real), float(z.imag)]
                                  for z in res.output_state]
    print(f"run finished in {elapsed:.3f}s, peak live qubits "
          f"{res.peak_live_qubits}", file=sys.stderr)
    _write_report(report, args.report)
    return EXIT_PASS


def cmd_blindness(args) -> int:
    try:
        sc = _load_scenario(args.scenario)
        pub, _ = _public_from_scenario(sc)
        alice_in, oscar_in, mode, _ = _scenario_inputs(sc, pub)
    except (GraphError, ProtocolError, InvalidConnectionError, KeyError,
            ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    protocol = args.protocol or sc.get("protocol", "boqc")
    if args.io:
        mode = IOMode(args.io)
    enumeration = "exhaustive" if args.exhaustive else "sampled"
    from .protocol import ANGLE_OFFSET_PI, CONSTANT_ZERO, HONEST
    behaviors = (HONEST, CONSTANT_ZERO, ANGLE_OFFSET_PI) if args.all_behaviors \
        else (HONEST,)
    measured = len(pub.graph.vertices) if not mode.quantum_output \
        else len(pub.graph.measured)
    if args.exhaustive and (pub.b > 2 or measured > 8):
        print("size error: exhaustive mode is capped at b <= 2 and at most "
              "8 measured nodes", file=sys.stderr)
        return EXIT_SIZE
    if args.no_randomness:
        from .security import compare_views, real_view, simulator_view
        from .protocol import HONEST as _H
        rv = real_view(pub, alice_in, oscar_in, mode, _H, protocol,
                       "exhaustive", "runner", randomness_off=True)
        iv = simulator_view(pub, alice_in, oscar_in, mode, _H, protocol,
                            "exhaustive", "runner")
        dist = compare_views(rv, iv)
        report = {
            "negative_control": True,
            "classical_tvd": dist.classical_tvd,
            "quantum_trace_distance": dist.quantum_trace_distance,
        }
        _write_report(report, args.report)
        return EXIT_PROPERTY if dist.classical_tvd > 1e-9 else EXIT_PASS
    try:
        report = blindness_report(pub, alice_in, oscar_in, mode, protocol,
                                  behaviors, enumeration, shots=args.shots,
                                  seed=args.seed or 0)
    except (ProtocolError, SizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIZE if isinstance(exc, SizeError) else EXIT_VALIDATION
    _write_report(report, args.report)
    if enumeration == "exhaustive":
        ok = (report["worst_classical_tvd"] <= 1e-9
              and report["worst_quantum_trace_distance"] <= 1e-9)
    else:
        pvals = [p for entry in report["behaviors"].values()
                 for p in entry.get("delta_chi2_p", {}).values()]
        ok = all(p >= 1e-4 for p in pvals)
    return EXIT_PASS if ok else EXIT_PROPERTY


def cmd_lazy_stats(args) -> int:
    rows = []
    violations = 0
    try:
        if args.random:
            rng = np.random.default_rng(args.seed or 0)
            graphs = []
            for _ in range(args.random):
                g, fl = random_flow_graph(rng, args.nodes)
                graphs.append((g, fl))
        else:
            with open(args.graph) as fh:
                g, order, _ = graph_from_json(json.load(fh))
            fl = find_flow(g)
            if fl is None:
                print("validation error: graph has no flow", file=sys.stderr)
                return EXIT_VALIDATION
            graphs = [(g, fl)]
    except (GraphError, OSError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for g, fl in graphs:
        order = linearize(fl)
        theta = {i: DyadicAngle(0, 2) for i in g.measured}
        pattern = build_lazy_pattern(g, fl, order, theta)
        profile = live_qubit_profile(pattern)
        peak = max(profile)
        bound = len(g.outputs) + 1
        rows.append({
            "nodes": len(g.vertices),
            "outputs": len(g.outputs),
            "peak_live_qubits": peak,
            "bound": bound,
            "within_bound": peak <= bound,
        })
        if peak > bound:
            violations += 1
    report: dict = {"graphs": rows, "bound_violations": violations}
    if len(rows) == 1:
        report["profile"] = profile
    _write_report(report, args.report)
    if violations:
        print(f"finding: {violations} graph(s) exceed the conjectured bound",
              file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_PASS


def cmd_verify_flow(args) -> int:
    try:
        with open(args.graph) as fh:
            g, order, _ = graph_from_json(json.load(fh))
    except (GraphError, OSError, ValueError, KeyError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    fl = find_flow(g)
    report = {"has_flow": fl is not None}
    if fl is not None:
        report["f"] = {str(k): v for k, v in sorted(fl.f.items())}
        report["layers"] = [sorted(layer) for layer in fl.layers]
        report["total_order"] = list(linearize(fl).sequence)
        report["verified"] = verify_flow(g, fl)
    _write_report(report, args.report)
    return EXIT_PASS if fl is not None else EXIT_PROPERTY


def cmd_join(args) -> int:
    try:
        with open(args.spec) as fh:
            spec = json.load(fh)
        alice = ClientGraphSpec(
            vertices=frozenset(spec["alice"]["vertices"]),
            edges=frozenset(tuple(e) for e in spec["alice"]["edges"]),
            slots=tuple(Slot(frozenset(s)) for s in spec["alice"].get("slots", [])),
        )
        oscar = ClientGraphSpec(
            vertices=frozenset(spec["oscar"]["vertices"]),
            edges=frozenset(tuple(e) for e in spec["oscar"]["edges"]),
        )
        joined, fl = join_graphs(
            alice, oscar, [tuple(c) for c in spec["connection"]],
            inputs=spec["I"], outputs=spec["O"],
            quantum_inputs=spec.get("tilde_I", ()),
            quantum_outputs=spec.get("tilde_O", ()),
        )
    except (InvalidConnectionError, GraphError, KeyError, ValueError,
            OSError) as exc:
        print(f"invalid connection: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    order = linearize(fl)
    report = graph_to_json(joined, order, spec.get("b"))
    report["f"] = {str(k): v for k, v in sorted(fl.f.items())}
    report["layers"] = [sorted(layer) for layer in fl.layers]
    _write_report(report, args.report)
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boqc",
        description="Blind oracular quantum computation at desk scale",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a protocol scenario")
    p_run.add_argument("scenario", help="scenario JSON path or builtin name "
                                        f"({', '.join(BUILTINS)})")
    p_run.add_argument("--protocol", choices=["boqc", "boqco"])
    p_run.add_argument("--io", choices=[m.value for m in IOMode])
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--report", default="-")
    p_run.set_defaults(func=cmd_run)

    p_bl = sub.add_parser("blindness", help="view-equality report")
    p_bl.add_argument("scenario")
    p_bl.add_argument("--protocol", choices=["boqc", "boqco"])
    p_bl.add_argument("--io", choices=[m.value for m in IOMode])
    p_bl.add_argument("--exhaustive", action="store_true")
    p_bl.add_argument("--shots", type=int, default=10000)
    p_bl.add_argument("--seed", type=int)
    p_bl.add_argument("--all-behaviors", action="store_true")
    p_bl.add_argument("--no-randomness", action="store_true",
                      help="negative control: disable keys and pads")
    p_bl.add_argument("--report", default="-")
    p_bl.set_defaults(func=cmd_blindness)

    p_ls = sub.add_parser("lazy-stats", help="live-qubit accounting")
    p_ls.add_argument("graph", nargs="?", help="graph JSON path")
    p_ls.add_argument("--random", type=int, default=0,
                      help="use N random flow graphs instead of a file")
    p_ls.add_argument("--nodes", type=int, default=10)
    p_ls.add_argument("--seed", type=int)
    p_ls.add_argument("--report", default="-")
    p_ls.set_defaults(func=cmd_lazy_stats)

    p_vf = sub.add_parser("verify-flow", help="check a graph for flow")
    p_vf.add_argument("graph")
    p_vf.add_argument("--report", default="-")
    p_vf.set_defaults(func=cmd_verify_flow)

    p_j = sub.add_parser("join", help="pre-protocol graph joining")
    p_j.add_argument("spec", help="join specification JSON")
    p_j.add_argument("--report", default="-")
    p_j.set_defaults(func=cmd_join)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

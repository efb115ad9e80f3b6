"""Command line: ``distne {generate,partition,sweep,verify}``.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 internal or
protocol error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from contextlib import ExitStack

from .baselines import partition_dbh, partition_grid, partition_random, partition_sequential_ne
from .engine import partition_dne
from .expansion import ExpansionConfig
from .graph import Graph, GraphFormatError, RmatParams, generate_rmat, load_edge_list, write_edge_list
from .metrics import (
    InvalidAssignment,
    PartitionAssignment,
    QualityReport,
    check_upper_bound,
    quality_report,
    validate_assignment,
    BoundViolation,
)
from .runtime import ProtocolError

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2, 3
METHODS = ("dne", "random", "grid", "dbh", "seqne")

log = logging.getLogger("distne")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _rmat_spec(text: str) -> RmatParams:
    vals = text.split(",")
    if len(vals) not in (2, 6):
        raise argparse.ArgumentTypeError("--rmat takes scale,ef or scale,ef,a,b,c,d")
    try:
        scale, ef = int(vals[0]), int(vals[1])
        probs = [float(x) for x in vals[2:]] or [0.57, 0.19, 0.19, 0.05]
        return RmatParams(scale, ef, *probs)
    except (ValueError, OverflowError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_input(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("-i", "--input", help="edge-list file ('u v' per line)")
    src.add_argument("--rmat", type=_rmat_spec, metavar="SCALE,EF[,A,B,C,D]", help="generate an RMAT graph")


def _add_run(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=METHODS, default="dne")
    p.add_argument("-P", "--parts", type=int, default=8, dest="P")
    p.add_argument("--alpha", type=float, default=1.1)
    p.add_argument("--lambda", type=float, default=0.1, dest="lam")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true", help="single-worker reproducible scheduling")
    p.add_argument("--workers", type=int, default=None, help="parallel-mode worker threads (default |P|)")
    p.add_argument("--report", help="append a CSV quality row to this file")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="distne", description="Distributed neighbor-expansion edge partitioning")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write an RMAT edge list")
    g.add_argument("--scale", type=int, required=True)
    g.add_argument("--edge-factor", type=int, default=16)
    g.add_argument("--probs", type=_float_list, default=[0.57, 0.19, 0.19, 0.05], metavar="A,B,C,D")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)

    p = sub.add_parser("partition", help="partition a graph")
    _add_input(p)
    _add_run(p)
    p.add_argument("-o", "--output", help="partition file: 'src dst partition' per edge")
    p.add_argument("--trace", help="write the message delivery trace (dne only)")

    s = sub.add_parser("sweep", help="one report row per lambda or |P| value")
    _add_input(s)
    _add_run(s)
    grp = s.add_mutually_exclusive_group(required=True)
    grp.add_argument("--lambdas", type=_float_list)
    grp.add_argument("--procs", type=_int_list)

    v = sub.add_parser("verify", help="check a partition file against its graph")
    v.add_argument("-i", "--input", required=True, help="edge-list file")
    v.add_argument("--partition", required=True, help="partition file")
    v.add_argument("-P", "--parts", type=int, default=None, dest="P")
    return parser


def _load(args) -> tuple[Graph, str]:
    if args.input:
        try:
            with open(args.input) as fh:
                return load_edge_list(fh), os.path.basename(args.input)
        except OSError as exc:
            raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None
        except GraphFormatError as exc:
            raise UsageError(f"{args.input}: {exc}") from None
    r = args.rmat
    return generate_rmat(r), f"rmat-s{r.scale}-ef{r.edge_factor}"


def run_method(graph: Graph, method: str, P: int, alpha: float, lam: float, seed: int,
               deterministic: bool = True, workers: int | None = None, trace=None):
    """Returns (assignment, iterations)."""
    if P < 1:
        raise UsageError("-P must be >= 1")
    if method == "dne":
        try:
            config = ExpansionConfig(alpha=alpha, lam=lam, seed=seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        res = partition_dne(
            graph, P, config, mode="deterministic" if deterministic else "parallel",
            workers=workers, trace=trace,
        )
        return res.assignment, res.iterations
    if method == "random":
        return partition_random(graph, P, seed), 0
    if method == "grid":
        return partition_grid(graph, P, seed), 0
    if method == "dbh":
        return partition_dbh(graph, P, seed), 0
    if method == "seqne":
        if alpha < 1:
            raise UsageError("alpha must be >= 1")
        return partition_sequential_ne(graph, P, alpha, seed), 0
    raise UsageError(f"unknown method {method}")


def _emit(report: QualityReport, path: str | None) -> None:
    print(report.csv_row())
    if path:
        new = not os.path.exists(path) or os.path.getsize(path) == 0
        with open(path, "a") as fh:
            if new:
                fh.write(QualityReport.header() + "\n")
            fh.write(report.csv_row() + "\n")


def _run_one(graph, name, args, P, lam, trace=None) -> tuple[QualityReport, PartitionAssignment]:
    t0 = time.perf_counter()
    assignment, iterations = run_method(
        graph, args.method, P, args.alpha, lam, args.seed, args.deterministic, args.workers, trace
    )
    elapsed = (time.perf_counter() - t0) * 1000
    report = quality_report(
        assignment, graph, name=name, partitioner=args.method, alpha=args.alpha, lam=lam,
        seed=args.seed, iterations=iterations, elapsed_ms=round(elapsed, 3),
    )
    if args.deterministic:
        # wall-clock time would break byte-identical reports
        report.elapsed_ms = 0.0
    return report, assignment


def cmd_generate(args) -> int:
    if args.scale < 1:
        raise UsageError("--scale must be >= 1")
    if len(args.probs) != 4:
        raise UsageError("--probs takes four values")
    try:
        params = RmatParams(args.scale, args.edge_factor, *args.probs, seed=args.seed)
    except (ValueError, OverflowError) as exc:
        raise UsageError(str(exc)) from None
    graph = generate_rmat(params)
    try:
        with open(args.output, "w") as fh:
            write_edge_list(graph, fh)
    except OSError as exc:
        raise UsageError(f"cannot write {args.output}: {exc.strerror}") from None
    print(f"|V|={graph.vertex_count} |E|={graph.num_edges}")
    return EXIT_OK


def cmd_partition(args) -> int:
    graph, name = _load(args)
    with ExitStack() as stack:
        trace = None
        if args.trace:
            if args.method != "dne":
                log.warning("--trace only applies to --method dne; writing an empty trace")
            trace = stack.enter_context(open(args.trace, "w"))
        report, assignment = _run_one(graph, name, args, args.P, args.lam, trace)
    if args.output:
        with open(args.output, "w") as fh:
            assignment.write(fh)
    _emit(report, args.report)
    return EXIT_OK


def cmd_sweep(args) -> int:
    graph, name = _load(args)
    if args.lambdas is not None:
        configs = [(args.P, lam) for lam in args.lambdas]
    else:
        configs = [(P, args.lam) for P in args.procs]
    if not configs:
        raise UsageError("empty sweep list")
    if args.report is None:
        print(QualityReport.header())
    for P, lam in configs:
        report, _ = _run_one(graph, name, args, P, lam)
        _emit(report, args.report)
    return EXIT_OK


def cmd_verify(args) -> int:
    graph, _ = _load(argparse.Namespace(input=args.input, rmat=None))
    try:
        with open(args.partition) as fh:
            assignment = PartitionAssignment.read(fh, args.P)
    except OSError as exc:
        raise UsageError(f"cannot read {args.partition}: {exc.strerror}") from None
    except InvalidAssignment as exc:
        print(f"violation: {exc}", file=sys.stderr)
        return EXIT_INVALID
    problems = validate_assignment(assignment, graph)
    if not problems:
        try:
            rf = check_upper_bound(assignment, graph)
        except BoundViolation as exc:
            problems.append(str(exc))
    for msg in problems:
        print(f"violation: {msg}", file=sys.stderr)
    if problems:
        return EXIT_INVALID
    print(f"ok: {len(assignment.parts)} edges, {assignment.num_parts} partitions, rf={rf:.6f}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "partition": cmd_partition,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * getattr(args, "verbose", 0)
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"distne: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BoundViolation as exc:
        print(f"distne: bound violated: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ProtocolError, RuntimeError) as exc:
        print(f"distne: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

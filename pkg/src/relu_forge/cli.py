"""Command-line front end: ``relu-forge <subcommand> ...``.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .algebra import identity_network, special_to_standard
from .constructions import (
    MultiplierSpec,
    approximate_sobolev,
    hat_network,
    multiplier_network,
    pou_network,
    sawtooth_network,
    squarer_network,
)
from .errors import ReluForgeError, VerificationFailure
from .experiments import FAMILIES, TARGETS, rate_report, target_oracle
from .network import Network, complexity, evaluate_batch, load_network, save_network
from .selfsimilar import TakagiSpec, rate_fit, takagi_errors, takagi_network, tent
from .sobolev import PoUIndex, lp_error
from .splines import eval_spline, load_spline, theorem1
from .training import Dataset, TrainConfig, init_state, load_dataset, sgd_train
from .verify import CHECKS, run_checks

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse numbers from {text!r}") from exc


def _emit_network(net: Network, out: str | None) -> None:
    if out:
        save_network(net, out)
    print(json.dumps(complexity(net).as_dict()))


def _cmd_build(args) -> int:
    kind = args.kind
    if kind == "hat":
        net = hat_network()
    elif kind == "sawtooth":
        net = sawtooth_network(args.s)
    elif kind == "squarer":
        net = squarer_network(args.m)
    elif kind == "multiplier":
        net = multiplier_network(MultiplierSpec(D=args.D, eps=args.eps))
    elif kind == "identity":
        net = identity_network(args.d)
    elif kind == "pou":
        if args.index is None:
            raise UsageError("pou needs --index, e.g. --index 1,2")
        idx = PoUIndex(tuple(int(v) for v in _floats(args.index)), args.n)
        net = pou_network(idx)
    else:  # takagi
        special = takagi_network(TakagiSpec.geometric(args.base, args.depth))
        net = special if args.special else special_to_standard(special)[0]
    _emit_network(net, args.output)
    return EXIT_OK


def _cmd_eval(args) -> int:
    net = load_network(args.net)
    values = _floats(args.x)
    if len(values) % net.input_dim:
        raise UsageError(f"need a multiple of {net.input_dim} input values")
    pts = np.array(values).reshape(-1, net.input_dim)
    for row in evaluate_batch(net, pts):
        print(" ".join(repr(float(v)) for v in row))
    return EXIT_OK


_ERROR_TARGETS = {
    "square": (1, lambda x: x[:, 0] ** 2),
    "identity": (1, lambda x: x[:, 0]),
    "hat": (1, lambda x: tent(x[:, 0])),
    "parabola": (1, lambda x: x[:, 0] * (1.0 - x[:, 0])),
    "product": (2, lambda x: x[:, 0] * x[:, 1]),
}


def _cmd_error(args) -> int:
    net = load_network(args.net)
    if args.spline:
        spline = load_spline(args.spline)
        dim, target = 1, (lambda x: eval_spline(spline, x[:, 0]))
    elif args.target in TARGETS:
        oracle = target_oracle(args.target)
        dim, target = oracle.dim, oracle.value
    else:
        dim, target = _ERROR_TARGETS[args.target]
    if net.input_dim != dim:
        raise UsageError(f"target needs {dim} inputs, the network takes {net.input_dim}")
    grid = args.grid if dim == 1 else min(args.grid, 1001)
    p = math.inf if args.p == "inf" else float(args.p)
    err = lp_error(lambda x: evaluate_batch(net, x)[:, 0], target, p, grid, dim)
    print(repr(err))
    return EXIT_OK


def _cmd_embed(args) -> int:
    spline = load_spline(args.knots)
    res = theorem1(spline, args.width, seed=args.seed)
    if args.output:
        save_network(res.network, args.output)
    info = res.report.as_dict()
    info.update({"knots": spline.n, "padded_knots": res.padded_knots, "width": args.width})
    print(json.dumps(info))
    return EXIT_OK


def _cmd_takagi(args) -> int:
    spec = TakagiSpec.geometric(args.base, args.depth)
    special = takagi_network(spec)
    if args.output:
        save_network(special_to_standard(special)[0], args.output)
    if args.report == "csv":
        depths = range(1, args.depth + 1)
        errs = takagi_errors(args.base, depths)
        print("depth,error,nonzero_params")
        for L, err in errs:
            params = complexity(takagi_network(TakagiSpec.geometric(args.base, L))).nonzero_params
            print(f"{L},{err!r},{params}")
        if len(errs) >= 4:
            print(f"# fitted base {rate_fit(errs).base!r}")
    else:
        print(json.dumps(complexity(special).as_dict()))
    return EXIT_OK


def _cmd_sobolev(args) -> int:
    res = approximate_sobolev(target_oracle(args.target), args.k, eps=args.eps)
    if args.output:
        save_network(res.network, args.output)
    info = complexity(res.network).as_dict()
    info.update({"n": res.n, "eps": res.eps, "measured_error": res.measured_error})
    print(json.dumps(info))
    return EXIT_OK if res.within_slack else EXIT_VERIFY


def _cmd_train(args) -> int:
    data: Dataset = load_dataset(args.data, args.inputs, labels=args.labels)
    hidden = [int(v) for v in _floats(args.hidden)] if args.hidden else []
    sizes = [data.inputs.shape[1], *hidden, data.targets.shape[1]]
    output = "softmax" if args.loss == "cross_entropy" else "identity"
    reg, lam = "none", 0.0
    if args.l1:
        reg, lam = "l1", args.l1
    elif args.l2:
        reg, lam = "l2", args.l2
    try:
        cfg = TrainConfig(
            learning_rate=args.eta,
            batch_size=args.batch,
            epochs=args.epochs,
            loss=args.loss,
            regularizer=reg,
            lam=lam,
            patience=args.patience,
            validation_split=args.val,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    res = sgd_train(init_state(sizes, seed=args.seed, output=output), data, cfg)
    for epoch, value in enumerate(res.losses, 1):
        print(f"epoch {epoch} loss {value!r}")
    if args.output:
        save_network(res.network, args.output)
    return EXIT_OK


def _cmd_report(args) -> int:
    sweep = [int(v) if float(v).is_integer() else v for v in _floats(args.sweep)] if args.sweep else None
    options = {}
    if args.family == "takagi":
        options["base"] = args.base
    elif args.family == "spline":
        options["width"] = args.width
        options["seed"] = args.seed
    elif args.family == "sobolev":
        options["target"] = args.target
    report = rate_report(args.family, sweep, **options)
    text = report.to_csv()
    if args.output:
        Path(args.output).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_verify(args) -> int:
    results = run_checks(seed=args.seed, only=args.only or None)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise VerificationFailure("failed checks: " + ", ".join(failed))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relu-forge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("build", help="build a named network and write it as JSON")
    p.add_argument("kind", choices=["hat", "sawtooth", "squarer", "multiplier", "identity", "pou", "takagi"])
    p.add_argument("--s", type=int, default=3, help="sawtooth teeth level")
    p.add_argument("--m", type=int, default=4, help="squarer level")
    p.add_argument("--D", type=float, default=1.0, help="multiplier domain half-width")
    p.add_argument("--eps", type=float, default=1e-3, help="multiplier accuracy")
    p.add_argument("--d", type=int, default=1, help="identity dimension")
    p.add_argument("--n", type=int, default=4, help="partition-of-unity resolution")
    p.add_argument("--index", help="partition-of-unity multi-index, comma separated")
    p.add_argument("--base", type=float, default=2.0)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--special", action="store_true", help="keep the takagi net in special form")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("eval", help="evaluate a saved network")
    p.add_argument("--net", required=True)
    p.add_argument("--x", required=True, help="comma-separated inputs, row-major")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("error", help="sup or L^p error of a saved network against a target")
    p.add_argument("--net", required=True)
    p.add_argument("--target", default="square", choices=sorted([*_ERROR_TARGETS, *TARGETS]))
    p.add_argument("--spline", help="spline JSON used as the target instead")
    p.add_argument("--grid", type=int, default=100_001)
    p.add_argument("--p", default="inf")
    p.set_defaults(func=_cmd_error)

    p = sub.add_parser("embed-spline", help="embed a free-knot spline into a ReLU network")
    p.add_argument("--knots", required=True, help="spline JSON with breakpoints and values")
    p.add_argument("--width", type=int, default=8)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("takagi", help="Takagi-function network and its error table")
    p.add_argument("--base", type=float, default=2.0)
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--report", choices=["json", "csv"], default="json")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_takagi)

    p = sub.add_parser("sobolev", help="end-to-end network approximation of a smooth target")
    p.add_argument("--target", choices=TARGETS, default="sin")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_sobolev)

    p = sub.add_parser("train", help="train a ReLU network with mini-batch SGD")
    p.add_argument("--data", required=True, help="CSV, inputs then targets per row")
    p.add_argument("--inputs", type=int, default=1, help="number of input columns")
    p.add_argument("--labels", action="store_true", help="single target column of class labels")
    p.add_argument("--hidden", default="8", help="hidden widths, comma separated")
    p.add_argument("--loss", choices=["quadratic", "cross_entropy"], default="quadratic")
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--l1", type=float, default=0.0)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--patience", type=int)
    p.add_argument("--val", type=float, default=0.0, help="validation fraction")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("report", help="run a rate sweep and print CSV")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--sweep", help="comma-separated parameter values")
    p.add_argument("--base", type=float, default=2.0)
    p.add_argument("--width", type=int, default=8)
    p.add_argument("--target", choices=TARGETS, default="sin")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("verify", help="run the invariant checks")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--only", nargs="*", choices=sorted(CHECKS))
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except VerificationFailure as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (OSError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ReluForgeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


run_cli = main

if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 injective, 1 not injective, 2 inconclusive, 3 usage or
input error.  Commands without a verdict exit 0 on success.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import conv, dense, dss, gaussian, network, stability
from .dss import Verdict
from .errors import InjectCheckError, NotInjective
from .io import (
    conv_from_dict,
    dumps_json,
    fmt_float,
    format_matrix_csv,
    load_conv,
    load_layer,
    load_network,
    network_to_obj,
    read_matrix_csv,
    read_vector_csv,
)
from .numeric import RANK_TOL, Prng, Sampler

EXIT_CODES = {Verdict.INJECTIVE: 0, Verdict.NON_INJECTIVE: 1, Verdict.INCONCLUSIVE: 2}
EXIT_USAGE = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _int_tuple(text):
    try:
        vals = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--budget-wedges", type=_positive_int, default=dss.WEDGE_BUDGET,
                   help="maximum number of wedges or regions to enumerate")
    p.add_argument("--tol-rank", type=_positive_float, default=RANK_TOL,
                   help="relative rank tolerance")
    p.add_argument("--out", help="write the result here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (falls back to INJECTCHECK_THREADS)")
    return p


def build_parser():
    common = _common()
    parser = _Parser(prog="injectcheck", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("check-layer", parents=[common], help="certify one dense layer")
    p.add_argument("input", help="matrix CSV or layer JSON")
    p.add_argument("--bias", help="bias CSV (single row or column)")
    p.add_argument("--activation", choices=dense.ACTIVATIONS, default=None)
    p.add_argument("--alpha", type=float, default=None, help="leaky ReLU slope")
    p.add_argument("--orthant", action="store_true",
                   help="only consider inputs in the nonnegative orthant")
    p.add_argument("--evidence", action="store_true", help="include the per-wedge rank table")

    p = sub.add_parser("check-conv", parents=[common], help="certify a convolutional layer")
    p.add_argument("input", help="kernel bank JSON")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--padding", type=_int_tuple, help="box shape P, e.g. 2,2")
    g.add_argument("--search-padding", type=_int_tuple, metavar="P_MAX")
    g.add_argument("--full", action="store_true",
                   help="certify the full convolution matrix of the bank's signal shape")

    p = sub.add_parser("lipschitz", parents=[common], help="inverse Lipschitz constant")
    p.add_argument("input", help="matrix CSV")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--exact", action="store_true")
    g.add_argument("--sampled", type=_positive_int, metavar="TRIALS")
    p.add_argument("--pairs", type=_positive_int, default=10000)
    p.add_argument("--pairs-csv", help="write (input distance, output distance) rows here")

    p = sub.add_parser("gaussian-study", parents=[common], help="Gaussian expansivity study")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--c-grid", type=_float_list, required=True)
    p.add_argument("--trials", type=_positive_int, default=200)
    p.add_argument("--exact-max-n", type=int, default=gaussian.EXACT_MAX_N)

    p = sub.add_parser("check-network", parents=[common], help="certify a ReLU network")
    p.add_argument("input", help="network JSON")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true", default=True)
    g.add_argument("--layerwise", action="store_true")

    p = sub.add_parser("cascade", parents=[common], help="build a projection cascade")
    p.add_argument("--dims", type=_int_tuple, required=True, help="d_0,d_1,...")
    p.add_argument("--certify", action="store_true", help="also run the exact checker")

    sub.add_parser("thresholds", parents=[common], help="print the expansivity thresholds")

    p = sub.add_parser("construct", parents=[common], help="random injective layer")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--minimal", action="store_true")
    g.add_argument("--expanded", action="store_true")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--m", type=_positive_int, help="rows for --expanded (>= 2n)")
    return parser


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("INJECTCHECK_THREADS")
    if env:
        try:
            v = int(env)
        except ValueError:
            raise UsageError(f"INJECTCHECK_THREADS must be an integer, got {env!r}")
        if v < 1:
            raise UsageError("INJECTCHECK_THREADS must be >= 1")
        return v
    return 1


def _emit(args, text):
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_cert(args, cert, extra=None, include_evidence=False):
    doc = {"seed": args.seed}
    doc.update(cert.to_dict(include_evidence=include_evidence))
    if extra:
        doc.update(extra)
    if args.format == "csv":
        text = "# seed={}\nverdict,method,wedge_count\n{},{},{}\n".format(
            args.seed, cert.verdict.value, cert.method,
            "" if cert.wedge_count is None else cert.wedge_count)
    else:
        text = dumps_json(doc)
    _emit(args, text)
    return EXIT_CODES[cert.verdict]


def cmd_check_layer(args):
    if args.input.endswith(".json"):
        layer = load_layer(args.input)
    else:
        layer = dense.DenseLayer(read_matrix_csv(args.input))
    bias = read_vector_csv(args.bias) if args.bias else layer.bias
    layer = dense.DenseLayer(layer.weight, bias, args.activation or layer.activation,
                             args.alpha if args.alpha is not None else layer.alpha)
    prng = Prng(args.seed)
    if args.orthant:
        if layer.activation != "relu" or np.any(layer.bias != 0):
            raise UsageError("--orthant supports bias-free ReLU layers only")
        cert = dss.certify_dss_orthant(layer.weight, budget=args.budget_wedges, tol=args.tol_rank,
                                       record_evidence=args.evidence)
    elif args.evidence and layer.activation == "relu" and not np.any(layer.bias != 0):
        cert = dss.certify_dss_all(layer.weight, budget=args.budget_wedges, tol=args.tol_rank,
                                   prng=prng, record_evidence=True)
    else:
        cert = dense.check_dense(layer, budget=args.budget_wedges, tol=args.tol_rank, prng=prng)
    return _emit_cert(args, cert, include_evidence=args.evidence)


def _channel_counts(spec, P):
    """Closed-form and exact kernel counts for the widest kernel of the bank."""
    O = tuple(max(k.width[i] for k in spec.kernels) for i in range(len(P)))
    out = {"kernel_width": list(O), "formula": None, "exact": None}
    try:
        out["formula"] = conv.min_channels(O, P)
    except InjectCheckError:
        pass
    try:
        out["exact"] = conv.min_channels_exact(O, P)
    except InjectCheckError:
        pass
    return out


def cmd_check_conv(args):
    spec = load_conv(args.input)
    if args.padding:
        cert = conv.check_conv(spec.kernels, args.padding, budget=args.budget_wedges)
        return _emit_cert(args, cert, {"padding": list(args.padding),
                                       "min_channels": _channel_counts(spec, args.padding)})
    if args.search_padding:
        found = conv.search_padding(spec.kernels, args.search_padding, budget=args.budget_wedges)
        if found is None:
            cert = dss.InjectivityCertificate(
                Verdict.INCONCLUSIVE, method="padding-search",
                notes=[f"no box up to {args.search_padding} certifies the bank"])
            return _emit_cert(args, cert, {"padding": None})
        P, cert = found
        return _emit_cert(args, cert, {"padding": list(P)})
    cert = conv.cross_check_full(spec, budget=args.budget_wedges)
    return _emit_cert(args, cert, {"signal_shape": list(spec.signal_shape),
                                   "boundary": spec.boundary})


def cmd_lipschitz(args):
    W = read_matrix_csv(args.input)
    prng = Prng(args.seed)
    if args.exact:
        try:
            report = stability.inverse_lipschitz_exact(W, budget=args.budget_wedges,
                                                       pairs=args.pairs, prng=prng)
        except NotInjective as exc:
            _emit(args, dumps_json({"seed": args.seed, "verdict": "NonInjective",
                                    "error": str(exc)}))
            return 1
        doc = report.to_dict()
    else:
        doc = {
            "C_exact": None,
            "C_sampled": stability.inverse_lipschitz_sampled(W, args.sampled, prng.fork(0)),
            "empirical_min_ratio": stability.empirical_min_ratio(W, None, args.pairs, prng.fork(1)),
            "argmin_wedge": None,
        }
    if args.pairs_csv:
        x0, x1 = stability.sample_pairs(W.shape[1], args.pairs, Sampler(prng.fork(2)))
        d_in, d_out = stability.pair_distances(W, None, x0, x1)
        Path(args.pairs_csv).write_text(
            f"# seed={args.seed}\ninput_distance,output_distance\n"
            + "".join(f"{fmt_float(a)},{fmt_float(b)}\n" for a, b in zip(d_in, d_out)))
    doc = {"seed": args.seed, **doc}
    _emit(args, dumps_json(doc))
    return 0


def cmd_gaussian_study(args):
    study = gaussian.run_expansivity_study(args.n, args.c_grid, args.trials, args.seed,
                                           exact_max_n=args.exact_max_n,
                                           exact_budget=min(args.budget_wedges,
                                                            gaussian.EXACT_BUDGET),
                                           threads=_threads(args))
    if args.format == "json":
        rows = [{"c": r.c, "m": r.m, "mean_active_count": r.mean_active_count,
                 "dss_at_mean_freq": r.dss_at_mean_freq,
                 "exact_injective_freq": r.exact_injective_freq} for r in study.rows]
        _emit(args, dumps_json({"seed": args.seed, "n": args.n, "trials": args.trials,
                                "rows": rows}))
    else:
        _emit(args, study.to_csv())
    return 0


def cmd_check_network(args):
    net = load_network(args.input)
    if args.layerwise:
        cert = network.certify_layerwise(net, budget=args.budget_wedges, tol=args.tol_rank)
    else:
        cert = network.certify_exact(net, budget=args.budget_wedges, tol=args.tol_rank)
    return _emit_cert(args, cert)


def cmd_cascade(args):
    net = network.build_cascade(network.CascadeSpec(list(args.dims)), Prng(args.seed))
    doc = network_to_obj(net, seed=args.seed)
    doc["dims"] = list(args.dims)
    code = 0
    if args.certify:
        cert = network.certify_exact(net, budget=args.budget_wedges, tol=args.tol_rank)
        doc["certificate"] = cert.to_dict()
        code = EXIT_CODES[cert.verdict]
    _emit(args, dumps_json(doc))
    return code


def cmd_thresholds(args):
    doc = {
        "seed": args.seed,
        "union_bound_threshold": gaussian.union_bound_threshold(),
        "cstar_lower": gaussian.cstar_lower_solve(),
    }
    if args.format == "csv":
        _emit(args, "name,value\nunion_bound_threshold,{}\ncstar_lower,{}\n".format(
            fmt_float(doc["union_bound_threshold"]), fmt_float(doc["cstar_lower"])))
    else:
        _emit(args, dumps_json(doc))
    return 0


def cmd_construct(args):
    n = args.n
    extra = 0
    if args.expanded:
        m = args.m if args.m is not None else 2 * n + 1
        if m < 2 * n:
            raise UsageError(f"--m must be at least 2n = {2 * n}")
        extra = m - 2 * n
    W = dense.random_minimal(n, Prng(args.seed), extra_rows=extra)
    if args.format == "json":
        _emit(args, dumps_json({"seed": args.seed, "weight": W.tolist()}))
    else:
        _emit(args, format_matrix_csv(W, comments=[f"seed={args.seed}"]))
    return 0


COMMANDS = {
    "check-layer": cmd_check_layer,
    "check-conv": cmd_check_conv,
    "lipschitz": cmd_lipschitz,
    "gaussian-study": cmd_gaussian_study,
    "check-network": cmd_check_network,
    "cascade": cmd_cascade,
    "thresholds": cmd_thresholds,
    "construct": cmd_construct,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InjectCheckError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

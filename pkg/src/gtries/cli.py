"""Command-line front end.

Every subcommand takes the model from ``--config`` (JSON) and/or ``--M``/``--p``;
flags override config values. Results go to ``--out`` or standard output.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import jsonschema

from . import asymptotics, gtrie, montecarlo, recurrence
from .errors import BatchFailed, CapExceeded, ValidationError
from .model import DEFAULT_ROOT_K, validate_params

EXIT_OK, EXIT_VALIDATION, EXIT_CAP, EXIT_VERDICT = 0, 2, 3, 4

_INT = {"type": "integer"}
_POS = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}


def _section(**props):
    return {"type": "object", "properties": props, "additionalProperties": False}


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "M": _POS,
        "p": {"type": "array", "minItems": 2,
              "items": {"anyOf": [{"type": "number"}, {"type": "string"}]}},
        "root_k": {"type": "integer", "minimum": 0},
        "moments": _section(n_max=_POS, n2_max=_INT),
        "simulate": _section(n={"type": "integer", "minimum": 0}, trials=_POS, seed=_INT,
                             table_cutoff=_INT, depth_cap=_POS, node_cap=_POS),
        "analyze": _section(root_k={"type": "integer", "minimum": 0}),
        "build": _section(n={"type": "integer", "minimum": 0}, seed=_INT, depth_cap=_POS,
                          node_cap=_POS, dot={"type": "string"}),
        "verify-clt": _section(ladder={"type": "array", "items": _POS, "minItems": 1},
                               trials=_POS, seed=_INT,
                               thresholds=_section(skew=_NUM, exkurt=_NUM, ks=_NUM)),
        "transfer": _section(alpha=_NUM, alpha_offset=_NUM, n_max=_POS, tol=_NUM),
    },
}

ANALYZE_SCHEMA = {
    "type": "object",
    "required": ["rho", "periodic", "a", "roots", "c", "leading_mean_amplitude",
                 "fluctuation_min", "fluctuation_max", "variance_exponent"],
    "properties": {
        "rho": _NUM, "periodic": {"type": "boolean"}, "a": _NUM,
        "roots": {"type": "array", "items": {"type": "array", "items": _NUM,
                                             "minItems": 2, "maxItems": 2}},
        "c": {"type": ["number", "null"]},
        "leading_mean_amplitude": _NUM, "fluctuation_min": _NUM, "fluctuation_max": _NUM,
        "variance_exponent": _NUM,
    },
}

CLT_SCHEMA = {
    "type": "object",
    "required": ["master_seed", "trials", "rungs", "verdict"],
    "properties": {
        "rungs": {"type": "array", "items": {
            "type": "object",
            "required": ["n", "trials", "mean", "var", "skew", "exkurt", "ks", "verdict"],
        }},
        "verdict": {"enum": ["pass", "fail"]},
    },
}


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    jsonschema.validate(cfg, CONFIG_SCHEMA)
    return cfg


def _pick(flag, section: dict, key: str, default=None):
    if flag is not None:
        return flag
    return section.get(key, default)


def _model(args, cfg):
    M = _pick(args.M, cfg, "M")
    p = args.p.split(",") if args.p is not None else cfg.get("p")
    if M is None or p is None:
        raise ValidationError("the model needs both M and p (via --config or --M/--p)")
    return validate_params(p, M)


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_analyze(args, cfg) -> int:
    params = _model(args, cfg)
    sec = cfg.get("analyze", {})
    K = _pick(args.root_k, sec, "root_k", cfg.get("root_k", DEFAULT_ROOT_K))
    report = asymptotics.analyze(params, K).to_dict()
    jsonschema.validate(report, ANALYZE_SCHEMA)
    _emit(_json(report), args.out)
    return EXIT_OK


def cmd_moments(args, cfg) -> int:
    params = _model(args, cfg)
    sec = cfg.get("moments", {})
    N = _pick(args.n_max, sec, "n_max", recurrence.DEFAULT_N)
    N2 = min(_pick(args.n2_max, sec, "n2_max", recurrence.DEFAULT_N2), N)
    if N < 2:
        raise ValidationError("--n-max must be at least 2")
    table = recurrence.moment_table(params, N, max(N2, 0))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "mean", "var"])
    for n in range(N + 1):
        var = repr(float(table.var[n])) if n <= table.N2 else ""
        w.writerow([n, repr(float(table.mean[n])), var])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _caps(args, sec):
    return montecarlo.Caps(
        depth_cap=_pick(args.depth_cap, sec, "depth_cap", montecarlo.DEFAULT_DEPTH_CAP),
        node_cap=_pick(args.node_cap, sec, "node_cap", gtrie.DEFAULT_NODE_CAP),
    )


def cmd_simulate(args, cfg) -> int:
    params = _model(args, cfg)
    sec = cfg.get("simulate", {})
    n = _pick(args.n, sec, "n")
    if n is None:
        raise ValidationError("simulate needs --n")
    trials = _pick(args.trials, sec, "trials", 1000)
    seed = _pick(args.seed, sec, "seed", 0)
    cutoff = _pick(args.table_cutoff, sec, "table_cutoff", montecarlo.DEFAULT_K0)
    caps = _caps(args, sec)
    raw = montecarlo.simulate_batch(params, n, trials, seed, caps, cutoff, args.threads)
    capped = int((raw < 0).sum())
    if capped > montecarlo.CAPPED_FRACTION * trials:
        raise BatchFailed(f"{capped} of {trials} trials hit a cap")
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "value"])
        for t, v in enumerate(raw):
            w.writerow([t, "" if v < 0 else int(v)])
        _emit(buf.getvalue(), args.out)
    else:
        label, m, v = montecarlo.reference_moments(params, n, args.standardization)
        stats = montecarlo.summarize(raw[raw >= 0], n, label, m, v, capped)
        _emit(_json(stats.to_dict()), args.out)
    return EXIT_OK


def cmd_build(args, cfg) -> int:
    params = _model(args, cfg)
    sec = cfg.get("build", {})
    n = _pick(args.n, sec, "n")
    if n is None:
        raise ValidationError("build needs --n")
    seed = _pick(args.seed, sec, "seed", 0)
    depth_cap = _pick(args.depth_cap, sec, "depth_cap", gtrie.DEFAULT_DEPTH_CAP)
    node_cap = _pick(args.node_cap, sec, "node_cap", gtrie.DEFAULT_NODE_CAP)
    dot = _pick(args.dot, sec, "dot")
    trie = gtrie.build_gtrie(gtrie.make_labelings(params, n, seed), depth_cap, node_cap,
                             M=params.M, A=params.A)
    st = gtrie.count_stats(trie)
    if dot:
        with open(dot, "w", encoding="utf-8") as fh:
            fh.write(gtrie.export_dot(trie))
    _emit(_json({"n": n, "seed": seed, "S": st.S, "L": st.L, "K": st.K, "R": st.R}), args.out)
    return EXIT_OK


def cmd_verify_clt(args, cfg) -> int:
    params = _model(args, cfg)
    sec = cfg.get("verify-clt", {})
    ladder = args.ladder or sec.get("ladder", [256, 1024, 4096])
    trials = _pick(args.trials, sec, "trials", 10_000)
    seed = _pick(args.seed, sec, "seed", 0)
    th = dict(sec.get("thresholds", {}))
    for key in ("skew", "exkurt", "ks"):
        if getattr(args, key) is not None:
            th[key] = getattr(args, key)
    report = montecarlo.clt_report(params, ladder, trials, seed, th,
                                   threads=args.threads).to_dict()
    jsonschema.validate(report, CLT_SCHEMA)
    _emit(_json(report), args.out)
    return EXIT_OK if report["verdict"] == "pass" else EXIT_VERDICT


def cmd_transfer(args, cfg) -> int:
    params = _model(args, cfg)
    sec = cfg.get("transfer", {})
    alpha = _pick(args.alpha, sec, "alpha")
    if alpha is None:
        alpha = params.rho + _pick(args.alpha_offset, sec, "alpha_offset", 0.5)
    N = _pick(args.n_max, sec, "n_max", recurrence.DEFAULT_N)
    tol = _pick(args.tol, sec, "tol", 0.05)
    rep = recurrence.transfer_check(params, alpha, N)
    gaps = rep.gaps
    ok = bool(gaps) and gaps[-1] <= tol and all(b < a for a, b in zip(gaps, gaps[1:]))
    out = {"alpha": alpha, "P_alpha": rep.P_alpha,
           "ratio_at": [[n, r] for n, r in rep.ratio_at], "tol": tol,
           "verdict": "pass" if ok else "fail"}
    _emit(_json(out), args.out)
    return EXIT_OK if ok else EXIT_VERDICT


def _threads(value):
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be positive")
    return n


def _ladder(text):
    return [int(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--M", type=int, help="branching factor")
    common.add_argument("--p", help="comma-separated probabilities, fractions allowed")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--threads", type=_threads, default=None,
                        help="worker threads (default: $GTRIE_THREADS or 1)")

    parser = argparse.ArgumentParser(prog="gtries", description="G-trie moments, asymptotics and simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="asymptotic report as JSON")
    a.add_argument("--root-k", type=int)
    a.set_defaults(func=cmd_analyze)

    m = sub.add_parser("moments", parents=[common], help="exact mean and variance table as CSV")
    m.add_argument("--n-max", type=int)
    m.add_argument("--n2-max", type=int)
    m.set_defaults(func=cmd_moments)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo samples of S_n")
    s.add_argument("--n", type=int)
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--table-cutoff", type=int)
    s.add_argument("--depth-cap", type=int)
    s.add_argument("--node-cap", type=int)
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--standardization", choices=("auto", "exact", "asymptotic", "sample"),
                   default="auto")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("build", parents=[common], help="build one G-trie and count its nodes")
    b.add_argument("--n", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--depth-cap", type=int)
    b.add_argument("--node-cap", type=int)
    b.add_argument("--dot", help="write the trie as DOT to this path")
    b.set_defaults(func=cmd_build)

    v = sub.add_parser("verify-clt", parents=[common], help="CLT statistics over an n ladder")
    v.add_argument("--ladder", type=_ladder)
    v.add_argument("--trials", type=int)
    v.add_argument("--seed", type=int)
    v.add_argument("--skew", type=float)
    v.add_argument("--exkurt", type=float)
    v.add_argument("--ks", type=float)
    v.set_defaults(func=cmd_verify_clt)

    t = sub.add_parser("transfer", parents=[common], help="check a_n P(alpha) / n^alpha -> 1")
    t.add_argument("--alpha", type=float)
    t.add_argument("--alpha-offset", type=float, help="alpha = rho + offset (default 0.5)")
    t.add_argument("--n-max", type=int)
    t.add_argument("--tol", type=float)
    t.set_defaults(func=cmd_transfer)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is None:
        args.threads = montecarlo.default_threads()
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (ValidationError, jsonschema.ValidationError, ValueError, OSError) as exc:
        print(f"error: {getattr(exc, 'message', None) or exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (CapExceeded, BatchFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

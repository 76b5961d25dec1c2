"""Command line entry point: ``heavylocal <command> [<subcommand>] [options]``.

Every command validates its inputs before computing and exits with status 2
on a validation error.  JSON reports carry a ``schema`` field; CSV outputs
start with a ``# schema: ...`` comment line.  Options may also come from a
JSON file given with ``--config`` (keys are option names, flags override).
"""
import argparse
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .apps import QueueModel, RiskModel, mg1_bounds, rows_to_csv, run_scenario
from .classify import classify_report, probe_points
from .distops import DivergenceError, Exponential, from_dict, shift_to_satisfy_34
from .supremum import (WalkModel, CompoundGeometric, block_rng, cg_windows, default_workers, kesten_verify,
                       ladder_analytic, ladder_lattice, ladder_mc, mc_supremum, report_json, theorem31_bounds)
from .tailfn import ParameterError

SCHEMA = "heavylocal.cli/1"
EPS = 2.0 ** -52
KINDS = ("ex21", "ex22", "ex25")


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- distribution specs

def _num(v):
    try:
        return int(v)
    except ValueError:
        return float(v)


def _kv(text):
    out = {}
    for item in filter(None, text.split(",")):
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _num(v.strip())
    return out


def spec_to_dict(spec):
    """Parse ``kind:k=v,...|op:k=v|op`` (or ``@file.json``) into a distribution document.

    Examples: ``ex21:m=1,alpha=1.5,x1=100``, ``exp:rate=2``,
    ``ex21:m=1,alpha=1.5,x1=100|integrated_tail``.
    """
    if spec.startswith("@"):
        with open(spec[1:]) as fh:
            return json.load(fh)
    parts = spec.split("|")
    head, _, params = parts[0].partition(":")
    head = head.strip().lower()
    kv = _kv(params)
    if head == "exp":
        d = {"kind": "exp", "rate": float(kv.get("rate", 1.0))}
    elif head in KINDS:
        missing = {"m", "alpha", "x1"} - set(kv)
        if missing:
            raise UsageError(f"{head} needs {sorted(missing)}")
        d = {"kind": head, "m": kv["m"], "alpha": kv["alpha"], "x1": kv["x1"], "n_max": kv.get("n_max", 12)}
    else:
        raise UsageError(f"unknown distribution kind {head!r} (choose exp, {', '.join(KINDS)})")
    d["transforms"] = []
    for t in parts[1:]:
        op, _, params = t.partition(":")
        d["transforms"].append({"op": op.strip(), **_kv(params)})
    return d


def build_dist(doc):
    if isinstance(doc, str):
        doc = spec_to_dict(doc)
    if doc.get("kind") not in ("exp",) + KINDS:
        raise UsageError(f"unknown distribution kind {doc.get('kind')!r}")
    if doc.get("kind") in KINDS and not float(doc["m"]).is_integer():
        raise ParameterError(f"m must be an integer >= 1 (got {doc['m']!r})")
    return from_dict(doc)


def _dist_from_args(a):
    if getattr(a, "dist", None):
        return build_dist(a.dist)
    if not getattr(a, "kind", None):
        raise UsageError("give --dist SPEC or --kind with its parameters")
    if a.kind == "exp":
        doc = {"kind": "exp", "rate": a.rate}
    else:
        if a.m is None or a.alpha is None or a.x1 is None:
            raise UsageError(f"--kind {a.kind} needs --m, --alpha and --x1")
        doc = {"kind": a.kind, "m": a.m, "alpha": a.alpha, "x1": a.x1, "n_max": a.n_max}
    doc["transforms"] = [spec_to_dict("exp|" + t)["transforms"][0] for t in (a.transform or [])]
    return build_dist(doc)


def _down(spec):
    if spec in (None, "", "const", "constant"):
        return None
    return build_dist(spec)


# ---------------------------------------------------------------- output

def _json_text(obj):
    return report_json(obj) + "\n"


def _emit(args, text):
    if args.out and args.out != "-":
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _workers(args):
    return args.workers if args.workers else default_workers()


def _floats(xs):
    return [float(x) for x in xs]


# ---------------------------------------------------------------- commands

def cmd_dist_eval(a):
    F = _dist_from_args(a)
    rows = []
    for x in a.at:
        t = F.tail(x)
        r = {"x": x, "tail": t, "tail_error": abs(t) * EPS}
        try:
            d = F.density(x)
            r.update(density=d, density_error=abs(d) * EPS)
        except (AttributeError, NotImplementedError):
            pass
        if a.T:
            w = F.local_prob(x, a.T)
            r.update(local=w, local_error=abs(w) * EPS)
        rows.append(r)
    out = {"schema": SCHEMA, "command": "dist eval", "distribution": F.to_dict(), "T": a.T, "rows": rows}
    if a.mean:
        try:
            m = F.mean()
            out.update(mean=m, mean_error=abs(m) * 8 * EPS)
        except DivergenceError:
            out.update(mean=None, mean_error=None, note="mean diverges")
    return _json_text(out)


def cmd_dist_sample(a):
    if a.n < 1:
        raise UsageError("--n must be positive")
    F = _dist_from_args(a)
    from .supremum import BLOCK
    chunks = []
    for b in range(-(-a.n // BLOCK)):
        chunks.append(F.sample(block_rng(a.seed, b), min(BLOCK, a.n - b * BLOCK)))
    xs = np.concatenate(chunks)
    buf = io.StringIO()
    buf.write(f"# schema: {SCHEMA} sample seed={a.seed} n={a.n}\n")
    buf.write("i,value\n")
    for i, v in enumerate(xs):
        buf.write(f"{i},{float(v)!r}\n")
    return buf.getvalue()


def cmd_classify(a):
    F = _dist_from_args(a)
    rep = classify_report(F, T=a.T, tol=a.tol, local=not a.no_local)
    if a.emit_series:
        os.makedirs(a.emit_series, exist_ok=True)
        for name, s in rep.series.items():
            if not s.values:
                continue
            with open(os.path.join(a.emit_series, f"{name}.csv"), "w") as fh:
                fh.write(f"# schema: {SCHEMA} series={name} quantity={s.quantity.value}\n")
                fh.write(s.to_csv())
    return _json_text(rep.to_dict())


def _walk_model(a, doc=None):
    doc = doc or {}
    up = build_dist(doc["up"]) if "up" in doc else _dist_from_args(a)
    down = _down(doc["down"]) if "down" in doc else _down(getattr(a, "down", None))
    c = doc.get("c", getattr(a, "c", None))
    info = None
    if c in (None, "auto"):
        sh = doc.get("shift", {})
        target = sh.get("mean_target", getattr(a, "mean_target", None))
        if target == "EY":
            target = up.mean()
        _, c, info = shift_to_satisfy_34(up, mean_target=target, margin=sh.get("margin", 0.05))
    return WalkModel(up, float(c), down), info


def cmd_walk_ladder(a):
    model, _ = _walk_model(a)
    if a.method == "analytic":
        lad = ladder_analytic(model)
    elif a.method == "lattice":
        if model.down is not None:
            raise UsageError("the lattice ladder needs constant down-steps")
        lad = ladder_lattice(model, a.step or model.c / 64, a.x_max)
        fine = ladder_lattice(model, lad.G.step / 2, a.x_max)
    else:
        lad = ladder_mc(model, a.paths, seed=a.seed, workers=_workers(a))
    d = lad.to_dict()
    if a.method == "lattice":
        # the lattice p converges at first order in the step
        p_ext = 2 * fine.p - lad.p
        d.update(p_bracket=[fine.extra["p_lower"], fine.extra["p_upper"]], p_extrapolated=p_ext,
                 p_extrapolated_error=abs(p_ext - fine.p))
    return _json_text({"schema": SCHEMA, "command": "walk ladder", "model": model.to_dict(),
                       "method": a.method, "ladder": d})


def cmd_walk_supremum(a):
    model, info = _walk_model(a)
    xs = _floats(a.at)
    out = {"schema": SCHEMA, "command": "walk supremum", "model": model.to_dict(), "T": a.T, "shift": info}
    if not a.no_cg:
        if isinstance(model.down, Exponential):
            lad = ladder_analytic(model)
            res = cg_windows(CompoundGeometric(lad), xs, a.T)
        elif model.down is None:
            step = a.step or model.c / 64
            top = max(xs) + a.T
            coarse = ladder_lattice(model, step, top)
            fine = ladder_lattice(model, coarse.G.step / 2, top)
            res = cg_windows(CompoundGeometric(coarse, refined=fine), xs, a.T)
        else:
            raise UsageError("compound geometric route needs constant or exponential down-steps; use --no-cg")
        out["cg"] = [r.to_dict() for r in res]
    if a.paths:
        mc = mc_supremum(model, [(x, a.T) for x in xs], a.paths, seed=a.seed, workers=_workers(a))
        out["mc"] = mc.to_dict()
    return _json_text(out)


def _load(path):
    with open(path) as fh:
        return json.load(fh)


def cmd_walk_theorem31(a):
    doc = _load(a.scenario) if a.scenario else {}
    model, info = _walk_model(a, doc)
    rep = theorem31_bounds(model, T=float(doc.get("T", a.T)), x_max=float(doc.get("x_max", a.x_max)),
                           step=doc.get("step", a.step), horizon_cycles=int(doc.get("horizon_cycles", 1)),
                           mc_paths=int(doc.get("mc_paths", a.paths or 0)), seed=int(doc.get("seed", a.seed)),
                           workers=_workers(a))
    rep["shift"] = info
    return _json_text(rep)


def cmd_walk_kesten(a):
    G = _dist_from_args(a)
    rep = kesten_verify(G, T=a.T, eps=a.eps, n_max=a.n_fold, probes=_floats(a.probes) if a.probes else None,
                        x_max=a.x_max, x1=a.threshold, C_T=a.C_T, step=a.step)
    return _json_text(rep)


def _windows_doc(xs, T):
    return [{"x": float(x), "T": float(T)} for x in xs]


def cmd_risk(a):
    if a.scenario:
        doc = _load(a.scenario)
    else:
        if not a.claims or a.c is None or not a.at:
            raise UsageError("give --scenario or --claims, --c and --at")
        doc = {"model": "risk", "claims": spec_to_dict(a.claims),
               "interarrival": spec_to_dict(a.interarrival), "c": a.c,
               "windows": _windows_doc(a.at, a.T), "seed": a.seed,
               "budgets": {"mc_paths": a.paths} if a.paths else {}}
    doc.setdefault("seed", a.seed)
    rows = run_scenario(doc, workers=_workers(a))
    return rows_to_csv(rows)


def _horizon_points(F, T, x_max, cycles=1):
    pr = [(c, float(x)) for c, x in probe_points(F) if x + T <= x_max]
    if not pr:
        raise UsageError("no service breakpoints below --x-max")
    keep = sorted({c for c, _ in pr})[-cycles:]
    return [x for c, x in pr if c in keep]


def cmd_mg1(a):
    if a.scenario:
        doc = _load(a.scenario)
        service = build_dist(doc["service"])
    else:
        if a.eta is None or not a.service:
            raise UsageError("give --scenario or --eta and --service")
        service = build_dist(a.service)
        QueueModel(a.eta, service)  # validate before any work
        xs = _floats(a.at) if a.at else _horizon_points(service, a.T, a.x_max)
        doc = {"model": "mg1", "eta": a.eta, "service": service.to_dict(), "windows": _windows_doc(xs, a.T)}
        if a.step:
            doc["step"] = a.step
    rows = run_scenario(doc, workers=_workers(a))
    if a.format == "csv":
        return rows_to_csv(rows)
    q = QueueModel(float(doc["eta"]), service)
    bounds = {str(T): mg1_bounds(q, T).to_dict() for T in sorted({r["T"] for r in rows})}
    return _json_text({"schema": SCHEMA, "command": "mg1", "model": q.to_dict(), "bounds": bounds,
                       "rows": rows})


# ---------------------------------------------------------------- parser

def _common(p):
    p.add_argument("--seed", type=int, default=0, help="master seed for every random stream")
    p.add_argument("--workers", type=int, default=None,
                   help="process count for simulations (default: $HEAVYLOCAL_WORKERS or 1)")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--config", default=None, help="JSON file of option defaults")


def _dist_opts(p):
    p.add_argument("--dist", help="distribution spec, e.g. ex21:m=1,alpha=1.5,x1=100|integrated_tail")
    p.add_argument("--kind", choices=("exp",) + KINDS)
    p.add_argument("--m", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--x1", type=float)
    p.add_argument("--n-max", type=int, default=12)
    p.add_argument("--rate", type=float, default=1.0, help="rate for --kind exp")
    p.add_argument("--transform", action="append", help="transform op:k=v (repeatable, applied in order)")


def _walk_opts(p):
    _dist_opts(p)
    p.add_argument("--c", type=float, help="down-step scale; omit to choose it by the shift rule")
    p.add_argument("--down", default="const", help="'const' or a distribution spec for Z")
    p.add_argument("--mean-target", type=float, help="drift target for the automatic shift")


def build_parser():
    ap = argparse.ArgumentParser(prog="heavylocal", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"heavylocal {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    dist = sub.add_parser("dist", help="evaluate or sample a distribution").add_subparsers(dest="sub", required=True)
    p = dist.add_parser("eval", help="tails, densities, window masses and mean")
    _dist_opts(p)
    _common(p)
    p.add_argument("--at", type=float, nargs="+", required=True)
    p.add_argument("--T", type=float, default=None, help="also report the window mass on (x, x+T]")
    p.add_argument("--mean", action="store_true")
    p.set_defaults(fn=cmd_dist_eval)
    p = dist.add_parser("sample", help="draw samples as CSV")
    _dist_opts(p)
    _common(p)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(fn=cmd_dist_sample)

    p = sub.add_parser("classify", help="estimate the class constants and verdicts")
    _dist_opts(p)
    _common(p)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--no-local", action="store_true")
    p.add_argument("--emit-series", metavar="DIR", help="write one ratio-series CSV per quantity into DIR")
    p.set_defaults(fn=cmd_classify)

    walk = sub.add_parser("walk", help="random walk supremum").add_subparsers(dest="sub", required=True)
    p = walk.add_parser("ladder", help="ascent probability and ladder heights")
    _walk_opts(p)
    _common(p)
    p.add_argument("--method", choices=("analytic", "lattice", "mc"), default="analytic")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--step", type=float)
    p.add_argument("--x-max", type=float, default=100.0)
    p.set_defaults(fn=cmd_walk_ladder)
    p = walk.add_parser("supremum", help="window masses of the supremum")
    _walk_opts(p)
    _common(p)
    p.add_argument("--at", type=float, nargs="+", required=True)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--paths", type=int, default=0, help="MC paths (0 skips simulation)")
    p.add_argument("--step", type=float)
    p.add_argument("--no-cg", action="store_true", help="skip the compound geometric route")
    p.set_defaults(fn=cmd_walk_supremum)
    p = walk.add_parser("verify-theorem31", help="probe table of the local bounds for the supremum")
    _walk_opts(p)
    _common(p)
    p.add_argument("--scenario", help="JSON scenario: up, c|shift, down, T, x_max, step, horizon_cycles")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--x-max", type=float, default=8000.0)
    p.add_argument("--step", type=float)
    p.add_argument("--paths", type=int, default=0)
    p.set_defaults(fn=cmd_walk_theorem31)
    p = walk.add_parser("kesten", help="check the geometric bound on n-fold window ratios")
    _dist_opts(p)
    _common(p)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--n-fold", type=int, default=8, help="largest convolution power checked")
    p.add_argument("--x-max", type=float)
    p.add_argument("--threshold", type=float, help="Kesten threshold x1 (default: searched)")
    p.add_argument("--C-T", dest="C_T", type=float)
    p.add_argument("--probes", type=float, nargs="+")
    p.add_argument("--step", type=float)
    p.set_defaults(fn=cmd_walk_kesten)

    p = sub.add_parser("risk", help="local ruin probabilities (CSV)")
    _common(p)
    p.add_argument("--scenario")
    p.add_argument("--claims", help="claim distribution spec")
    p.add_argument("--interarrival", default="exp:rate=1")
    p.add_argument("--c", type=float, help="premium rate")
    p.add_argument("--at", type=float, nargs="+", help="initial capitals")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--paths", type=int, default=0, help="MC budget for non-exponential inter-arrivals")
    p.set_defaults(fn=cmd_risk)

    p = sub.add_parser("mg1", help="M/G/1 waiting-time windows and sandwich bounds")
    _common(p)
    p.add_argument("--scenario")
    p.add_argument("--eta", type=float)
    p.add_argument("--service", help="service distribution spec")
    p.add_argument("--at", type=float, nargs="+", help="window left ends (default: last service cycle)")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--x-max", type=float, default=8000.0)
    p.add_argument("--step", type=float)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(fn=cmd_mg1)
    return ap


def _leaf(ap, argv):
    """Subparser that handles ``argv`` (for applying ``--config`` defaults)."""
    node = ap
    for tok in argv:
        acts = [x for x in node._actions if isinstance(x, argparse._SubParsersAction)]
        if not acts or tok not in acts[0].choices:
            if acts:
                continue
            break
        node = acts[0].choices[tok]
    return node


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse(argv):
    ap = build_parser()
    path = _config_path(argv)
    if path:
        cfg = _load(path)
        leaf = _leaf(ap, argv)
        known = {x.dest: x for x in leaf._actions}
        bad = sorted(k for k in cfg if k.replace("-", "_") not in known)
        if bad:
            raise UsageError(f"unknown config keys {bad}")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        for k in cfg:
            known[k].required = False
        leaf.set_defaults(**cfg)
    args = ap.parse_args(argv)
    if getattr(args, "workers", None) is not None and args.workers < 1:
        raise UsageError("--workers must be at least 1")
    return args


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse(argv)
        text = args.fn(args)
        _emit(args, text)
    except (ParameterError, UsageError, DivergenceError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"heavylocal: error: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

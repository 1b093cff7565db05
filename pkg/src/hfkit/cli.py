"""Command line front end: ``hfkit <command> [options]``.

Exit codes: 0 when the computation succeeded (and any verdict it produced
holds), 1 when it succeeded but the verdict is false, 2 on errors or bad
usage. ``--config FILE`` reads a JSON object whose keys (option names with
``_`` or ``-``) override the command line. Results go to ``--out`` as JSON,
or to stdout when ``--out`` is omitted.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .asymptotics import (CircleSampler, broken_circle_osc, laurent_fit, separation_floor,
                          spiral_threshold)
from .fit import FitError, NotAGraphError, bilipschitz_estimate, fit_helicoid
from .gauss import (LABEL_NAMES, LevelTracer, check_gauss_identity, check_h_inequality,
                    decompose, gauss_from_graph, gauss_from_mesh, log_gauss_branch)
from .geometry import MultiGraph, polar_derivatives, second_fundamental
from .mse import SolveConfig, perturb_and_solve, solve_dirichlet
from .sheets import NotEmbeddedError, certify_sheet, detect_blowup_pairs
from .surfaces import (HelicoidModel, Region, WeierstrassAlpha, embeddedness_verdict,
                       make_surface, weierstrass_curve)

EXIT_OK, EXIT_FALSE, EXIT_ERROR = 0, 1, 2


class UsageError(ValueError):
    pass


# ------------------------------------------------------------ arg types


def angle(text):
    """Float or an expression in pi such as ``-3pi``, ``3*pi`` or ``pi/2``."""
    from sympy import pi
    from sympy.parsing.sympy_parser import (implicit_multiplication_application,
                                            parse_expr, standard_transformations)

    try:
        return float(text)
    except ValueError:
        pass
    try:
        e = parse_expr(str(text), local_dict={"pi": pi},
                       transformations=standard_transformations + (implicit_multiplication_application,))
        return float(e)
    except Exception:
        raise argparse.ArgumentTypeError(f"not an angle: {text!r}")


def positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def nonneg(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def count(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text}")
    return v


def floats(text):
    """Comma separated list of floats."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated float list: {text!r}")


# --------------------------------------------------------------- parser


def _common(p, needs_in=True):
    if needs_in:
        p.add_argument("--in", dest="input", required=True, help="input container (JSON)")
    p.add_argument("--out", help="output JSON path (default: stdout)")
    p.add_argument("--csv", help="also write the command's table as CSV")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="overrides the global --seed")


def build_parser():
    ap = argparse.ArgumentParser(prog="hfkit", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON file of option overrides")
    ap.add_argument("--seed", type=int, default=0)
    sub = ap.add_subparsers(dest="command", metavar="command")
    sub.required = True
    ap.commands = sub.choices

    p = sub.add_parser("generate", help="oracle surfaces and Weierstrass axis curves")
    _common(p, needs_in=False)
    p.add_argument("--kind", required=True,
                   choices=["helicoid", "plane", "catenoid", "expr", "weierstrass"])
    p.add_argument("--pitch", type=float, default=1.0)
    p.add_argument("--neck", type=positive, default=1.0)
    p.add_argument("--slope", type=float, nargs=2, default=[0.0, 0.0])
    p.add_argument("--expr", help="u(rho, theta) as a sympy expression")
    p.add_argument("--r1", type=float, default=1.0, help="inner radius; <= 0 meshes to the axis")
    p.add_argument("--r2", type=positive, default=100.0)
    p.add_argument("--theta1", type=angle, default=-3 * math.pi)
    p.add_argument("--theta2", type=angle, default=3 * math.pi)
    p.add_argument("--n-rho", type=count, default=49)
    p.add_argument("--n-theta", type=count, default=97)
    p.add_argument("--uniform", action="store_true", help="uniform radial spacing")
    p.add_argument("--ball", type=positive, help="clip axis meshes to this ball radius")
    p.add_argument("--alpha", type=float, nargs=2, help="Weierstrass (alpha1, alpha2)")
    p.add_argument("--t-range", type=float, nargs=2, default=[-12.0, 12.0])
    p.add_argument("--samples", type=count, default=4096)
    p.add_argument("--seg-tol", type=positive, default=1e-9)

    p = sub.add_parser("solve", help="Newton solve of the Dirichlet problem")
    _common(p)
    p.add_argument("--bump", help="boundary bump b(rho, theta) (sympy) added on --edge")
    p.add_argument("--edge", default="outer", choices=["outer", "inner", "start", "end", "all"])
    p.add_argument("--initial", default=None, choices=["zero", "harmonic-extension", "input"])
    p.add_argument("--max-iters", type=count, default=50)
    p.add_argument("--tol", type=positive, default=1e-10)
    p.add_argument("--damping", default="line-search", choices=["line-search", "none"])

    p = sub.add_parser("certify", help="weak or strong epsilon-sheet certificate")
    _common(p)
    p.add_argument("--eps", type=nonneg, required=True)
    p.add_argument("--N", type=positive, required=True)
    p.add_argument("--scale", type=positive)
    p.add_argument("--kind", default="weak", choices=["weak", "strong"])
    p.add_argument("--residual-tol", type=positive, default=1e-8)
    p.add_argument("--fd", action="store_true", help="ignore closed forms; finite differences only")

    p = sub.add_parser("blowup", help="detect blow-up pairs")
    _common(p)
    p.add_argument("--C", type=positive, default=math.sqrt(2.0))
    p.add_argument("--within", type=positive)
    p.add_argument("--tol", type=nonneg, default=1e-6)
    p.add_argument("--metric", default="extrinsic", choices=["extrinsic", "intrinsic"])

    p = sub.add_parser("laurent", help="Laurent coefficient of u_x - i u_y")
    _common(p)
    p.add_argument("--r1", type=positive)
    p.add_argument("--rho0", type=positive)
    p.add_argument("--radii", type=floats)
    p.add_argument("--eps", type=nonneg, default=0.0)
    p.add_argument("--C0", type=positive)
    p.add_argument("--samples", type=count, default=512)

    p = sub.add_parser("osc", help="oscillation of u_theta on broken circles")
    _common(p)
    p.add_argument("--rho", type=floats)
    p.add_argument("--C", type=positive, default=100.0)
    p.add_argument("--eps", type=nonneg, default=0.0)
    p.add_argument("--samples", type=count, default=512)

    p = sub.add_parser("spiral", help="strict spiraling threshold C3")
    _common(p)
    p.add_argument("--C2", type=positive)
    p.add_argument("--eps", type=nonneg, default=0.0)
    p.add_argument("--radii", type=floats)
    p.add_argument("--samples", type=count, default=512)

    p = sub.add_parser("gauss", help="Gauss map and the |grad x3| identity")
    _common(p)
    p.add_argument("--tol", type=positive, default=1e-4)
    p.add_argument("--fd", action="store_true")

    p = sub.add_parser("levels", help="level sets of x3")
    _common(p)
    p.add_argument("--levels", type=floats)
    p.add_argument("--random", type=count, help="number of seeded uniform levels")
    p.add_argument("--expect", type=int, help="required component count per level")

    p = sub.add_parser("decompose", help="axial / sheet decomposition")
    _common(p)
    p.add_argument("--eps0", type=float, default=0.5)
    p.add_argument("--C", type=positive, default=math.sqrt(2.0))
    p.add_argument("--within", type=positive)
    p.add_argument("--R1-mult", dest="R1_mult", type=positive, default=3.0)

    p = sub.add_parser("fit", help="least-squares helicoid fit")
    _common(p)
    p.add_argument("--restarts", type=count, default=8)

    p = sub.add_parser("bilip", help="bi-Lipschitz interval against a fitted helicoid")
    _common(p)
    p.add_argument("--model", help="fit output to use instead of fitting")
    p.add_argument("--restarts", type=count, default=8)
    p.add_argument("--search", type=positive)

    p = sub.add_parser("report", help="CSV and SVG radial profiles of a graph")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--eps", type=nonneg, default=0.0)
    p.add_argument("--samples", type=count, default=512)
    return ap


# --------------------------------------------------------------- config


def _config_tokens(ap, argv):
    """Translate ``--config`` into extra argv tokens.

    Command options are appended after the command line ones, so argparse
    keeps the config value and validates it like a flag. Global options
    (``seed``) are accepted by every command too.
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return argv
    path = Path(known.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    command = next((t for t in argv if t in ap.commands), None)
    if command is None:
        raise UsageError("no command given")
    sub = ap.commands[command]
    opts = {a.dest: a for a in sub._actions if a.option_strings and a.dest != "help"}
    tail = []
    for key, val in cfg.items():
        key = str(key).replace("-", "_")
        key = "input" if key == "in" else key
        if key == "command":
            if val != command:
                raise UsageError(f"config is for {val!r}, command line runs {command!r}")
            continue
        act = opts.get(key)
        if act is None:
            raise UsageError(f"unknown config key {key!r} for {command}")
        flag = max(act.option_strings, key=len)
        if isinstance(act, argparse._StoreTrueAction):
            if val:
                tail.append(flag)
            continue
        if val is None:
            continue
        if isinstance(val, list):
            vals = [str(v) for v in val] if act.nargs else [",".join(str(v) for v in val)]
        else:
            vals = [str(val)]
        tail += [flag, *vals]
    return list(argv) + tail


ANGLE_FLAGS = ("--theta1", "--theta2")


def _join_angles(argv):
    """``--theta1 -2pi`` -> ``--theta1=-2pi``: argparse only accepts a leading
    minus in a separate value token when the value is a plain number."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in ANGLE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def _check_paths(args):
    for name in ("input", "model"):
        v = getattr(args, name, None)
        if v is not None and not Path(v).is_file():
            raise UsageError(f"input file not found: {v}")
    for name in ("out", "csv"):
        v = getattr(args, name, None)
        if v is not None and not Path(v).resolve().parent.is_dir():
            raise UsageError(f"output directory does not exist: {Path(v).parent}")
    od = getattr(args, "out_dir", None)
    if od is not None and not Path(od).resolve().parent.is_dir():
        raise UsageError(f"parent of output directory does not exist: {od}")


# ------------------------------------------------------------- commands


def _emit(args, kind, payload, csv_text=None):
    doc = io.report(kind, payload)
    if args.out:
        io.write_json(args.out, doc)
    else:
        sys.stdout.write(io.dumps(doc))
    if getattr(args, "csv", None) and csv_text is not None:
        io.write_csv(args.csv, csv_text)


def _graph(args, use_analytic=True) -> MultiGraph:
    u = io.load_graph(args.input)
    if not use_analytic:
        u = u.with_values(u.values, None, u.source)
    return u


def _mesh_with_A2(args):
    m = io.load_mesh(args.input)
    if m.A2 is None:
        m = m.with_A2(second_fundamental(m))
    return m


def _table(header, rows):
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(repr(float(v)) if not isinstance(v, (int, np.integer, str)) else str(v)
                              for v in r))
    return "\n".join(lines) + "\n"


def _expr_callable(text):
    import sympy

    rho, theta = sympy.symbols("rho theta", real=True)
    try:
        e = sympy.sympify(text, locals={"rho": rho, "theta": theta})
    except sympy.SympifyError as exc:
        raise UsageError(f"cannot parse expression {text!r}: {exc}")
    extra = e.free_symbols - {rho, theta}
    if extra:
        raise UsageError(f"expression uses unknown symbols {sorted(map(str, extra))}")
    f = sympy.lambdify((rho, theta), e, "numpy")
    return lambda r, t: np.broadcast_to(np.asarray(f(r, t), float), np.shape(r))


def cmd_generate(args):
    if args.kind == "weierstrass":
        if args.alpha is None:
            raise UsageError("--kind weierstrass needs --alpha A1 A2")
        alpha = WeierstrassAlpha(*args.alpha)
        curve = weierstrass_curve(alpha, args.t_range, args.samples)
        v = embeddedness_verdict(curve, args.seg_tol)
        _emit(args, "weierstrass", {"alpha": list(args.alpha), "t_range": list(args.t_range),
                                    "samples": args.samples, "seg_tol": args.seg_tol,
                                    "verdict": v.to_dict(), "points": curve.points,
                                    "t": curve.t}, curve.to_csv())
        return EXIT_OK
    params = {"helicoid": {"pitch": args.pitch}, "plane": {"slope": list(args.slope)},
              "catenoid": {"neck": args.neck}, "expr": {"expr": args.expr}}[args.kind]
    if args.kind == "expr" and not args.expr:
        raise UsageError("--kind expr needs --expr")
    region = Region(args.r1, args.r2, args.theta1, args.theta2, args.n_rho, args.n_theta,
                    not args.uniform, args.ball)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        u, m = make_surface(args.kind, params, region)
    for w in caught:
        print(f"hfkit: warning: {w.message}", file=sys.stderr)
    doc = io.surface_to_dict(u, m)
    doc.pop("format")
    doc.pop("type")
    csv_text = None
    if u is not None:
        rho, theta = u.grid.mesh()
        csv_text = _table(["rho", "theta", "u"], zip(rho.ravel(), theta.ravel(), u.values.ravel()))
    _emit(args, "surface", doc, csv_text)
    return EXIT_OK


def cmd_solve(args):
    base = io.load_graph(args.input)
    cfg = dict(max_newton_iters=args.max_iters, residual_tol=args.tol, damping=args.damping)
    if args.bump and args.initial in (None, "input"):
        f = _expr_callable(args.bump)
        edges = ["outer", "inner", "start", "end"] if args.edge == "all" else [args.edge]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rep = perturb_and_solve(base, {e: f for e in edges}, SolveConfig(**cfg))
        for w in caught:
            print(f"hfkit: warning: {w.message}", file=sys.stderr)
    else:
        from .mse import bump_array

        boundary = base.values.copy()
        if args.bump:
            f = _expr_callable(args.bump)
            edges = ["outer", "inner", "start", "end"] if args.edge == "all" else [args.edge]
            boundary = boundary + bump_array(base.grid, {e: f for e in edges})
        init = args.initial or "harmonic-extension"
        ig = base if init == "input" else init
        src = {"kind": "solved", "boundary": base.source, "bump": args.bump, "edge": args.edge}
        rep = solve_dirichlet(base.grid, boundary, SolveConfig(initial_guess=ig, **cfg),
                              frame_from=base, source=src)
    payload = {"report": rep.to_dict(), "solution": io.graph_to_dict(rep.solution),
               "config": {**cfg, "bump": args.bump, "edge": args.edge,
                          "initial": args.initial or ("input" if args.bump else "harmonic-extension")}}
    _emit(args, "solve", payload, rep.history_csv())
    return EXIT_OK if rep.converged else EXIT_FALSE


def cmd_certify(args):
    u = _graph(args, not args.fd)
    try:
        cert = certify_sheet(u, args.eps, args.N, args.kind, args.scale, args.residual_tol,
                             use_analytic=not args.fd)
    except NotEmbeddedError as e:
        _emit(args, "certificate", {"verdict": False, "reasons": [str(e)], "kind": args.kind,
                                    "epsilon": args.eps, "N": args.N})
        return EXIT_FALSE
    rows = [(k, c["value"], c["bound"]) for k, c in sorted(cert.checks.items())]
    _emit(args, "certificate", cert.to_dict(), _table(["check", "value", "bound"], rows))
    return EXIT_OK if cert.verdict else EXIT_FALSE


def cmd_blowup(args):
    m = _mesh_with_A2(args)
    rep = detect_blowup_pairs(m, args.C, args.within, args.tol, args.metric)
    rows = [(p.vertex, p.y[0], p.y[1], p.y[2], p.s, p.A2) for p in rep]
    _emit(args, "blowup", rep.to_dict(), _table(["vertex", "y1", "y2", "y3", "s", "A2"], rows))
    return EXIT_OK


def cmd_laurent(args):
    u = _graph(args)
    r1 = args.r1 if args.r1 is not None else u.grid.rect.r1
    fit = laurent_fit(u, r1, args.radii, args.rho0, args.eps, args.C0, n=args.samples)
    rows = zip(fit.radii, fit.remainder_sup, fit.bound_rhs)
    _emit(args, "laurent", fit.to_dict(), _table(["rho", "remainder_sup", "bound_rhs"], rows))
    if args.C0 is not None and np.any(fit.remainder_sup > fit.bound_rhs):
        return EXIT_FALSE
    return EXIT_OK


def cmd_osc(args):
    u = _graph(args)
    sampler = CircleSampler(u, args.samples)
    radii = u.grid.rho if args.rho is None else args.rho
    rows, out = [], []
    ok = True
    for r in radii:
        o = broken_circle_osc(u, r, sampler=sampler)
        b = o.bound(args.C, args.eps)
        ok &= o.osc <= b
        out.append({**o.to_dict(), "bound": b})
        rows.append((o.rho, o.osc, o.rho_quarter, o.w_abs, b, o.integral_utheta))
    _emit(args, "osc", {"C": args.C, "epsilon": args.eps, "holds": bool(ok), "table": out},
          _table(["rho", "osc", "rho_quarter", "w_abs", "bound", "integral_utheta"], rows))
    return EXIT_OK if ok else EXIT_FALSE


def cmd_spiral(args):
    u = _graph(args)
    C2 = args.C2 if args.C2 is not None else separation_floor(u, args.samples)
    rep = spiral_threshold(u, C2, args.eps, args.radii, n=args.samples)
    _emit(args, "spiral", {**rep.to_dict(), "C2_default": args.C2 is None}, rep.to_csv())
    return EXIT_OK if rep.finite else EXIT_FALSE


def cmd_gauss(args):
    u, m = io.load(args.input)
    if u is not None:
        if args.fd:
            u = u.with_values(u.values, None, u.source)
        f = gauss_from_graph(u, use_analytic=not args.fd)
    else:
        f = gauss_from_mesh(m)
    defect = check_gauss_identity(f)
    live = ~f.mask
    a = np.abs(f.g[live])
    payload = {"identity_defect": defect, "tol": args.tol, "holds": bool(defect <= args.tol),
               "masked": int(np.count_nonzero(f.mask)), "nodes": int(f.mask.size),
               "abs_g_min": float(a.min()), "abs_g_max": float(a.max())}
    if u is not None:
        # log branch once around the innermost circle
        path = np.stack([np.zeros(u.grid.n_theta, int), np.arange(u.grid.n_theta)], axis=1)
        try:
            br = log_gauss_branch(f, path)
            payload["branch"] = {"h1_min": float(br.h1.min()), "h1_max": float(br.h1.max()),
                                 "h2_change": float(br.h2[-1] - br.h2[0]),
                                 "h_inequality_excess": check_h_inequality(f, br)}
        except ValueError as e:
            payload["branch"] = {"error": str(e)}
    g = f.g.reshape(-1)
    gx = f.grad_x3.reshape(-1)
    rows = [(i, g[i].real, g[i].imag, gx[i]) for i in range(len(g))]
    _emit(args, "gauss", payload, _table(["node", "g_re", "g_im", "grad_x3"], rows))
    return EXIT_OK if defect <= args.tol else EXIT_FALSE


def cmd_levels(args):
    m = io.load_mesh(args.input)
    tracer = LevelTracer(m)
    if args.levels:
        levels = args.levels
    else:
        k = args.random or 10
        rng = np.random.default_rng(args.seed)
        span = tracer.zmax - tracer.zmin
        levels = np.sort(rng.uniform(tracer.zmin + 1e-3 * span, tracer.zmax - 1e-3 * span, k))
    table, rows = [], []
    ok = True
    for c in levels:
        tr = tracer.trace(float(c))
        table.append({"level": tr.level, "components": tr.count, "closed": tr.closed,
                      "perturbed": tr.perturbed})
        rows.append((tr.level, tr.count, sum(tr.closed)))
        if args.expect is not None and tr.count != args.expect:
            ok = False
    _emit(args, "levels", {"seed": args.seed, "expect": args.expect, "holds": bool(ok),
                           "levels": table},
          _table(["level", "components", "closed"], rows))
    return EXIT_OK if ok else EXIT_FALSE


def cmd_decompose(args):
    m = _mesh_with_A2(args)
    pairs = detect_blowup_pairs(m, args.C, args.within)
    lab = decompose(m, pairs.pairs, args.eps0, args.R1_mult)
    payload = {**lab.to_dict(), "pairs": pairs.to_dict(), "ok": lab.ok,
               "labels": [LABEL_NAMES[int(k)] for k in lab.labels]}
    _emit(args, "decompose", payload, lab.to_csv(m))
    return EXIT_OK if lab.ok else EXIT_FALSE


def cmd_fit(args):
    m = io.load_mesh(args.input)
    res = fit_helicoid(m, restarts=args.restarts, seed=args.seed)
    _emit(args, "fit", res.to_dict())
    return EXIT_OK


def _model_from_file(path):
    d = io.read_json(path)
    md = d.get("model")
    if md is None:
        raise io.FormatError(f"{path}: no helicoid model")
    return HelicoidModel(float(md["pitch"]), np.asarray(md["rotation"], float),
                         np.asarray(md["translation"], float)), d.get("residual")


def cmd_bilip(args):
    m = io.load_mesh(args.input)
    if args.model:
        model, resid = _model_from_file(args.model)
        fit_ok = None
    else:
        res = fit_helicoid(m, restarts=args.restarts, seed=args.seed)
        model, resid, fit_ok = res.model, res.residual, res.converged
    try:
        rep = bilipschitz_estimate(m, model, search=args.search, fit_residual=resid)
    except NotAGraphError as e:
        _emit(args, "bilip", {"verdict": False, "reason": str(e), "interval": None,
                              "n_unhit": int(len(e.zero)), "n_multiple": int(len(e.multiple)),
                              "model": model.to_dict(), "fit_residual": resid,
                              "fit_converged": fit_ok})
        return EXIT_FALSE
    _emit(args, "bilip", {**rep.to_dict(), "verdict": True, "fit_converged": fit_ok}, rep.to_csv())
    return EXIT_OK


def cmd_report(args):
    from .plotting import profile_svg

    u = _graph(args)
    out = Path(args.out_dir)
    out.mkdir(exist_ok=True)
    g = u.grid
    pd = polar_derivatives(u)
    grad = np.sqrt(pd.grad_norm2())
    A2 = second_fundamental(u).values
    cols = {"rho": g.rho, "sup_grad": grad.max(axis=1), "sup_A2": A2.max(axis=1)}
    full_turn = g.rect.theta1 <= -math.pi + 1e-12 and g.rect.theta2 >= math.pi - 1e-12
    if full_turn:
        sampler = CircleSampler(u, args.samples)
        osc = [broken_circle_osc(u, r, sampler=sampler) for r in g.rho]
        cols["osc"] = np.array([o.osc for o in osc])
        cols["min_utheta"] = np.array([o.min_utheta for o in osc])
        cols["w_abs"] = np.array([o.w_abs for o in osc])
        cols["osc_scale"] = np.array([o.rho_quarter + args.eps * o.w_abs for o in osc])
    names = list(cols)
    io.write_csv(out / "profiles.csv", _table(names, zip(*(cols[k] for k in names))))
    files = ["profiles.csv"]
    profile_svg(out / "gradient.svg", g.rho, {"sup |grad u|": cols["sup_grad"]},
                "gradient", "sup over theta")
    profile_svg(out / "curvature.svg", g.rho, {"sup |A|^2": cols["sup_A2"]},
                "curvature", "sup over theta")
    files += ["gradient.svg", "curvature.svg"]
    if full_turn:
        profile_svg(out / "oscillation.svg", g.rho,
                    {"osc u_theta": cols["osc"], "rho^-1/4 + eps|w|": cols["osc_scale"]},
                    "broken-circle oscillation", "")
        profile_svg(out / "spiraling.svg", g.rho, {"min u_theta": cols["min_utheta"]},
                    "spiraling", "", logy=False)
        files += ["oscillation.svg", "spiraling.svg"]
    summary = {"input": Path(args.input).name, "files": files, "eps": args.eps,
               "grid": g.to_dict(), "source": u.source}
    io.write_json(out / "report.json", io.report("report", summary))
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "certify": cmd_certify,
            "blowup": cmd_blowup, "laurent": cmd_laurent, "osc": cmd_osc,
            "spiral": cmd_spiral, "gauss": cmd_gauss, "levels": cmd_levels,
            "decompose": cmd_decompose, "fit": cmd_fit, "bilip": cmd_bilip,
            "report": cmd_report}


def main(argv=None) -> int:
    ap = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        argv = _config_tokens(ap, argv)
    except (UsageError, OSError, json.JSONDecodeError) as e:
        ap.print_usage(sys.stderr)
        print(f"hfkit: error: {e}", file=sys.stderr)
        return EXIT_ERROR
    try:
        args = ap.parse_args(_join_angles(argv))
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_ERROR
    try:
        _check_paths(args)
        return COMMANDS[args.command](args)
    except UsageError as e:
        ap.print_usage(sys.stderr)
        print(f"hfkit: error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, RuntimeError, OSError, KeyError, json.JSONDecodeError, FitError) as e:
        print(f"hfkit: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR


run = main

if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

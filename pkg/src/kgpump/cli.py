"""Command-line front end.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.
Errors go to stderr as ``kgpump: <kind> error [<stage>] <Type>: <message>``.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import artifacts, direct, experiments, layer, post, pre
from .config import Config, ConfigError
from .demod import DemodulationError
from .phase import GeometryError, find_resonance_curve, integrate_characteristics

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2
NUMERIC_ERRORS = (direct.DirectError, experiments.ExperimentError, layer.LayerError,
                  post.PostResonanceError, pre.PreResonanceError, GeometryError,
                  DemodulationError, FloatingPointError, np.linalg.LinAlgError)


def _range(text):
    try:
        a, b = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A:B, got {text!r}") from None
    if not a < b:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return a, b


def _eps_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(p):
    p.add_argument("--config", help="sectioned key = value file")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one setting (repeatable, wins over the file)")
    p.add_argument("--output", help="output directory (else $KGPUMP_OUTPUT_DIR or [output] directory)")
    p.add_argument("--seed", type=int, help="seed recorded with the run")
    p.add_argument("--workers", type=int, help="worker processes (default: available cores)")
    p.add_argument("--eps", type=float, help="shorthand for run.epsilon")
    p.add_argument("--gamma", type=float, help="shorthand for run.gamma")
    p.add_argument("--phase", help="shorthand for phase.name")


def build_parser():
    ap = argparse.ArgumentParser(prog="kgpump", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="direct solve; probe and snapshot CSV")
    _common(p)
    p.add_argument("--print-config", action="store_true", help="print the effective settings and exit")
    p.add_argument("--snapshot-every", type=float, metavar="T2", help="snapshot spacing in t2")

    p = sub.add_parser("predict-pre", help="pre-resonance envelopes U^n_k on (t2, x2)")
    _common(p)
    p.add_argument("--order", type=int, help="truncation order N")
    p.add_argument("--t2-range", type=_range, help="A:B (default t2_min to the pre-region edge)")
    p.add_argument("--points", type=int, default=201)

    p = sub.add_parser("predict-layer", help="layer coefficient and accumulated amplitude")
    _common(p)
    p.add_argument("--xi-range", type=_range, default=(-4.0, 4.0), help="curve parameter A:B")
    p.add_argument("--points", type=int, default=17)

    p = sub.add_parser("predict-post", help="envelope equation from the crossing")
    _common(p)
    p.add_argument("--t2-end", type=float, required=True)
    p.add_argument("--dt2", type=float)
    p.add_argument("--store-every", type=int, default=50)

    p = sub.add_parser("solitons", help="soliton census of an envelope CSV (xi, re, im)")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--D", type=float, default=-1.0, help="dispersion coefficient")
    p.add_argument("--g", type=float, help="nonlinear coefficient (default 3 gamma)")
    p.add_argument("--omega", type=float, default=1.0)

    p = sub.add_parser("match", help="direct solution against all three regimes")
    _common(p)
    p.add_argument("--order", type=int, help="pre-resonance truncation order")

    p = sub.add_parser("sweep", help="match over several eps")
    _common(p)
    p.add_argument("--eps-list", "--eps-values", dest="eps_list", type=_eps_list,
                   default=[0.2, 0.1, 0.05], help="comma-separated eps values")
    p.add_argument("--order", type=int)

    p = sub.add_parser("scenario", help="named scenarios")
    p.add_argument("name", choices=("soliton",))
    _common(p)
    return ap


def _sweep_eps_alias(argv):
    # `sweep --eps 0.2,0.1,0.05` takes a list, unlike the scalar --eps elsewhere
    argv = list(argv)
    if argv and argv[0] == "sweep":
        for j, a in enumerate(argv):
            if a == "--eps":
                argv[j] = "--eps-list"
            elif a.startswith("--eps="):
                argv[j] = "--eps-list=" + a.split("=", 1)[1]
    return argv


def load_config(args):
    cfg = Config.from_file(args.config) if args.config else Config()
    sets = list(args.set)
    if getattr(args, "eps", None) is not None:
        sets.append(f"run.epsilon={args.eps!r}")
    if getattr(args, "gamma", None) is not None:
        sets.append(f"run.gamma={args.gamma!r}")
    if getattr(args, "phase", None):
        sets.append(f"phase.name={args.phase}")
    if args.seed is not None:
        sets.append(f"output.seed={args.seed}")
    if args.workers is not None:
        sets.append(f"output.workers={args.workers}")
    return cfg.override(sets) if sets else cfg


def _out(cfg, args):
    return artifacts.output_dir(cfg, args.output)


def cmd_simulate(cfg, args):
    if args.print_config:
        sys.stdout.write(cfg.to_ini())
        return EXIT_OK
    params = cfg.run_params()
    if args.snapshot_every:
        t2_end = params.epsilon ** 2 * params.t_end
        n = int(np.floor(t2_end / args.snapshot_every + 1e-9))
        snaps = tuple(float(np.round(args.snapshot_every * (j + 1), 12)) for j in range(n))
        params = cfg.run_params(snapshot_t2=snaps)
    tic = time.perf_counter()
    traj = direct.run(params)
    d = _out(cfg, args)
    artifacts.write_probes(traj, d)
    artifacts.write_snapshots(traj, params.grid, d, params.epsilon)
    summary = {"config_hash": cfg.digest(), "backend": traj.backend, "nsteps": params.nsteps,
               "t_end": params.t_end, "max_abs_u": float(np.max(np.abs(traj.final.u))),
               "snapshots_t2": [params.epsilon ** 2 * s.t for s in traj.snapshots]}
    if traj.energy.size > 1:
        summary["energy_drift"] = direct.drift(traj.energy)
    artifacts.write_json(d / "simulate.json", experiments._clean(summary))
    artifacts.write_text(d / "config.ini", cfg.to_ini())
    print(f"simulate: {params.nsteps} steps in {time.perf_counter() - tic:.1f} s ({traj.backend}); "
          f"output in {d}")
    return EXIT_OK


def cmd_predict_pre(cfg, args):
    eps = cfg["run"]["epsilon"]
    order = args.order or cfg["solver"]["pre_order"]
    phase, force = cfg.phase(), cfg.force()
    reg = experiments.regions_from(cfg)[0]
    if args.t2_range:
        t2a, t2b = args.t2_range
    else:
        t2a = cfg["regions"]["t2_min"]
        g = lambda t: -float(pre.eval_l(phase, t, 0.0)) - reg.bound(eps)
        t2b = t2a
        while t2b < 10 and g(t2b + 0.01) > 0:
            t2b += 0.01
    x1w = experiments._x1_window(cfg, force, cfg.run_params().grid, eps)
    t2 = np.linspace(t2a, t2b, args.points)
    x1 = np.linspace(-x1w, x1w, args.points)
    x2 = eps * x1
    T, X1 = np.meshgrid(t2, x1, indexing="ij")
    X2 = eps * X1
    lv = np.asarray(pre.eval_l(phase, T, X2), float)
    if np.any(np.abs(lv) <= pre.L_MIN):
        raise pre.SingularityProximityError("export window touches l = 0")
    d = _out(cfg, args)
    closed = {2: pre.u2, 3: pre.u3, 4: pre.u4}
    for n in range(2, order + 1):
        for k in pre.omega_set(n).positive:
            if k == 1 and n in closed:
                vals = np.asarray(closed[n](phase, force, T, X2, X1), complex) * np.ones(T.shape)
            else:
                vals = np.array([pre._grid_values(n, k, phase, force, t, x2, x1, cfg["run"]["gamma"], 13)
                                 for t in t2])
            rows = (T.ravel(), X2.ravel(), vals.real.ravel(), vals.imag.ravel(), np.abs(vals).ravel())
            artifacts.write_csv(d / f"pre_U{n}_{k}.csv", ("t2", "x2", "re", "im", "abs"), rows,
                                comment=f"n = {n}, k = {k}, eps = {eps!r}, x1 = x2 / eps")
    print(f"predict-pre: orders 2..{order} on t2 in [{t2a:.4g}, {t2b:.4g}]; output in {d}")
    return EXIT_OK


def _curve(cfg, phase, eps, xi_range, n_lines=65):
    t2_end = eps ** 2 * cfg.t_end()
    half = 1.2 * eps * max(abs(xi_range[0]), abs(xi_range[1])) + 1e-3
    curve = find_resonance_curve(phase, (1e-6, t2_end), (-half, half), eps, n_lines=n_lines)
    if curve.empty:
        raise GeometryError("no resonance crossing in the configured window")
    return curve


def cmd_predict_layer(cfg, args):
    eps = cfg["run"]["epsilon"]
    phase, force = cfg.phase(), cfg.force()
    curve = _curve(cfg, phase, eps, args.xi_range)
    xi = np.linspace(args.xi_range[0], args.xi_range[1], args.points)
    lm = cfg["solver"]["lam_match"]
    d = _out(cfg, args)
    rows = []
    for x in xi:
        char = integrate_characteristics(phase, curve.point(x), (-0.999 / eps, 0.999 / eps), eps,
                                         n_samples=801)
        coef = layer.layer_leading(char, force, phase, layer.auto_lam_match(char) if lm is None else lm)
        w = coef.values
        rows.append(np.column_stack([np.full(w.size, x), coef.sigma, coef.lam, w.real, w.imag]))
    artifacts.write_csv(d / "layer_W11.csv", ("xi", "sigma", "lambda", "re_W", "im_W"),
                        np.vstack(rows), comment=f"eps = {eps!r}")
    acc = layer.accumulated_amplitude(curve, force, phase, eps, xi, lam_match=lm)
    artifacts.write_csv(d / "accumulated.csv", ("xi", "re_acc", "im_acc", "abs_acc", "phi"),
                        (xi, acc.values.real, acc.values.imag, np.abs(acc.values), acc.phi),
                        comment=f"eps = {eps!r}")
    print(f"predict-layer: {xi.size} characteristics; output in {d}")
    return EXIT_OK


def cmd_predict_post(cfg, args):
    params = cfg.run_params()
    pred = experiments.Predictor(cfg, params)
    if not pred.simple or pred.t2c is None:
        raise experiments.ExperimentError("predict-post", "needs an x2-independent phase with a crossing")
    init = pred.nlse_init()
    co = pred.nlse_coeffs()
    dt2 = args.dt2 or cfg["solver"]["nlse_dt2"]
    trj = post.nlse_evolve(init, args.t2_end, dt2, params.gamma, co, store_every=args.store_every,
                           tol_decay=cfg["solver"]["tol_decay"])
    d = _out(cfg, args)
    T, XI = np.meshgrid(trj.t2, trj.xi, indexing="ij")
    v = trj.values
    artifacts.write_csv(d / "post_envelope.csv", ("t2", "xi", "re", "im", "abs"),
                        (T.ravel(), XI.ravel(), v.real.ravel(), v.imag.ravel(), np.abs(v).ravel()),
                        comment=f"eps = {params.epsilon!r}, D = {co.D!r}, g = {co.g!r}")
    cen = post.soliton_census(init, params.gamma, D=co.D, g=co.g, omega=pred.omega,
                              tol_decay=cfg["solver"]["tol_decay"])
    artifacts.write_json(d / "census.json", _census_dict(cen))
    print(f"predict-post: {trj.t2.size} stored steps to t2 = {trj.t2[-1]:.4g}, "
          f"census {cen.count}; output in {d}")
    return EXIT_OK


def _census_dict(cen):
    return experiments._clean({
        "count": int(cen.count), "complete": bool(cen.complete), "area": cen.area,
        "eigenvalues": [[z.real, z.imag] for z in cen.eigenvalues],
        "amplitudes": list(cen.amplitudes), "velocities": list(cen.velocities),
        "jacobian": cen.jacobian})


def cmd_solitons(cfg, args):
    try:
        names, data = artifacts.read_csv(args.input)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input}: {exc}") from None
    col = {n: j for j, n in enumerate(names)}
    if not {"xi", "re", "im"} <= col.keys():
        raise ConfigError(f"{args.input}: need columns xi, re, im (have {', '.join(names)})")
    if "t2" in col and data.size:
        last = data[:, col["t2"]] == data[-1, col["t2"]]
        data = data[last]
    xi = data[:, col["xi"]]
    vals = data[:, col["re"]] + 1j * data[:, col["im"]]
    if xi.size < 8 or np.ptp(np.diff(xi)) > 1e-9 * max(abs(xi[1] - xi[0]), 1e-300):
        raise ConfigError(f"{args.input}: xi must be uniform with at least 8 samples")
    g = 3.0 * cfg["run"]["gamma"] if args.g is None else args.g
    t2 = float(data[-1, col["t2"]]) if "t2" in col else 0.0
    env = post.EnvelopeField(xi, t2, vals, post.NlseCoefficients(D=args.D, g=g))
    cen = post.soliton_census(env, D=args.D, g=g, omega=args.omega,
                              tol_decay=cfg["solver"]["tol_decay"])
    d = _out(cfg, args)
    artifacts.write_json(d / "census.json", _census_dict(cen))
    print(f"solitons: count {cen.count}, area {cen.area:.6g}; output in {d}")
    return EXIT_OK


def cmd_match(cfg, args):
    orders = {"pre": args.order} if args.order else None
    rep = experiments.compare_regimes(cfg, orders)
    d = _out(cfg, args)
    artifacts.write_json(d / "match.json", rep.to_dict())
    artifacts.write_text(d / "match.md", rep.to_markdown())
    print(rep.to_markdown(), end="")
    return EXIT_OK


def cmd_sweep(cfg, args):
    orders = {"pre": args.order} if args.order else None
    table = experiments.epsilon_sweep(cfg, args.eps_list, orders, workers=cfg.workers())
    d = _out(cfg, args)
    artifacts.write_json(d / "sweep.json", table.to_dict())
    artifacts.write_text(d / "sweep.md", table.to_markdown())
    cols = ("epsilon", "pre", "layer", "post", "pre_peak", "post_peak")
    rows = [[np.nan if r.get(c) is None else r[c] for c in cols] for r in table.rows]
    artifacts.write_csv(d / "sweep.csv", cols, rows)
    print(table.to_markdown(), end="")
    return EXIT_OK


def cmd_scenario(cfg, args):
    rep = experiments.soliton_scenario(cfg)
    d = _out(cfg, args)
    artifacts.write_json(d / "soliton.json", rep.to_dict())
    artifacts.write_text(d / "soliton.md", rep.to_markdown())
    print(rep.to_markdown(), end="")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "predict-pre": cmd_predict_pre,
            "predict-layer": cmd_predict_layer, "predict-post": cmd_predict_post,
            "solitons": cmd_solitons, "match": cmd_match, "sweep": cmd_sweep,
            "scenario": cmd_scenario}


def _report(kind, exc):
    stage = getattr(exc, "stage", None) or getattr(exc, "__module__", "").rsplit(".", 1)[-1]
    print(f"kgpump: {kind} error [{stage}] {type(exc).__name__}: {exc}", file=sys.stderr)


def dispatch(argv=None):
    argv = _sweep_eps_alias(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except NUMERIC_ERRORS as exc:
        if isinstance(exc, (direct.ConfigurationError, experiments.FocusingError)):
            _report("input", exc)
            return EXIT_INPUT
        _report("numerical", exc)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as exc:
        _report("input", exc)
        return EXIT_INPUT


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()

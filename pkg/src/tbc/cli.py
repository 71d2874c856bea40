"""Command-line front end. Every command writes its outputs plus a run manifest."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CompatibilityError, ParameterError, SchemeParseError, TbcError
from .ibvp import (
    energy_bdf2,
    gaussian_levels,
    reference_pads,
    run_cauchy,
    run_halfline_transparent,
    run_interval_transparent,
    verify_transparency,
)
from .kernels import (
    check_algebraic_constraints,
    contour_scalar_series,
    kernel_to_csv,
    laurent_projector_series,
    scalar_kernel_recursive,
)
from .scheme import PRESETS, audit_assumptions, scheme_from_json
from .stability import detect_glancing, strong_stability_probe

PRESET_PARAMS = {
    "lax_wendroff": ("mu",),
    "leap_frog": ("mu",),
    "heat_explicit": ("mu",),
    "heat_bdf2": ("mu",),
    "cn_schrodinger": ("mu1", "mu2"),
    "cn_airy": ("mu",),
    "cn_bbm": ("eps", "c", "dt", "dx"),
}
RECURSIVE = {"lax_wendroff", "leap_frog", "heat_explicit", "heat_bdf2"}

EXIT_OK, EXIT_CHECK = 0, 1


def fmt(x: float) -> str:
    return f"{x:.17g}"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _json(obj) -> str:
    def default(o):
        if isinstance(o, complex):
            return [o.real, o.imag]
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer, np.bool_)):
            return o.item()
        raise TypeError(f"not serializable: {type(o).__name__}")

    return json.dumps(obj, indent=2, sort_keys=True, default=default) + "\n"


# scheme selection -------------------------------------------------------------------


def build_scheme(args):
    if args.scheme_file:
        path = Path(args.scheme_file)
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise SchemeParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        except OSError as exc:
            raise ParameterError(f"cannot read {path}: {exc.strerror}") from exc
        try:
            return scheme_from_json(obj), None, {}
        except SchemeParseError as exc:
            raise SchemeParseError(f"{path}: {exc}") from exc
    if not args.preset:
        raise ParameterError("one of --preset or --scheme-file is required")
    name = args.preset.replace("-", "_")
    if name not in PRESETS:
        raise ParameterError(f"unknown preset {args.preset!r}; choose from {', '.join(sorted(PRESET_PARAMS))}")
    params = {}
    for key in PRESET_PARAMS[name]:
        value = getattr(args, key)
        if value is None:
            raise ParameterError(f"preset {args.preset} needs --{key}")
        params[key] = value
    return PRESETS[name](**params), name, params


def build_kernel(scheme, name, params, n_max, args):
    route = getattr(args, "route", "contour")
    if route == "recursion":
        if name not in RECURSIVE:
            raise ParameterError("--route recursion needs a preset with a closed-form recursion")
        return scalar_kernel_recursive(name, params["mu"], n_max)
    radius = args.radius if args.radius == "auto" else float(args.radius)
    return laurent_projector_series(scheme, args.eta, n_max=n_max, radius=radius, samples=args.samples)


# commands --------------------------------------------------------------------------


def cmd_analyze(args, out: Path, outputs: dict):
    scheme, _, _ = build_scheme(args)
    report = audit_assumptions(scheme, args.eta, grid=args.grid)
    d = report.to_dict()
    path = out / "analyze.json"
    write_atomic(path, _json(d))
    outputs[str(path)] = path
    lines = [
        f"scheme                   {d['label']}",
        f"solvability/index        {'PASS' if d['solvable']['pass'] else 'FAIL'}  index={d['index']}",
        f"cauchy stability         {'PASS' if d['cauchy_stable']['pass'] else 'FAIL'}  "
        f"max|z|={fmt(d['cauchy_stable']['max_modulus'])}",
        f"noncharacteristic weak   {'PASS' if d['noncharacteristic_weak']['pass'] else 'FAIL'}",
        f"noncharacteristic strong {'PASS' if d['noncharacteristic_strong']['pass'] else 'FAIL'}  "
        f"offending={d['noncharacteristic_strong']['offending']}",
        f"extreme coefficients     case {d['technical']}",
    ]
    print("\n".join(lines))
    required = (
        d["solvable"]["pass"] and d["cauchy_stable"]["pass"] and d["noncharacteristic_weak"]["pass"]
        and d["technical"] != "fail"
    )
    return EXIT_OK if required else EXIT_CHECK


def cmd_kernel(args, out: Path, outputs: dict):
    scheme, name, params = build_scheme(args)
    series = build_kernel(scheme, name, params, args.n, args)
    if series.kind == "scalar":
        scalar = series
        from .kernels import scalar_to_matrix

        matrix = scalar_to_matrix(series)
    else:
        matrix = series
        scalar = None
        if scheme.p == 1 and scheme.r == 1:
            radius = args.radius if args.radius == "auto" else float(args.radius)
            scalar = contour_scalar_series(scheme, args.eta, args.n, radius, args.samples)
    check = check_algebraic_constraints(matrix, tol=args.tol)
    files = {"kernel.csv": kernel_to_csv(scalar if scalar is not None else matrix)}
    if scalar is not None:
        files["kernel_matrix.csv"] = kernel_to_csv(matrix)
    report = {
        "label": scheme.label,
        "n_max": args.n,
        "radius": matrix.radius_used,
        "samples": matrix.samples,
        "sentinel": matrix.sentinel,
        "max_defect": check.max_defect,
        "tol": args.tol,
        "pass": check.passed,
        "growth": matrix.growth,
    }
    files["kernel_report.json"] = _json(report)
    for fname, text in files.items():
        write_atomic(out / fname, text)
        outputs[str(out / fname)] = out / fname
    print(f"kernel {scheme.label}: n_max={args.n} max constraint defect {fmt(check.max_defect)} "
          f"({'PASS' if check.passed else 'FAIL'})")
    return EXIT_OK if check.passed else EXIT_CHECK


def _read_rows(path: str) -> np.ndarray:
    """CSV rows of ``re,im`` pairs per component (header optional)."""
    rows = []
    for k, line in enumerate(Path(path).read_text().splitlines()):
        line = line.strip()
        if not line or line[0].isalpha():
            continue
        try:
            vals = [float(v) for v in line.split(",")]
        except ValueError as exc:
            raise ParameterError(f"{path}:{k + 1}: {exc}") from exc
        if len(vals) % 2:
            raise ParameterError(f"{path}:{k + 1}: expected re,im pairs")
        rows.append(np.array(vals[0::2]) + 1j * np.array(vals[1::2]))
    return np.array(rows)


def _init_levels(args, scheme, lo, hi):
    if args.init == "gaussian":
        return gaussian_levels(scheme, lo, hi, (args.support_lo, args.support_hi))
    if args.init == "impulse":
        u = np.zeros(hi - lo + 1, dtype=complex)
        u[args.impulse_at - lo] = 1.0
        return [u]
    raise ParameterError(f"unknown --init {args.init!r}")


def cmd_simulate(args, out: Path, outputs: dict):
    scheme, name, params = build_scheme(args)
    r, p, s = scheme.r, scheme.p, scheme.s
    a, b = 1 - r, args.J + p
    g = _read_rows(args.g_file) if args.g_file else None
    if args.mode == "cauchy":
        padL, padR = reference_pads(scheme, args.steps)
        lo, hi = a - padL, b + padR
        run = run_cauchy(scheme, _init_levels(args, scheme, lo, hi), args.steps, lo, hi)
    else:
        series = None
        if args.boundary == "transparent":
            series = build_kernel(scheme, name, params, args.steps + s, args)
        if args.mode == "halfline":
            _, padR = reference_pads(scheme, args.steps)
            hi = b + padR
            run = run_halfline_transparent(
                scheme, series, _init_levels(args, scheme, a, hi), args.steps, hi, g=g,
                ack_tail_drop=args.ack_tail_drop, project_g=args.project_g, boundary=args.boundary,
            )
        else:
            run = run_interval_transparent(
                scheme, series, args.J, _init_levels(args, scheme, a, b), args.steps, g_left=g,
                ack_tail_drop=args.ack_tail_drop, project_g=args.project_g, boundary=args.boundary,
            )
    window = run.restrict(a, b)
    traj = ["level,j,re,im"]
    for n, row in enumerate(window):
        for k, v in enumerate(row):
            traj.append(f"{n},{a + k},{fmt(v.real)},{fmt(v.imag)}")
    norms = np.linalg.norm(window, axis=1)
    header = "level,l2_window,l2_domain,trace_left"
    energy = None
    if name == "heat_bdf2":
        energy = np.append(energy_bdf2(window), np.nan)
        header += ",energy"
    ledger = [header]
    for n in range(len(norms)):
        row = f"{n},{fmt(norms[n])},{fmt(run.norms[n])},{fmt(run.trace_norms[n])}"
        ledger.append(row + (f",{fmt(energy[n])}" if energy is not None else ""))
    files = {"trajectory.csv": "\n".join(traj) + "\n", "norms.csv": "\n".join(ledger) + "\n"}
    for fname, text in files.items():
        write_atomic(out / fname, text)
        outputs[str(out / fname)] = out / fname
    tracked = norms if energy is None else energy[:-1]
    nonincreasing = bool(np.all(np.diff(tracked) <= 1e-12 * max(1.0, float(tracked[0]))))
    print(f"simulate {args.mode} {scheme.label}: {args.steps} steps, window norm "
          f"{fmt(norms[0])} -> {fmt(norms[-1])}, {'energy' if energy is not None else 'norm'} "
          f"nonincreasing={nonincreasing}")
    return EXIT_OK


def cmd_verify(args, out: Path, outputs: dict):
    scheme, name, params = build_scheme(args)
    series = None
    if args.boundary == "transparent":
        series = build_kernel(scheme, name, params, args.steps + scheme.s, args)
    modes = ("halfline", "interval") if args.mode == "both" else (args.mode,)
    ledger = verify_transparency(
        scheme, series, J=args.J, steps=args.steps, tol=args.tol, modes=modes, boundary=args.boundary,
        support=(args.support_lo, args.support_hi), ack_tail_drop=args.ack_tail_drop,
    )
    lines = ["mode,level,rel_error"]
    for mode, led in ledger.items():
        for n, e in enumerate(led.errors):
            lines.append(f"{mode},{n},{fmt(e)}")
    write_atomic(out / "transparency.csv", "\n".join(lines) + "\n")
    summary = {
        mode: {"max_error": led.max_error, "tol": led.tol, "pass": led.passed, "pad": list(led.pad)}
        for mode, led in ledger.items()
    }
    write_atomic(out / "transparency.json", _json({"label": scheme.label, "boundary": args.boundary, **summary}))
    for fname in ("transparency.csv", "transparency.json"):
        outputs[str(out / fname)] = out / fname
    ok = all(led.passed for led in ledger.values())
    for mode, led in ledger.items():
        print(f"{mode:9s} max rel error {fmt(led.max_error)}  tol {led.tol:g}  {'PASS' if led.passed else 'FAIL'}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_glancing(args, out: Path, outputs: dict):
    scheme, _, _ = build_scheme(args)
    report = detect_glancing(scheme, args.grid, args.tol, args.eta)
    write_atomic(out / "glancing.json", _json(report.to_dict()))
    outputs[str(out / "glancing.json")] = out / "glancing.json"
    print(f"{report.label}: {report.classification} (grid {report.grid_size})")
    for f in report.findings:
        print(f"  xi={fmt(f.xi)}  z={fmt(f.z.real)}{f.z.imag:+.17g}j  |dF/dkappa|={f.dF_dkappa:.3e}")
    return EXIT_OK


def cmd_probe(args, out: Path, outputs: dict):
    scheme, _, _ = build_scheme(args)
    try:
        gammas = [float(x) for x in args.gammas.split(",") if x.strip()]
    except ValueError as exc:
        raise ParameterError(f"--gammas: {exc}") from exc
    if not gammas or any(g <= 0 for g in gammas):
        raise ParameterError("--gammas must be positive")
    ledger = strong_stability_probe(scheme, None, gammas, args.trials, eta=args.eta, seed=args.seed)
    write_atomic(out / "probe.csv", ledger.to_csv())
    write_atomic(out / "probe.json", _json({
        "label": ledger.label, "trend": ledger.trend, "variation": ledger.variation, "growth": ledger.growth,
        "rows": [row.__dict__ for row in ledger.rows], "log": ledger.log,
    }))
    for fname in ("probe.csv", "probe.json"):
        outputs[str(out / fname)] = out / fname
    for row in ledger.rows:
        print(f"gamma*dt={row.gamma * row.dt:<8g} max ratio {fmt(row.max_ratio)}  band {fmt(row.band_max)}")
    print(f"trend: {ledger.trend} (band growth x{ledger.growth:.3g}, variation x{ledger.variation:.3g})")
    return EXIT_OK


def cmd_replay(args, out: Path, outputs: dict):
    manifest = json.loads(Path(args.manifest).read_text())
    with tempfile.TemporaryDirectory() as tmp:
        argv = list(manifest["argv"])
        i = argv.index("--out-dir")
        argv[i + 1] = tmp
        code = main(argv, manifest=False)
        mismatched = []
        for path, digest in manifest["outputs"].items():
            replayed = Path(tmp) / Path(path).name
            if not replayed.exists() or _sha256(replayed) != digest:
                mismatched.append(Path(path).name)
    if code != manifest["exit_code"]:
        mismatched.append(f"exit code {code} != {manifest['exit_code']}")
    print("replay identical" if not mismatched else f"replay differs: {', '.join(mismatched)}")
    return EXIT_OK if not mismatched else EXIT_CHECK


# argument parsing -------------------------------------------------------------------


def _scheme_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scheme")
    g.add_argument("--preset", help="preset name, e.g. lax-wendroff, leap-frog, heat-bdf2, cn-schrodinger")
    g.add_argument("--scheme-file", help="JSON scheme file {s, r, p, coeffs: [{ell, sigma, re, im}]}")
    for key in ("mu", "mu1", "mu2", "eps", "c", "dt", "dx"):
        g.add_argument(f"--{key}", type=float)
    g.add_argument("--eta", type=float, default=0.0, help="tangential frequency")


def _kernel_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--radius", default="1.02", help="contour radius or 'auto'")
    p.add_argument("--samples", type=int, default=None, help="FFT samples (power of two)")
    p.add_argument("--route", choices=("contour", "recursion"), default="contour")


def _run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--J", type=int, default=60)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--support-lo", type=int, default=10)
    p.add_argument("--support-hi", type=int, default=40)
    p.add_argument("--boundary", choices=("transparent", "dirichlet"), default="transparent")
    p.add_argument("--ack-tail-drop", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tbc", description="Transparent boundary conditions for difference schemes")
    parser.add_argument("--version", action="version", version=f"tbc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="audit the standing assumptions")
    _scheme_args(p)
    p.add_argument("--grid", type=int, default=512)

    p = sub.add_parser("kernel", help="compute the boundary kernel")
    _scheme_args(p)
    _kernel_args(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-9)

    p = sub.add_parser("simulate", help="run a Cauchy, half-line or interval simulation")
    p.add_argument("mode", choices=("cauchy", "halfline", "interval"))
    _scheme_args(p)
    _kernel_args(p)
    _run_args(p)
    p.add_argument("--init", default="gaussian", choices=("gaussian", "impulse"))
    p.add_argument("--impulse-at", type=int, default=20)
    p.add_argument("--g-file", help="CSV of boundary data rows (re,im pairs per trace component)")
    p.add_argument("--project-g", action="store_true")

    p = sub.add_parser("verify", help="compare truncated runs with the whole-line reference")
    _scheme_args(p)
    _kernel_args(p)
    _run_args(p)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--mode", choices=("both", "halfline", "interval"), default="both")

    p = sub.add_parser("glancing", help="detect glancing points")
    _scheme_args(p)
    p.add_argument("--grid", type=int, default=1024)
    p.add_argument("--tol", type=float, default=1e-6)

    p = sub.add_parser("probe", help="empirical strong-stability probe")
    _scheme_args(p)
    p.add_argument("--gammas", default="1,0.1,0.01")
    p.add_argument("--trials", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("replay", help="re-run a manifest and compare outputs byte for byte")
    p.add_argument("manifest")

    for sp_ in sub.choices.values():
        sp_.add_argument("-o", "--out-dir", default="tbc_out")
    return parser


COMMANDS = {
    "analyze": cmd_analyze,
    "kernel": cmd_kernel,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "glancing": cmd_glancing,
    "probe": cmd_probe,
    "replay": cmd_replay,
}


def _threads() -> int | None:
    raw = os.environ.get("TBC_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError as exc:
        raise ParameterError(f"TBC_THREADS must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ParameterError(f"TBC_THREADS must be a positive integer, got {raw!r}")
    return n


def _normalized_argv(args, argv: list) -> list:
    out = list(argv)
    if "-o" in out:
        out[out.index("-o")] = "--out-dir"
    if "--out-dir" not in out:
        out += ["--out-dir", args.out_dir]
    for flag in ("--scheme-file", "--g-file"):
        if flag in out:
            i = out.index(flag) + 1
            out[i] = str(Path(out[i]).resolve())
    return out


def main(argv=None, manifest: bool = True) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    out = Path(args.out_dir)
    outputs: dict = {}
    t0 = time.perf_counter()
    caught = []
    try:
        threads = _threads()
        with warnings.catch_warnings(record=True) as wlist:
            warnings.simplefilter("always")
            code = COMMANDS[args.command](args, out, outputs)
        caught = list(dict.fromkeys(str(w.message) for w in wlist))
        for msg in caught:
            print(f"warning: {msg}", file=sys.stderr)
    except CompatibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.defects is not None:
            print("level,defect", file=sys.stderr)
            for n, d in enumerate(exc.defects):
                print(f"{n},{fmt(d)}", file=sys.stderr)
        code = exc.exit_code
        threads = None
    except TbcError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = exc.exit_code
        threads = None
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = 5
        threads = None
    if manifest and args.command != "replay":
        inputs = {}
        for attr in ("scheme_file", "g_file"):
            path = getattr(args, attr, None)
            if path and Path(path).exists():
                inputs[path] = _sha256(Path(path))
        record = {
            "command": args.command,
            "argv": _normalized_argv(args, argv),
            "config": {k: v for k, v in sorted(vars(args).items())},
            "inputs": inputs,
            "outputs": {k: _sha256(v) for k, v in sorted(outputs.items())},
            "version": __version__,
            "wall_time": time.perf_counter() - t0,
            "warnings": caught,
            "threads": threads,
            "exit_code": code,
        }
        write_atomic(out / f"{args.command}.manifest.json", _json(record))
    return code


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

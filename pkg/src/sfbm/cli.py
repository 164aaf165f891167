"""Command-line interface: ``sfbm {spectrum,verify,simulate,slnd,replay}``.

Exit codes: 0 success, 2 usage or validation error, 3 numerical or
integrity failure. Every command writes a run manifest next to its
outputs; ``sfbm replay MANIFEST`` reruns the recorded command line and
checks that every artifact is reproduced byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import ConsistencyError, IntegrityError, NumericalError, UsageError
from .field import sample_field, write_realization_csv
from .numerics import RandomStream
from .slnd import estimate_K2
from .sphere import fibonacci_grid, read_points_csv
from .spectrum import (
    DEFAULT_TOL,
    HURST_TEST_SET,
    _atomic_write_text,
    build_spectrum,
    check_hurst,
    load_spectrum,
    save_spectrum,
    write_spectrum_csv,
)
from .verify import SUITES, SpectrumCache, run_suite

log = logging.getLogger("sfbm")

OUTPUT_ENV = "SFBM_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3
MANIFEST_NAME = "manifest.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_dir(sub: str) -> Path:
    return Path(os.environ.get(OUTPUT_ENV, ".")) / sub


def _hurst_list(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise UsageError(f"bad --hurst-set {text!r}") from exc


def _method(text: str) -> str:
    return text.replace("-", "_")


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _atomic_write_text(path, buf.getvalue())


def _fmt(v) -> str:
    return f"{float(v):.17g}"


# --------------------------------------------------------------------------
# commands; each returns (exit code, artifact paths, seed)
# --------------------------------------------------------------------------

def cmd_spectrum(args):
    H = check_hurst(args.hurst)
    s = build_spectrum(H, args.lmax, args.tol, _method(args.method))
    out = Path(args.out) if args.out else _default_dir("spectrum")
    stem = f"spectrum_H{H:g}_L{s.L}_{s.method}"
    json_path, csv_path = out / f"{stem}.json", out / f"{stem}.csv"
    save_spectrum(json_path, s, timestamp=args.timestamp)
    write_spectrum_csv(csv_path, s)
    log.info("wrote %s and %s", json_path, csv_path)
    return EXIT_OK, [json_path, csv_path], None, out / MANIFEST_NAME


def cmd_verify(args):
    cache = SpectrumCache(load_spectrum(p) for p in args.cache)
    if args.suite != "all" and args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}")
    checks = run_suite(args.suite, args.hurst_set, cache)
    report = Path(args.report) if args.report else _default_dir("verify") / f"report_{args.suite}.json"
    ok = all(c.passed for c in checks if c.assertable)
    record = {
        "suite": args.suite,
        "hurst_set": list(args.hurst_set),
        "passed": ok,
        "checks": [c.as_dict() for c in checks],
    }
    _atomic_write_text(report, json.dumps(record, indent=1) + "\n")
    for c in checks:
        flag = "PASS" if c.passed else "FAIL"
        kind = "" if c.assertable else " (report only)"
        print(f"{flag} {c.name} value={c.value:.6g} tol={c.tolerance:.3g}{kind}")
    return (EXIT_OK if ok else EXIT_NUMERICAL), [report], None, report.with_suffix(".manifest.json")


def _points(args):
    if args.points:
        path = Path(args.points)
        if not path.is_file():
            raise UsageError(f"points file not found: {path}")
        return read_points_csv(path)
    kind, _, n = (args.grid or "fibonacci:100").partition(":")
    if kind != "fibonacci" or not n.isdigit():
        raise UsageError(f"--grid must look like fibonacci:N, got {args.grid!r}")
    return fibonacci_grid(int(n))


def cmd_simulate(args):
    H = check_hurst(args.hurst)
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    pts = _points(args)
    if args.spectrum:
        s = load_spectrum(args.spectrum)
        if s.H != H or s.L < args.lmax:
            raise UsageError(f"spectrum file has H={s.H}, L={s.L}; need H={H}, L>={args.lmax}")
    else:
        s = build_spectrum(H, args.lmax)
    out = Path(args.out) if args.out else _default_dir("simulate")
    out.mkdir(parents=True, exist_ok=True)
    spec_path = out / "spectrum.json"
    save_spectrum(spec_path, s, timestamp=args.timestamp)
    stream = RandomStream(args.seed)
    paths = [spec_path]
    width = max(5, len(str(args.samples - 1)))
    for start in range(0, args.samples, 256):
        n = min(256, args.samples - start)
        values = sample_field(s, args.lmax, pts, n, stream, first_index=start)
        for k in range(n):
            path = out / f"realization_{start + k:0{width}d}.csv"
            tmp = path.with_name(path.name + ".tmp")
            write_realization_csv(tmp, pts, values[k])
            os.replace(tmp, path)
            paths.append(path)
    summary = {"seed": args.seed, "H": H, "L": args.lmax, "spectrum_file": spec_path.name, "n_samples": args.samples}
    summary_path = out / "simulation.json"
    _atomic_write_text(summary_path, json.dumps(summary, indent=1) + "\n")
    paths.append(summary_path)
    return EXIT_OK, paths, args.seed, out / MANIFEST_NAME


def cmd_slnd(args):
    H = check_hurst(args.hurst)
    if not args.eps_min > 0:
        raise UsageError("--eps-min must be > 0")
    est = estimate_K2(H, args.trials, args.nmax, (args.eps_min, args.eps_max), RandomStream(args.seed), args.jobs)
    out = Path(args.out) if args.out else _default_dir("slnd")
    json_path, csv_path = out / f"slnd_H{H:g}.json", out / f"slnd_H{H:g}_trials.csv"
    _atomic_write_text(json_path, json.dumps(est.as_dict(), indent=1) + "\n")
    _write_csv(
        csv_path,
        ["trial", "family", "n", "epsilon", "cv", "ratio"],
        [[r["trial"], r["family"], r["n"], _fmt(r["epsilon"]), _fmt(r["cv"]), _fmt(r["ratio"])] for r in est.records],
    )
    print(f"H={H:g} min_ratio={est.min_ratio:.6g} p1={est.quantiles['p1']:.6g} all_positive={est.all_positive}")
    code = EXIT_OK if est.all_positive else EXIT_NUMERICAL
    return code, [json_path, csv_path], args.seed, out / MANIFEST_NAME


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def cmd_replay(args):
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text())
        argv = list(manifest["argv"])
        expected = dict(manifest["artifacts"])
        timestamp = manifest["timestamp"]
        cwd = manifest["cwd"]
        env_dir = manifest["output_dir_env"]
    except FileNotFoundError as exc:
        raise UsageError(f"manifest not found: {path}") from exc
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise IntegrityError(f"{path}: unreadable manifest ({exc})") from exc
    saved_cwd, saved_env = os.getcwd(), os.environ.get(OUTPUT_ENV)
    try:
        os.chdir(cwd)
        if env_dir is None:
            os.environ.pop(OUTPUT_ENV, None)
        else:
            os.environ[OUTPUT_ENV] = env_dir
        code = main(argv + ["--timestamp", timestamp])
        mismatched = [p for p, d in expected.items() if not Path(p).is_file() or _sha256(Path(p)) != d]
    finally:
        os.chdir(saved_cwd)
        if saved_env is None:
            os.environ.pop(OUTPUT_ENV, None)
        else:
            os.environ[OUTPUT_ENV] = saved_env
    if mismatched:
        raise ConsistencyError(f"replay differs for {len(mismatched)} artifact(s): {', '.join(mismatched[:5])}")
    print(f"replay reproduced {len(expected)} artifact(s)")
    return code, [], None, None


# --------------------------------------------------------------------------
# parser and entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sfbm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"sfbm {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--timestamp", help=argparse.SUPPRESS)

    sp = sub.add_parser("spectrum", help="compute and cache the angular power spectrum")
    sp.add_argument("--hurst", type=float, required=True)
    sp.add_argument("--lmax", type=int, required=True)
    sp.add_argument("--tol", type=float, default=DEFAULT_TOL)
    sp.add_argument("--method", choices=["quadrature", "mehler", "closed-form"], default="quadrature")
    sp.add_argument("--out", help="output directory")
    common(sp)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("verify", help="run verification suites")
    sp.add_argument("--suite", default="all", help="suite name (one of harmonics|spectrum|field|slnd|all)")
    sp.add_argument("--hurst-set", type=_hurst_list, default=HURST_TEST_SET)
    sp.add_argument("--report", help="JSON report path")
    sp.add_argument("--cache", action="append", default=[], help="spectrum cache JSON to reuse (repeatable)")
    common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("simulate", help="draw truncated Karhunen-Loeve realizations")
    sp.add_argument("--hurst", type=float, required=True)
    sp.add_argument("--lmax", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--grid", help="fibonacci:N")
    g.add_argument("--points", help="CSV with header theta,phi")
    sp.add_argument("--samples", type=int, default=1)
    sp.add_argument("--spectrum", help="spectrum cache JSON to use instead of building one")
    sp.add_argument("--out", help="output directory")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("slnd", help="empirical strong local nondeterminism experiment")
    sp.add_argument("--hurst", type=float, required=True)
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--nmax", type=int, default=6)
    sp.add_argument("--eps-min", type=float, default=0.01)
    sp.add_argument("--eps-max", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", help="output directory")
    common(sp)
    sp.set_defaults(func=cmd_slnd)

    sp = sub.add_parser("replay", help="rerun a manifest and compare its artifacts")
    sp.add_argument("manifest")
    sp.set_defaults(func=cmd_replay)
    return p


def _write_manifest(path: Path, args, argv, artifacts, seed) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "timestamp", "verbose")}
    manifest = {
        "command": args.command,
        "parameters": {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()},
        "argv": list(argv),
        "seed": seed,
        "artifacts": {str(Path(p).resolve()): _sha256(p) for p in artifacts},
        "cwd": os.getcwd(),
        "output_dir_env": os.environ.get(OUTPUT_ENV),
        "tool_version": __version__,
        "timestamp": args.timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    _atomic_write_text(path, json.dumps(manifest, indent=1) + "\n")


def _strip_timestamp(argv):
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--timestamp":
            skip = True
        elif not a.startswith("--timestamp="):
            out.append(a)
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        code, artifacts, seed, manifest_path = args.func(args)
        if manifest_path is not None:
            _write_manifest(manifest_path, args, _strip_timestamp(argv), artifacts, seed)
        return code
    except UsageError as exc:
        print(f"sfbm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"sfbm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

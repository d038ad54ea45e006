"""Command-line entry point.

Exit codes: 0 design converged (or command succeeded), 2 design stopped at
the iteration cap, 10 unreadable input, 11 dimension mismatch,
12 initialization failure, 13 small-gain estimation failure, 14 degenerate
data, 1 any other ldisc error, 64 invalid arguments.  Set ``LDISC_LOG`` to a
logging level name (``INFO``, ``DEBUG``) for progress output on stderr.
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
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .closed_loop import closed_loop_samples, verify_closed_loop_stability
from .controller import load_controller, save_controller
from .examples import (
    dc_motor_dataset,
    dc_motor_reference,
    dc_motor_structure,
    f16_reference,
    f16_structure,
    mismatch_dataset,
)
from .exceptions import (
    DatasetParseError,
    DegenerateDataError,
    DimensionError,
    GammaEstimationError,
    InitializationError,
    LDISCError,
)
from .freq_data import load_dataset, load_rational, save_dataset, save_rational
from .linsys import hinf_norm, spectral_abscissa
from .loewner import frequency_response, load_realization, realize, save_realization
from .solver import DesignConfig, design

EXIT_OK = 0
EXIT_MAX_ITER = 2
EXIT_PARSE = 10
EXIT_DIMENSION = 11
EXIT_INIT = 12
EXIT_GAMMA = 13
EXIT_DEGENERATE = 14
EXIT_OTHER = 1
EXIT_USAGE = 64

log = logging.getLogger("ldisc")

DEMOS = {
    "dc-motor": dict(
        dataset=lambda: dc_motor_dataset(50),
        reference=dc_motor_reference,
        structure=dc_motor_structure,
        config={},
    ),
    "mismatch": dict(
        dataset=lambda: mismatch_dataset(200),
        reference=f16_reference,
        structure=f16_structure,
        config={"max_iter": 200},
    ),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config_hash(config: DesignConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _provenance(config: DesignConfig | None) -> dict:
    out = {"version": __version__}
    if config is not None:
        out["config_hash"] = _config_hash(config)
        out["seed"] = config.seed
    return out


def _provenance_line(prov: dict) -> str:
    return "# " + " ".join(f"{k}={v}" for k, v in prov.items())


def _write_csv(path: Path, prov: dict, header, rows) -> None:
    buf = io.StringIO()
    buf.write(_provenance_line(prov) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _fmt(x) -> str:
    return repr(float(x))


def _evaluation_rows(dataset, structure, theta, Md=None):
    M = closed_loop_samples(dataset, structure, theta)
    n = dataset.n_o
    Md_s = Md.evaluate(1j * dataset.omega) if Md is not None else None
    header = ["omega"]
    for i in range(n):
        for j in range(n):
            if Md_s is not None:
                header += [f"Md_re_{i + 1}_{j + 1}", f"Md_im_{i + 1}_{j + 1}"]
            header += [f"M_re_{i + 1}_{j + 1}", f"M_im_{i + 1}_{j + 1}"]
    rows = []
    for k, w in enumerate(dataset.omega):
        row = [_fmt(w)]
        for i in range(n):
            for j in range(n):
                if Md_s is not None:
                    row += [_fmt(Md_s[k, i, j].real), _fmt(Md_s[k, i, j].imag)]
                row += [_fmt(M[k, i, j].real), _fmt(M[k, i, j].imag)]
        rows.append(row)
    return header, rows


def _load_config(args) -> DesignConfig:
    base = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DatasetParseError(f"{args.config}: invalid config file ({exc})") from exc
        if not isinstance(base, dict):
            raise DatasetParseError(f"{args.config}: config must be a JSON object")
    overrides = {
        "epsilon": args.eps,
        "eta": args.eta,
        "max_iter": args.max_iter,
        "svd_rel_tol": args.svd_tol,
        "seed": args.seed,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return DesignConfig(**base)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _design(dataset, Md, structure, theta0, config, out: Path, timing: bool) -> int:
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(config)
    report = None
    error = None
    try:
        report = design(dataset, Md, structure, config, theta0=theta0, callback=_progress)
    except GammaEstimationError as exc:
        report = getattr(exc, "report", None)
        error = exc
    if report is not None:
        _write_design_outputs(report, dataset, Md, structure, out, prov, timing)
    if error is not None:
        raise error
    print(f"final objective d={report.objective:.6e} after {report.n_iter} iterations "
          f"(stop: {report.stop_reason})")
    return EXIT_OK if report.stop_reason == "converged" else EXIT_MAX_ITER


def _progress(record):
    log.info("iter %d: d=%.6e status=%s", record.index, record.objective, record.status)


def _write_design_outputs(report, dataset, Md, structure, out, prov, timing):
    payload = {"provenance": prov, **report.to_dict()}
    payload["controller"] = _controller_payload(structure, report.theta)
    (out / "report.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    rows = []
    for r in report.records:
        rows.append([
            r.index, _fmt(r.objective), _fmt(r.gamma), _fmt(r.norm_margin), int(r.accepted),
            f"{r.wall_ms:.3f}" if timing else "",
        ])
    _write_csv(out / "iterations.csv", prov, ["iter", "objective", "gamma", "norm_margin", "accepted", "wall_ms"], rows)
    save_controller(structure, report.theta, out / "controller.json", extra={"provenance": prov})
    header, rows = _evaluation_rows(dataset, structure, report.theta, Md)
    _write_csv(out / "evaluation.csv", prov, header, rows)


def _controller_payload(structure, theta):
    out = structure.to_dict()
    out["theta"] = np.asarray(theta, dtype=float).tolist()
    return out


def cmd_design(args) -> int:
    out = Path(args.out)
    if args.demo:
        demo = DEMOS[args.demo]
        dataset, Md, structure = demo["dataset"](), demo["reference"](), demo["structure"]()
        args_cfg = {k: v for k, v in demo["config"].items() if getattr(args, k, None) is None}
        config = replace(_load_config(args), **args_cfg)
        theta0 = None
        if args.init:
            _, theta0 = load_controller(args.init)
        _write_demo_inputs(dataset, Md, structure, config, out)
        return _design(dataset, Md, structure, theta0, config, out, not args.no_timing)
    missing = [f for f in ("data", "ref", "structure") if getattr(args, f) is None]
    if missing:
        raise UsageError("design needs --" + ", --".join(missing) + " (or --demo)")
    if not args.init and not args.auto_init:
        raise UsageError("design needs --init PATH or --auto-init")
    config = _load_config(args)
    dataset = load_dataset(args.data)
    Md = load_rational(args.ref)
    structure, _ = load_controller(args.structure)
    theta0 = None
    if args.init:
        init_structure, theta0 = load_controller(args.init)
        if theta0 is None:
            raise DatasetParseError(f"{args.init}: initial controller file has no theta")
        if init_structure != structure:
            raise DimensionError("initial controller structure differs from --structure")
    if Md.shape != (dataset.n_o, dataset.n_o):
        raise DimensionError(f"reference model is {Md.shape[0]}x{Md.shape[1]}, "
                             f"the data needs {dataset.n_o}x{dataset.n_o}")
    if (structure.n_i, structure.n_o) != (dataset.n_i, dataset.n_o):
        raise DimensionError(f"controller is {structure.n_i}x{structure.n_o}, "
                             f"the data needs {dataset.n_i}x{dataset.n_o}")
    return _design(dataset, Md, structure, theta0, config, out, not args.no_timing)


def _write_demo_inputs(dataset, Md, structure, config, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(config)
    save_dataset(dataset, out / "data.csv", comments=[_provenance_line(prov)[2:]])
    save_rational(Md, out / "reference.json")
    (out / "structure.json").write_text(json.dumps(structure.to_dict(), indent=2) + "\n", encoding="utf-8")
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")


def cmd_demo(args) -> int:
    args.demo = args.name
    for name in ("data", "ref", "structure", "init", "config"):
        setattr(args, name, None)
    return cmd_design(args)


def cmd_identify(args) -> int:
    dataset = load_dataset(args.data)
    real = realize(dataset, svd_rel_tol=args.svd_tol)
    fit = frequency_response(real, dataset.omega)
    residual = float(np.abs(fit - dataset.responses).max() / max(np.abs(dataset.responses).max(), 1e-300))
    extra = {"provenance": _provenance(None), "interpolation_residual": residual, "notes": list(real.notes)}
    if args.out:
        save_realization(real, args.out, extra=extra)
    print(f"order r = {real.order}")
    print(f"relative interpolation residual = {residual:.3e}")
    for note in real.notes:
        print(f"note: {note}")
    return EXIT_OK


def cmd_hinf(args) -> int:
    real = load_realization(args.realization)
    gamma = hinf_norm(real, rel_tol=args.tol)
    print(f"{gamma:.6f}")
    print(f"relative tolerance {args.tol:g}", file=sys.stderr)
    return EXIT_OK


def cmd_abscissa(args) -> int:
    real = load_realization(args.realization)
    print(f"{spectral_abscissa(real):.6e}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    dataset = load_dataset(args.data)
    structure, theta = load_controller(args.controller)
    if theta is None:
        raise DatasetParseError(f"{args.controller}: controller file has no theta")
    Md = load_rational(args.ref) if args.ref else None
    if Md is not None and Md.shape != (dataset.n_o, dataset.n_o):
        raise DimensionError("reference model does not match the data outputs")
    if (structure.n_i, structure.n_o) != (dataset.n_i, dataset.n_o):
        raise DimensionError("controller does not match the data dimensions")
    header, rows = _evaluation_rows(dataset, structure, theta, Md)
    prov = _provenance(None)
    if args.out:
        _write_csv(Path(args.out), prov, header, rows)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        sys.stdout.write(_provenance_line(prov) + "\n" + buf.getvalue())
    stable, abscissa = verify_closed_loop_stability(dataset, structure, theta)
    print(f"closed loop {'stable' if stable else 'NOT stable'} (identified abscissa {abscissa:.4g})",
          file=sys.stderr)
    return EXIT_OK


def _add_design_flags(p, with_files=True):
    if with_files:
        p.add_argument("--data", help="frequency-response CSV")
        p.add_argument("--ref", help="reference model JSON")
        p.add_argument("--structure", help="controller structure JSON")
        p.add_argument("--demo", choices=sorted(DEMOS), help="run a built-in case study")
        p.add_argument("--config", help="design config JSON; flags override it")
        g = p.add_mutually_exclusive_group()
        g.add_argument("--init", help="initial controller JSON (must stabilize the loop)")
        g.add_argument("--auto-init", action="store_true", help="random multistart initialization")
    p.add_argument("--eps", type=float, help="small-gain safety factor in (0, 1]")
    p.add_argument("--eta", type=float, help="stop when an iteration improves d by at most this")
    p.add_argument("--max-iter", type=int, help="outer-iteration cap")
    p.add_argument("--svd-tol", type=float, help="relative SVD truncation for Loewner identification")
    p.add_argument("--seed", type=int, help="random seed for initialization")
    p.add_argument("--out", default="ldisc_out", help="output directory")
    p.add_argument("--no-timing", action="store_true",
                   help="leave wall_ms empty so reruns give byte-identical logs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ldisc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ldisc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("design", help="tune a structured controller from frequency data")
    _add_design_flags(p)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("demo", help="write a case study's inputs and run the design")
    p.add_argument("name", choices=sorted(DEMOS))
    _add_design_flags(p, with_files=False)
    p.set_defaults(func=cmd_demo, auto_init=True)

    p = sub.add_parser("identify", help="Loewner realization of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--svd-tol", type=float, default=1e-10)
    p.add_argument("--out", help="realization JSON to write")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("hinf-norm", aliases=["hinf"], help="H-infinity norm of a realization file")
    p.add_argument("--realization", required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_hinf)

    p = sub.add_parser("abscissa", help="spectral abscissa of a realization file")
    p.add_argument("--realization", required=True)
    p.set_defaults(func=cmd_abscissa)

    p = sub.add_parser("evaluate", help="closed-loop response of a controller on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--controller", required=True)
    p.add_argument("--ref", help="reference model JSON, adds Md columns")
    p.add_argument("--out", help="CSV to write (stdout if omitted)")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _setup_logging():
    level = os.environ.get("LDISC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ldisc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LDISCError as exc:
        print(f"ldisc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)


def _exit_code(exc: LDISCError) -> int:
    for kind, code in (
        (DatasetParseError, EXIT_PARSE),
        (DimensionError, EXIT_DIMENSION),
        (InitializationError, EXIT_INIT),
        (GammaEstimationError, EXIT_GAMMA),
        (DegenerateDataError, EXIT_DEGENERATE),
    ):
        if isinstance(exc, kind):
            return code
    return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())

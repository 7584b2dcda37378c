"""Command-line front end.

Exit codes: 0 success, 1 configuration or usage error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import json
import sys
from pathlib import Path

import jsonschema

from . import formats
from .active import ConcentrationFailure, synthesize_schedules, verify_concentration
from .channel import ChannelParams, DetectorMode
from .hadamard import MAX_M
from .link import (
    CSV_HEADER,
    Scheme,
    SchemeConfig,
    compare_par,
    run_trials,
)
from .passive import FrameConfig, derive_pattern, pattern_to_dict, verify_round_trip

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def parse_m_range(text: str) -> list[int]:
    """``"3"``, ``"1..8"`` or ``"1,2,5"``."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            ms = list(range(int(a), int(b) + 1))
        else:
            ms = [int(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse m range {text!r}") from None
    if not ms or any(not 1 <= m <= MAX_M for m in ms):
        raise ConfigError(f"m values must lie in [1, {MAX_M}], got {text!r}")
    return ms


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    try:
        Path(path).write_text(text if text.endswith("\n") else text + "\n")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror or e}") from e


def cmd_verify(args) -> int:
    ms = parse_m_range(args.m or "1..8")
    tol = args.tolerance
    results = []
    ok = True
    for m in ms:
        chain = synthesize_schedules(m)
        row = {"m": m, "n_modules": len(chain.modules), "position_offset": chain.position_offset}
        try:
            rep = verify_concentration(chain, tol)
            row.update(max_leakage=rep.max_leakage, positions_affine=True)
        except ConcentrationFailure as e:
            row.update(max_leakage=e.report.max_leakage, positions_affine=False, error=str(e))
        rt = verify_round_trip(m)
        row.update(passive_max_leakage=rt.max_leakage, passive_max_power_deviation=rt.max_power_deviation)
        row["ok"] = bool(
            row["positions_affine"] and row["n_modules"] == m and rt.max_leakage <= tol and rt.max_power_deviation <= 1e-12
        )
        ok &= row["ok"]
        print(
            f"m={m} modules={row['n_modules']} offset={row['position_offset']} "
            f"leakage={row['max_leakage']:.3g} passive_leakage={rt.max_leakage:.3g} {'ok' if row['ok'] else 'FAIL'}"
        )
        results.append(row)
    report = {"schema_version": formats.SCHEMA_VERSION, "ok": ok, "tolerance": tol, "results": results}
    text = formats.dumps(report)
    formats.validate_verify_json(text)
    if args.out:
        _write(args.out, text)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_pattern(args) -> int:
    if args.m is None:
        raise ConfigError("pattern needs --m")
    ms = parse_m_range(args.m)
    if len(ms) != 1:
        raise ConfigError("pattern takes a single --m value")
    if args.pol not in ("H", "V"):
        raise ConfigError(f"--pol must be H or V, got {args.pol!r}")
    text = formats.dumps(pattern_to_dict(derive_pattern(ms[0], args.pol)))
    formats.validate_pattern_json(text)
    _write(args.out, text)
    return EXIT_OK


def load_config(path: str) -> dict:
    try:
        d = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    try:
        formats.validate_config(d)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"config {path}: {e.message}") from e
    return d


def expand_sweep(cfg: dict) -> list[SchemeConfig]:
    """All sweep points, ``m`` outermost and ``n_s`` innermost; every point is validated up front."""
    sweep = cfg.get("sweep", {})
    ms = sweep.get("m", [cfg.get("m")])
    sigmas = sweep.get("phase_noise_sigma", [cfg.get("channel", {}).get("phase_noise_sigma", 0.0)])
    nss = sweep.get("n_s", [cfg.get("n_s", 1.0)])
    frame = cfg.get("frame")
    points = []
    for m, sigma, n_s in itertools.product(ms, sigmas, nss):
        ch = dict(cfg.get("channel", {}), phase_noise_sigma=sigma)
        ch["delay_phase_errors"] = tuple(ch.get("delay_phase_errors", ()))
        fc = None
        if cfg["scheme"] == Scheme.PASSIVE_PATTERN.value and "M" in cfg and m is not None:
            base = FrameConfig.default(cfg["M"], m)
            fc = FrameConfig(
                cfg["M"],
                (frame or {}).get("guard_bins", base.guard_bins),
                (frame or {}).get("use_polarization_doubling", False),
            )
        try:
            points.append(
                SchemeConfig(
                    scheme=cfg["scheme"],
                    n_s=float(n_s),
                    m=m,
                    M=cfg.get("M"),
                    frame=fc,
                    channel=ChannelParams(**ch),
                    mode=DetectorMode(cfg.get("detector_mode", "A")),
                )
            )
        except ValueError as e:
            raise ConfigError(f"sweep point m={m}, sigma={sigma}, n_s={n_s}: {e}") from e
    return points


def cmd_simulate(args) -> int:
    if not args.config:
        raise ConfigError("simulate needs --config")
    cfg = copy.deepcopy(load_config(args.config))
    if args.m is not None:
        ms = parse_m_range(args.m)
        if len(ms) == 1:
            cfg["m"] = ms[0]
            cfg.get("sweep", {}).pop("m", None)
        else:
            cfg.setdefault("sweep", {})["m"] = ms
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    trials = args.trials if args.trials is not None else cfg.get("trials", 100_000)
    out = args.out or cfg.get("out")
    workers = cfg.get("workers", 1)
    if not 0 <= seed < 1 << 64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    if trials < 1:
        raise ConfigError("--trials must be >= 1")
    if out and Path(out).suffix == ".json":
        raise ConfigError("--out names the CSV file; the JSON mirror is written beside it")
    points = expand_sweep(cfg)

    json_path = Path(out).with_suffix(".json") if out else None
    csv_file = open(out, "w", newline="") if out else None
    reports = []
    try:
        header = ",".join(CSV_HEADER) + "\n"
        if csv_file:
            csv_file.write(header)
            csv_file.flush()
        else:
            sys.stdout.write(header)
        for p in points:
            r = run_trials(p, trials, seed, workers)
            reports.append(r)
            line = ",".join(r.csv_row()) + "\n"
            if csv_file:
                csv_file.write(line)
                csv_file.flush()
                json_path.write_text(formats.dumps([x.to_dict() for x in reports]) + "\n")
            else:
                sys.stdout.write(line)
            print(
                f"{r.scheme.value} m={r.m} M={r.M} N_s={r.n_s:g}: erasure={r.erasure_rate:.4f} "
                f"ser={r.symbol_error_rate:.4f} invalid={r.invalid_rate:.4f} mi={r.mi_bits_per_symbol:.4f} bits",
                file=sys.stderr,
            )
    finally:
        if csv_file:
            csv_file.close()
    if out:
        formats.validate_report_csv(Path(out).read_text())
        formats.validate_report_json(json_path.read_text())
    return EXIT_OK


def cmd_par_table(args) -> int:
    m = parse_m_range(args.m or "3")
    if len(m) != 1:
        raise ConfigError("par-table takes a single --m value")
    m = m[0]
    M = 1 << (m + 1)
    cfgs = [
        SchemeConfig(Scheme.REFERENCE_PPM, 1.0, M=M),
        SchemeConfig(Scheme.ACTIVE_HADAMARD, 1.0, m=m + 1),
        SchemeConfig(Scheme.PASSIVE_PATTERN, 1.0, m=m, M=M),
    ]
    rows = compare_par(cfgs)
    lines = [",".join(formats.PAR_HEADER)]
    for r in rows:
        lines.append(",".join([r["scheme"], "" if r["m"] is None else str(r["m"]), str(r["M"]), str(r["frame_len"]), f"{r['par']:.17g}"]))
    text = "\n".join(lines) + "\n"
    formats.validate_par_csv(text)
    _write(args.out, text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="structured-rx", description="Structured optical receiver simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="exhaustively check the active and passive receivers")
    v.add_argument("--m", help="m range, e.g. 1..8 (default 1..8)")
    v.add_argument("--tolerance", type=float, default=1e-10)
    v.add_argument("--out", help="JSON report path")
    v.set_defaults(func=cmd_verify)

    pt = sub.add_parser("pattern", help="derive a passive-receiver transmit pattern")
    pt.add_argument("--m", required=True)
    pt.add_argument("--pol", default="H")
    pt.add_argument("--out", help="JSON output path (default stdout)")
    pt.set_defaults(func=cmd_pattern)

    s = sub.add_parser("simulate", help="Monte Carlo link simulation from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--m", help="override m (single value or range for a sweep)")
    s.add_argument("--seed", type=int)
    s.add_argument("--trials", type=int)
    s.add_argument("--out", help="CSV output path; a JSON mirror is written next to it")
    s.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("par-table", help="peak-to-average power of PPM, active and passive symbols")
    pr.add_argument("--m", help="passive pattern m (default 3, compared against 2**(m+1)-ary PPM)")
    pr.add_argument("--out", help="CSV output path (default stdout)")
    pr.set_defaults(func=cmd_par_table)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

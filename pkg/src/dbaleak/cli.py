"""Command-line front end.

Exit codes: 0 success, 1 validation failure (``validate`` flagged a tally),
2 configuration or input error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

from . import estimator, gains, simulator, spadcheck
from .config import Scenario, load_scenario, parse_range
from .model import ConfigError, ReceiverMode, SessionCounts

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2

FORMATS = ("delimited", "structured")


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    config_path: str | None
    output_path: str | None
    seed: int
    format: str

    def check_output(self) -> None:
        if self.output_path is None:
            return
        parent = Path(self.output_path).resolve().parent
        if not parent.is_dir() or not os.access(parent, os.W_OK):
            raise ConfigError("RunManifest", [("output_path", f"directory {parent} is not writable")])


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    if v is None:
        return ""
    return str(v)


def _jsonable(v: Any) -> Any:
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, ReceiverMode):
        return v.value
    return v


def emit(
    manifest: RunManifest,
    scenario: Scenario,
    header: Sequence[str],
    rows: Sequence[Sequence[Any]],
    extra: dict | None = None,
) -> None:
    """Write rows with a reproducibility header carrying the resolved config and seed."""
    config = scenario.to_dict()
    if manifest.format == "delimited":
        buf = io.StringIO()
        buf.write(f"# dbaleak {manifest.subcommand}\n")
        buf.write(f"# seed: {manifest.seed}\n")
        buf.write(f"# config: {json.dumps(_jsonable(config), sort_keys=True)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        text = buf.getvalue()
    else:
        doc = {
            "manifest": {
                "subcommand": manifest.subcommand,
                "config_path": manifest.config_path,
                "seed": manifest.seed,
                "format": manifest.format,
            },
            "config": config,
            "columns": list(header),
            "rows": [list(r) for r in rows],
        }
        if extra:
            doc.update(extra)
        text = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    if manifest.output_path is None:
        sys.stdout.write(text)
    else:
        Path(manifest.output_path).write_text(text)


def _resolve(args: argparse.Namespace) -> Scenario:
    scenario = load_scenario(args.config)
    run = scenario.run
    updates: dict[str, Any] = {}
    if getattr(args, "mode", None):
        updates["mode"] = args.mode
    if getattr(args, "pulses", None) is not None:
        updates["pulses"] = args.pulses
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "sweep", None):
        try:
            updates["sweep"] = tuple(float(v) for v in args.sweep.split(","))
        except ValueError:
            raise ConfigError("RunSettings", [("sweep", f"not a comma-separated list: {args.sweep!r}")]) from None
    if getattr(args, "sweep_param", None):
        updates["sweep_param"] = args.sweep_param
    if getattr(args, "length_range", None):
        parse_range(args.length_range)
        updates["length_range"] = args.length_range
    if updates:
        run = replace(run, **updates)
    if getattr(args, "length", None) is not None:
        scenario = replace(scenario, channel=replace(scenario.channel, length_km=args.length))
    if getattr(args, "attack", False):
        scenario = replace(scenario, eve=replace(scenario.eve, active=True))
    if getattr(args, "beta", None) is not None:
        scenario = replace(scenario, eve=replace(scenario.eve, beta=args.beta))
    if getattr(args, "alpha_config", None) is not None:
        scenario = replace(scenario, detector=replace(scenario.detector, alpha=args.alpha_config))
    return replace(scenario, run=run)


def _manifest(args, scenario: Scenario) -> RunManifest:
    m = RunManifest(args.command, args.config, args.out, scenario.run.seed, args.format)
    m.check_output()
    return m


def _sim_config(scenario: Scenario) -> simulator.SimConfig:
    return simulator.SimConfig(
        protocol=scenario.protocol,
        detectors=scenario.detector,
        channel=scenario.channel,
        eve=scenario.eve,
        n_pulses=scenario.run.pulses,
        seed=scenario.run.seed,
        receiver_mode=scenario.run.mode,
    )


def cmd_simulate(args) -> int:
    scenario = _resolve(args)
    manifest = _manifest(args, scenario)
    cfg = _sim_config(scenario)
    if cfg.eve.active:
        report = simulator.check_attack(cfg)
        tally = simulator.simulate_attack(cfg)
        counts = tally.counts
        truth = {"n_success": tally.n_success, "n_imposed": tally.n_imposed, "n_split_clicks": tally.n_split_clicks}
    else:
        report = simulator.check_honest(cfg)
        counts = simulator.simulate_honest(cfg)
        truth = {}
    checked = {r.tally: r for r in report.rows}
    rows = []
    values = {k: getattr(counts, k) for k in ("n_alice", "n_sent", "n_clicked", "n_double", "n_error")}
    values.update(truth)
    for name, value in values.items():
        r = checked.get(name)
        if r is None:
            rows.append([name, int(value), "", "", "", "", ""])
        else:
            rows.append([name, int(value), r.expected, r.sigma, r.slack, r.z, r.flagged])
    header = ["tally", "observed", "expected", "sigma", "slack", "z", "flagged"]
    emit(manifest, scenario, header, rows, {"report": report.as_dict()})
    return EXIT_OK


def _read_counts(path: str) -> dict[str, float]:
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        doc = json.loads(stripped)
        if "rows" in doc and "columns" in doc:
            doc = {row[0]: row[1] for row in doc["rows"]}
        return {k: float(v) for k, v in doc.items() if k.startswith("n_")}
    out = {}
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    for row in csv.reader(lines):
        if len(row) >= 2 and row[0].startswith("n_"):
            out[row[0]] = float(row[1])
    return out


def cmd_estimate(args) -> int:
    scenario = _resolve(args)
    manifest = _manifest(args, scenario)
    values: dict[str, float] = {}
    if args.counts:
        try:
            values.update(_read_counts(args.counts))
        except OSError as exc:
            raise ConfigError("SessionCounts", [("<file>", f"cannot read {args.counts}: {exc.strerror}")]) from None
    for key in ("n_alice", "n_sent", "n_clicked", "n_double", "n_error"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    q_eve = gains.eve_gain(scenario.protocol)
    if "n_alice" not in values:
        raise ConfigError("SessionCounts", [("n_alice", "required (flag --n-alice or counts file)")])
    values.setdefault("n_sent", values["n_alice"] * q_eve)
    known = {k: values.get(k, 0.0) for k in ("n_alice", "n_sent", "n_clicked", "n_double", "n_error")}
    expected = any(not float(v).is_integer() for v in known.values())
    counts = SessionCounts(**known, expected=expected)
    est = estimator.estimate(scenario.run.mode, counts, q_eve, alpha=args.alpha)
    d = est.as_dict()
    rows = [[k, d[k]] for k in d]
    emit(manifest, scenario, ["field", "value"], rows, {"counts": known})
    return EXIT_OK


def cmd_curve(args) -> int:
    scenario = _resolve(args)
    manifest = _manifest(args, scenario)
    run = scenario.run
    points = estimator.secure_fraction_curve(
        scenario.protocol,
        scenario.detector,
        scenario.channel,
        run.mode,
        run.sweep_values(),
        run.lengths(),
        sweep_param=run.sweep_param,
        n_alice=run.n_alice,
    )
    rows = [[p.length_km, p.sweep_value, p.secure_fraction, p.alpha_opt, list(p.flags)] for p in points]
    emit(manifest, scenario, ["L_km", "sweep_value", "s_key", "alpha_opt", "flags"], rows)
    return EXIT_OK


def cmd_gapcheck(args) -> int:
    scenario = _resolve(args)
    manifest = _manifest(args, scenario)
    try:
        curves = [spadcheck.read_curve(p) for p in args.files] if args.files else spadcheck.sample_curves()
    except OSError as exc:
        raise ConfigError("DetectionCurve", [("<file>", f"cannot read {exc.filename}: {exc.strerror}")]) from None
    checks = spadcheck.gapcheck(curves, args.epsilon)
    rows = []
    for c in checks:
        margin_linear = 10.0 ** (c.e_never_low / 10.0) - 2.0 * 10.0 ** (c.e_always_default / 10.0)
        rows.append(
            [
                c.setting,
                c.e_always_default,
                c.e_never_low,
                c.verdict.margin_db,
                c.verdict.ratio,
                margin_linear,
                c.avg_blinding_power,
                c.verdict.holds,
            ]
        )
    header = [
        "setting",
        "e_always_default_db",
        "e_never_low_db",
        "margin_db",
        "energy_ratio",
        "margin_linear",
        "avg_blinding_power",
        "holds",
    ]
    table = [r.__dict__ for r in spadcheck.load_detection_table()]
    emit(manifest, scenario, header, rows, {"detection_table": table, "epsilon": args.epsilon})
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario = _resolve(args)
    manifest = _manifest(args, scenario)
    base = _sim_config(scenario)
    pulses = args.pulses
    reports = simulator.validation_suite(
        base,
        honest_pulses=pulses or 10_000_000,
        attack_pulses=pulses or 1_000_000,
    )
    rows = []
    for rep in reports:
        for r in rep.rows:
            rows.append([rep.label, r.tally, r.n, int(r.observed), r.expected, r.sigma, r.slack, r.z, r.flagged])
    header = ["check", "tally", "n", "observed", "expected", "sigma", "slack", "z", "flagged"]
    failed = [rep.label for rep in reports if not rep.passed]
    emit(manifest, scenario, header, rows, {"failed": failed})
    for label in failed:
        print(f"flagged: {label}", file=sys.stderr)
    return EXIT_VALIDATION if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dbaleak", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, sim=False):
        p.add_argument("--config", help="scenario file (TOML or JSON)")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=FORMATS, default="delimited")
        p.add_argument("--seed", type=int)
        p.add_argument("--mode", choices=[m.value for m in ReceiverMode])
        if sim:
            p.add_argument("--pulses", type=int, help="number of Alice pulses")

    p = sub.add_parser("simulate", help="Monte Carlo session with z-scores against the closed forms")
    common(p, sim=True)
    p.add_argument("--attack", action="store_true", help="activate the adversary")
    p.add_argument("--beta", type=float)
    p.add_argument("--alpha", dest="alpha_config", type=float, help="high-gate probability")
    p.add_argument("--length", type=float, help="channel length in km")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="leakage estimate from observed counts")
    common(p)
    p.add_argument("--counts", help="counts file (JSON or 'name,value' rows)")
    p.add_argument("--alpha", type=float, help="fixed alpha; default is the optimum")
    for key in ("n_alice", "n_sent", "n_clicked", "n_double", "n_error"):
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=float)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("curve", help="secure-fraction curves over channel length")
    common(p)
    p.add_argument("--sweep", help="comma-separated eta_low or transmittance values")
    p.add_argument("--sweep-param", choices=["eta_low", "transmittance"])
    p.add_argument("--length-range", help="a:b:step in km, inclusive")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("gapcheck", help="fingerprint condition on detection-probability curves")
    common(p)
    p.add_argument("files", nargs="*", help="curve files (default: bundled samples)")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.set_defaults(func=cmd_gapcheck)

    p = sub.add_parser("validate", help="full analytic-vs-simulation suite; exit 1 on any |z| > 4")
    common(p, sim=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"dbaleak {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv`` and return the exit status instead of raising SystemExit."""
    try:
        return main(argv)
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())

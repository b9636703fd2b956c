"""Command-line entry point.

Each subcommand runs one experiment and writes one :class:`ExperimentRecord`
per line (JSONL, default) or a flat CSV projection. Exit codes:

0  success
2  invalid parameters or hypothesis violation
3  a quality gate failed (record status is not ``ok``)
4  output could not be written
1  numerical failure
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import __version__, rng as rngmod
from .errors import CbeLabError, DomainError, HypothesisError
from .experiments import EXPERIMENTS, ExperimentRecord, _json_default, replay, run_experiment

__all__ = ["RunConfig", "run", "main", "build_parser"]

EXIT_OK, EXIT_ERROR, EXIT_INVALID, EXIT_GATE, EXIT_IO = 0, 1, 2, 3, 4

# default replica counts per experiment
_DEFAULT_REPLICAS = {
    "phase-tail": 10000, "mom-direct": 2000, "mom-scaling": 2000, "mom-limit": 8000, "corr-compare": 4000,
    "bound-verify": 4000, "qu-valko": 10000, "sine-sim": 1000, "zeta-eval": 1000,
}


@dataclass
class RunConfig:
    """Everything needed to run (and later replay) one experiment."""

    experiment: str
    params: dict[str, Any]
    seed: int | None = None
    replicas: int | None = None
    threads: int | None = None
    out: str | None = None
    format: str = "jsonl"
    extra: dict[str, Any] = field(default_factory=dict)


def version_string() -> str:
    sha = "unknown"
    try:
        res = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=Path(__file__).resolve().parent,
                             capture_output=True, text=True, timeout=5)
        if res.returncode == 0 and res.stdout.strip():
            sha = res.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"cbelab {__version__} (commit {sha})"


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _configs(text: str) -> list[list[float]]:
    """``"0,1;0,5"`` or a JSON list of lists."""
    text = text.strip()
    if text.startswith("["):
        return [[float(x) for x in c] for c in json.loads(text)]
    return [[float(x) for x in part.split(",")] for part in text.split(";") if part.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common")
    g.add_argument("--beta", type=float, help="inverse temperature")
    g.add_argument("--delta", type=float, help="circular-Jacobi / Hua-Pickrell exponent")
    g.add_argument("--n", type=int, help="ensemble size N")
    g.add_argument("--k", type=float, help="outer moment k")
    g.add_argument("--s", type=str, help="inner exponent s (comma list for oracle)")
    g.add_argument("--m", type=int, help="correlation order m")
    g.add_argument("--replicas", type=int, help="Monte Carlo replicas (SDE paths for sine-sim/qu-valko)")
    g.add_argument("--seed", type=int, help="master seed (generated and echoed when absent)")
    g.add_argument("--threads", type=int, help=f"worker threads (default ${rngmod.THREADS_ENV} or 1)")
    g.add_argument("--out", type=str, help="output file (default stdout)")
    g.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    g.add_argument("--config", type=str, help="JSON file whose keys override flag values")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cbelab", description="Circular beta ensemble laboratory.")
    ap.add_argument("--version", action="version", version=version_string())
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="special-function constants as JSON")
    _common(p)
    p.add_argument("--z", type=float, help="argument of y_beta")

    p = sub.add_parser("oracle", help="brute-force torus quadrature (N <= 4)")
    _common(p)
    p.add_argument("--thetas", type=_floats, help="evaluation angles (comma list)")
    p.add_argument("--nodes", type=int)

    p = sub.add_parser("phase-tail", help="Prüfer phase-increment tail vs sub-Gaussian bound")
    _common(p)
    p.add_argument("--j", type=int)
    p.add_argument("--ell", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--ts", type=_floats, help="thresholds t (comma list)")

    p = sub.add_parser("mom-direct", help="Monte Carlo moments of moments")
    _common(p)
    p.add_argument("--quad-nodes", type=int)
    p.add_argument("--proposal", choices=("tilted", "cbe"))

    p = sub.add_parser("mom-scaling", help="growth exponent of the moments of moments")
    _common(p)
    p.add_argument("--ns", type=_ints, help="comma list of N")
    p.add_argument("--tol", type=float)

    p = sub.add_parser("mom-limit", help="normalised moments vs limit right-hand side")
    _common(p)
    p.add_argument("--R", type=float, help="truncation half-width")
    p.add_argument("--rhs-replicas", type=int)
    p.add_argument("--momrep-check", action="store_true", default=None)

    p = sub.add_parser("corr-compare", help="Sine_beta correlations, simulation vs formula")
    _common(p)
    p.add_argument("--xs", type=_floats)
    p.add_argument("--paths", type=int)
    p.add_argument("--window", type=float)
    p.add_argument("--spacing", type=float)
    p.add_argument("--bin-width", type=float)

    p = sub.add_parser("bound-verify", help="joint-moment bound ratios over N")
    _common(p)
    p.add_argument("--rs", type=_floats)
    p.add_argument("--x-configs", type=_configs, help='e.g. "0,1;0,5;0,20"')
    p.add_argument("--ns", type=_ints)
    p.add_argument("--spread-limit", type=float)

    p = sub.add_parser("qu-valko", help="comparison identity for E|xi^{beta,beta}(x)|^beta")
    _common(p)
    p.add_argument("--x", type=float)
    p.add_argument("--cj-replicas", type=int)
    p.add_argument("--kmax", type=int)
    p.add_argument("--dt", type=float)

    p = sub.add_parser("sine-sim", help="simulate Sine_beta / Hua-Pickrell points")
    _common(p)
    p.add_argument("--window", type=float, help="half-width of the window")
    p.add_argument("--spacing", type=float, help="lambda grid spacing")
    p.add_argument("--dt", type=float, help="base Euler step")
    p.add_argument("--t0", type=float, help="start time (negative)")
    p.add_argument("--t0-factor", type=float, help="multiply the default t0")
    p.add_argument("--policy", choices=("geometric", "uniform"))
    p.add_argument("--interp", choices=("pchip", "linear"))
    p.add_argument("--bin-width", type=float)
    p.add_argument("--xmax", type=float)
    p.add_argument("--emit-points", action="store_true", default=None)

    p = sub.add_parser("zeta-eval", help="evaluate the PV product (and optionally cross-check moments)")
    _common(p)
    p.add_argument("--zs", type=_floats, help="real evaluation points")
    p.add_argument("--rs", type=_floats, help="exponents; enables the two-route moment check")
    p.add_argument("--R", type=float)
    p.add_argument("--tail", choices=("none", "mean-density"))
    p.add_argument("--cj-replicas", type=int)
    p.add_argument("--dump", type=int, help="number of per-sample values to include")

    p = sub.add_parser("replay", help="re-run stored records and compare bit for bit")
    p.add_argument("record", help="JSONL file of ExperimentRecords")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", type=str)
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    return ap


_RESERVED = {"command", "seed", "threads", "out", "format", "config"}
_RENAME = {"quad_nodes": "quad_nodes", "R": "R"}


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    params = {k: v for k, v in vars(ns).items() if k not in _RESERVED and v is not None}
    seed, threads, out, fmt = ns.seed, ns.threads, ns.out, ns.format
    if ns.config:
        try:
            cfg = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DomainError(f"cannot read config {ns.config}: {exc}") from exc
        seed = cfg.pop("seed", seed)
        threads = cfg.pop("threads", threads)
        out = cfg.pop("out", out)
        fmt = cfg.pop("format", fmt)
        params.update(cfg.pop("params", {}))
        params.update(cfg)
    if "s" in params and isinstance(params["s"], str):
        vals = _floats(params["s"])
        params["s"] = vals if (ns.command == "oracle" and len(vals) > 1) else vals[0]
    if ns.command in _DEFAULT_REPLICAS:
        params.setdefault("replicas", _DEFAULT_REPLICAS[ns.command])
    return RunConfig(ns.command, params, seed, params.get("replicas"), threads, out, fmt)


_REQUIRED = {
    "constants": ("beta",), "phase-tail": ("beta",), "oracle": ("beta", "n"), "mom-direct": ("beta", "k", "s", "n"),
    "mom-scaling": ("beta", "k", "s", "ns"), "mom-limit": ("beta", "k", "s", "n"),
    "corr-compare": ("beta", "m", "xs"), "bound-verify": ("beta", "delta", "rs", "x_configs", "ns"),
    "qu-valko": ("beta", "x"), "sine-sim": ("beta",), "zeta-eval": ("beta",),
}


def validate(config: RunConfig) -> None:
    if config.experiment not in EXPERIMENTS:
        raise DomainError(f"unknown experiment {config.experiment!r}")
    missing = [k for k in _REQUIRED.get(config.experiment, ()) if k not in config.params]
    if missing:
        raise DomainError(f"missing parameters for {config.experiment}: {', '.join(missing)}")
    b = config.params.get("beta")
    if b is not None and not b > 0:
        raise DomainError("beta must be positive")
    if config.experiment in ("mom-scaling",):
        k, s = config.params["k"], config.params["s"]
        if not 2 * k * s * s > b:
            raise HypothesisError(f"mom-scaling needs 2ks^2 > beta (got {2 * k * s * s} <= {b})")
    if config.experiment == "mom-limit":
        from .cje import check_mom_hypotheses
        check_mom_hypotheses(b, config.params["k"], config.params["s"])


def _csv_rows(rec: dict[str, Any]) -> list[dict[str, Any]]:
    base = {"experiment": rec["experiment"], "seed": rec["seed"], "status": rec["status"],
            "params": json.dumps(rec["params"], default=_json_default, sort_keys=True)}
    rows = []
    for e in rec["estimates"]:
        rows.append({**base, "label": e.get("label", ""), "mean": e.get("mean", e.get("ratio")),
                     "stderr": e.get("stderr", e.get("ratio_stderr")), "replicas": e.get("replicas"),
                     "ess": e.get("ess"), "N": e.get("N", (e.get("params") or {}).get("N"))})
    for key, val in rec["derived"].items():
        if isinstance(val, (int, float, str, bool)) or val is None:
            rows.append({**base, "label": key, "mean": val})
        elif isinstance(val, dict) and "value" in val:
            rows.append({**base, "label": key, "mean": val["value"]})
    return rows


def write_records(records: Sequence[ExperimentRecord], out: str | None, fmt: str) -> None:
    dicts = [r.to_dict() for r in records]
    buf = io.StringIO()
    if fmt == "jsonl":
        for d in dicts:
            buf.write(json.dumps(d, default=_json_default) + "\n")
    else:
        rows = [row for d in dicts for row in _csv_rows(d)]
        cols = ["experiment", "seed", "status", "label", "mean", "stderr", "replicas", "ess", "N", "params"]
        w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    text = buf.getvalue()
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _fail(reason: str, message: str, **details) -> None:
    sys.stderr.write(json.dumps({"reason": reason, "message": message, **details}, default=_json_default) + "\n")


def run(config: RunConfig) -> int:
    """Validate, execute and persist one experiment; returns the exit status."""
    try:
        validate(config)
    except CbeLabError as exc:
        _fail(exc.reason, str(exc))
        return EXIT_INVALID
    seed = config.seed
    if seed is None and config.experiment not in ("constants", "oracle"):
        seed = rngmod.new_seed()
        sys.stderr.write(json.dumps({"seed": seed}) + "\n")
    try:
        rec = run_experiment(config.experiment, config.params, seed, config.threads)
    except (DomainError, HypothesisError) as exc:
        _fail(exc.reason, str(exc))
        return EXIT_INVALID
    except CbeLabError as exc:
        _fail(exc.reason, str(exc), **exc.details)
        return EXIT_ERROR
    try:
        write_records([rec], config.out, config.format)
    except OSError as exc:
        _fail("io", str(exc))
        return EXIT_IO
    if rec.status != "ok":
        _fail("gate-failure", f"{config.experiment} finished with status {rec.status}",
              derived={k: v for k, v in rec.derived.items() if not isinstance(v, (list, dict))})
        return EXIT_GATE
    return EXIT_OK


def _replay_cmd(ns: argparse.Namespace) -> int:
    try:
        lines = [ln for ln in Path(ns.record).read_text().splitlines() if ln.strip()]
    except OSError as exc:
        _fail("io", str(exc))
        return EXIT_IO
    out, mismatched = [], []
    for ln in lines:
        new, same = replay(json.loads(ln), ns.threads)
        out.append(new)
        if not same:
            mismatched.append(new.experiment)
    try:
        write_records(out, ns.out, ns.format)
    except OSError as exc:
        _fail("io", str(exc))
        return EXIT_IO
    if mismatched:
        _fail("oracle-mismatch", "replayed estimates differ from the stored record", experiments=mismatched)
        return EXIT_GATE
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    if ns.command == "replay":
        return _replay_cmd(ns)
    try:
        config = config_from_args(ns)
    except CbeLabError as exc:
        _fail(exc.reason, str(exc))
        return EXIT_INVALID
    return run(config)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

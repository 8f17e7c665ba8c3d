"""Command line front end: ``nlskam {build,run,dioph,lemmas,bracket,norm}``.

Runs are described by one JSON config document; flags override its fields.

Config document (all keys optional)::

    {
      "sigma": 2.5, "gamma": 0.001, "eps": null, "r0_target": 1e-8,
      "window": 3, "steps": 3, "degree_cap": 12, "order_cap": 12,
      "drop_threshold": 1e-16, "c_override": 2.718281828459045,
      "backend": "float64", "freeze": true, "freeze_tol": 1e-14,
      "freeze_max_outer": 8, "omega": null, "seed": 0, "threads": 1,
      "torus_samples": 100, "output": "report.jsonl",
      "dioph": {"V": null, "gamma": 0.001, "window": 2, "height": 2,
                "samples": 10000, "gammas": [0.001, 0.01, 0.1]},
      "lemmas": {"suites": null, "options": {"tame": {"sigma": 3.0}}}
    }

``c_override: null`` selects the true cutoff c(sigma).  ``omega`` is an
object ``{"mode": value}``; when absent frequencies are drawn from ``seed``.

Exit codes: 0 success, 2 config error, 3 resonance, 4 contract failure,
5 lemma failure under ``--strict``.
"""

from __future__ import annotations

import argparse
import dataclasses
import inspect
import sys
from typing import Sequence

from . import io
from .algebra import BracketCaps, build_nls, poisson_bracket
from .classify import class_norms
from .divisors import BudgetExceeded, diophantine_measure, diophantine_verify
from .engine import RunConfig, prepare, run
from .hamiltonian import weighted_norm
from .lemmas import SUITES

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESONANCE = 3
EXIT_CONTRACT = 4
EXIT_LEMMA = 5

_RUN_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}
_EXTRA_FIELDS = {"output", "dioph", "lemmas"}
_DIOPH_DEFAULTS = {"V": None, "gamma": 1e-3, "window": 2, "height": 2, "samples": 0, "gammas": None}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config handling

def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = io.load_document(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - _RUN_FIELDS - _EXTRA_FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return doc


def _overrides(args: argparse.Namespace) -> dict:
    out = {}
    for name in ("sigma", "gamma", "eps", "r0_target", "window", "steps", "degree_cap", "order_cap",
                 "drop_threshold", "backend", "seed", "threads", "output"):
        v = getattr(args, name, None)
        if v is not None:
            out[name] = v
    if getattr(args, "c_override", None) is not None:
        out["c_override"] = None if args.c_override == "true" else float(args.c_override)
    if getattr(args, "freeze", None) is not None:
        out["freeze"] = args.freeze == "on"
    if out.get("eps") is not None:
        out["r0_target"] = None
    elif out.get("r0_target") is not None:
        out["eps"] = None
    return out


def merged_config(args: argparse.Namespace) -> dict:
    doc = load_config(args.config)
    doc.update(_overrides(args))
    return doc


def run_config(doc: dict) -> RunConfig:
    """Validated :class:`RunConfig` from a merged config document."""
    kw = {k: v for k, v in doc.items() if k in _RUN_FIELDS}
    if kw.get("omega") is not None:
        try:
            kw["omega"] = {int(n): float(v) for n, v in kw["omega"].items()}
        except (AttributeError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad omega: {exc}") from exc
    if "eps" in kw and kw["eps"] is not None and "r0_target" not in kw:
        kw["r0_target"] = None
    try:
        for name in ("window", "steps", "degree_cap", "order_cap", "freeze_max_outer", "seed", "threads",
                     "torus_samples"):
            if name in kw and (isinstance(kw[name], bool) or int(kw[name]) != kw[name]):
                raise ConfigError(f"{name} must be an integer")
        return RunConfig(**kw).validate()
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _config_record(cfg: RunConfig) -> dict:
    """Config as embedded in reports; ``threads`` is omitted since results do not depend on it."""
    d = dataclasses.asdict(cfg)
    del d["threads"]
    if d["omega"] is not None:
        d["omega"] = {str(n): v for n, v in sorted(d["omega"].items())}
    return d


def _output(args, doc: dict, default: str) -> str:
    return args.out or doc.get("output") or default


# --------------------------------------------------------------------------
# commands

def cmd_build(args) -> int:
    doc = merged_config(args)
    cfg = run_config(doc)
    if cfg.eps is None:
        eps = prepare(cfg).eps
    else:
        eps = cfg.eps
    V = cfg.frequencies()
    try:
        H = build_nls(cfg.window, eps, V, cfg.weight(), cfg.backend)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = _output(args, doc, "hamiltonian.json")
    io.dump_document(io.hamiltonian_to_doc(H), out)
    print(f"wrote {len(H)} terms to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    doc = merged_config(args)
    cfg = run_config(doc)
    report = run(cfg)
    out = _output(args, doc, "report.jsonl")
    io.write_jsonl(io.run_report_records(report, _config_record(cfg)), out)
    print(f"status {report.status}; {len(report.steps)} step(s) written to {out}")
    if report.status == "resonance":
        return EXIT_RESONANCE
    if report.status == "contract_failure":
        return EXIT_CONTRACT
    return EXIT_OK


def _dioph_settings(doc: dict, args) -> dict:
    d = dict(_DIOPH_DEFAULTS)
    sub = doc.get("dioph") or {}
    unknown = set(sub) - set(d)
    if unknown:
        raise ConfigError(f"unknown dioph keys: {sorted(unknown)}")
    d.update(sub)
    for name in ("gamma", "height", "samples"):
        v = getattr(args, f"dioph_{name}", None)
        if v is not None:
            d[name] = v
    if getattr(args, "dioph_window", None) is not None:
        d["window"] = args.dioph_window
    if not d["gamma"] > 0 or d["window"] < 1 or d["height"] < 1 or d["samples"] < 0:
        raise ConfigError("dioph needs gamma > 0, window >= 1, height >= 1, samples >= 0")
    return d


def cmd_dioph(args) -> int:
    doc = merged_config(args)
    d = _dioph_settings(doc, args)
    seed = int(doc.get("seed", 0))
    if d["V"] is not None:
        V = {int(n): float(v) for n, v in d["V"].items()}
    else:
        cfg = run_config({**{k: v for k, v in doc.items() if k in _RUN_FIELDS}, "window": d["window"],
                          "omega": None})
        V = cfg.frequencies()
    header = {"record": "header", "version": io.FORMAT_VERSION, "command": "dioph",
              "config_hash": io.config_hash({"dioph": d, "seed": seed}), "seed": seed, "dioph": d}
    try:
        rep = diophantine_verify(V, d["gamma"], d["window"], d["height"])
        recs = [header, {"record": "verify", "V": {str(n): v for n, v in sorted(V.items())},
                         "gamma": d["gamma"], "passed": rep.passes(d["gamma"]), **rep.to_dict()}]
        if d["samples"]:
            gammas = d["gammas"] or [d["gamma"]]
            fr = diophantine_measure(gammas, d["window"], d["height"], d["samples"], seed)
            recs.append({"record": "measure", "samples": d["samples"], "gammas": list(gammas),
                         "fractions": [float(x) for x in fr]})
    except BudgetExceeded as exc:
        raise ConfigError(str(exc)) from exc
    out = _output(args, doc, "dioph.jsonl")
    io.write_jsonl(recs, out)
    print(f"min ratio {rep.min_ratio:.6g} ({'pass' if rep.passes(d['gamma']) else 'fail'}); wrote {out}")
    return EXIT_OK


def cmd_lemmas(args) -> int:
    doc = merged_config(args)
    sub = doc.get("lemmas") or {}
    suites = args.suite or sub.get("suites") or list(SUITES)
    options = sub.get("options") or {}
    bad = [s for s in list(suites) + list(options) if s not in SUITES]
    if bad:
        raise ConfigError(f"unknown lemma suites: {bad}")
    seed = doc.get("seed")
    recs = [{"record": "header", "version": io.FORMAT_VERSION, "command": "lemmas",
             "config_hash": io.config_hash({"suites": suites, "options": options, "seed": seed}),
             "seed": seed}]
    failed = []
    for name in suites:
        kw = dict(options.get(name, {}))
        if seed is not None and "seed" in inspect.signature(SUITES[name]).parameters:
            kw.setdefault("seed", seed)
        try:
            verdict = SUITES[name](**kw)
        except TypeError as exc:
            raise ConfigError(f"bad options for {name}: {exc}") from exc
        recs.append({"record": "verdict", **verdict.to_dict()})
        print(f"{name}: {'PASS' if verdict.passed else 'FAIL'} (worst margin {verdict.worst_margin})")
        if not verdict.passed:
            failed.append(name)
    out = _output(args, doc, "lemmas.jsonl")
    io.write_jsonl(recs, out)
    if failed and args.strict:
        return EXIT_LEMMA
    return EXIT_OK


def _load_hamiltonian(path):
    try:
        return io.hamiltonian_from_doc(io.load_document(path))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot load Hamiltonian {path}: {exc}") from exc


def cmd_bracket(args) -> int:
    A = _load_hamiltonian(args.first)
    B = _load_hamiltonian(args.second)
    try:
        A.compatible(B)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"incompatible Hamiltonians: {exc}") from exc
    if A.weight != B.weight:
        raise ConfigError("Hamiltonians carry different weights")
    try:
        caps = BracketCaps(degree_cap=args.degree_cap, drop_threshold=args.drop_threshold)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    C = poisson_bracket(A, B, caps)
    out = args.out or "bracket.json"
    io.dump_document(io.hamiltonian_to_doc(C), out)
    print(f"wrote {len(C)} terms to {out}")
    return EXIT_OK


def cmd_norm(args) -> int:
    if not args.rho >= 0:
        raise ConfigError("rho must be non-negative")
    try:
        doc = io.load_document(args.file)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load {args.file}: {exc}") from exc
    result = {"file": str(args.file), "rho": args.rho}
    try:
        if any("class" in t for t in doc.get("terms", [])):
            P = io.classified_from_doc(doc)
            result["class_norms"] = class_norms(P, args.rho)
            result["norm"] = max(result["class_norms"].values())
        else:
            result["norm"] = weighted_norm(io.hamiltonian_from_doc(doc), args.rho)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed document {args.file}: {exc}") from exc
    if args.out:
        io.dump_document(result, args.out)
    print(io.dumps(result))
    return EXIT_OK


# --------------------------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", help="JSON config document")
    p.add_argument("--out", "-o", help="output path (overrides config 'output')")
    p.add_argument("--sigma", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--r0-target", dest="r0_target", type=float)
    p.add_argument("--window", "-M", type=int)
    p.add_argument("--steps", "-S", type=int)
    p.add_argument("--degree-cap", dest="degree_cap", type=int)
    p.add_argument("--order-cap", dest="order_cap", type=int)
    p.add_argument("--drop-threshold", dest="drop_threshold", type=float)
    p.add_argument("--c-override", dest="c_override", help="float >= e, or 'true' for c(sigma)")
    p.add_argument("--backend", choices=["float64", "rational"])
    p.add_argument("--freeze", choices=["on", "off"])
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlskam", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="write the truncated Hamiltonian")
    _add_run_flags(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("run", help="full KAM run, JSONL report")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("dioph", help="Diophantine check and measure estimate")
    _add_run_flags(p)
    p.add_argument("--dioph-gamma", dest="dioph_gamma", type=float)
    p.add_argument("--dioph-window", dest="dioph_window", type=int)
    p.add_argument("--height", dest="dioph_height", type=int)
    p.add_argument("--samples", dest="dioph_samples", type=int)
    p.set_defaults(func=cmd_dioph)

    p = sub.add_parser("lemmas", help="run numerical lemma suites")
    p.add_argument("--config", "-c")
    p.add_argument("--out", "-o")
    p.add_argument("--seed", type=int)
    p.add_argument("--suite", action="append", choices=sorted(SUITES), help="repeatable; default all")
    p.add_argument("--strict", action="store_true", help="exit 5 when any suite fails")
    p.set_defaults(func=cmd_lemmas)

    p = sub.add_parser("bracket", help="Poisson bracket of two Hamiltonian files")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--out", "-o")
    p.add_argument("--degree-cap", dest="degree_cap", type=int, default=10 ** 6)
    p.add_argument("--drop-threshold", dest="drop_threshold", type=float, default=0.0)
    p.set_defaults(func=cmd_bracket)

    p = sub.add_parser("norm", help="weighted norm of a Hamiltonian file")
    p.add_argument("file")
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_norm)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

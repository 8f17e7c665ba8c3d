"""JSON documents for Hamiltonians and line-delimited run reports.

Hamiltonian document::

    {"sigma": 2.5, "c_effective": 2.718..., "window": 3, "backend": "float64",
     "terms": [{"a": {"1": 2}, "k": {}, "kp": {}, "re": 1.0, "im": 0.0}, ...]}

Exact coefficients are written as ``"num/den"`` strings.  Classified
documents add ``class`` and ``j_modes`` to each term and an optional ``i0``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from fractions import Fraction
from typing import Any, Iterable

from . import backend as bk
from .classify import R0, R1, R2, ClassifiedPerturbation
from .hamiltonian import ActionVector, Hamiltonian
from .keys import MonomialKey, multi_index
from .weights import SigmaWeight

FORMAT_VERSION = 1


def _mi_doc(mi) -> dict:
    return {str(n): e for n, e in mi}


def _mi_parse(d: dict):
    return multi_index({int(n): int(e) for n, e in d.items()})


def _num_doc(x, backend: str):
    re, im = bk.real_imag(x)
    if backend == bk.RATIONAL:
        return f"{re.numerator}/{re.denominator}", f"{im.numerator}/{im.denominator}"
    return float(re), float(im)


def _num_parse(re, im, backend: str):
    if backend == bk.RATIONAL:
        return bk.from_real_imag(Fraction(re), Fraction(im), backend)
    return complex(float(re), float(im))


def _weight_doc(w: SigmaWeight) -> dict:
    return {"sigma": w.sigma, "c_effective": w.c}


def weight_from_doc(doc: dict) -> SigmaWeight:
    sigma = float(doc["sigma"])
    c = float(doc["c_effective"])
    w = SigmaWeight.true(sigma)
    return w if c == w.c_sigma else SigmaWeight(sigma, c)


def _term_doc(key: MonomialKey, c, backend: str) -> dict:
    re, im = _num_doc(c, backend)
    return {"a": _mi_doc(key.a), "k": _mi_doc(key.k), "kp": _mi_doc(key.kp), "re": re, "im": im}


def hamiltonian_to_doc(H: Hamiltonian) -> dict:
    return {**_weight_doc(H.weight), "window": H.window, "backend": H.backend,
            "terms": [_term_doc(k, c, H.backend) for k, c in H.items()]}


def hamiltonian_from_doc(doc: dict) -> Hamiltonian:
    backend = bk.check(doc["backend"])
    w = weight_from_doc(doc)
    terms = []
    for t in doc["terms"]:
        key = MonomialKey(_mi_parse(t["a"]), _mi_parse(t["k"]), _mi_parse(t["kp"]))
        terms.append((key, _num_parse(t["re"], t["im"], backend)))
    return Hamiltonian(w, int(doc["window"]), terms, backend)


def classified_to_doc(P: ClassifiedPerturbation) -> dict:
    terms = []
    for cls, js, key, c in P.entries():
        d = _term_doc(key, c, P.backend)
        d["class"] = cls
        d["j_modes"] = list(js)
        terms.append(d)
    doc = {**_weight_doc(P.weight), "window": P.window, "backend": P.backend, "terms": terms}
    if P.i0 is not None:
        doc["i0"] = {str(n): v for n, v in sorted(P.i0.values.items())}
    return doc


def classified_from_doc(doc: dict) -> ClassifiedPerturbation:
    backend = bk.check(doc["backend"])
    r0, r1, r2 = {}, {}, {}
    for t in doc["terms"]:
        key = MonomialKey(_mi_parse(t["a"]), _mi_parse(t["k"]), _mi_parse(t["kp"]))
        c = _num_parse(t["re"], t["im"], backend)
        js = tuple(int(m) for m in t["j_modes"])
        if t["class"] == R0:
            r0[key] = c
        elif t["class"] == R1:
            r1[(js[0], key)] = c
        elif t["class"] == R2:
            r2[(js, key)] = c
        else:
            raise ValueError(f"unknown class {t['class']!r}")
    i0 = ActionVector({int(n): float(v) for n, v in doc["i0"].items()}) if "i0" in doc else None
    return ClassifiedPerturbation(weight_from_doc(doc), int(doc["window"]), backend, r0, r1, r2, i0)


# --------------------------------------------------------------------------

def sanitize(x: Any) -> Any:
    """Make ``x`` strict-JSON friendly (non-finite floats become strings)."""
    if dataclasses.is_dataclass(x) and not isinstance(x, type):
        return sanitize(dataclasses.asdict(x))
    if isinstance(x, dict):
        return {str(k): sanitize(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [sanitize(v) for v in x]
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    if isinstance(x, float):
        return x if math.isfinite(x) else str(x)
    if isinstance(x, complex):
        return {"re": sanitize(x.real), "im": sanitize(x.imag)}
    if hasattr(x, "item"):  # numpy scalars
        return sanitize(x.item())
    return str(x)


def dumps(doc: Any) -> str:
    return json.dumps(sanitize(doc), separators=(",", ":"), allow_nan=False)


def dump_document(doc: Any, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(doc))
        fh.write("\n")


def load_document(path) -> Any:
    with open(path) as fh:
        return json.load(fh)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(sanitize(config), sort_keys=True).encode()).hexdigest()


def write_jsonl(records: Iterable[dict], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(dumps(r))
            fh.write("\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def run_report_records(report, config_doc: dict) -> list[dict]:
    """Header, initial, one record per step, optional freeze, final."""
    h = config_hash(config_doc)
    recs = [{"record": "header", "version": FORMAT_VERSION, "config_hash": h,
             "seed": config_doc.get("seed"), "config": config_doc, "omega": report.omega}]
    recs.append({"record": "initial", **report.initial})
    for step in report.steps:
        recs.append({"record": "step", **step})
    if report.freeze is not None:
        recs.append({"record": "freeze", **report.freeze})
    recs.append({"record": "final", "status": report.status, "error": report.error, **report.final})
    return recs

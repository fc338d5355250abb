"""Reading and writing process spec files (JSON).

Top-level keys are ``m``, ``n``, ``alpha``, ``beta``, ``gamma`` and
``kappa``; each ``kappa`` entry is a measure descriptor of kind
``finite_atoms``, ``series`` or ``density``. Expression strings are kept
verbatim so a load/dump round trip reproduces them exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import (AffineParams, Density, ExprError, FiniteAtomic, SeriesAtomic, density,
                    finite_atoms, series)


@dataclass(frozen=True)
class SpecIssue:
    key: str
    message: str

    def __str__(self) -> str:
        return f"{self.key}: {self.message}"


class SpecError(ValueError):
    """A spec file could not be turned into parameters; ``issues`` lists every problem found."""

    def __init__(self, issues: list[SpecIssue]):
        self.issues = list(issues)
        super().__init__("; ".join(map(str, self.issues)))


def _measure(desc, key: str, issues: list[SpecIssue]):
    if desc is None or desc == {} or desc == []:
        return FiniteAtomic(())
    if not isinstance(desc, dict):
        issues.append(SpecIssue(key, "measure descriptor must be an object"))
        return None
    kind = desc.get("kind")
    try:
        if kind == "finite_atoms":
            atoms = desc.get("atoms", [])
            return finite_atoms([(a["point"], a["weight"]) for a in atoms])
        if kind == "series":
            tail = desc.get("tail") or {}
            return series(desc["point_exprs"], desc["weight_expr"], c=tail.get("c"), p=tail.get("p"),
                          tol=desc.get("tol", 1e-10))
        if kind == "density":
            return density(desc["expr"], desc["domain"], desc["tail_zero"], desc["tail_inf"],
                           tol=desc.get("tol", 1e-8), extra_coords=desc.get("extra_coords", ()))
    except KeyError as exc:
        issues.append(SpecIssue(f"{key}.{exc.args[0]}", "missing"))
        return None
    except ExprError as exc:
        issues.append(SpecIssue(key, f"expression error: {exc}"))
        return None
    except (TypeError, ValueError) as exc:
        issues.append(SpecIssue(key, str(exc)))
        return None
    issues.append(SpecIssue(f"{key}.kind", f"unknown measure kind {kind!r}"))
    return None


def _array(doc, key: str, shape: tuple[int, ...], issues: list[SpecIssue]):
    if key not in doc:
        return None
    try:
        arr = np.asarray(doc[key], dtype=float)
    except (TypeError, ValueError):
        issues.append(SpecIssue(key, "must be numeric"))
        return None
    if arr.shape != shape:
        issues.append(SpecIssue(key, f"expected shape {shape}, got {arr.shape}"))
        return None
    return arr


def params_from_dict(doc: dict) -> AffineParams:
    issues: list[SpecIssue] = []
    if not isinstance(doc, dict):
        raise SpecError([SpecIssue("<root>", "spec must be a JSON object")])
    for key in ("m", "n"):
        if not isinstance(doc.get(key), int) or doc[key] < 0:
            issues.append(SpecIssue(key, "must be a non-negative integer"))
    if issues:
        raise SpecError(issues)
    m, n = doc["m"], doc["n"]
    d = m + n
    if d == 0:
        raise SpecError([SpecIssue("m", "m + n must be positive")])
    alpha = _array(doc, "alpha", (d + 1, d, d), issues)
    beta = _array(doc, "beta", (d + 1, d), issues)
    gamma = _array(doc, "gamma", (d + 1,), issues)
    kappa = None
    if "kappa" in doc:
        raw = doc["kappa"]
        if not isinstance(raw, list) or len(raw) != d + 1:
            issues.append(SpecIssue("kappa", f"expected a list of {d + 1} measure descriptors"))
        else:
            kappa = [_measure(desc, f"kappa[{j}]", issues) for j, desc in enumerate(raw)]
    for key in set(doc) - {"m", "n", "alpha", "beta", "gamma", "kappa"}:
        issues.append(SpecIssue(key, "unknown key"))
    if issues:
        raise SpecError(issues)
    try:
        return AffineParams.build(m, n, alpha=alpha, beta=beta, gamma=gamma, kappa=kappa, source=doc)
    except (TypeError, ValueError) as exc:
        raise SpecError([SpecIssue("<params>", str(exc))]) from exc


def load_spec(path) -> AffineParams:
    """Parse a spec file into parameters (shape checks only; admissibility is
    left to :func:`validate_admissibility`)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError([SpecIssue(str(path), f"cannot read: {exc.strerror}")]) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError([SpecIssue(f"line {exc.lineno}", f"invalid JSON: {exc.msg}")]) from exc
    return params_from_dict(doc)


def _num(x: float):
    return None if x is None else float(x)


def measure_to_dict(mu) -> dict:
    if isinstance(mu, FiniteAtomic):
        return {"kind": "finite_atoms",
                "atoms": [{"point": list(p), "weight": w} for p, w in mu.atoms]}
    if isinstance(mu, SeriesAtomic):
        return {"kind": "series", "point_exprs": [e.text for e in mu.point_exprs],
                "weight_expr": mu.weight_expr.text,
                "tail": {"c": _num(mu.tail_c), "p": _num(mu.tail_p)}, "tol": mu.truncation_tol}
    if isinstance(mu, Density):
        out = {"kind": "density", "expr": mu.expr.text,
               "domain": [[_num(lo), _num(hi)] for lo, hi in mu.domain],
               "tail_zero": mu.tail_zero, "tail_inf": mu.tail_inf, "tol": mu.quadrature_tol}
        if mu.extra_coords:
            out["extra_coords"] = [e.text for e in mu.extra_coords]
        return out
    raise TypeError(f"unknown measure type {type(mu).__name__}")


def params_to_dict(params: AffineParams) -> dict:
    return {"m": params.m, "n": params.n,
            "alpha": params.alpha.tolist(), "beta": params.beta.tolist(),
            "gamma": params.gamma.tolist(),
            "kappa": [measure_to_dict(mu) for mu in params.kappa]}


def dump_spec(params: AffineParams, path=None) -> str:
    text = json.dumps(params_to_dict(params), indent=2)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text

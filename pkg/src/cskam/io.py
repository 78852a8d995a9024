"""Plain-text file formats: torus files, traces, estimates, tables and images."""
from __future__ import annotations

import json
import math
from dataclasses import fields, is_dataclass
from pathlib import Path

import numpy as np

from . import models as md
from .continuation import BreakdownEstimate, ContinuationTrace, TraceRecord
from .fourier import DiophantineFrequency, PeriodicGridFunction
from .newton import TorusEmbedding, invariance_error, sup_error

TORUS_FORMAT = "cskam-torus/1"

_PARAM_TYPES = {
    "StandardMap": md.StandardMapParams,
    "NonTwistMap": md.NonTwistMapParams,
    "SpinOrbitMap": md.SpinOrbitParams,
    "TwoFactorMap": md.TwoFactorParams,
}


def _plain(value):
    if isinstance(value, md.Potential):
        return [list(h) for h in value.harmonics]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def model_record(model: md.MapModel) -> dict:
    params = {f.name: _plain(getattr(model.params, f.name)) for f in fields(model.params)}
    return {"class": type(model).__name__, "family": model.family, "params": params}


def model_from_record(record: dict) -> md.MapModel:
    cls_name = record["class"]
    ptype = _PARAM_TYPES[cls_name]
    params = dict(record["params"])
    if "potential" in params:
        params["potential"] = md.Potential(tuple((int(j), float(a)) for j, a in params["potential"]))
    return getattr(md, cls_name)(ptype(**params))


def _finite(x):
    return x if isinstance(x, (int, str)) or x is None or math.isfinite(x) else repr(x)


def torus_record(K: TorusEmbedding, extra: dict | None = None) -> dict:
    norms = K.sobolev_norms((1, 2, 3))
    head = {
        "format": TORUS_FORMAT,
        "family": K.model.family,
        "model": model_record(K.model),
        "omega": K.omega.omega,
        "omega_name": K.omega.name,
        "lambda": _finite(K.lam),
        "epsilon": K.epsilon,
        "mu": K.mu,
        "mu_normalized": K.mu_normalized,
        "n_modes": K.n_modes,
        "sup_error": sup_error(invariance_error(K)),
        "sobolev_norms": {str(m): v for m, v in norms.items()},
    }
    if extra:
        head.update(extra)
    head["ky"] = K.ky.to_record()
    head["kx_periodic"] = K.kx_periodic.to_record()
    return head


def write_torus(path, K: TorusEmbedding, extra: dict | None = None) -> Path:
    rec = torus_record(K, extra)
    lines = ["{"]
    for key, value in rec.items():
        if key in ("ky", "kx_periodic"):
            rows = ",\n   ".join(json.dumps(r) for r in value["coefficients"])
            text = (f'{{"n_modes": {value["n_modes"]}, "coefficients": [\n   {rows}]}}'
                    if rows else f'{{"n_modes": {value["n_modes"]}, "coefficients": []}}')
        else:
            text = json.dumps(value)
        lines.append(f" {json.dumps(key)}: {text},")
    lines[-1] = lines[-1].rstrip(",")
    lines.append("}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_torus(path) -> tuple[TorusEmbedding, dict]:
    rec = json.loads(Path(path).read_text())
    if rec.get("format") != TORUS_FORMAT:
        raise ValueError(f"{path}: not a torus file")
    model = model_from_record(rec["model"])
    omega = DiophantineFrequency(rec["omega"], name=rec.get("omega_name"))
    K = TorusEmbedding(model, omega, float(rec["mu"]),
                       PeriodicGridFunction.from_record(rec["ky"]),
                       PeriodicGridFunction.from_record(rec["kx_periodic"]))
    header = {k: v for k, v in rec.items() if k not in ("ky", "kx_periodic")}
    return K, header


# ---------------------------------------------------------------------------
# traces and estimates

def _trace_columns(orders, timings: bool) -> list:
    cols = ["epsilon", "mu", "mu_normalized", "n_modes", "sup_error"]
    cols += [f"sobolev_{m}" for m in orders]
    cols += ["min_bundle_angle"]
    if timings:
        cols += ["wall_time"]
    cols += ["iterations"]
    return cols


def write_trace(path, trace: ContinuationTrace, timings: bool = False) -> Path:
    orders = trace.sobolev_orders
    lines = [f"# failure_reason = {trace.failure_reason or 'none'}",
             "\t".join(_trace_columns(orders, timings))]
    for r in trace.records:
        row = [repr(r.epsilon), repr(r.mu), repr(r.mu_normalized), str(r.n_modes),
               repr(r.sup_error)] + [repr(r.sobolev[m]) for m in orders]
        row.append("" if r.min_bundle_angle is None else repr(r.min_bundle_angle))
        if timings:
            row.append(f"{r.wall_time:.4f}")
        row.append(str(r.iterations))
        lines.append("\t".join(row))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_trace(path) -> ContinuationTrace:
    lines = Path(path).read_text().splitlines()
    reason = ""
    if lines and lines[0].startswith("# failure_reason = "):
        reason = lines.pop(0).split("= ", 1)[1]
        reason = "" if reason == "none" else reason
    cols = lines[0].split("\t")
    orders = tuple(_num(c.split("_", 1)[1]) for c in cols if c.startswith("sobolev_"))
    trace = ContinuationTrace(sobolev_orders=orders, failure_reason=reason)
    for line in lines[1:]:
        vals = dict(zip(cols, line.split("\t")))
        trace.records.append(TraceRecord(
            epsilon=float(vals["epsilon"]), mu=float(vals["mu"]),
            mu_normalized=float(vals["mu_normalized"]), n_modes=int(vals["n_modes"]),
            sup_error=float(vals["sup_error"]),
            sobolev={m: float(vals[f"sobolev_{m}"]) for m in orders},
            min_bundle_angle=float(vals["min_bundle_angle"]) if vals["min_bundle_angle"] else None,
            wall_time=float(vals.get("wall_time", 0.0)), iterations=int(vals["iterations"])))
    return trace


def _num(text: str):
    v = float(text)
    return int(v) if v.is_integer() else v


def format_block(name: str, values: dict) -> str:
    """``[name]`` followed by ``key = value`` lines; floats keep full precision."""
    out = [f"[{name}]"]
    for k, v in values.items():
        if is_dataclass(v):
            v = {f.name: getattr(v, f.name) for f in fields(v)}
        out.append(f"{k} = {_fmt(v)}")
    return "\n".join(out) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else f'"{v}"'
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k} = {_fmt(x)}" for k, x in v.items()) + "}"
    if v is None:
        return '"none"'
    return json.dumps(str(v))


def estimate_block(est: BreakdownEstimate) -> str:
    return format_block("estimate", {
        "epsilon_crit": est.epsilon_crit, "beta": est.beta,
        "window": list(est.fit_window), "residual": est.fit_residual,
        "method": est.method, "amplitude": est.amplitude, "n_points": est.n_points})


# ---------------------------------------------------------------------------
# tables, curves and images

ORBIT_COLUMNS = ("p", "q", "epsilon", "lambda", "x0", "y0", "mu",
                 "re_l1", "im_l1", "re_l2", "im_l2", "residue")


def orbit_row(orbit, epsilon: float, lam: float) -> list:
    l1, l2 = (complex(v) for v in orbit.eigenvalues)
    y0, x0 = orbit.points[0]
    return [orbit.p, orbit.q, epsilon, lam, float(x0), float(y0), orbit.mu,
            l1.real, l1.imag, l2.real, l2.imag, orbit.residue]


def write_table(path, columns, rows) -> Path:
    lines = ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(_fmt(v).strip('"') for v in row))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_table(path) -> tuple[list, list]:
    lines = [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]
    cols = lines[0].split("\t")
    rows = [[_parse_cell(c) for c in l.split("\t")] for l in lines[1:]]
    return cols, rows


def _parse_cell(text: str):
    try:
        return _num(text) if "." not in text and "e" not in text.lower() else float(text)
    except ValueError:
        return text


def write_curve(path, x, y, names=("x", "y")) -> Path:
    return write_table(path, names, zip(np.asarray(x, float), np.asarray(y, float)))


def write_pgm(path, labels: np.ndarray, legend: list | None = None) -> Path:
    """Plain (P2) grayscale image, top row = largest ``y``; label -1 is black.

    Bucket ``i`` of ``k`` is drawn with gray level ``round(255 (i + 1) / k)``.
    A legend file ``<path>.legend`` lists the gray level of every bucket.
    """
    labels = np.asarray(labels)
    k = max(int(labels.max()) + 1, 1)
    levels = np.where(labels >= 0, np.rint(255.0 * (labels + 1) / k), 0).astype(int)
    img = levels[::-1]
    h, w = img.shape
    lines = ["P2", f"{w} {h}", "255"]
    lines += [" ".join(str(v) for v in row) for row in img]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    if legend is not None:
        rows = [[i, int(round(255.0 * (i + 1) / k)), val, int((labels == i).sum())]
                for i, val in enumerate(legend)]
        rows.append([-1, 0, "unresolved", int((labels < 0).sum())])
        write_table(path.with_name(path.name + ".legend"),
                    ("bucket", "gray", "rotation_number", "cells"), rows)
    return path


def read_pgm(path) -> np.ndarray:
    tokens = Path(path).read_text().split()
    if tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain PGM file")
    w, h = int(tokens[1]), int(tokens[2])
    data = np.array(tokens[4:4 + w * h], dtype=int).reshape(h, w)
    return data[::-1]


def write_manifest(path, values: dict) -> Path:
    path = Path(path)
    path.write_text("".join(format_block(k, v) + "\n" if isinstance(v, dict)
                            else f"{k} = {_fmt(v)}\n" for k, v in values.items()))
    return path

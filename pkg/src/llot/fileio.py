"""Plain-text file formats: CSV densities, JSON plans, JSON reports.

Density CSV: header ``x,value`` (one coordinate column per dimension, named
``x`` for 1-d and ``x1..xd`` otherwise), one node per row, uniform spacing.
Plan JSON: ``{"n": N, "dim": d, "atoms": [{"x": [[...], ...], "w": w}]}``.
Reports are JSON with sorted keys so identical runs are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from typing import Optional

import numpy as np

from .errors import ValidationError
from .grids import AtomicPlan, Grid, GridDensity

SCHEMA_VERSION = 1


def read_density(path, convention: str = "auto",
                 n_particles: Optional[int] = None) -> GridDensity:
    """Load a 1-d density CSV; rescales particle-number inputs to mass one.

    ``convention``: ``probability`` (expect mass 1), ``particle-number``
    (divide by ``n_particles``), or ``auto`` (mass close to 1 passes
    through, mass close to ``n_particles`` is rescaled).
    """
    xs = []
    vals = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[-1].strip() != "value":
            raise ValidationError(f"{path}: line 1: expected header ending in 'value'")
        ncols = len(header)
        if ncols != 2:
            raise ValidationError(f"{path}: only 1-d densities are supported in CSV")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != ncols:
                raise ValidationError(f"{path}: line {lineno}: expected {ncols} fields")
            try:
                xs.append(float(row[0]))
                vals.append(float(row[1]))
            except ValueError:
                raise ValidationError(f"{path}: line {lineno}: non-numeric field")
    if len(xs) < 2:
        raise ValidationError(f"{path}: need at least 2 rows")
    xs = np.asarray(xs)
    vals = np.asarray(vals)
    order = np.argsort(xs)
    xs, vals = xs[order], vals[order]
    spacings = np.diff(xs)
    h = spacings.mean()
    if h <= 0 or np.abs(spacings - h).max() > 1e-9 * max(abs(xs[-1]), abs(xs[0]), 1.0):
        raise ValidationError(f"{path}: grid spacing is not uniform")
    grid = Grid.line(float(xs[0]), float(h), len(xs))
    mass = vals.sum() * h
    if convention == "particle-number":
        if not n_particles:
            raise ValidationError("particle-number convention needs n_particles")
        vals = vals / n_particles
    elif convention == "auto":
        if abs(mass - 1.0) <= 1e-6:
            pass
        elif n_particles and abs(mass - n_particles) <= 1e-6 * n_particles:
            vals = vals / n_particles
        else:
            raise ValidationError(
                f"{path}: mass {mass:.6g} is neither 1 nor n; pass an explicit "
                "mass convention"
            )
    elif convention != "probability":
        raise ValidationError(f"unknown mass convention {convention!r}")
    return GridDensity(grid, vals)


def write_density(path, rho: GridDensity):
    if rho.grid.dim != 1:
        raise ValidationError("only 1-d densities are written to CSV")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "value"])
        for x, v in zip(rho.grid.axis(), rho.values):
            writer.writerow([repr(float(x)), repr(float(v))])


def read_plan(path) -> AtomicPlan:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})")
    for key in ("n", "dim", "atoms"):
        if key not in data:
            raise ValidationError(f"{path}: missing key {key!r}")
    atoms = []
    for i, atom in enumerate(data["atoms"]):
        if "x" not in atom or "w" not in atom:
            raise ValidationError(f"{path}: atom {i}: needs 'x' and 'w'")
        x = np.asarray(atom["x"], dtype=float)
        if x.shape != (data["n"], data["dim"]):
            raise ValidationError(
                f"{path}: atom {i}: x must be shape ({data['n']}, {data['dim']})"
            )
        atoms.append((x, float(atom["w"])))
    try:
        return AtomicPlan.from_atoms(atoms, dim=int(data["dim"]))
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}")


def write_plan(path, plan: AtomicPlan):
    data = {
        "n": plan.n,
        "dim": plan.dim,
        "atoms": [
            {"x": [[float(v) for v in particle] for particle in config],
             "w": float(w)}
            for config, w in zip(plan.configs, plan.weights)
        ],
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def render_report(report: dict) -> str:
    """Deterministic JSON text for a report dictionary."""
    payload = {"schema_version": SCHEMA_VERSION}
    payload.update(report)
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"


def write_report(path, report: dict):
    text = render_report(report)
    if path is None:
        return text
    with open(path, "w") as fh:
        fh.write(text)
    return text


def write_sweep_csv(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eta", "eps_opt", "e_ot", "trial_total", "gap",
                         "assembled_C"])
        for r in records:
            writer.writerow([repr(float(r.eta)), repr(float(r.eps_opt)),
                             repr(float(r.e_ot)), repr(float(r.total)),
                             repr(float(r.gap)), repr(float(r.assembled_c))])

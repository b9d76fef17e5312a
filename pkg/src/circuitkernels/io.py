"""File formats: circuit and kernel JSON, factor models, sample CSVs with
optional per-row conditional references, and regressor bundles.

Loads run through the same normalization as the in-memory constructors, so
files with n-ary products or nested sums come out binarized and alternating.
Floats round-trip through text at full precision.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .circuits import Circuit, InputUnit, ProductUnit, SumUnit, condition, make_circuit
from .errors import FormatError
from .kernels import (
    KernelCircuit,
    KernelLeaf,
    build_hamming_kc,
    build_kronecker_kc,
    build_rbf_kc,
    make_kernel_circuit,
)
from .models import FactorModel, factor_model_from_dict
from .stein import CollapsedSample
from .svr import SvrModel
from .vtree import Vtree

__all__ = [
    "load_circuit",
    "save_circuit",
    "load_kernel",
    "save_kernel",
    "load_factor_model",
    "save_factor_model",
    "save_samples",
    "save_collapsed",
    "load_samples",
    "save_svr_model",
    "load_svr_model",
    "load_training_csv",
    "bin_features",
]

MAX_FEATURE_BINS = 8


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def _parse_units(obj, path, leaf_kind: str):
    """Shared unit-list parsing; returns (domain, units, root, vtree)."""
    if not isinstance(obj, dict):
        raise FormatError(f"{path}: document must be an object")
    try:
        domain = [int(c) for c in obj["domain"]]
        root = int(obj["root"])
        raw_units = list(obj["units"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: missing or malformed field: {exc}") from exc
    rows = []
    for u in raw_units:
        try:
            rows.append((int(u["id"]), u))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: unit without usable id: {exc}") from exc
    rows.sort(key=lambda t: t[0])
    ids = [t[0] for t in rows]
    if ids != list(range(len(rows))):
        raise FormatError(f"{path}: unit ids must be 0..{len(rows) - 1}")
    units: list = []
    for uid, u in rows:
        kind = u.get("kind")
        try:
            if kind == leaf_kind:
                var = int(u["var"])
                if leaf_kind == "kernel_input":
                    units.append(KernelLeaf(var, np.asarray(u["table"], dtype=np.float64)))
                else:
                    units.append(InputUnit(var, np.asarray(u["weights"], dtype=np.float64)))
            elif kind == "sum":
                children = tuple(int(c) for c in u["children"])
                weights = np.asarray(u["weights"], dtype=np.float64)
                units.append(SumUnit(children, weights))
            elif kind == "product":
                units.append(ProductUnit(tuple(int(c) for c in u["children"])))
            else:
                raise FormatError(f"{path}: unit {uid} has unknown kind {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: unit {uid} is malformed: {exc}") from exc
        if any(c >= uid for c in getattr(units[-1], "children", ())):
            raise FormatError(f"{path}: unit {uid} references a later unit")
    vtree = None
    if obj.get("vtree") is not None:
        vtree = Vtree.from_dict(obj["vtree"])
    return domain, units, root, vtree


def load_circuit(path) -> Circuit:
    domain, units, root, vtree = _parse_units(_read_json(path), path, "input")
    return make_circuit(domain, units, root, vtree=vtree)


def save_circuit(c: Circuit, path) -> None:
    units = []
    for i, u in enumerate(c.units):
        if isinstance(u, InputUnit):
            units.append(
                {"id": i, "kind": "input", "var": u.var, "weights": [float(w) for w in u.weights]}
            )
        elif isinstance(u, SumUnit):
            units.append(
                {
                    "id": i,
                    "kind": "sum",
                    "children": [int(ch) for ch in u.children],
                    "weights": [float(w) for w in u.weights],
                }
            )
        else:
            units.append(
                {"id": i, "kind": "product", "children": [int(ch) for ch in u.children]}
            )
    doc = {"domain": list(c.domain), "root": int(c.root), "units": units}
    if c.vtree is not None:
        doc["vtree"] = c.vtree.to_dict()
    _write_json(path, doc)


def load_kernel(path) -> KernelCircuit:
    domain, units, root, vtree = _parse_units(_read_json(path), path, "kernel_input")
    return make_kernel_circuit(domain, units, root, vtree=vtree)


def save_kernel(k: KernelCircuit, path) -> None:
    units = []
    for i, u in enumerate(k.units):
        if isinstance(u, KernelLeaf):
            units.append(
                {
                    "id": i,
                    "kind": "kernel_input",
                    "var": u.var,
                    "table": [[float(x) for x in row] for row in u.table],
                }
            )
        elif isinstance(u, SumUnit):
            units.append(
                {
                    "id": i,
                    "kind": "sum",
                    "children": [int(ch) for ch in u.children],
                    "weights": [float(w) for w in u.weights],
                }
            )
        else:
            units.append(
                {"id": i, "kind": "product", "children": [int(ch) for ch in u.children]}
            )
    doc = {"domain": list(k.domain), "root": int(k.root), "units": units}
    if k.vtree is not None:
        doc["vtree"] = k.vtree.to_dict()
    _write_json(path, doc)


def load_factor_model(path) -> FactorModel:
    return factor_model_from_dict(_read_json(path), require_positive=False)


def save_factor_model(m: FactorModel, path) -> None:
    doc = {
        "domain": list(m.domain),
        "factors": [
            {"vars": list(fvars), "table": [float(x) for x in table.reshape(-1)]}
            for fvars, table in m.factors
        ],
    }
    _write_json(path, doc)


# -- sample CSVs ---------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_samples(path, X, weights=None) -> None:
    """Plain sample rows: var_0..var_{D-1} plus an optional weight column."""
    X = np.asarray(X, dtype=np.int64)
    D = X.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = [f"var_{v}" for v in range(D)] + (["weight"] if weights is not None else [])
        w.writerow(header)
        for i in range(X.shape[0]):
            row = [str(int(v)) for v in X[i]]
            if weights is not None:
                row.append(_fmt(weights[i]))
            w.writerow(row)


def save_collapsed(path, samples: list[CollapsedSample], domain) -> list[str]:
    """Collapsed rows: kept columns filled, dropped columns empty, plus weight
    and a conditional_ref naming an emitted circuit file per row.

    Returns the emitted circuit paths.
    """
    D = len(domain)
    base, _ = os.path.splitext(path)
    refs = []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"var_{v}" for v in range(D)] + ["weight", "conditional_ref"])
        for i, cs in enumerate(samples):
            ev = cs.evidence()
            row = [str(ev[v]) if v in ev else "" for v in range(D)]
            ref = f"{base}_cond_{i}.json"
            if cs.source is not None:
                save_circuit(condition(cs.source, ev), ref)
            refs.append(ref)
            w.writerow(row + [_fmt(cs.weight), os.path.basename(ref)])
    return refs


def load_samples(path):
    """Read a sample CSV; returns (values, weights, refs).

    Missing cells come back as -1. weights / refs are None when the columns
    are absent.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        var_cols = [i for i, name in enumerate(header) if name.startswith("var_")]
        expected = [f"var_{v}" for v in range(len(var_cols))]
        if [header[i] for i in var_cols] != expected:
            raise FormatError(f"{path}: variable columns must be var_0..var_{{D-1}} in order")
        w_col = header.index("weight") if "weight" in header else None
        r_col = header.index("conditional_ref") if "conditional_ref" in header else None
        values, weights, refs = [], [], []
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values.append([int(row[i]) if row[i] != "" else -1 for i in var_cols])
                if w_col is not None:
                    weights.append(float(row[w_col]))
            except (ValueError, IndexError) as exc:
                raise FormatError(f"{path}:{ln}: bad row: {exc}") from exc
            if r_col is not None:
                refs.append(row[r_col])
    X = np.asarray(values, dtype=np.int64)
    return (
        X,
        np.asarray(weights) if w_col is not None else None,
        refs if r_col is not None else None,
    )


# -- regressor bundles ---------------------------------------------------------


def save_svr_model(m: SvrModel, path) -> None:
    desc = getattr(m.kernel, "descriptor", None)
    if desc is None:
        raise FormatError("kernel has no builder descriptor; cannot serialize")
    doc = {
        "domain": list(m.kernel.domain),
        "support": [[int(v) for v in row] for row in m.support],
        "duals": [float(w) for w in m.duals],
        "bias": float(m.bias),
        "kernel": {"type": desc[0], "param": desc[1]},
        "diagnostics": {k: float(v) for k, v in m.diagnostics.items()},
    }
    _write_json(path, doc)


def load_svr_model(path) -> SvrModel:
    obj = _read_json(path)
    try:
        domain = [int(c) for c in obj["domain"]]
        support = np.asarray(obj["support"], dtype=np.int64)
        duals = np.asarray(obj["duals"], dtype=np.float64)
        bias = float(obj["bias"])
        ktype = obj["kernel"]["type"]
        param = obj["kernel"]["param"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: missing or malformed field: {exc}") from exc
    if ktype == "hamming":
        kernel = build_hamming_kc(domain, lam=param)
    elif ktype == "rbf":
        kernel = build_rbf_kc(domain, gamma=param)
    elif ktype == "kronecker":
        kernel = build_kronecker_kc(domain)
    else:
        raise FormatError(f"{path}: unknown kernel type {ktype!r}")
    return SvrModel(
        support=support,
        duals=duals,
        bias=bias,
        kernel=kernel,
        diagnostics=dict(obj.get("diagnostics", {})),
    )


# -- feature ingestion ----------------------------------------------------------


def bin_features(col: np.ndarray, max_bins: int = MAX_FEATURE_BINS):
    """Quantile-bin one numeric column; returns (codes, n_bins, edges).

    Integer-valued columns with few distinct values map to dense codes
    directly; anything else gets quantile edges, capped at max_bins bins.
    """
    col = np.asarray(col, dtype=np.float64)
    uniq = np.unique(col)
    if uniq.size < 2:
        raise FormatError("feature column is constant; cannot form categories")
    if np.all(uniq == np.rint(uniq)) and uniq.size <= max_bins:
        codes = np.searchsorted(uniq, col)
        return codes.astype(np.int64), int(uniq.size), uniq
    n_bins = min(max_bins, uniq.size)
    qs = np.quantile(col, np.linspace(0, 1, n_bins + 1)[1:-1])
    edges = np.unique(qs)
    codes = np.searchsorted(edges, col, side="right")
    return codes.astype(np.int64), int(edges.size + 1), edges


def load_training_csv(path):
    """Feature columns plus a `target` column; returns (X, y, domain).

    Numeric feature columns become categorical codes via quantile binning.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if "target" not in header:
            raise FormatError(f"{path}: no target column")
        t_col = header.index("target")
        f_cols = [i for i in range(len(header)) if i != t_col]
        rows = []
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(row[i]) for i in range(len(header))])
            except (ValueError, IndexError) as exc:
                raise FormatError(f"{path}:{ln}: bad row: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: no data rows")
    data = np.asarray(rows)
    y = data[:, t_col]
    cols = []
    domain = []
    for i in f_cols:
        codes, card, _ = bin_features(data[:, i])
        if card < 2:
            raise FormatError(f"{path}: feature column {header[i]} is constant")
        cols.append(codes)
        domain.append(card)
    X = np.stack(cols, axis=1)
    return X, y, tuple(domain)

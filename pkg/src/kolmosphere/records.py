"""
Deterministic, atomic emission of CSV and JSON result files.

Every CSV starts with a schema comment ``# kolmosphere <name> v<version>``
followed by a header row.  Floats are written with ``repr`` so identical
inputs give byte-identical files.
"""

import csv
import io
import json
import math
import os
import tempfile

import numpy as np

__all__ = ["SCHEMAS", "atomic_write", "read_csv", "to_jsonable", "write_csv", "write_json"]

# frozen column lists; bump the version when a schema changes
SCHEMAS = {
    "sweep": (1, ["alpha", "m", "mu", "lambda", "resolvent_norm", "envelope_G", "ratio"]),
    "psbound": (1, ["alpha", "m", "psi", "mu_peak", "C_star", "n_hi_used", "converged"]),
    "coercivity": (1, ["m", "mu", "s_min", "ratio_high", "c_combined", "c_b3"]),
    "curve": (1, ["alpha", "m", "t", "qq_norm", "pq_norm", "pp_residual"]),
    "scaling": (1, ["alpha", "m", "psi", "sigma", "sigma_over_psi", "psi_normalised"]),
    "transient": (1, ["alpha", "m", "amplitude", "t_peak", "envelope", "pp_check"]),
    "velocity": (1, ["n", "a", "theta", "u_phi"]),
}


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, schema, rows):
    """
    Write ``rows`` (mappings or sequences in schema order) under a frozen schema.
    """
    version, cols = SCHEMAS[schema]
    buf = io.StringIO()
    buf.write(f"# kolmosphere {schema} v{version}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        vals = [r[c] for c in cols] if isinstance(r, dict) else list(r)
        if len(vals) != len(cols):
            raise ValueError(f"row has {len(vals)} fields, schema {schema} has {len(cols)}")
        w.writerow([_cell(v) for v in vals])
    atomic_write(path, buf.getvalue())


def read_csv(path):
    """Return ``(schema_line, columns, rows)`` with numeric cells parsed as float."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        reader = csv.reader(fh)
        cols = next(reader)
        rows = []
        for raw in reader:
            row = {}
            for c, v in zip(cols, raw):
                if v in ("true", "false"):
                    row[c] = v == "true"
                else:
                    try:
                        row[c] = float(v)
                    except ValueError:
                        row[c] = v
            rows.append(row)
    return first, cols, rows


def to_jsonable(obj):
    """Convert numpy scalars/arrays and NaN to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj):
    atomic_write(path, json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")

"""CSV/JSON writers with bit-stable formatting.

All numeric cells use %.12g and LF line endings so identical runs produce
byte-identical files, which the manifest hashes rely on.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.12g" % float(v)
    return str(v)


def write_csv(path: str, header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    data = buf.getvalue().encode()
    with open(path, "wb") as f:
        f.write(data)
    return hashlib.sha256(data).hexdigest()


def read_csv(path: str):
    """Returns (header, list of row dicts with float-parsed values)."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        rows = []
        for raw in reader:
            row = {}
            for k, v in raw.items():
                try:
                    row[k] = float(v)
                except (TypeError, ValueError):
                    row[k] = v
            rows.append(row)
        return reader.fieldnames, rows


def write_json(path: str, obj) -> str:
    data = (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()
    with open(path, "wb") as f:
        f.write(data)
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def field_rows(field):
    """coord_0..coord_{d-1}, g, stderr rows for an occupation field."""
    coords = field.coords_grid()
    vals = field.flat()
    errs = field.flat_stderr()
    for i in range(len(vals)):
        yield (*coords[i], vals[i], errs[i])


def field_header(d: int):
    return [f"coord_{a}" for a in range(d)] + ["g", "stderr"]


def profile_rows(profile):
    for i in range(len(profile)):
        yield (profile.r[i], profile.g[i], profile.stderr[i], int(profile.multiplicity[i]))


PROFILE_HEADER = ["r", "g", "stderr", "n_sites_in_bin"]

SCALARS_HEADER = ["L", "z", "lambda", "chi", "chi_err", "meanN", "meanN_err", "tau_int"]


def ensure_dir(path: str):
    os.makedirs(path, exist_ok=True)
    return path

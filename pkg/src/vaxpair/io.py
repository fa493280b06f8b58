"""Text formats: trial datasets, estimand requests and estimand tables.

All CSV files use ``\\n`` line endings and a fixed column order so that file
digests are stable across platforms and runs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError
from .simulate import TrialData
from .truth import ARG_NAMES, EstimandRequest

DATASET_COLUMNS = ("id", "l1", "l2", "x1", "x2", "t1", "c1", "t2", "c2")
REQUEST_COLUMNS = ("kind", "t") + ARG_NAMES
TABLE_COLUMNS = REQUEST_COLUMNS + ("design", "value", "mc_se", "provenance", "status", "n_used", "note")


def format_time(x):
    """Fixed decimal with 9 significant digits.

    The exponent is taken after rounding so that re-formatting a parsed
    value reproduces the same text.
    """
    x = float(x)
    if not math.isfinite(x):
        return repr(x)
    exponent = int(f"{x:.8e}".rsplit("e", 1)[1])
    return f"{x:.{max(0, 8 - exponent)}f}"


def format_value(x):
    """Six-decimal fixed point; blank for missing values."""
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    out = f"{x:.6f}"
    return "0.000000" if out == "-0.000000" else out


def sha256_text(text):
    normalized = text.replace("\r\n", "\n").replace("\r", "\n")
    return hashlib.sha256(normalized.encode()).hexdigest()


def file_digest(path):
    return sha256_text(Path(path).read_text())


def _fmt_cov(v):
    return repr(float(v))


# ---------------------------------------------------------------------------
# datasets


def dataset_text(data):
    """Render a dataset as CSV text.

    Multi-dimensional covariates are written as ``;``-joined vectors.
    """
    buf = io.StringIO()
    buf.write(",".join(DATASET_COLUMNS) + "\n")
    times1 = [format_time(v) for v in data.t1]
    times2 = [format_time(v) for v in data.t2]
    for k in range(len(data)):
        l1 = ";".join(_fmt_cov(v) for v in data.l1[k])
        l2 = ";".join(_fmt_cov(v) for v in data.l2[k])
        buf.write(
            f"{data.ids[k]},{l1},{l2},{data.x1[k]},{data.x2[k]},{times1[k]},{data.c1[k]},{times2[k]},{data.c2[k]}\n"
        )
    return buf.getvalue()


def write_dataset(data, path):
    """Write ``path`` (CSV) and ``path + '.json'`` (metadata sidecar).

    Returns the sha256 digest of the CSV text, also stored in the sidecar.
    """
    path = Path(path)
    text = dataset_text(data)
    path.write_text(text, newline="\n")
    digest = sha256_text(text)
    meta = dict(data.metadata)
    meta.update(tau=data.tau, rows=len(data), columns=list(DATASET_COLUMNS), sha256=digest)
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", newline="\n")
    return digest


def read_dataset(path, tau=None):
    """Read a dataset written by :func:`write_dataset` or any file in the same format.

    ``tau`` defaults to the sidecar's value, else to the largest recorded
    time (censored records carry ``tau``).
    """
    path = Path(path)
    sidecar = Path(str(path) + ".json")
    meta = {}
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != DATASET_COLUMNS:
                raise InputError(f"{path}: header must be {','.join(DATASET_COLUMNS)}")
            rows = list(reader)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    cols = {c: [] for c in DATASET_COLUMNS}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(DATASET_COLUMNS):
            raise InputError(f"{path}:{lineno}: expected {len(DATASET_COLUMNS)} fields, got {len(row)}")
        try:
            cols["id"].append(int(row[0]))
            cols["l1"].append([float(v) for v in row[1].split(";")])
            cols["l2"].append([float(v) for v in row[2].split(";")])
            for name, k in (("x1", 3), ("x2", 4), ("c1", 6), ("c2", 8)):
                v = int(row[k])
                if v not in (0, 1):
                    raise ValueError(f"{name} must be 0 or 1")
                cols[name].append(v)
            cols["t1"].append(float(row[5]))
            cols["t2"].append(float(row[7]))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
    if tau is None:
        tau = meta.get("tau")
    if tau is None:
        tau = max(max(cols["t1"], default=1.0), max(cols["t2"], default=1.0))
    n = len(rows)
    p = len(cols["l1"][0]) if n else 1
    return TrialData.from_columns(
        np.array(cols["id"], dtype=np.int64),
        np.array(cols["l1"], dtype=float).reshape(n, p),
        np.array(cols["l2"], dtype=float).reshape(n, p),
        np.array(cols["x1"]),
        np.array(cols["x2"]),
        np.array(cols["t1"]),
        np.array(cols["c1"]),
        np.array(cols["t2"]),
        np.array(cols["c2"]),
        tau,
        meta,
    )


# ---------------------------------------------------------------------------
# requests and tables


def _opt(text, conv):
    text = text.strip()
    return None if text == "" else conv(text)


def parse_requests(text, path="<requests>"):
    """Parse request CSV text (columns kind, t, w_j, w_j_prime, x_i, x_j, x_j_prime)."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and not r[0].startswith("#")]
    if not rows:
        return []
    header = tuple(h.strip() for h in rows[0])
    if header != REQUEST_COLUMNS:
        raise ConfigError(f"request header must be {','.join(REQUEST_COLUMNS)}", path, 1)
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        row = row + [""] * (len(REQUEST_COLUMNS) - len(row))
        try:
            out.append(
                EstimandRequest(
                    row[0].strip(),
                    float(row[1]),
                    _opt(row[2], float),
                    _opt(row[3], float),
                    _opt(row[4], int),
                    _opt(row[5], int),
                    _opt(row[6], int),
                )
            )
        except (ValueError, InputError) as exc:
            raise ConfigError(str(exc), path, lineno) from exc
    return out


def read_requests(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read: {exc.strerror}", path) from exc
    return parse_requests(text, path)


def requests_text(requests):
    buf = io.StringIO()
    buf.write(",".join(REQUEST_COLUMNS) + "\n")
    for r in requests:
        buf.write(",".join(_request_cells(r)) + "\n")
    return buf.getvalue()


def _request_cells(r):
    cells = [r.kind, format_time(r.t)]
    for name in ARG_NAMES:
        v = getattr(r, name)
        if v is None:
            cells.append("")
        elif name.startswith("x"):
            cells.append(str(v))
        else:
            cells.append(format_time(v))
    return cells


def table_row(request, design, value=None, mc_se=None, provenance="truth", status="ok", n_used=None, note=""):
    return {
        "request": request,
        "design": design,
        "value": value,
        "mc_se": mc_se,
        "provenance": provenance,
        "status": status,
        "n_used": n_used,
        "note": note,
    }


def table_text(rows):
    """Render estimand rows (dicts from :func:`table_row`) as CSV text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for row in rows:
        writer.writerow(
            _request_cells(row["request"])
            + [
                row["design"],
                format_value(row["value"]),
                format_value(row["mc_se"]),
                row["provenance"],
                row["status"],
                "" if row["n_used"] is None else str(int(row["n_used"])),
                row["note"].replace("\n", " "),
            ]
        )
    return buf.getvalue()


def write_table(rows, path):
    text = table_text(rows)
    Path(path).write_text(text, newline="\n")
    return sha256_text(text)


def read_table(path):
    """Read an estimand table; returns rows keyed like :func:`table_row`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InputError(f"{path}: empty file (expected a header)")
    if tuple(rows[0]) != TABLE_COLUMNS:
        raise InputError(f"{path}: header must be {','.join(TABLE_COLUMNS)}")
    out = []
    k = len(REQUEST_COLUMNS)
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(TABLE_COLUMNS):
            raise InputError(f"{path}:{lineno}: expected {len(TABLE_COLUMNS)} fields")
        try:
            req = parse_requests(",".join(REQUEST_COLUMNS) + "\n" + ",".join(row[:k]))[0]
        except ConfigError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
        out.append(
            table_row(
                req,
                row[k],
                _opt(row[k + 1], float),
                _opt(row[k + 2], float),
                row[k + 3],
                row[k + 4],
                _opt(row[k + 5], int),
                row[k + 6],
            )
        )
    return out


__all__ = [
    "DATASET_COLUMNS",
    "REQUEST_COLUMNS",
    "TABLE_COLUMNS",
    "dataset_text",
    "file_digest",
    "format_time",
    "format_value",
    "parse_requests",
    "read_dataset",
    "read_requests",
    "read_table",
    "requests_text",
    "sha256_text",
    "table_row",
    "table_text",
    "write_dataset",
    "write_table",
]

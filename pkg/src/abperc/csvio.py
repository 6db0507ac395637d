"""CSV formats for configurations, labels and experiment results.

Files may start with comment lines prefixed ``#``.  Floats are written with
``repr`` so every value parses back to the identical double, and rows
round-trip byte for byte.
"""

from __future__ import annotations

import csv
import io
import math

import numpy as np

RESULT_COLUMNS = ("experiment", "d", "r", "lambda", "mu", "p", "q", "n_or_L", "trials", "seed",
                  "p_hat", "se", "ci_low", "ci_high")
THRESHOLD_COLUMNS = ("experiment", "d", "r", "lambda", "mu", "n_or_L", "trials", "seed", "target",
                     "step", "x", "p_hat", "se", "ci_low", "ci_high", "bracket_low",
                     "bracket_high", "conclusive")
DERIVATIVE_COLUMNS = ("experiment", "d", "lambda0", "mu", "p", "q", "n", "trials", "seed",
                      "parameter", "method", "estimate", "se")
BOUND_COLUMNS = ("delta", "mu_lower", "mu_upper_envelope")
LEMMA_SEARCH_COLUMNS = ("R", "r", "delta", "min_margin", "worst_item", "samples")
LEMMA_CHECK_COLUMNS = ("lemma", "R", "r", "delta", "item", "margin", "passed")
COMPONENT_COLUMNS = ("vertex_id", "role", "component_id")


def ratio_columns(d: int) -> tuple:
    return (("experiment", "d", "lambda0", "mu", "p", "q", "n", "trials", "seed")
            + tuple(f"x{i}" for i in range(d)) + ("num_hat", "den_hat", "ratio", "se", "degenerate"))


def point_columns(d: int) -> tuple:
    return ("role",) + tuple(f"x{i}" for i in range(d))


def marked_columns(d: int) -> tuple:
    return tuple(f"x{i}" for i in range(d)) + ("useful", "uniform")


def format_value(v) -> str:
    """Canonical text for one cell: repr for floats, 0/1 for booleans, empty for None."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def parse_value(text: str):
    """Inverse of :func:`format_value` up to type: int, float, or the string itself."""
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def render(columns, rows, comments=()) -> str:
    """CSV text: ``#`` comment lines, a header, one line per row (dicts or sequences)."""
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n" if line else "#\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if isinstance(row, dict):
            extra = set(row) - set(columns)
            if extra:
                raise KeyError(f"unknown columns {sorted(extra)}")
            row = [row.get(c) for c in columns]
        elif len(row) != len(columns):
            raise ValueError(f"row has {len(row)} cells, expected {len(columns)}")
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows, comments=()) -> None:
    """Write :func:`render` output to ``path`` (``"-"`` or a file object for streams)."""
    text = render(columns, rows, comments)
    if hasattr(path, "write"):
        path.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def parse(text: str):
    """Split CSV text into ``(comments, columns, rows)``; rows are lists of strings."""
    comments, body = [], []
    for line in text.splitlines(keepends=True):
        if not body and line.startswith("#"):
            text = line[1:].rstrip("\r\n")
            comments.append(text[1:] if text.startswith(" ") else text)
        else:
            body.append(line)
    reader = csv.reader(body)
    try:
        columns = tuple(next(reader))
    except StopIteration:
        raise ValueError("missing header row") from None
    rows = [r for r in reader]
    for r in rows:
        if len(r) != len(columns):
            raise ValueError(f"row {r} does not match header {columns}")
    return comments, columns, rows


def read_csv(path):
    with open(path, newline="") as fh:
        return parse(fh.read())


def typed_rows(columns, rows) -> list:
    return [{c: parse_value(v) for c, v in zip(columns, r)} for r in rows]


# ----- configurations -----------------------------------------------------

def points_rows(*configs) -> list:
    rows = []
    for cfg in configs:
        for p in cfg.points:
            rows.append([cfg.role.value, *p.tolist()])
    return rows


def read_points(path):
    """``(roles, points)`` from a point CSV."""
    _, columns, rows = read_csv(path)
    if not columns or columns[0] != "role":
        raise ValueError("point CSV must start with a role column")
    d = len(columns) - 1
    roles = np.array([r[0] for r in rows], dtype="<U1")
    pts = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64).reshape(-1, d)
    return roles, pts


def marked_rows(marked) -> list:
    pts = marked.base.points
    return [[*pts[i].tolist(), bool(marked.useful[i]), float(marked.thinning_uniform[i])]
            for i in range(len(pts))]


def component_rows(labels) -> list:
    lab = labels.labels
    return [[i, str(labels.roles[i]), int(lab[i])] for i in range(len(lab))]

from __future__ import annotations

import csv
import math


class SchemaMismatch(ValueError):
    """Two trace files do not describe the same scenario layout."""


KEY_COLUMNS = ("trial", "step")


def _read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaMismatch(f"{path}: empty trace")
    return rows[0], rows[1:]


def compare_traces(path_a, path_b, tolerance: float) -> dict:
    """Column-wise deviations between two trace CSVs.

    An entry pair is within tolerance when ``|a - b| <= tol * max(1, |a|, |b|)``.
    Two NaNs count as equal; a NaN against a number is an infinite deviation.
    Rows are matched positionally and must carry identical ``trial``/``step`` keys.
    """
    header_a, rows_a = _read(path_a)
    header_b, rows_b = _read(path_b)
    if header_a != header_b:
        raise SchemaMismatch(f"column headers differ: {header_a} vs {header_b}")
    if len(rows_a) != len(rows_b):
        raise SchemaMismatch(f"row counts differ: {len(rows_a)} vs {len(rows_b)}")
    key_idx = [header_a.index(k) for k in KEY_COLUMNS if k in header_a]
    value_idx = [i for i in range(len(header_a)) if i not in key_idx]

    columns = {header_a[i]: {"max_abs": 0.0, "max_rel": 0.0, "violations": 0} for i in value_idx}
    for line, (ra, rb) in enumerate(zip(rows_a, rows_b), start=2):
        if any(ra[i] != rb[i] for i in key_idx):
            raise SchemaMismatch(f"line {line}: trial/step keys differ")
        for i in value_idx:
            a, b = float(ra[i]), float(rb[i])
            if math.isnan(a) and math.isnan(b):
                continue
            diff = abs(a - b) if not (math.isnan(a) or math.isnan(b)) else math.inf
            if math.isnan(diff):  # inf - inf
                diff = 0.0 if a == b else math.inf
            scale = max(abs(a), abs(b))
            rel = diff / scale if scale > 0 else (0.0 if diff == 0 else math.inf)
            col = columns[header_a[i]]
            col["max_abs"] = max(col["max_abs"], diff)
            col["max_rel"] = max(col["max_rel"], rel)
            if not diff <= tolerance * max(1.0, scale):
                col["violations"] += 1
    within = all(c["violations"] == 0 for c in columns.values())
    return {
        "a": str(path_a),
        "b": str(path_b),
        "tolerance": tolerance,
        "rows": len(rows_a),
        "within_tolerance": within,
        "columns": columns,
    }

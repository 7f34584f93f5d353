"""Canonical JSON and CSV emission.

Output bytes must be reproducible run to run: dict insertion order is kept
as-is (callers build documents in a fixed order), floats print with 17
significant digits, and infinities become the strings "inf" / "-inf".
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import InputError


def format_float(value: float) -> str:
    f = float(value)
    if math.isinf(f):
        return "inf" if f > 0 else "-inf"
    if math.isnan(f):
        raise InputError("cannot format nan")
    return "%.17g" % f


def _encode(obj, out, indent):
    pad = "  " * indent
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isinf(f) or math.isnan(f):
            out.append(json.dumps(format_float(f)))
        else:
            out.append(format_float(f))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(obj):
            out.append(pad + "  ")
            _encode(item, out, indent + 1)
            out.append(",\n" if i + 1 < len(obj) else "\n")
        out.append(pad + "]")
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for i, (key, value) in enumerate(items):
            if not isinstance(key, str):
                raise InputError(f"JSON keys must be strings, got {key!r}")
            out.append(pad + "  " + json.dumps(key) + ": ")
            _encode(value, out, indent + 1)
            out.append(",\n" if i + 1 < len(items) else "\n")
        out.append(pad + "}")
    else:
        raise InputError(f"cannot encode {type(obj).__name__} as JSON")


def dumps_canonical(obj) -> str:
    out = []
    _encode(obj, out, 0)
    out.append("\n")
    return "".join(out)


def write_csv(path, header, rows) -> None:
    """Plain CSV, \\n line endings, values already stringified by caller."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) for c in row))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")

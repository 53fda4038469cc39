"""Plain-text model persistence.

One model per file.  The header pins a format version and the model
kind; the body is a sequence of typed fields, floats written with repr
so reloading reproduces every bit.  No pickle anywhere: the files are
diffable and safe to load.
"""

import numpy as np

from ..errors import ModelFormatError

MAGIC = "eegnlp-model"
FORMAT_VERSION = 1


def write_fields(path, kind, fields):
    """fields: name -> float | int | str | 1-D float array | 1-D int array."""
    lines = [f"{MAGIC} format {FORMAT_VERSION} kind {kind}"]
    for name, val in fields.items():
        if isinstance(val, str):
            lines.append(f"str {name} {val}")
        elif isinstance(val, (bool, np.bool_)):
            lines.append(f"int {name} {int(val)}")
        elif isinstance(val, (int, np.integer)):
            lines.append(f"int {name} {int(val)}")
        elif isinstance(val, (float, np.floating)):
            lines.append(f"scalar {name} {float(val)!r}")
        elif isinstance(val, np.ndarray) and val.dtype.kind == "f":
            body = " ".join(repr(float(v)) for v in val)
            lines.append(f"fvec {name} {len(val)} {body}".rstrip())
        elif isinstance(val, np.ndarray) and val.dtype.kind in "iu":
            body = " ".join(str(int(v)) for v in val)
            lines.append(f"ivec {name} {len(val)} {body}".rstrip())
        else:
            raise TypeError(f"cannot serialize field {name!r} "
                            f"of type {type(val).__name__}")
    lines.append("end")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_fields(path):
    """Returns (kind, fields).  Raises ModelFormatError on anything off."""
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ModelFormatError(f"{path}: empty file")
    head = lines[0].split()
    if (len(head) != 5 or head[0] != MAGIC or head[1] != "format"
            or head[3] != "kind"):
        raise ModelFormatError(f"{path}: unrecognized header {lines[0]!r}")
    if head[2] != str(FORMAT_VERSION):
        raise ModelFormatError(
            f"{path}: format version {head[2]} not supported "
            f"(expected {FORMAT_VERSION})")
    kind = head[4]

    fields = {}
    closed = False
    for ln, line in enumerate(lines[1:], start=2):
        if line == "end":
            closed = True
            break
        parts = line.split()
        if len(parts) < 2:
            raise ModelFormatError(f"{path}:{ln}: short line {line!r}")
        ftype, name = parts[0], parts[1]
        try:
            if ftype == "str":
                fields[name] = parts[2]
            elif ftype == "int":
                fields[name] = int(parts[2])
            elif ftype == "scalar":
                fields[name] = float(parts[2])
            elif ftype in ("fvec", "ivec"):
                n = int(parts[2])
                body = parts[3:]
                if len(body) != n:
                    raise ModelFormatError(
                        f"{path}:{ln}: field {name} declares {n} values "
                        f"but carries {len(body)}")
                if ftype == "fvec":
                    fields[name] = np.array([float(v) for v in body])
                else:
                    fields[name] = np.array([int(v) for v in body],
                                            dtype=np.int64)
            else:
                raise ModelFormatError(
                    f"{path}:{ln}: unknown field type {ftype!r}")
        except (ValueError, IndexError) as exc:
            raise ModelFormatError(f"{path}:{ln}: {exc}") from exc
    if not closed:
        raise ModelFormatError(f"{path}: truncated, no end marker")
    return kind, fields
